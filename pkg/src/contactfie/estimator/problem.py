"""Measurement model, weights, and the estimation problem/solution types."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .. import inertia
from ..contact import SmoothingConfig
from ..model import PlanarModel, link_theta, model_from_dict, model_to_dict

CHANNELS = ("base_position", "base_angle", "base_velocity", "base_angular_velocity",
            "joint_position", "joint_velocity")


def channel_slices(model):
    """Indices of each measurement channel inside the state ``x = (q, v)``."""
    n, nv = model.n_joints, model.nv
    return {
        "base_position": np.arange(0, 2),
        "base_angle": np.arange(2, 3),
        "joint_position": np.arange(3, 3 + n),
        "base_velocity": np.arange(nv, nv + 2),
        "base_angular_velocity": np.arange(nv + 2, nv + 3),
        "joint_velocity": np.arange(nv + 3, nv + 3 + n),
    }


@dataclass
class MeasurementSample:
    base_position: np.ndarray
    base_angle: float
    base_velocity: np.ndarray
    base_angular_velocity: float
    joint_position: np.ndarray
    joint_velocity: np.ndarray
    mask: dict = field(default_factory=lambda: {c: True for c in CHANNELS})

    def to_vector(self, model):
        """Values in state layout; masked channels are NaN."""
        out = np.full(2 * model.nv, np.nan)
        for name, idx in channel_slices(model).items():
            if self.mask.get(name, True):
                out[idx] = np.atleast_1d(getattr(self, name))
        return out

    @classmethod
    def from_vector(cls, model, y, mask=None):
        y = np.asarray(y, dtype=float)
        sl = channel_slices(model)
        vals = {name: y[idx].copy() for name, idx in sl.items()}
        mask = dict(mask) if mask is not None else {c: True for c in CHANNELS}
        return cls(vals["base_position"], float(vals["base_angle"][0]), vals["base_velocity"],
                   float(vals["base_angular_velocity"][0]), vals["joint_position"],
                   vals["joint_velocity"], mask)


def measure(model, x) -> MeasurementSample:
    """Noise-free measurement: base pose/velocity and joint states read off ``x``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (2 * model.nv,):
        raise ValueError(f"state must have length {2 * model.nv}")
    return MeasurementSample.from_vector(model, x)


def measurement_residual(model, sample: MeasurementSample, x):
    """``measure(x) - sample`` over present channels (absent ones are dropped)."""
    x = np.asarray(x, dtype=float)
    parts = []
    for name, idx in channel_slices(model).items():
        if sample.mask.get(name, True):
            parts.append(x[idx] - np.atleast_1d(getattr(sample, name)))
    return np.concatenate(parts) if parts else np.zeros(0)


@dataclass
class WeightConfig:
    """Diagonal inverse-covariance weights; every cost term is ``w * r**2``."""
    base_position: float = 4e2
    base_angle: float = 3e1
    base_velocity: float = 1e1
    base_angular_velocity: float = 1.5e2
    joint_position: float = 2e2
    joint_velocity: float = 4e1
    parameter: float = 10.0
    process_base: float = 1e4
    process_joint: float = 1e3
    initial: float = 1.0        # initial-state prior, as a multiple of the measurement weights

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"weight {f.name} must be non-negative")
        if not (self.process_base > 0 and self.process_joint > 0):
            raise ValueError("process weights must be positive")

    @classmethod
    def robot_defaults(cls, **overrides):
        """Weights for full-size legged robots with manufacturer inertia priors.

        Same measurement weights as the defaults but a much weaker parameter
        prior; on the planar hopper that lets the unexcited ``c_y`` and ``I_z``
        wander, hence the stiffer default.
        """
        return cls(**{"parameter": 4e-2, **overrides})

    def measurement_vector(self, model):
        w = np.zeros(2 * model.nv)
        for name, idx in channel_slices(model).items():
            w[idx] = getattr(self, name)
        return w

    def process_vector(self, model):
        return np.concatenate([np.full(3, self.process_base),
                               np.full(model.n_joints, self.process_joint)])

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class EstimationProblem:
    """Measurements ``y_0..y_T`` (state layout, NaN where absent), inputs
    ``u_0..u_{T-1}`` and everything needed to pose the estimation problem.

    ``model`` carries the prior inertial parameters; ``id_mask`` (links x 6)
    selects the log-Cholesky entries that are estimated.
    """
    model: PlanarModel
    y: np.ndarray
    u: np.ndarray
    dt: float
    weights: WeightConfig = field(default_factory=WeightConfig)
    id_mask: Optional[np.ndarray] = None
    theta_prior: Optional[np.ndarray] = None
    x_prior: Optional[np.ndarray] = None
    smoothing: SmoothingConfig = field(default_factory=lambda: SmoothingConfig(kappa=5000.0))
    kappa_schedule: tuple = ()
    max_iter: int = 100
    rel_tol: float = 1e-9
    gap_tol: float = 1e-6
    fddp: bool = True
    init: str = "consistent"
    threads: int = 1

    def __post_init__(self):
        nx = 2 * self.model.nv
        self.y = np.atleast_2d(np.asarray(self.y, dtype=float))
        self.u = np.asarray(self.u, dtype=float).reshape(-1, self.model.nu)
        if self.y.ndim != 2 or self.y.shape[1] != nx:
            raise ValueError(f"measurements must have shape (T+1, {nx})")
        if self.u.shape[0] != self.y.shape[0] - 1:
            raise ValueError("need exactly one input per step (len(u) = len(y) - 1)")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        L = self.model.n_links
        if self.id_mask is None:
            self.id_mask = np.zeros((L, 6), dtype=bool)
            self.id_mask[0] = True
        self.id_mask = np.asarray(self.id_mask, dtype=bool).reshape(L, 6)
        if self.theta_prior is None:
            self.theta_prior = np.array([link_theta(self.model, i) for i in range(L)])
        self.theta_prior = np.asarray(self.theta_prior, dtype=float).reshape(L, 6)
        if self.init not in ("consistent", "measurements"):
            raise ValueError("init must be 'consistent' or 'measurements'")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    @property
    def T(self):
        return self.y.shape[0] - 1

    @property
    def present(self):
        return np.isfinite(self.y)

    def kappas(self):
        return tuple(self.kappa_schedule) or (self.smoothing.kappa,)

    def theta_full(self, p):
        th = self.theta_prior.copy()
        th[self.id_mask] = p
        return th

    def model_for_theta(self, theta):
        pis = np.array([inertia.theta_to_pi_2d(t) for t in np.asarray(theta).reshape(-1, 6)])
        return self.model.with_pi(pis)

    def to_dict(self):
        return {
            "model": model_to_dict(self.model),
            "y": _nan_to_none(self.y),
            "u": self.u.tolist(),
            "dt": self.dt,
            "weights": self.weights.to_dict(),
            "id_mask": self.id_mask.tolist(),
            "theta_prior": self.theta_prior.tolist(),
            "x_prior": None if self.x_prior is None else np.asarray(self.x_prior).tolist(),
            "smoothing": {"kappa": self.smoothing.kappa, "tol": self.smoothing.tol,
                          "max_iter": self.smoothing.max_iter,
                          "eps_feas": self.smoothing.eps_feas},
            "kappa_schedule": list(self.kappa_schedule),
            "max_iter": self.max_iter, "rel_tol": self.rel_tol, "gap_tol": self.gap_tol,
            "fddp": self.fddp, "init": self.init, "threads": self.threads,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["model"] = model_from_dict(d["model"])
        d["y"] = np.array([[np.nan if v is None else v for v in row] for row in d["y"]], dtype=float)
        d["weights"] = WeightConfig(**d["weights"])
        d["smoothing"] = SmoothingConfig(**d["smoothing"])
        d["kappa_schedule"] = tuple(d.get("kappa_schedule", ()))
        return cls(**d)


def _nan_to_none(a):
    return [[None if not np.isfinite(v) else float(v) for v in row] for row in np.asarray(a)]


@dataclass
class EstimationSolution:
    xs: np.ndarray                 # (T+1, 2N)
    deltas: np.ndarray             # (T, N)
    theta: np.ndarray              # (L, 6)
    pi: np.ndarray                 # (L, 4)
    lambda_n: np.ndarray           # (T, C)
    lambda_t: np.ndarray           # (T, C)
    cost: float
    breakdown: dict
    trace: list
    converged: bool
    iterations: int
    gap: float
    solver: str
    force_residual: float = 0.0
    flags: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "solver": self.solver, "converged": self.converged, "iterations": self.iterations,
            "cost": self.cost, "breakdown": self.breakdown, "gap": self.gap,
            "force_residual": self.force_residual,
            "xs": self.xs.tolist(), "deltas": self.deltas.tolist(),
            "theta": self.theta.tolist(), "pi": self.pi.tolist(),
            "lambda_n": self.lambda_n.tolist(), "lambda_t": self.lambda_t.tolist(),
            "trace": self.trace, "flags": self.flags,
        }

    @classmethod
    def from_dict(cls, d):
        arr = lambda k, *shape: np.array(d[k], dtype=float).reshape(*shape) if shape else np.array(d[k], dtype=float)
        xs = arr("xs")
        T = xs.shape[0] - 1
        return cls(xs=xs, deltas=arr("deltas", T, -1), theta=arr("theta"), pi=arr("pi"),
                   lambda_n=arr("lambda_n", T, -1), lambda_t=arr("lambda_t", T, -1),
                   cost=d["cost"], breakdown=d["breakdown"], trace=d["trace"],
                   converged=d["converged"], iterations=d["iterations"], gap=d["gap"],
                   solver=d["solver"], force_residual=d.get("force_residual", 0.0),
                   flags=d.get("flags", {}))

    def trace_csv(self):
        buf = io.StringIO()
        cols = ["iteration", "kappa", "cost", "gap", "alpha", "eta", "expected"]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in self.trace:
            w.writerow([format(row.get(c, float("nan")), ".17g") if c != "iteration"
                        else row[c] for c in cols])
        return buf.getvalue()
