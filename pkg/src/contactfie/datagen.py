"""Synthetic hopper data: ground-truth rollouts, corrupted measurements, metrics.

Random numbers come from numpy's PCG64 bit generator seeded with the
dataset seed; noise is drawn as one standard-normal block of shape
``(T+1, 2N)`` in row-major order, then scaled per channel.
"""
from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field, fields
from importlib import resources
from typing import Optional

import numpy as np

from . import jsonio
from .contact import ContactSolverError, SmoothingConfig, step
from .dynamics import contact_kinematics
from .estimator.problem import CHANNELS, channel_slices
from .model import load_model, model_from_dict, model_to_dict

PRNG = "numpy.random.PCG64"
FORMAT = "contactfie-dataset"
CONTACT_EPS = 1e-3      # N*s, impulse above which a contact counts as active


class SimulationError(RuntimeError):
    def __init__(self, k, cause):
        super().__init__(f"contact solve failed at step {k}: {cause}")
        self.step = k


def hopper_model_text():
    return resources.files("contactfie").joinpath("data/hopper.json").read_text()


def hopper_model():
    return load_model(hopper_model_text())


HOPPER_Q0 = (0.0, 0.52, 0.0, 0.0)


@dataclass
class HopperSchedule:
    """Thrust tracking a clipped sinusoidal leg-extension reference.

    ``u = clip(kp (r - a) + kd (r' - a') + feedforward, -limit, limit)`` with
    ``r(t) = offset + amplitude sin(2 pi f t)``; ``a`` is the leg extension.
    The resulting thrust sequence is what the dataset records.
    """
    kp: float = 600.0
    kd: float = 20.0
    offset: float = 0.05
    amplitude: float = 0.12
    frequency: float = 2.0
    feedforward: float = 50.0
    limit: float = 200.0
    joint: int = 0

    def __call__(self, k, q, v, dt):
        t = k * dt
        w = 2.0 * np.pi * self.frequency
        r = self.offset + self.amplitude * np.sin(w * t)
        rd = self.amplitude * w * np.cos(w * t)
        j = 3 + self.joint
        u = self.kp * (r - q[j]) + self.kd * (rd - v[j]) + self.feedforward
        return np.array([np.clip(u, -self.limit, self.limit)])

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class Trajectory:
    xs: np.ndarray           # (T+1, 2N)
    us: np.ndarray           # (T, nu)
    lambda_n: np.ndarray     # (T, C)
    lambda_t: np.ndarray     # (T, C)
    diagnostics: list = field(default_factory=list)


def simulate(model, x0, schedule, dt, steps, stepper="lcp", kappa=None) -> Trajectory:
    """Roll the model forward.

    ``schedule`` is an array of ``steps`` inputs or a callable
    ``schedule(k, q, v, dt) -> u``.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    nv = model.nv
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (2 * nv,):
        raise ValueError(f"initial state must have length {2 * nv}")
    if not callable(schedule):
        sched = np.asarray(schedule, dtype=float).reshape(len(schedule), model.nu)
        if len(sched) != steps:
            raise ValueError(f"schedule has {len(sched)} inputs for {steps} steps")
        schedule_fn = lambda k, q, v, dt: sched[k]
    else:
        schedule_fn = schedule
    cfg = SmoothingConfig(kappa=kappa) if kappa is not None else None
    xs = np.zeros((steps + 1, 2 * nv))
    xs[0] = x0
    us = np.zeros((steps, model.nu))
    lam_n = np.zeros((steps, model.n_contacts))
    lam_t = np.zeros((steps, model.n_contacts))
    diags = []
    q, v = x0[:nv].copy(), x0[nv:].copy()
    v_prev = None
    for k in range(steps):
        us[k] = schedule_fn(k, q, v, dt)
        try:
            q, v, res = step(model, q, v, us[k], dt, cfg, stepper=stepper, v_init=v_prev)
        except ContactSolverError as exc:
            raise SimulationError(k, exc) from exc
        v_prev = res.v_plus
        xs[k + 1] = np.concatenate([q, v])
        lam_n[k], lam_t[k] = res.lambda_n, res.lambda_t
        diags.append({"newton_iters": res.newton_iters, "residual": res.residual,
                      "modes": list(res.modes)})
    return Trajectory(xs, us, lam_n, lam_t, diags)


@dataclass
class NoiseConfig:
    """Per-channel standard deviations (SI units) and a constant base-angle bias."""
    base_position: float = 0.002
    base_angle: float = 0.01
    base_velocity: float = 0.05
    base_angular_velocity: float = 0.05
    joint_position: float = 0.002
    joint_velocity: float = 0.02
    angle_bias: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in CHANNELS:
            if getattr(self, name) < 0:
                raise ValueError(f"noise sigma {name} must be non-negative")

    def sigma_vector(self, model):
        s = np.zeros(2 * model.nv)
        for name, idx in channel_slices(model).items():
            s[idx] = getattr(self, name)
        return s

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def corrupt(model, xs, noise: NoiseConfig):
    """Measurements ``x_k + N(0, sigma^2)`` per channel plus the angle bias."""
    xs = np.asarray(xs, dtype=float)
    rng = np.random.Generator(np.random.PCG64(noise.seed))
    z = rng.standard_normal(xs.shape)
    y = xs + z * noise.sigma_vector(model)[None, :]
    y[:, 2] += noise.angle_bias
    return y


@dataclass
class Dataset:
    model: object
    dt: float
    xs: np.ndarray
    us: np.ndarray
    lambda_n: np.ndarray
    lambda_t: np.ndarray
    y: np.ndarray
    noise: NoiseConfig
    stepper: str = "lcp"
    kappa: Optional[float] = None
    schedule: dict = field(default_factory=dict)
    model_path: Optional[str] = None

    @property
    def T(self):
        return len(self.us)

    def header(self):
        return {
            "format": FORMAT, "version": 1,
            "model_path": self.model_path, "model": model_to_dict(self.model),
            "dt": self.dt, "steps": self.T, "stepper": self.stepper, "kappa": self.kappa,
            "schedule": self.schedule, "noise": self.noise.to_dict(),
            "seed": self.noise.seed, "prng": PRNG,
        }

    def to_text(self):
        lines = [jsonio.dumps(self.header())]
        for k in range(self.T + 1):
            last = k == self.T
            row = {
                "k": k, "x": self.xs[k], "y": self.y[k],
                "u": None if last else self.us[k],
                "lambda": None if last else {"n": self.lambda_n[k], "t": self.lambda_t[k]},
            }
            lines.append(jsonio.dumps(row))
        return "\n".join(lines) + "\n"

    def to_csv(self):
        nv = self.model.nv
        names = [f"q{i}" for i in range(nv)] + [f"v{i}" for i in range(nv)]
        cols = (["k", "t"] + [f"x_{n}" for n in names] + [f"y_{n}" for n in names]
                + [f"u{i}" for i in range(self.model.nu)]
                + [f"lambda_n{i}" for i in range(self.model.n_contacts)]
                + [f"lambda_t{i}" for i in range(self.model.n_contacts)])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        f = lambda a: [format(float(v), ".17g") for v in a]
        nan_u = [float("nan")] * self.model.nu
        nan_c = [float("nan")] * self.model.n_contacts
        for k in range(self.T + 1):
            last = k == self.T
            w.writerow([k, format(k * self.dt, ".17g")] + f(self.xs[k]) + f(self.y[k])
                       + f(nan_u if last else self.us[k])
                       + f(nan_c if last else self.lambda_n[k])
                       + f(nan_c if last else self.lambda_t[k]))
        return buf.getvalue()


def make_dataset(model, x0, schedule, dt, steps, noise: NoiseConfig, stepper="lcp", kappa=None,
                 model_path=None) -> Dataset:
    traj = simulate(model, x0, schedule, dt, steps, stepper, kappa)
    y = corrupt(model, traj.xs, noise)
    sched = schedule.to_dict() if hasattr(schedule, "to_dict") else {"type": "table"}
    return Dataset(model, dt, traj.xs, traj.us, traj.lambda_n, traj.lambda_t, y, noise,
                   stepper, kappa, sched, model_path)


def hopper_dataset(steps=100, dt=0.025, noise: Optional[NoiseConfig] = None, stepper="lcp",
                   kappa=None, schedule: Optional[HopperSchedule] = None) -> Dataset:
    model = hopper_model()
    x0 = np.concatenate([HOPPER_Q0, np.zeros(model.nv)])
    return make_dataset(model, x0, schedule or HopperSchedule(), dt, steps,
                        noise or NoiseConfig(), stepper, kappa)


def save_dataset(path, ds: Dataset):
    with open(path, "w") as fh:
        fh.write(ds.to_text())


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty dataset file")
    head = json.loads(lines[0])
    if head.get("format") != FORMAT:
        raise ValueError(f"{path}: not a {FORMAT} file")
    model = model_from_dict(head["model"])
    rows = [json.loads(ln) for ln in lines[1:]]
    T = head["steps"]
    if len(rows) != T + 1:
        raise ValueError(f"{path}: expected {T + 1} rows, found {len(rows)}")
    nanify = lambda a: [np.nan if v is None else v for v in a]
    xs = np.array([nanify(r["x"]) for r in rows], dtype=float)
    y = np.array([nanify(r["y"]) for r in rows], dtype=float)
    us = np.array([r["u"] for r in rows[:-1]], dtype=float).reshape(T, model.nu)
    ln = np.array([r["lambda"]["n"] for r in rows[:-1]], dtype=float).reshape(T, model.n_contacts)
    lt = np.array([r["lambda"]["t"] for r in rows[:-1]], dtype=float).reshape(T, model.n_contacts)
    noise = NoiseConfig(**head["noise"])
    return Dataset(model, head["dt"], xs, us, ln, lt, y, noise, head.get("stepper", "lcp"),
                   head.get("kappa"), head.get("schedule", {}), head.get("model_path"))


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------

def contact_active(lambda_n, eps=CONTACT_EPS):
    return np.asarray(lambda_n) > eps


def metrics(xs, truth_xs, model, dt, lambda_n=None, truth_lambda_n=None, cost=None):
    """Accuracy of an estimated (or raw) trajectory against ground truth.

    State RMSE is reported per channel and pooled over the base pose and
    joint positions (``state``).  Force RMSE uses ``lambda_n / dt``.
    """
    xs = np.asarray(xs, dtype=float)
    truth_xs = np.asarray(truth_xs, dtype=float)
    if xs.shape != truth_xs.shape:
        raise ValueError(f"trajectory shapes differ: {xs.shape} vs {truth_xs.shape}")
    err = xs - truth_xs
    out = {}
    for name, idx in channel_slices(model).items():
        if len(idx):
            out[f"rmse_{name}"] = float(np.sqrt(np.nanmean(err[:, idx] ** 2)))
    nv = model.nv
    out["rmse_state"] = float(np.sqrt(np.nanmean(err[:, :nv] ** 2)))
    if lambda_n is not None and truth_lambda_n is not None:
        ln = np.asarray(lambda_n, dtype=float)
        tl = np.asarray(truth_lambda_n, dtype=float)
        if ln.shape != tl.shape:
            raise ValueError(f"impulse shapes differ: {ln.shape} vs {tl.shape}")
        out["rmse_force"] = float(np.sqrt(np.mean(((ln - tl) / dt) ** 2)))
        out["contact_timing"] = float(np.mean(contact_active(ln) == contact_active(tl)))
    if cost is not None:
        out["cost"] = float(cost)
    return out


def contact_heights(model, xs):
    nv = model.nv
    return np.array([contact_kinematics(model, x[:nv]).phi for x in np.asarray(xs)])
