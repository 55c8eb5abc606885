"""Finite-difference checks of the analytic step and inertia derivatives."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import inertia
from .contact import ContactSolverError, SmoothingConfig, solve_smoothed, step_derivatives
from .dynamics import contact_kinematics
from .model import link_theta, set_link_theta

FD_STEP = 1e-6
STEP_TOL = 1e-4
INERTIA_TOL = 1e-6


def rel_error(analytic, numeric):
    """Largest absolute deviation scaled by the largest reference entry."""
    a = np.asarray(analytic, dtype=float)
    f = np.asarray(numeric, dtype=float)
    scale = max(float(np.max(np.abs(f), initial=0.0)), 1e-12)
    return float(np.max(np.abs(a - f), initial=0.0)) / scale


def central_difference(fn, x, h=FD_STEP):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        cols.append((fn(x + e) - fn(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def sample_state(model, rng, height=(-0.005, 0.01)):
    """Random configuration whose lowest contact sits in ``height``."""
    nv = model.nv
    q = np.zeros(nv)
    q[0] = rng.uniform(-0.2, 0.2)
    q[2] = rng.uniform(-0.3, 0.3)
    q[3:] = rng.uniform(-0.05, 0.1, nv - 3)
    if model.n_contacts:
        phi = contact_kinematics(model, q).phi
        q[1] = rng.uniform(*height) - phi.min()
    else:
        q[1] = 0.5
    v = rng.normal(0.0, 0.5, nv)
    u = rng.uniform(-50.0, 100.0, model.nu)
    return q, v, u


@dataclass
class GradcheckReport:
    samples: int
    kappa: float
    errors: dict = field(default_factory=dict)     # block -> max relative error
    resampled: int = 0

    @property
    def ok(self):
        lim = {"pi_jacobian_2d": INERTIA_TOL, "pi_jacobian_3d": INERTIA_TOL}
        return all(e <= lim.get(k, STEP_TOL) for k, e in self.errors.items())

    def to_dict(self):
        return {"samples": self.samples, "kappa": self.kappa, "resampled": self.resampled,
                "errors": dict(self.errors), "ok": self.ok}


def _state_map(model, u, dt, cfg):
    nv = model.nv

    def f(x):
        r = solve_smoothed(model, x[:nv], x[nv:], u, dt, cfg)
        return np.concatenate([r.q_plus, r.v_plus])
    return f


def check_state(model, q, v, u, dt, cfg, h=FD_STEP):
    """Relative errors of ``A``, ``B_u`` and ``B_theta`` at one state."""
    nv = model.nv
    thetas = np.array([link_theta(model, i) for i in range(model.n_links)])
    d = step_derivatives(model, q, v, u, dt, cfg, thetas=thetas)
    x = np.concatenate([q, v])
    out = {"A": rel_error(d.A, central_difference(_state_map(model, u, dt, cfg), x, h))}
    if model.nu:
        fu = lambda uu: _state_map(model, uu, dt, cfg)(x)
        out["B_u"] = rel_error(d.B_u, central_difference(fu, np.asarray(u, dtype=float), h))

    def ftheta(th):
        m = model
        for i, t in enumerate(th.reshape(-1, 6)):
            m = set_link_theta(m, i, t)
        r = solve_smoothed(m, q, v, u, dt, cfg)
        return np.concatenate([r.q_plus, r.v_plus])
    out["B_theta"] = rel_error(d.B_theta, central_difference(ftheta, thetas.ravel(), h))
    return out


def check_inertia(rng, samples):
    """Jacobians of the 3D and planar log-Cholesky maps."""
    e3 = e2 = 0.0
    for _ in range(samples):
        t3 = rng.normal(0.0, 0.5, 10)
        t2 = rng.normal(0.0, 0.5, 6)
        e3 = max(e3, rel_error(inertia.pi_jacobian_3d(t3),
                               central_difference(inertia.theta_to_pi_3d, t3)))
        e2 = max(e2, rel_error(inertia.pi_jacobian_2d(t2),
                               central_difference(inertia.theta_to_pi_2d, t2)))
    return {"pi_jacobian_3d": e3, "pi_jacobian_2d": e2}


def gradcheck(model, samples=100, seed=0, kappa=5000.0, dt=0.025, max_resample=None):
    """Compare analytic sensitivities with central differences at random states.

    States where the smoothed solve or its derivatives fail are redrawn and
    counted in ``resampled``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    cfg = SmoothingConfig(kappa=kappa, tol=1e-13)
    report = GradcheckReport(samples=samples, kappa=kappa)
    limit = 10 * samples if max_resample is None else max_resample
    done = 0
    while done < samples:
        q, v, u = sample_state(model, rng)
        try:
            errs = check_state(model, q, v, u, dt, cfg)
        except ContactSolverError:
            report.resampled += 1
            if report.resampled > limit:
                raise
            continue
        for k, e in errs.items():
            report.errors[k] = max(report.errors.get(k, 0.0), e)
        done += 1
    report.errors.update(check_inertia(rng, samples))
    return report
