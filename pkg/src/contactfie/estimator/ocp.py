"""Weighted least-squares estimation problems over a discrete trajectory,
solved by Gauss-Newton DDP and its multiple-shooting (gap tolerant) form.

Decision variables are the states ``x_0..x_T``, per-step disturbances
``u_0..u_{T-1}`` entering through the dynamics, and a static parameter
vector ``p`` carried as an augmented state with ``p+ = p``.  Every cost is
a weighted sum of squared residuals that are linear in ``(x, u, p)``::

    sum_k |C x_k - y_k|^2_{Wy_k} + sum_k |u_k|^2_{Wu}
        + |x_0 - x0_prior|^2_{W0} + |p - p_prior|^2_{Wp}

so the cost model is exact and only the dynamics are linearized.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from types import SimpleNamespace
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

log = logging.getLogger(__name__)

ETA_MIN, ETA_MAX = 1e-9, 1e6
ALPHAS = tuple(2.0 ** -i for i in range(11))


class DynamicsError(RuntimeError):
    """A rollout step could not be evaluated (e.g. a contact solve failed)."""


class LinearDynamics:
    """``x+ = A x + B u + P p + c`` with constant matrices."""

    def __init__(self, A, B, P=None, c=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        self.nx, self.nu = self.B.shape
        self.P = np.zeros((self.nx, 0)) if P is None else np.atleast_2d(np.asarray(P, dtype=float))
        self.npar = self.P.shape[1]
        self.c = np.zeros(self.nx) if c is None else np.asarray(c, dtype=float)

    def step(self, k, x, u, p, hint=None):
        return self.A @ x + self.B @ u + self.P @ p + self.c, None

    def linearize(self, k, x, u, p, aux):
        return self.A, self.B, self.P


@dataclass
class LeastSquaresOCP:
    dynamics: object
    y: np.ndarray              # (T+1, ny)
    Wy: np.ndarray             # (T+1, ny)
    Wu: np.ndarray             # (nu,)
    x_prior: np.ndarray
    W0: np.ndarray
    C: Optional[np.ndarray] = None     # (ny, nx); identity when None
    p_prior: np.ndarray = field(default_factory=lambda: np.zeros(0))
    Wp: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.y = np.atleast_2d(np.asarray(self.y, dtype=float))
        self.Wy = np.atleast_2d(np.asarray(self.Wy, dtype=float))
        nx = self.dynamics.nx
        if self.C is None:
            self.C = np.eye(nx)
        self.C = np.atleast_2d(np.asarray(self.C, dtype=float))
        self.Wu = np.asarray(self.Wu, dtype=float).reshape(self.dynamics.nu)
        self.x_prior = np.asarray(self.x_prior, dtype=float).reshape(nx)
        self.W0 = np.asarray(self.W0, dtype=float).reshape(nx)
        self.p_prior = np.asarray(self.p_prior, dtype=float).reshape(self.dynamics.npar)
        self.Wp = np.asarray(self.Wp, dtype=float).reshape(self.dynamics.npar)
        if self.y.shape != self.Wy.shape or self.y.shape[1] != self.C.shape[0]:
            raise ValueError("measurement arrays and C have inconsistent shapes")
        if np.any(self.Wu <= 0):
            raise ValueError("process weights must be positive")
        for name in ("Wy", "W0", "Wp"):
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"{name} must be non-negative")

    @property
    def T(self):
        return self.y.shape[0] - 1

    def cost_terms(self, xs, us, p):
        r = xs @ self.C.T - self.y
        return {
            "measurement": float(np.sum(self.Wy * r * r)),
            "process": float(np.sum(self.Wu * us * us)),
            "prior": float(np.sum(self.W0 * (xs[0] - self.x_prior) ** 2)),
            "parameter": float(np.sum(self.Wp * (p - self.p_prior) ** 2)),
        }

    def cost(self, xs, us, p):
        return sum(self.cost_terms(xs, us, p).values())


@dataclass
class SolverOptions:
    max_iter: int = 100
    rel_tol: float = 1e-9
    gap_tol: float = 1e-6
    armijo: float = 1e-4
    eta0: float = ETA_MIN


@dataclass
class OCPSolution:
    xs: np.ndarray
    us: np.ndarray
    p: np.ndarray
    cost: float
    terms: dict
    converged: bool
    iterations: int
    gap: float
    trace: list
    aux: list = field(default_factory=list)


def _gaps(dyn, xs, us, p, aux):
    """``F(x_k, u_k, p) - x_{k+1}`` using the stored rollout values."""
    if len(us) == 0:
        return np.zeros((0, dyn.nx))
    return np.array([aux[k][0] - xs[k + 1] for k in range(len(us))])


def _evaluate(dyn, xs, us, p, hints):
    """Evaluate every step at the current nodes; returns list of (x_next, aux)."""
    return [dyn.step(k, xs[k], us[k], p, None if hints is None else hints[k][1])
            for k in range(len(us))]


def _backward(ocp, xs, us, p, lin, gaps, eta):
    """Gauss-Newton Riccati sweep on the augmented state ``z = (x, p)``.

    Returns ``None`` when a regularized ``Q_uu`` is not positive definite.
    """
    dyn = ocp.dynamics
    nx, nu, npar = dyn.nx, dyn.nu, dyn.npar
    nz = nx + npar
    T = len(us)
    C = ocp.C
    CtWC = [2.0 * C.T @ (ocp.Wy[k][:, None] * C) for k in range(T + 1)]

    def node_cost_derivs(k):
        lz = np.zeros(nz)
        lzz = np.zeros((nz, nz))
        lz[:nx] = 2.0 * C.T @ (ocp.Wy[k] * (C @ xs[k] - ocp.y[k]))
        lzz[:nx, :nx] = CtWC[k]
        if k == 0:
            lz[:nx] += 2.0 * ocp.W0 * (xs[0] - ocp.x_prior)
            lzz[:nx, :nx] += np.diag(2.0 * ocp.W0)
            lz[nx:] += 2.0 * ocp.Wp * (p - ocp.p_prior)
            lzz[nx:, nx:] += np.diag(2.0 * ocp.Wp)
        return lz, lzz

    Vz, Vzz = node_cost_derivs(T)
    kff = np.zeros((T, nu))
    K = np.zeros((T, nu, nz))
    Fzs, Fus, lzs, lzzs = [None] * T, [None] * T, [None] * T, [None] * T
    luu = np.diag(2.0 * ocp.Wu)
    for k in range(T - 1, -1, -1):
        A, B, P = lin[k]
        Fz = np.zeros((nz, nz))
        Fz[:nx, :nx] = A
        Fz[:nx, nx:] = P
        Fz[nx:, nx:] = np.eye(npar)
        Fu = np.zeros((nz, nu))
        Fu[:nx] = B
        Vz_next = Vz + Vzz[:, :nx] @ gaps[k]
        lz, lzz = node_cost_derivs(k)
        lu = 2.0 * ocp.Wu * us[k]
        VF = Vzz @ Fz
        Qz = lz + Fz.T @ Vz_next
        Qu = lu + Fu.T @ Vz_next
        Qzz = lzz + Fz.T @ VF
        Quz = Fu.T @ VF
        Quu = luu + Fu.T @ Vzz @ Fu
        try:
            fac = cho_factor(Quu + eta * np.eye(nu))
        except LinAlgError:
            return None
        kff[k] = -cho_solve(fac, Qu)
        K[k] = -cho_solve(fac, Quz)
        Vz = Qz + K[k].T @ Quu @ kff[k] + K[k].T @ Qu + Quz.T @ kff[k]
        Vzz = Qzz + K[k].T @ Quu @ K[k] + K[k].T @ Quz + Quz.T @ K[k]
        Vzz = 0.5 * (Vzz + Vzz.T)
        Fzs[k], Fus[k], lzs[k], lzzs[k] = Fz, Fu, lz, lzz
    if T == 0:
        Vz, Vzz = node_cost_derivs(0)
    try:
        fac = cho_factor(Vzz + eta * np.eye(nz))
    except LinAlgError:
        return None
    dz0 = -cho_solve(fac, Vz)

    # exact change of the quadratic cost model along the linearized update,
    # dz_k = alpha * zeta_k with zeta linear in the gaps and feedforward terms
    g1 = g2 = 0.0
    zeta = dz0
    for k in range(T):
        zu = kff[k] + K[k] @ zeta
        g1 += lzs[k] @ zeta + 2.0 * ocp.Wu * us[k] @ zu
        g2 += zeta @ lzzs[k] @ zeta + zu @ luu @ zu
        nxt = Fzs[k] @ zeta + Fus[k] @ zu
        nxt[:nx] += gaps[k]
        zeta = nxt
    lzT, lzzT = node_cost_derivs(T) if T > 0 else (np.zeros(nz), np.zeros((nz, nz)))
    if T > 0:
        g1 += lzT @ zeta
        g2 += zeta @ lzzT @ zeta
    else:
        lz0, lzz0 = node_cost_derivs(0)
        g1 += lz0 @ dz0
        g2 += dz0 @ lzz0 @ dz0
    return SimpleNamespace(kff=kff, K=K, dz0=dz0, g1=g1, g2=g2)


def _forward(ocp, xs, us, p, bw, gaps, aux, alpha):
    dyn = ocp.dynamics
    nx = dyn.nx
    T = len(us)
    p_new = p + alpha * bw.dz0[nx:]
    xs_new = np.empty_like(xs)
    us_new = np.empty_like(us)
    xs_new[0] = xs[0] + alpha * bw.dz0[:nx]
    aux_new = []
    dp = p_new - p
    for k in range(T):
        dz = np.concatenate([xs_new[k] - xs[k], dp])
        us_new[k] = us[k] + alpha * bw.kff[k] + bw.K[k] @ dz
        nxt, a = dyn.step(k, xs_new[k], us_new[k], p_new, aux[k][1])
        if not np.all(np.isfinite(nxt)):
            raise DynamicsError(f"non-finite state at step {k}")
        aux_new.append((nxt, a))
        xs_new[k + 1] = nxt - (1.0 - alpha) * gaps[k]
    return xs_new, us_new, p_new, aux_new


def solve(ocp: LeastSquaresOCP, xs0, us0, p0=None, options: Optional[SolverOptions] = None,
          feasible=False, callback=None) -> OCPSolution:
    """Gauss-Newton DDP / FDDP.

    With ``feasible=True`` the initial guess is first rolled out from
    ``xs0[0]`` with ``us0`` (classical DDP, gaps stay zero).  Otherwise the
    guess may violate the dynamics and the gaps are closed by the forward
    passes.
    """
    opts = options or SolverOptions()
    dyn = ocp.dynamics
    T = ocp.T
    xs = np.array(xs0, dtype=float).reshape(T + 1, dyn.nx)
    us = np.array(us0, dtype=float).reshape(T, dyn.nu)
    p = ocp.p_prior.copy() if p0 is None else np.array(p0, dtype=float).reshape(dyn.npar)

    aux = []
    if feasible:
        for k in range(T):
            nxt, a = dyn.step(k, xs[k], us[k], p, None)
            aux.append((nxt, a))
            xs[k + 1] = nxt
    else:
        aux = _evaluate(dyn, xs, us, p, None)
    gaps = _gaps(dyn, xs, us, p, aux)
    cost = ocp.cost(xs, us, p)
    gap = float(np.max(np.abs(gaps))) if T else 0.0
    eta = opts.eta0
    trace = [{"iteration": 0, "cost": cost, "gap": gap, "alpha": 0.0, "eta": eta,
              "expected": 0.0}]
    converged = False
    it = 0
    lin = None
    while it < opts.max_iter:
        if lin is None:
            if hasattr(dyn, "linearize_all"):
                lin = dyn.linearize_all(xs, us, p, aux)
            else:
                lin = [dyn.linearize(k, xs[k], us[k], p, aux[k][1]) for k in range(T)]
        bw = _backward(ocp, xs, us, p, lin, gaps, eta)
        if bw is None:
            if eta >= ETA_MAX:
                break
            eta = min(2.0 * eta, ETA_MAX)
            continue
        if gap <= opts.gap_tol and -bw.g1 <= 1e-14 * (1.0 + cost):
            converged = True
            break
        accepted = False
        for alpha in ALPHAS:
            try:
                xs_t, us_t, p_t, aux_t = _forward(ocp, xs, us, p, bw, gaps, aux, alpha)
            except DynamicsError as exc:
                log.debug("rollout failed at alpha=%g: %s", alpha, exc)
                continue
            cost_t = ocp.cost(xs_t, us_t, p_t)
            pred = alpha * bw.g1 + 0.5 * alpha * alpha * bw.g2
            change = cost_t - cost
            if pred < 0:
                ok = change <= opts.armijo * pred
            else:
                ok = change <= 2.0 * pred + 1e-12 * (1.0 + abs(cost))
            if ok:
                accepted = True
                break
        it += 1
        if not accepted:
            trace.append({"iteration": it, "cost": cost, "gap": gap, "alpha": 0.0,
                          "eta": eta, "expected": bw.g1})
            if eta >= ETA_MAX:
                break
            eta = min(2.0 * eta, ETA_MAX)
            continue
        old_cost = cost
        old_gap = gap
        xs, us, p, aux = xs_t, us_t, p_t, aux_t
        gaps = _gaps(dyn, xs, us, p, aux) if alpha < 1.0 else np.zeros_like(gaps)
        cost = cost_t
        gap = float(np.max(np.abs(gaps))) if T else 0.0
        lin = None
        eta = max(0.5 * eta, ETA_MIN)
        trace.append({"iteration": it, "cost": cost, "gap": gap, "alpha": alpha, "eta": eta,
                      "expected": pred})
        if callback is not None:
            callback(it, xs, us, p, cost)
        if gap <= opts.gap_tol and old_gap <= opts.gap_tol \
                and old_cost - cost <= opts.rel_tol * max(abs(old_cost), 1e-300):
            converged = True
            break
    return OCPSolution(xs=xs, us=us, p=p, cost=cost, terms=ocp.cost_terms(xs, us, p),
                       converged=converged, iterations=it, gap=gap, trace=trace, aux=aux)
