"""Contact time-steppers and their sensitivities.

Three ways to compute the post-step velocity ``v+`` for point contacts
against the ground plane ``z = 0``:

* ``solve_lcp``      exact Coulomb complementarity by contact-mode enumeration,
* ``solve_socp``     the convex velocity-cone relaxation (in the plane each
                     cone is two half-planes, so this is an exact small QP),
* ``solve_smoothed`` the log-barrier relaxation of that cone program, solved
                     with a damped Newton method.

``step_derivatives`` differentiates the smoothed step through its
stationarity condition.

All steppers use the gap and Jacobians at the current configuration:
``n_i = phi_i / dt + Jn_i v+`` is the normal velocity that keeps the
linearized next-step gap ``phi_i + dt Jn_i v+`` non-negative.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .dynamics import contact_kinematics, dynamics_terms, integrate_config

log = logging.getLogger(__name__)

MAX_ENUM_CONTACTS = 6

OPEN, STICK, SLIDE_POS, SLIDE_NEG = "open", "stick", "slide+", "slide-"


class ContactSolverError(RuntimeError):
    """A contact step could not be solved; ``info`` carries diagnostics."""

    def __init__(self, message, **info):
        super().__init__(message)
        self.info = info


@dataclass
class SmoothingConfig:
    kappa: float = 500.0
    tol: float = 1e-10          # on ||grad|| / (1 + ||v_free||)
    max_iter: int = 100
    eps_feas: float = 1e-8

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")


@dataclass
class ContactStepResult:
    v_plus: np.ndarray
    q_plus: np.ndarray
    v_free: np.ndarray
    lambda_n: np.ndarray
    lambda_t: np.ndarray
    slack: np.ndarray = field(default_factory=lambda: np.zeros(0))
    modes: tuple = ()
    newton_iters: int = 0
    converged: bool = True
    residual: float = 0.0


@dataclass
class _StepData:
    M: np.ndarray
    h: np.ndarray
    tau: np.ndarray
    v_free: np.ndarray
    phi: np.ndarray
    Jn: np.ndarray
    Jt: np.ndarray
    mu: np.ndarray


def _step_data(model, q, v, u, dt):
    if not dt > 0:
        raise ValueError("dt must be positive")
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    terms = dynamics_terms(model, q, v)
    tau = model.actuation_matrix() @ np.atleast_1d(np.asarray(u, dtype=float)) - terms.h
    v_free = v + dt * np.linalg.solve(terms.M, tau)
    kin = contact_kinematics(model, q)
    mu = np.array([c.mu for c in model.contacts])
    return _StepData(terms.M, terms.h, tau, v_free, kin.phi, kin.Jn, kin.Jt, mu)


def _result(q, dt, d, v_plus, lam_n, lam_t, **kw):
    return ContactStepResult(v_plus=v_plus, q_plus=integrate_config(q, v_plus, dt),
                             v_free=d.v_free, lambda_n=lam_n, lambda_t=lam_t, **kw)


# --------------------------------------------------------------------------
# exact complementarity (mode enumeration)
# --------------------------------------------------------------------------

def complementarity_residual(d, dt, v_plus, lam_n, lam_t):
    """Largest violation of the Coulomb complementarity conditions."""
    n = d.phi / dt + d.Jn @ v_plus
    vt = d.Jt @ v_plus
    res = 0.0
    for i in range(len(n)):
        cone = d.mu[i] * lam_n[i] - abs(lam_t[i])
        res = max(res, -n[i], -lam_n[i], abs(n[i] * lam_n[i]), -cone,
                  abs(vt[i]) * cone, max(0.0, lam_t[i] * vt[i]))
    force = d.M @ (v_plus - d.v_free) - d.Jn.T @ lam_n - d.Jt.T @ lam_t
    return max(res, float(np.max(np.abs(force))) if len(force) else 0.0)


def solve_lcp(model, q, v, u, dt, tol=1e-9):
    """Exact Coulomb contact step by enumerating open/stick/slide modes.

    Among all mode combinations consistent with the complementarity and
    friction conditions the lowest post-step kinetic energy wins; ties keep
    the first combination in enumeration order.
    """
    d = _step_data(model, q, v, u, dt)
    nc, nv = len(d.phi), len(d.v_free)
    if nc > MAX_ENUM_CONTACTS:
        raise ContactSolverError(f"mode enumeration supports at most {MAX_ENUM_CONTACTS} contacts")
    if nc == 0:
        return _result(q, dt, d, d.v_free.copy(), np.zeros(0), np.zeros(0), modes=())

    best = None
    dim = nv + 2 * nc
    rhs0 = np.concatenate([d.M @ d.v_free, np.zeros(2 * nc)])
    for modes in itertools.product((OPEN, STICK, SLIDE_POS, SLIDE_NEG), repeat=nc):
        K = np.zeros((dim, dim))
        rhs = rhs0.copy()
        K[:nv, :nv] = d.M
        K[:nv, nv:nv + nc] = -d.Jn.T
        K[:nv, nv + nc:] = -d.Jt.T
        for i, mode in enumerate(modes):
            rn, rt = nv + i, nv + nc + i
            if mode == OPEN:
                K[rn, nv + i] = 1.0
                K[rt, nv + nc + i] = 1.0
            else:
                K[rn, :nv] = d.Jn[i]
                rhs[rn] = -d.phi[i] / dt
                if mode == STICK:
                    K[rt, :nv] = d.Jt[i]
                else:
                    sgn = 1.0 if mode == SLIDE_POS else -1.0
                    K[rt, nv + nc + i] = 1.0
                    K[rt, nv + i] = sgn * d.mu[i]
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            continue
        vp, lam_n, lam_t = sol[:nv], sol[nv:nv + nc], sol[nv + nc:]
        scale = 1.0 + np.max(np.abs(lam_n)) + np.max(np.abs(vp))
        n = d.phi / dt + d.Jn @ vp
        vt = d.Jt @ vp
        ok = True
        for i, mode in enumerate(modes):
            if mode == OPEN:
                ok = n[i] >= -tol * scale
            elif mode == STICK:
                ok = lam_n[i] >= -tol * scale and abs(lam_t[i]) <= d.mu[i] * lam_n[i] + tol * scale
            elif mode == SLIDE_POS:
                ok = lam_n[i] >= -tol * scale and vt[i] >= -tol * scale
            else:
                ok = lam_n[i] >= -tol * scale and vt[i] <= tol * scale
            if not ok:
                break
        if not ok:
            continue
        ke = 0.5 * vp @ d.M @ vp
        if best is None or ke < best[0] - 1e-12 * max(1.0, abs(best[0])):
            best = (ke, modes, vp, lam_n, lam_t)

    if best is None:
        raise ContactSolverError("no consistent contact mode combination",
                                 phi=d.phi, v_free=d.v_free)
    _, modes, vp, lam_n, lam_t = best
    # exact zeros where the mode prescribes them
    lam_n = np.where(np.array(modes) == OPEN, 0.0, np.maximum(lam_n, 0.0))
    lam_t = np.where(np.array(modes) == OPEN, 0.0, lam_t)
    res = complementarity_residual(d, dt, vp, lam_n, lam_t)
    return _result(q, dt, d, vp, lam_n, lam_t, modes=modes, residual=res)


# --------------------------------------------------------------------------
# convex cone relaxation (exact active-set QP)
# --------------------------------------------------------------------------

def _cone_rows(d, dt):
    """Half-plane form ``G v + c >= 0`` of the planar velocity cones."""
    nc = len(d.phi)
    G = np.zeros((2 * nc, len(d.v_free)))
    c = np.zeros(2 * nc)
    for i in range(nc):
        G[2 * i] = d.Jn[i] / d.mu[i] - d.Jt[i]
        G[2 * i + 1] = d.Jn[i] / d.mu[i] + d.Jt[i]
        c[2 * i] = c[2 * i + 1] = d.phi[i] / (d.mu[i] * dt)
    return G, c


def solve_socp(model, q, v, u, dt, tol=1e-9):
    """Cone-relaxed contact step.

    Minimizes ``0.5 |v+ - v_free|_M^2`` subject to
    ``(phi/dt + Jn v+) >= mu |Jt v+|`` per contact. Each planar cone is the
    intersection of two half-planes, so the program is a strictly convex QP
    whose active set is found by enumeration.
    """
    d = _step_data(model, q, v, u, dt)
    nc, nv = len(d.phi), len(d.v_free)
    if nc > MAX_ENUM_CONTACTS:
        raise ContactSolverError(f"active-set enumeration supports at most {MAX_ENUM_CONTACTS} contacts")
    if nc == 0:
        return _result(q, dt, d, d.v_free.copy(), np.zeros(0), np.zeros(0))
    G, c = _cone_rows(d, dt)

    best = None
    for pattern in itertools.product(((), (0,), (1,), (0, 1)), repeat=nc):
        active = [2 * i + k for i, ks in enumerate(pattern) for k in ks]
        na = len(active)
        K = np.zeros((nv + na, nv + na))
        K[:nv, :nv] = d.M
        rhs = np.concatenate([d.M @ d.v_free, -c[active]])
        if na:
            K[:nv, nv:] = -G[active].T
            K[nv:, :nv] = G[active]
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            continue
        vp = sol[:nv]
        gamma = np.zeros(2 * nc)
        gamma[active] = sol[nv:]
        slack = G @ vp + c
        inactive = np.setdiff1d(np.arange(2 * nc), active)
        viol = max(0.0, -gamma.min(), -slack[inactive].min() if len(inactive) else 0.0)
        if best is None or viol < best[0] - 1e-15:
            best = (viol, vp, gamma, pattern)
        if viol == 0.0:
            break

    viol, vp, gamma, pattern = best
    scale = 1.0 + np.max(np.abs(vp)) + np.max(np.abs(gamma))
    if viol > tol * scale:
        raise ContactSolverError("cone program has no KKT point within tolerance",
                                 violation=viol, iterate=vp, multipliers=gamma)
    gamma = np.maximum(gamma, 0.0)
    g1, g2 = gamma[0::2], gamma[1::2]
    lam_n = (g1 + g2) / d.mu
    lam_t = g2 - g1
    kkt = d.M @ (vp - d.v_free) - G.T @ gamma
    res = max(float(np.max(np.abs(kkt))), viol, float(np.max(np.abs(gamma * (G @ vp + c)))))
    return _result(q, dt, d, vp, lam_n, lam_t, residual=res)


# --------------------------------------------------------------------------
# log-barrier smoothing
# --------------------------------------------------------------------------

def _cone_state(d, dt, vp):
    n = d.phi / dt + d.Jn @ vp
    t = d.Jt @ vp
    s = n * n / d.mu ** 2 - t * t
    return n, t, s


def _barrier_terms(d, dt, kappa, vp, hessian=True):
    """Objective, gradient and Hessian of the smoothed contact program."""
    n, t, s = _cone_state(d, dt, vp)
    dv = vp - d.v_free
    Mdv = d.M @ dv
    f = 0.5 * dv @ Mdv - np.sum(np.log(s)) / kappa
    lam_n = 2.0 * n / (d.mu ** 2 * kappa * s)
    lam_t = -2.0 * t / (kappa * s)
    grad = Mdv - d.Jn.T @ lam_n - d.Jt.T @ lam_t
    if not hessian:
        return f, grad, None
    # rows of ds/dv+ per contact, and the rank-2 curvature of each s_i
    gs = (2.0 * n / d.mu ** 2)[:, None] * d.Jn - (2.0 * t)[:, None] * d.Jt
    H = (d.M + (gs.T / s ** 2) @ gs / kappa
         - ((2.0 / (d.mu ** 2 * s))[:, None] * d.Jn).T @ d.Jn / kappa
         + ((2.0 / s)[:, None] * d.Jt).T @ d.Jt / kappa)
    return f, grad, H


def _interior(d, dt, vp, eps):
    n, _, s = _cone_state(d, dt, vp)
    return bool((n > 0).all() and (s >= eps).all())


def _push_direction(d, bad):
    Jv = np.vstack([d.Jn[bad], d.Jt[bad]])
    target = np.concatenate([np.ones(len(bad)), np.zeros(len(bad))])
    MinvJt = np.linalg.solve(d.M, Jv.T)
    w = np.linalg.lstsq(Jv @ MinvJt, target, rcond=None)[0]
    return MinvJt @ w


def feasibility_projection(d, dt, v_start, eps):
    """Push ``v_start`` along ``M^-1 J^T`` of violated contacts into the interior.

    The push direction raises the normal velocity of every violated contact
    by one unit while leaving its tangential velocity unchanged; its length
    is found by doubling and then bisection until every slack is ``>= eps``.
    Returns the projected velocity and the push direction (``None`` if no
    contact was violated).
    """
    n, _, s = _cone_state(d, dt, v_start)
    bad = np.nonzero((n <= 0) | (s < eps))[0]
    if len(bad) == 0:
        return v_start, None
    direction = _push_direction(d, bad)
    hi = 1e-3
    while not _interior(d, dt, v_start + hi * direction, eps):
        hi *= 2.0
        if hi > 1e12:
            raise ContactSolverError("feasibility projection found no interior point",
                                     v_start=v_start, phi=d.phi)
    lo = 0.0
    while hi - lo > 1e-10 * hi:
        mid = 0.5 * (lo + hi)
        if _interior(d, dt, v_start + mid * direction, eps):
            hi = mid
        else:
            lo = mid
    return v_start + hi * direction, direction


def _ray_minimize(d, dt, kappa, v0, direction):
    """Minimize the (convex) smoothed objective along ``v0 + b * direction``, ``b >= 0``."""
    def slope(b):
        vp = v0 + b * direction
        n, t, s = _cone_state(d, dt, vp)
        if not ((n > 0).all() and (s > 0).all()):
            return -np.inf
        ds = 2.0 * n / d.mu ** 2 * (d.Jn @ direction) - 2.0 * t * (d.Jt @ direction)
        return direction @ d.M @ (vp - d.v_free) - np.sum(ds / s) / kappa

    if slope(0.0) >= 0:
        return v0
    scale = np.linalg.norm(direction)
    hi = 1e-3 / max(scale, 1e-300)
    while slope(hi) < 0:
        hi *= 2.0
        if hi * scale > 1e8:
            return v0
    lo = 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if slope(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return v0 + lo * direction


def _newton(d, dt, cfg, v0):
    kappa = cfg.kappa
    vp = v0
    tol = cfg.tol * (1.0 + np.linalg.norm(d.v_free))
    f, grad, H = _barrier_terms(d, dt, kappa, vp)
    for it in range(cfg.max_iter + 1):
        gnorm = np.linalg.norm(grad)
        if gnorm <= tol:
            return vp, it, True, gnorm
        if it == cfg.max_iter:
            break
        try:
            step = -cho_solve(cho_factor(H), grad)
        except LinAlgError:
            step = -np.linalg.solve(H, grad)
        if np.linalg.norm(step) <= 4 * np.finfo(float).eps * (1.0 + np.linalg.norm(vp)):
            return vp, it, True, gnorm      # step below resolution of vp
        slope = grad @ step
        alpha = 1.0
        accepted = False
        for _ in range(80):
            trial = vp + alpha * step
            n, _, s = _cone_state(d, dt, trial)
            if (n > 0).all() and (s > 0).all():
                f_new, g_new, H_new = _barrier_terms(d, dt, kappa, trial)
                # near convergence f loses precision; a smaller gradient still counts
                if (f_new <= f + 1e-4 * alpha * slope + 1e-15 * abs(f)
                        or np.linalg.norm(g_new) <= (1.0 - 1e-4 * alpha) * gnorm):
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            break
        vp, f, grad, H = trial, f_new, g_new, H_new
    return vp, it, False, np.linalg.norm(grad)


def solve_smoothed(model, q, v, u, dt, cfg: Optional[SmoothingConfig] = None, v_init=None):
    """Barrier-smoothed contact step.

    Returns the stationary point of
    ``0.5 |v+ - v_free|_M^2 - (1/kappa) sum_i log s_i`` with
    ``s_i = (phi_i/dt + Jn_i v+)^2 / mu_i^2 - (Jt_i v+)^2``.
    """
    cfg = cfg or SmoothingConfig()
    d = _step_data(model, q, v, u, dt)
    return _solve_smoothed_data(d, q, dt, cfg, v_init)


def _solve_smoothed_data(d, q, dt, cfg, v_init=None):
    if len(d.phi) == 0:
        return _result(q, dt, d, d.v_free.copy(), np.zeros(0), np.zeros(0))
    start = d.v_free if v_init is None else np.asarray(v_init, dtype=float)
    v0, direction = feasibility_projection(d, dt, start, cfg.eps_feas)
    if direction is not None:
        v0 = _ray_minimize(d, dt, cfg.kappa, v0, direction)
    vp, iters, ok, gnorm = _newton(d, dt, cfg, v0)
    if not ok:
        raise ContactSolverError("Newton solve of the smoothed contact step did not converge",
                                 residual=gnorm, iterations=iters, iterate=vp)
    n, t, s = _cone_state(d, dt, vp)
    lam_n, lam_t = recover_impulses(n, t, s, cfg.kappa, d.mu)
    return _result(q, dt, d, vp, lam_n, lam_t, slack=s, newton_iters=iters,
                   converged=True, residual=gnorm)


def recover_impulses(normal_vel, tangent_vel, slack, kappa, mu):
    """Impulses implied by the barrier stationarity condition.

    ``normal_vel`` is ``phi/dt + Jn v+`` and ``tangent_vel`` is ``Jt v+``.
    """
    slack = np.asarray(slack, dtype=float)
    if np.any(slack <= 0):
        raise ValueError("impulse recovery needs strictly positive slacks")
    mu = np.asarray(mu, dtype=float)
    lam_n = 2.0 * np.asarray(normal_vel) / (mu ** 2 * kappa * slack)
    lam_t = -2.0 * np.asarray(tangent_vel) / (kappa * slack)
    return lam_n, lam_t


# --------------------------------------------------------------------------
# stepping and sensitivities
# --------------------------------------------------------------------------

STEPPERS = ("smoothed", "lcp", "socp")


def step(model, q, v, u, dt, cfg: Optional[SmoothingConfig] = None, stepper="smoothed",
         v_init=None):
    """One time step; returns ``(q_plus, v_plus, result)``."""
    if stepper == "smoothed":
        res = solve_smoothed(model, q, v, u, dt, cfg, v_init=v_init)
    elif stepper == "lcp":
        res = solve_lcp(model, q, v, u, dt)
    elif stepper == "socp":
        res = solve_socp(model, q, v, u, dt)
    else:
        raise ValueError(f"unknown stepper {stepper!r}; expected one of {STEPPERS}")
    return res.q_plus, res.v_plus, res


@dataclass
class StepDerivatives:
    """Sensitivities of ``x+ = (q + dt v+, v+)`` for the smoothed step.

    ``B_pi`` is with respect to the stacked per-link ``pi2``; ``B_theta``
    (present when log-Cholesky vectors are supplied) with respect to the
    stacked per-link ``theta2``.
    """
    A: np.ndarray
    B_u: np.ndarray
    B_pi: np.ndarray
    dv_dkappa: np.ndarray
    B_theta: Optional[np.ndarray] = None
    result: Optional[ContactStepResult] = None


def _velocity_to_state(dv, dt, nv, extra_q=None):
    top = dt * dv
    if extra_q is not None:
        top = top + extra_q
    return np.vstack([top, dv])


def step_derivatives(model, q, v, u, dt, cfg: Optional[SmoothingConfig] = None,
                     thetas=None, result: Optional[ContactStepResult] = None, v_init=None):
    """Analytic sensitivities of the smoothed step via its stationarity condition.

    With ``g(v+, .) = M (v+ - v) - dt (B u - h) - sum_i J_i^T lambda_i = 0`` and
    ``dg/dv+`` the barrier-augmented Hessian, every sensitivity is
    ``dv+/dz = -(dg/dv+)^-1 dg/dz``.
    """
    cfg = cfg or SmoothingConfig()
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    if result is None:
        result = solve_smoothed(model, q, v, u, dt, cfg, v_init=v_init)
    vp = result.v_plus
    nv = model.nv
    kappa = cfg.kappa

    terms = dynamics_terms(model, q, v, derivatives=True, params=True)
    B = model.actuation_matrix()
    kin = contact_kinematics(model, q, hessians=True)
    mu = np.array([c.mu for c in model.contacts])

    H = terms.M.copy()
    dvp = vp - v
    g_q = np.einsum("jlk,l->jk", terms.dM_dq, dvp) + dt * terms.dh_dq
    g_v = -terms.M + dt * terms.dh_dv
    barrier_grad = np.zeros(nv)
    for i in range(model.n_contacts):
        Jn, Jt, Hn, Ht = kin.Jn[i], kin.Jt[i], kin.Hn[i], kin.Ht[i]
        mu2 = mu[i] ** 2
        n = kin.phi[i] / dt + Jn @ vp
        t = Jt @ vp
        s = n * n / mu2 - t * t
        if s <= 0 or n <= 0:
            raise ContactSolverError("step derivatives need a strictly interior solution",
                                     slack=s, contact=i)
        gs = 2.0 * n / mu2 * Jn - 2.0 * t * Jt
        hs = 2.0 / mu2 * np.outer(Jn, Jn) - 2.0 * np.outer(Jt, Jt)
        H += (np.outer(gs, gs) / s ** 2 - hs / s) / kappa
        barrier_grad -= gs / (kappa * s)
        dn = Jn / dt + Hn @ vp
        dtv = Ht @ vp
        ds = 2.0 * n / mu2 * dn - 2.0 * t * dtv
        dG = 2.0 / mu2 * (np.outer(Jn, dn) + n * Hn) - 2.0 * (np.outer(Jt, dtv) + t * Ht)
        g_q -= (-np.outer(gs, ds) / s ** 2 + dG / s) / kappa

    g_u = -dt * B
    g_pi = (np.einsum("pjk,k->jp", terms.M_pi, dvp) + dt * terms.h_pi.T)
    g_kappa = -barrier_grad / kappa

    try:
        fac = cho_factor(H)
        solve = lambda rhs: cho_solve(fac, rhs)
    except LinAlgError as exc:
        raise ContactSolverError("barrier Hessian is not positive definite") from exc

    dv_dq = -solve(g_q)
    dv_dv = -solve(g_v)
    dv_du = -solve(g_u)
    dv_dpi = -solve(g_pi)
    dv_dk = -solve(g_kappa)

    eye = np.eye(nv)
    A = np.block([[eye + dt * dv_dq, dt * dv_dv], [dv_dq, dv_dv]])
    B_u = _velocity_to_state(dv_du, dt, nv)
    B_pi = _velocity_to_state(dv_dpi, dt, nv)
    B_theta = None
    if thetas is not None:
        from .inertia import pi_jacobian_2d
        thetas = np.asarray(thetas, dtype=float).reshape(model.n_links, 6)
        blocks = [B_pi[:, 4 * i:4 * i + 4] @ pi_jacobian_2d(thetas[i]) for i in range(model.n_links)]
        B_theta = np.hstack(blocks)
    return StepDerivatives(A=A, B_u=B_u, B_pi=B_pi, dv_dkappa=dv_dk, B_theta=B_theta,
                           result=result)
