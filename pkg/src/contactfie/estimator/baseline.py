"""Baseline estimator with a contact sequence fixed in advance.

Contacts are declared active at a node when the measured contact height is
below a threshold.  Active contacts are rigid: the linearized next-step gap
closes (``phi/dt + Jn v+ = 0``) and the contact point does not slip
(``Jt v+ = 0``), solved with the impulses as an equality constrained KKT
system.  The friction cone is not enforced; impulses
outside it are clamped for reporting and counted.
"""
from __future__ import annotations

import dataclasses

import numpy as np

from .. import inertia
from ..dynamics import contact_kinematics, dynamics_terms
from .ocp import DynamicsError
from .pfie import SmoothedProcess, _run, seed_positions
from .problem import EstimationProblem


@dataclasses.dataclass
class RigidStep:
    v_plus: np.ndarray
    lambda_n: np.ndarray
    lambda_t: np.ndarray
    residual: float
    singular: bool
    outside_cone: int


def contact_flags(problem: EstimationProblem, threshold):
    """Per step, per contact: measured height below ``threshold``."""
    model = problem.model
    q = seed_positions(problem)
    return np.array([contact_kinematics(model, q[k]).phi < threshold
                     for k in range(problem.T)]).reshape(problem.T, model.n_contacts)


def _kkt(model, q, v, u, dt, active, pi_derivs=False, state_derivs=False):
    terms = dynamics_terms(model, q, v, derivatives=state_derivs, params=pi_derivs)
    kin = contact_kinematics(model, q, hessians=state_derivs)
    B = model.actuation_matrix()
    nv = model.nv
    idx = np.nonzero(active)[0]
    J = np.vstack([kin.Jn[idx], kin.Jt[idx]])
    m = J.shape[0]
    K = np.zeros((nv + m, nv + m))
    K[:nv, :nv] = terms.M
    K[:nv, nv:] = -J.T
    K[nv:, :nv] = J
    rhs = np.concatenate([terms.M @ v + dt * (B @ np.atleast_1d(u) - terms.h),
                          -kin.phi[idx] / dt, np.zeros(len(idx))])
    return terms, kin, B, idx, J, K, rhs


def _solve(K, rhs):
    try:
        if np.linalg.cond(K) > 1e12:
            raise np.linalg.LinAlgError("ill-conditioned")
        return np.linalg.solve(K, rhs), False, None
    except np.linalg.LinAlgError:
        Kp = np.linalg.pinv(K)
        return Kp @ rhs, True, Kp


def rigid_step(model, q, v, u, dt, active):
    terms, kin, B, idx, J, K, rhs = _kkt(model, q, v, u, dt, active)
    nv = model.nv
    sol, singular, _ = _solve(K, rhs)
    vp = sol[:nv]
    lam = sol[nv:]
    na = len(idx)
    lam_n = np.zeros(model.n_contacts)
    lam_t = np.zeros(model.n_contacts)
    lam_n[idx], lam_t[idx] = lam[:na], lam[na:]
    mu = np.array([c.mu for c in model.contacts])
    outside = int(np.sum(active & ((lam_n < 0) | (np.abs(lam_t) > mu * lam_n))))
    res = float(np.max(np.abs(K @ sol - rhs))) if len(rhs) else 0.0
    return RigidStep(vp, lam_n, lam_t, res, singular, outside)


def rigid_step_derivatives(model, q, v, u, dt, active, vp, lam, thetas):
    """Sensitivities of ``x+`` for the rigid step through its KKT conditions."""
    terms, kin, B, idx, J, K, rhs = _kkt(model, q, v, u, dt, active,
                                         pi_derivs=True, state_derivs=True)
    nv = model.nv
    m = J.shape[0]
    H = np.concatenate([kin.Hn[idx], kin.Ht[idx]]) if m else np.zeros((0, nv, nv))
    lam_a = np.concatenate([lam[0][idx], lam[1][idx]])
    dvp = vp - v
    # residual g = [M dv + dt (h - B u) - J^T lam ; phi/dt + Jn v+ ; Jt v+]
    g_q = np.zeros((nv + m, nv))
    g_q[:nv] = np.einsum("jlk,l->jk", terms.dM_dq, dvp) + dt * terms.dh_dq
    if m:
        g_q[:nv] -= np.einsum("i,ijk->jk", lam_a, H)
        g_q[nv:] = np.einsum("ijk,j->ik", H, vp)
        g_q[nv:nv + len(idx)] += kin.Jn[idx] / dt
    g_v = np.zeros((nv + m, nv))
    g_v[:nv] = -terms.M + dt * terms.dh_dv
    g_u = np.zeros((nv + m, B.shape[1]))
    g_u[:nv] = -dt * B
    g_pi = np.zeros((nv + m, 4 * model.n_links))
    g_pi[:nv] = np.einsum("pjk,k->jp", terms.M_pi, dvp) + dt * terms.h_pi.T
    sol, singular, Kp = _solve(K, np.zeros(nv + m))
    solve = (lambda r: Kp @ r) if singular else (lambda r: np.linalg.solve(K, r))
    dv_dq = -solve(g_q)[:nv]
    dv_dv = -solve(g_v)[:nv]
    dv_dpi = -solve(g_pi)[:nv]
    eye = np.eye(nv)
    A = np.block([[eye + dt * dv_dq, dt * dv_dv], [dv_dq, dv_dv]])
    B_pi = np.vstack([dt * dv_dpi, dv_dpi])
    blocks = [B_pi[:, 4 * i:4 * i + 4] @ inertia.pi_jacobian_2d(thetas[i])
              for i in range(model.n_links)]
    return A, np.hstack(blocks)


class RigidProcess(SmoothedProcess):
    """Process model on the fixed-contact rigid step."""

    def __init__(self, problem, flags):
        super().__init__(problem, kappa=problem.smoothing.kappa)
        self.flags = np.asarray(flags, dtype=bool)

    def contact_step(self, k, x, p, hint=None):
        pr = self.problem
        q, v = x[:self.nv], x[self.nv:]
        res = rigid_step(self.model(p), q, v, pr.u[k], pr.dt, self.flags[k])
        if not np.all(np.isfinite(res.v_plus)):
            raise DynamicsError(f"rigid step {k} produced non-finite velocity")
        return res

    def linearize(self, k, x, u, p, aux):
        pr = self.problem
        A, B_theta = rigid_step_derivatives(
            self.model(p), x[:self.nv], x[self.nv:], pr.u[k], pr.dt, self.flags[k],
            aux.v_plus, (aux.lambda_n, aux.lambda_t), pr.theta_full(p))
        return A, self.Bd, B_theta[:, pr.id_mask.ravel()]


def baseline_fixed_contact_estimate(problem: EstimationProblem, threshold=0.02, flags=None):
    """Estimate on rigid dynamics with contact flags from measured heights.

    ``flags`` (steps x contacts) overrides the height test when given.
    """
    if flags is None:
        flags = contact_flags(problem, threshold)
    else:
        flags = np.asarray(flags, dtype=bool).reshape(problem.T, problem.model.n_contacts)
        threshold = None
    problem = dataclasses.replace(problem, kappa_schedule=())
    sol = _run(problem, fddp=problem.fddp, identify=True,
               dynamics_factory=lambda kappa: RigidProcess(problem, flags),
               solver_name="baseline-fixed-contact")
    # report impulses clamped into the friction cone, counting violations
    mu = np.array([c.mu for c in problem.model.contacts])
    raw_n, raw_t = sol.lambda_n, sol.lambda_t
    lam_n = np.maximum(raw_n, 0.0)
    lam_t = np.clip(raw_t, -mu * lam_n, mu * lam_n)
    outside = int(np.sum(flags & ((raw_n < 0) | (np.abs(raw_t) > mu * np.maximum(raw_n, 0) + 1e-12))))
    model = problem.model_for_theta(sol.theta)
    nv = model.nv
    singular = sum(rigid_step(model, sol.xs[k, :nv], sol.xs[k, nv:], problem.u[k], problem.dt,
                              flags[k]).singular for k in range(problem.T))
    sol.lambda_n, sol.lambda_t = lam_n, lam_t
    sol.flags = {"contact_flags": flags.astype(int).tolist(), "outside_cone": outside,
                 "singular_nodes": int(singular), "threshold": threshold}
    return sol
