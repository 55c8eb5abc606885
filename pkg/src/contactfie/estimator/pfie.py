"""Full-information estimation with optional inertial identification on the
smoothed contact dynamics.

The process model is ``v+ = F_v(q, v, u; theta) + delta`` and
``q+ = q + dt v+``; ``delta`` is the per-step disturbance being estimated.
Identified log-Cholesky entries ride along as a static augmented state.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import inertia
from ..contact import ContactSolverError, SmoothingConfig, solve_smoothed, step_derivatives
from ..dynamics import free_velocity
from .ocp import DynamicsError, LeastSquaresOCP, SolverOptions, solve
from .problem import EstimationProblem, EstimationSolution

log = logging.getLogger(__name__)


class SmoothedProcess:
    """Process model on the barrier-smoothed contact step."""

    def __init__(self, problem: EstimationProblem, kappa: float):
        self.problem = problem
        self.cfg = SmoothingConfig(kappa=kappa, tol=problem.smoothing.tol,
                                   max_iter=problem.smoothing.max_iter,
                                   eps_feas=problem.smoothing.eps_feas)
        self.nv = problem.model.nv
        self.nx = 2 * self.nv
        self.nu = self.nv
        self.npar = int(problem.id_mask.sum())
        self._models = {}
        self.Bd = np.vstack([problem.dt * np.eye(self.nv), np.eye(self.nv)])

    def model(self, p):
        key = np.asarray(p, dtype=float).tobytes()
        m = self._models.get(key)
        if m is None:
            if len(self._models) > 64:
                self._models.clear()
            m = self.problem.model_for_theta(self.problem.theta_full(p))
            self._models[key] = m
        return m

    def contact_step(self, k, x, p, hint=None):
        pr = self.problem
        q, v = x[:self.nv], x[self.nv:]
        try:
            return solve_smoothed(self.model(p), q, v, pr.u[k], pr.dt, self.cfg,
                                  v_init=None if hint is None else hint.v_plus)
        except (ContactSolverError, np.linalg.LinAlgError, ValueError) as exc:
            raise DynamicsError(f"contact step {k} failed: {exc}") from exc

    def step(self, k, x, u, p, hint=None):
        res = self.contact_step(k, x, p, hint)
        vp = res.v_plus + u
        return np.concatenate([x[:self.nv] + self.problem.dt * vp, vp]), res

    def linearize(self, k, x, u, p, aux):
        pr = self.problem
        theta = pr.theta_full(p)
        d = step_derivatives(self.model(p), x[:self.nv], x[self.nv:], pr.u[k], pr.dt, self.cfg,
                             thetas=theta, result=aux)
        P = d.B_theta[:, pr.id_mask.ravel()]
        return d.A, self.Bd, P

    def linearize_all(self, xs, us, p, aux):
        self.model(p)
        jobs = range(len(us))
        f = lambda k: self.linearize(k, xs[k], us[k], p, aux[k][1])
        if self.problem.threads > 1:
            with ThreadPoolExecutor(self.problem.threads) as ex:
                return list(ex.map(f, jobs))
        return [f(k) for k in jobs]

    def velocity_defect(self, k, x, x_next, p, hint=None):
        """Disturbance that makes ``x_next``'s velocity follow from ``x``."""
        res = self.contact_step(k, x, p, hint)
        return x_next[self.nv:] - res.v_plus, res


def _interp_missing(values, present):
    out = values.copy()
    idx = np.arange(len(values))
    for j in range(values.shape[1]):
        ok = present[:, j]
        if ok.all():
            continue
        if not ok.any():
            raise ValueError(f"state component {j} is never measured")
        out[:, j] = np.interp(idx, idx[ok], values[ok, j])
    return out


def seed_positions(problem: EstimationProblem):
    nv = problem.model.nv
    return _interp_missing(problem.y[:, :nv], problem.present[:, :nv])


def seed_trajectory(problem: EstimationProblem):
    """Measurement-seeded states.

    Positions come from the measurements (gaps interpolated).  For
    ``init='consistent'`` velocities are backward differences of those
    positions, so ``q_{k+1} = q_k + dt v_{k+1}`` holds exactly; the
    first velocity is the measured one when present.  For
    ``init='measurements'`` measured velocities are used where present.
    """
    nv, dt = problem.model.nv, problem.dt
    q = seed_positions(problem)
    v = np.empty_like(q)
    fd = np.diff(q, axis=0) / dt
    v[1:] = fd
    v[0] = fd[0] if len(fd) else 0.0
    if problem.init == "consistent":
        meas0 = problem.y[0, nv:]
        ok = np.isfinite(meas0)
        v[0, ok] = meas0[ok]
    else:
        mv = problem.y[:, nv:]
        ok = np.isfinite(mv)
        v[ok] = mv[ok]
    return np.hstack([q, v])


def _ocp(problem, dyn, x_prior):
    w = problem.weights
    wy = w.measurement_vector(problem.model)
    present = problem.present
    Wy = np.where(present, wy[None, :], 0.0)
    y = np.where(present, problem.y, 0.0)
    W0 = w.initial * wy
    p_prior = problem.theta_prior[problem.id_mask]
    Wp = np.full(len(p_prior), w.parameter)
    return LeastSquaresOCP(dyn, y=y, Wy=Wy, Wu=w.process_vector(problem.model),
                           x_prior=x_prior, W0=W0, p_prior=p_prior, Wp=Wp)


def _close_velocity_gaps(dyn, xs, p, hints=None):
    """Disturbances reproducing the given states' velocities."""
    T = xs.shape[0] - 1
    us = np.zeros((T, dyn.nu))
    for k in range(T):
        us[k], _ = dyn.velocity_defect(k, xs[k], xs[k + 1], p, None if hints is None else hints[k])
    return us


def _solution(problem, dyn, sol, trace, solver):
    p = sol.p
    theta = problem.theta_full(p)
    pis = np.array([inertia.theta_to_pi_2d(t) for t in theta])
    results = [a[1] for a in sol.aux]
    C = problem.model.n_contacts
    lam_n = np.array([r.lambda_n for r in results]).reshape(problem.T, C)
    lam_t = np.array([r.lambda_t for r in results]).reshape(problem.T, C)
    resid = max([r.residual for r in results], default=0.0)
    return EstimationSolution(
        xs=sol.xs, deltas=sol.us, theta=theta, pi=pis, lambda_n=lam_n, lambda_t=lam_t,
        cost=sol.cost, breakdown=sol.terms, trace=trace, converged=sol.converged,
        iterations=len(trace) - 1, gap=sol.gap, solver=solver, force_residual=resid)


def _run(problem: EstimationProblem, fddp: bool, identify: bool, dynamics_factory=None,
         solver_name=None):
    if not identify:
        problem = _without_identification(problem)
    factory = dynamics_factory or (lambda kappa: SmoothedProcess(problem, kappa))
    kappas = problem.kappas()
    dyn = factory(kappas[0])
    p = problem.theta_prior[problem.id_mask].copy()
    xs = seed_trajectory(problem)
    x_prior = xs[0].copy() if problem.x_prior is None else np.asarray(problem.x_prior, dtype=float)
    if fddp and problem.init == "measurements":
        us = np.zeros((problem.T, dyn.nu))
    else:
        us = _close_velocity_gaps(dyn, xs, p)
    opts = SolverOptions(max_iter=problem.max_iter, rel_tol=problem.rel_tol,
                         gap_tol=problem.gap_tol)
    trace = []
    sol = None
    for stage, kappa in enumerate(kappas):
        if stage > 0:
            dyn = factory(kappa)
            us = _close_velocity_gaps(dyn, xs, p, [a[1] for a in sol.aux])
        ocp = _ocp(problem, dyn, x_prior)
        sol = solve(ocp, xs, us, p, opts, feasible=not fddp)
        offset = trace[-1]["iteration"] if trace else 0
        for row in sol.trace:
            if stage > 0 and row["iteration"] == 0:
                continue
            trace.append(dict(row, iteration=row["iteration"] + offset, kappa=kappa))
        xs, us, p = sol.xs, sol.us, sol.p
        log.info("kappa %g: cost %.6g after %d iterations (converged=%s)",
                 kappa, sol.cost, sol.iterations, sol.converged)
    name = solver_name or ("fddp" if fddp else "ddp")
    return _solution(problem, dyn, sol, trace, name)


def _without_identification(problem):
    import dataclasses
    return dataclasses.replace(problem, id_mask=np.zeros_like(problem.id_mask))


def ddp_solve(problem, init=None, options=None):
    """Gauss-Newton DDP from a dynamically feasible initial rollout.

    ``problem`` is an :class:`EstimationProblem` (identifying the entries in
    its ``id_mask``) or a bare :class:`LeastSquaresOCP`, in which case
    ``init = (xs, us[, p])`` is the initial guess.
    """
    if isinstance(problem, LeastSquaresOCP):
        return solve(problem, *_ocp_init(problem, init), options=options, feasible=True)
    return _run(problem, fddp=False, identify=True)


def fddp_solve(problem, init=None, options=None):
    """Multiple-shooting variant tolerating an infeasible initial guess."""
    if isinstance(problem, LeastSquaresOCP):
        return solve(problem, *_ocp_init(problem, init), options=options, feasible=False)
    return _run(problem, fddp=True, identify=True)


def _ocp_init(ocp, init):
    dyn = ocp.dynamics
    if init is None:
        xs = np.tile(ocp.x_prior, (ocp.T + 1, 1))
        return xs, np.zeros((ocp.T, dyn.nu)), None
    init = tuple(init)
    return init if len(init) == 3 else init + (None,)


def pfie_estimate(problem: EstimationProblem):
    """Joint trajectory and inertial estimation; plain FIE when nothing is identified."""
    if not problem.id_mask.any():
        return fddp_solve(problem)
    return _run(problem, fddp=problem.fddp, identify=True,
                solver_name="pfie-fddp" if problem.fddp else "pfie-ddp")


def objective(problem: EstimationProblem, xs, theta=None):
    """Total cost and breakdown of a candidate trajectory.

    Disturbances are recovered as velocity defects against the smoothed
    step; ``theta`` (links x 6) defaults to the prior.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.shape != (problem.T + 1, 2 * problem.model.nv):
        raise ValueError(f"trajectory must have shape {(problem.T + 1, 2 * problem.model.nv)}")
    theta = problem.theta_prior if theta is None else np.asarray(theta, dtype=float).reshape(-1, 6)
    p = theta[problem.id_mask]
    fixed = ~problem.id_mask
    if not np.allclose(theta[fixed], problem.theta_prior[fixed], rtol=0, atol=0):
        raise ValueError("theta differs from the prior outside the identification mask")
    kappa = problem.kappas()[-1]
    dyn = SmoothedProcess(problem, kappa)
    us = _close_velocity_gaps(dyn, xs, p)
    x_prior = seed_trajectory(problem)[0] if problem.x_prior is None else problem.x_prior
    ocp = _ocp(problem, dyn, x_prior)
    terms = ocp.cost_terms(xs, us, p)
    return sum(terms.values()), terms
