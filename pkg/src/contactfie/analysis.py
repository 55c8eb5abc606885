"""Experiment helpers shared by the command line and the acceptance checks."""
from __future__ import annotations

import dataclasses
import logging

import numpy as np

from . import contact as ct
from .datagen import Dataset, contact_active, metrics
from .estimator import (DynamicsError, EstimationProblem, baseline_fixed_contact_estimate,
                        pfie_estimate)

log = logging.getLogger(__name__)


def biased_prior(model, link=0, factor=1.3):
    """Scale one link's mass, first moments and inertia together.

    The centre of mass and radius of gyration stay put; only the mass is wrong.
    """
    pis = model.pi_vector().reshape(model.n_links, 4).copy()
    pis[link] *= factor
    return model.with_pi(pis)


def problem_from_dataset(ds: Dataset, prior=None, mass_bias=1.0, identify=True, **kw):
    """Estimation problem on a dataset's measurements and recorded inputs."""
    prior = prior if prior is not None else ds.model
    if mass_bias != 1.0:
        prior = biased_prior(prior, 0, mass_bias)
    prob = EstimationProblem(prior, ds.y, ds.us, ds.dt, **kw)
    if not identify:
        prob = dataclasses.replace(prob, id_mask=np.zeros_like(prob.id_mask))
    return prob


def inertia_summary(pis, truth_model=None):
    """Mass, COM and rotational inertia per link, with truth when known."""
    rows = []
    for i, pi in enumerate(np.asarray(pis).reshape(-1, 4)):
        m, hx, hy, iz = pi
        row = {"link": i, "mass": m, "com_x": hx / m, "com_y": hy / m, "Iz": iz}
        if truth_model is not None:
            tm, thx, thy, tiz = truth_model.links[i].pi2
            row.update(mass_true=tm, com_x_true=thx / tm, com_y_true=thy / tm, Iz_true=tiz)
        rows.append(row)
    return rows


def evaluate(ds: Dataset, sol):
    """Accuracy of a solution against the dataset's ground truth."""
    return metrics(sol.xs, ds.xs, ds.model, ds.dt, sol.lambda_n, ds.lambda_n, sol.cost)


def raw_metrics(ds: Dataset):
    return metrics(ds.y, ds.xs, ds.model, ds.dt)


def stance_indices(ds: Dataset, count=50):
    """First ``count`` steps whose ground-truth contact is active."""
    active = contact_active(ds.lambda_n).any(axis=1)
    idx = np.nonzero(active)[0]
    return idx[:count]


def smoothing_gap(model, xs, us, dt, indices, kappa):
    """Mean over ``indices`` of ``max |v+_smoothed - v+_socp|``."""
    nv = model.nv
    cfg = ct.SmoothingConfig(kappa=kappa)
    gaps = []
    for k in indices:
        q, v = xs[k, :nv], xs[k, nv:]
        a = ct.solve_smoothed(model, q, v, us[k], dt, cfg).v_plus
        b = ct.solve_socp(model, q, v, us[k], dt).v_plus
        gaps.append(np.max(np.abs(a - b)))
    return float(np.mean(gaps)) if gaps else float("nan")


def sweep_kappa(ds: Dataset, kappas, estimate=True, problem_kw=None, stance=50):
    """Per-kappa estimator statistics and smoothing gap to the SOCP step.

    A failed estimate leaves NaN in its row and the sweep continues.
    """
    if len(kappas) == 0:
        raise ValueError("need at least one kappa")
    problem_kw = dict(problem_kw or {})
    idx = stance_indices(ds, stance)
    rows = []
    for kappa in kappas:
        row = {"kappa": float(kappa), "gap_socp": smoothing_gap(ds.model, ds.xs, ds.us, ds.dt,
                                                                idx, kappa)}
        if estimate:
            row.update(iterations=float("nan"), cost=float("nan"), rmse_force=float("nan"),
                       converged=False, error=None)
            try:
                prob = problem_from_dataset(
                    ds, smoothing=ct.SmoothingConfig(kappa=float(kappa)), **problem_kw)
                sol = pfie_estimate(prob)
                m = evaluate(ds, sol)
                row.update(iterations=sol.iterations, cost=sol.cost,
                           rmse_force=m["rmse_force"], converged=sol.converged)
            except (DynamicsError, ct.ContactSolverError, np.linalg.LinAlgError) as exc:
                log.warning("kappa %g failed: %s", kappa, exc)
                row["error"] = str(exc)
        rows.append(row)
    return rows


def compare_baseline(ds: Dataset, threshold=0.02, problem_kw=None):
    """Force and state accuracy of the smoothed estimator and the fixed-contact one."""
    prob = problem_from_dataset(ds, **dict(problem_kw or {}))
    ours = pfie_estimate(prob)
    base = baseline_fixed_contact_estimate(prob, threshold=threshold)
    return {"pfie": evaluate(ds, ours), "baseline": evaluate(ds, base)}, ours, base

