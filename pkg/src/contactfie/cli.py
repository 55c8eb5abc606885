"""Batch command line: simulate, corrupt, estimate, gradcheck, sweep-kappa, eval, plot.

Every command writes its outputs plus a ``run.json`` record into ``--out``;
``contactfie rerun <run.json> --out DIR`` executes the record again.
Exit codes: 0 success, 1 input/output error, 2 usage error, 3 non-convergence
or a failed numerical check.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
import platform
import sys
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import pydantic
import scipy
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt

from . import __version__, jsonio
from .analysis import (evaluate, inertia_summary, problem_from_dataset, raw_metrics,
                       sweep_kappa)
from .contact import STEPPERS, ContactSolverError, SmoothingConfig
from .datagen import (HOPPER_Q0, Dataset, HopperSchedule, NoiseConfig, SimulationError,
                      corrupt, hopper_model, load_dataset, make_dataset)
from .estimator import (DynamicsError, EstimationSolution, WeightConfig,
                        baseline_fixed_contact_estimate, pfie_estimate)
from .gradcheck import gradcheck
from .model import load_model_file
from .plot import line_plot, state_channel_names

log = logging.getLogger("contactfie")

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_FAIL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


# --------------------------------------------------------------------------
# run configurations
# --------------------------------------------------------------------------

class _Config(BaseModel):
    model_config = ConfigDict(extra="forbid")

    def input_paths(self):
        return []


class SimulateConfig(_Config):
    model: Optional[str] = None
    steps: PositiveInt = 100
    dt: PositiveFloat = 0.025
    stepper: Literal["lcp", "smoothed", "socp"] = "lcp"
    kappa: Optional[PositiveFloat] = None
    seed: int = 0
    q0: Optional[list[float]] = None
    noise: dict[str, float] = Field(default_factory=dict)
    schedule: dict[str, float] = Field(default_factory=dict)

    def input_paths(self):
        return [self.model] if self.model else []


class CorruptConfig(_Config):
    dataset: str
    seed: int = 0
    noise: dict[str, float] = Field(default_factory=dict)

    def input_paths(self):
        return [self.dataset]


class EstimateConfig(_Config):
    dataset: str
    prior: Optional[str] = None
    mass_bias: PositiveFloat = 1.0
    kappa: PositiveFloat = 5000.0
    kappa_schedule: list[PositiveFloat] = Field(default_factory=list)
    identify: bool = True
    id_links: list[int] = Field(default_factory=lambda: [0])
    baseline: bool = False
    threshold: float = 0.02
    threads: PositiveInt = 1
    max_iter: PositiveInt = 100
    solver: Literal["fddp", "ddp"] = "fddp"
    init: Literal["consistent", "measurements"] = "consistent"
    weights: dict[str, float] = Field(default_factory=dict)

    def input_paths(self):
        return [self.dataset] + ([self.prior] if self.prior else [])


class GradcheckConfig(_Config):
    model: Optional[str] = None
    samples: PositiveInt = 100
    seed: int = 0
    kappa: PositiveFloat = 5000.0
    dt: PositiveFloat = 0.025

    def input_paths(self):
        return [self.model] if self.model else []


class SweepConfig(_Config):
    dataset: str
    kappas: list[PositiveFloat] = Field(min_length=1)
    estimate: bool = True
    mass_bias: PositiveFloat = 1.0
    max_iter: PositiveInt = 100
    threads: PositiveInt = 1
    stance: PositiveInt = 50
    weights: dict[str, float] = Field(default_factory=dict)

    def input_paths(self):
        return [self.dataset]


class EvalConfig(_Config):
    dataset: str
    solution: str

    def input_paths(self):
        return [self.dataset, self.solution]


class PlotConfig(_Config):
    inputs: list[str] = Field(min_length=1)
    channels: list[str] = Field(min_length=1)
    name: str = "plot.svg"
    title: str = ""

    def input_paths(self):
        return list(self.inputs)


CONFIGS = {"simulate": SimulateConfig, "corrupt": CorruptConfig, "estimate": EstimateConfig,
           "gradcheck": GradcheckConfig, "sweep-kappa": SweepConfig, "eval": EvalConfig,
           "plot": PlotConfig}


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _read_dataset(path) -> Dataset:
    try:
        return load_dataset(path)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read dataset {path}: {exc}") from exc


def _read_model(path):
    if path is None:
        return hopper_model()
    try:
        return load_model_file(path)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read model {path}: {exc}") from exc


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _noise(overrides, seed):
    names = {f.name for f in dataclasses.fields(NoiseConfig)} - {"seed"}
    bad = sorted(set(overrides) - names)
    if bad:
        raise UsageError(f"unknown noise channel(s) {bad}; expected {sorted(names)}")
    try:
        return NoiseConfig(**overrides, seed=seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _weights(overrides):
    names = {f.name for f in dataclasses.fields(WeightConfig)}
    bad = sorted(set(overrides) - names)
    if bad:
        raise UsageError(f"unknown weight(s) {bad}; expected {sorted(names)}")
    try:
        return WeightConfig(**overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _csv(rows, cols):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in cols])
    return buf.getvalue()


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_, str)):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _print_table(rows, cols):
    def f(v):
        if isinstance(v, (float, np.floating)):
            return format(float(v), ".5g")
        return "" if v is None else str(v)
    cells = [[str(c) for c in cols]] + [[f(r.get(c)) for c in cols] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(cols))]
    for row in cells:
        print("  ".join(s.rjust(w) for s, w in zip(row, widths)))


def _has_truth(ds: Dataset):
    return bool(np.isfinite(ds.xs).all())


# --------------------------------------------------------------------------
# commands; each returns (exit code, {file name: text})
# --------------------------------------------------------------------------

def cmd_simulate(cfg: SimulateConfig):
    model = _read_model(cfg.model)
    if cfg.q0 is not None:
        q0 = np.asarray(cfg.q0, dtype=float)
    elif cfg.model is None:
        q0 = np.asarray(HOPPER_Q0)
    else:
        raise UsageError("--q0 is required with a custom model")
    if q0.shape != (model.nv,):
        raise UsageError(f"--q0 needs {model.nv} values")
    fields = {f.name for f in dataclasses.fields(HopperSchedule)}
    bad = sorted(set(cfg.schedule) - fields)
    if bad:
        raise UsageError(f"unknown schedule option(s) {bad}; expected {sorted(fields)}")
    sched = dict(cfg.schedule)
    if "joint" in sched:
        sched["joint"] = int(sched["joint"])
    schedule = HopperSchedule(**sched)
    if model.nu < 1 or not 0 <= schedule.joint < model.n_joints:
        raise UsageError("the thrust schedule needs an actuated joint")
    x0 = np.concatenate([q0, np.zeros(model.nv)])
    try:
        ds = make_dataset(model, x0, schedule, cfg.dt, cfg.steps, _noise(cfg.noise, cfg.seed),
                          stepper=cfg.stepper, kappa=cfg.kappa, model_path=cfg.model)
    except SimulationError as exc:
        log.error("%s", exc)
        return EXIT_FAIL, {}
    cycles = int(np.sum(np.diff((ds.lambda_n.max(axis=1) > 1e-3).astype(int)) == 1))
    print(f"simulated {cfg.steps} steps, {cycles} touchdowns")
    return EXIT_OK, {"dataset.jsonl": ds.to_text(), "dataset.csv": ds.to_csv()}


def cmd_corrupt(cfg: CorruptConfig):
    ds = _read_dataset(cfg.dataset)
    if not _has_truth(ds):
        raise InputError(f"{cfg.dataset} carries no ground-truth states to corrupt")
    noise = _noise(cfg.noise, cfg.seed)
    ds = dataclasses.replace(ds, y=corrupt(ds.model, ds.xs, noise), noise=noise)
    return EXIT_OK, {"dataset.jsonl": ds.to_text(), "dataset.csv": ds.to_csv()}


def _estimate_problem(ds, cfg: EstimateConfig):
    prior = _read_model(cfg.prior) if cfg.prior else None
    L = ds.model.n_links
    bad = [i for i in cfg.id_links if not 0 <= i < L]
    if bad:
        raise UsageError(f"--id-links {bad} out of range for {L} links")
    mask = np.zeros((L, 6), dtype=bool)
    mask[cfg.id_links] = True
    return problem_from_dataset(
        ds, prior=prior, mass_bias=cfg.mass_bias, identify=cfg.identify,
        weights=_weights(cfg.weights), id_mask=mask,
        smoothing=SmoothingConfig(kappa=cfg.kappa), kappa_schedule=tuple(cfg.kappa_schedule),
        max_iter=cfg.max_iter, fddp=cfg.solver == "fddp", init=cfg.init, threads=cfg.threads)


def _method_row(name, sol, ds):
    row = {"method": name, "converged": sol.converged, "iterations": sol.iterations,
           "cost": sol.cost}
    if _has_truth(ds):
        m = evaluate(ds, sol)
        row.update(rmse_state=m["rmse_state"], rmse_force=m["rmse_force"],
                   contact_timing=m["contact_timing"])
    return row


def cmd_estimate(cfg: EstimateConfig):
    ds = _read_dataset(cfg.dataset)
    prob = _estimate_problem(ds, cfg)
    try:
        sol = pfie_estimate(prob)
    except (DynamicsError, ContactSolverError) as exc:
        log.error("estimation failed: %s", exc)
        return EXIT_FAIL, {}
    files = {"solution.json": jsonio.dumps(sol.to_dict(), indent=1) + "\n",
             "trace.csv": sol.trace_csv()}
    summary = {"solver": sol.solver, "converged": sol.converged, "iterations": sol.iterations,
               "cost": sol.cost, "breakdown": sol.breakdown,
               "inertia": inertia_summary(sol.pi, ds.model if _has_truth(ds) else None),
               "prior": inertia_summary(prob.model.pi_vector())}
    rows = [_method_row("pfie" if prob.id_mask.any() else "fie", sol, ds)]
    if _has_truth(ds):
        summary["metrics"] = evaluate(ds, sol)
        summary["raw_measurements"] = raw_metrics(ds)
        rows.insert(0, {"method": "raw", "rmse_state": summary["raw_measurements"]["rmse_state"]})
    if cfg.baseline:
        try:
            base = baseline_fixed_contact_estimate(prob, threshold=cfg.threshold)
        except (DynamicsError, ContactSolverError) as exc:
            log.error("baseline failed: %s", exc)
            return EXIT_FAIL, files
        files["baseline.json"] = jsonio.dumps(base.to_dict(), indent=1) + "\n"
        files["baseline_trace.csv"] = base.trace_csv()
        rows.append(_method_row("baseline", base, ds))
        summary["baseline"] = {"converged": base.converged, "iterations": base.iterations,
                               "cost": base.cost, "flags": {k: v for k, v in base.flags.items()
                                                            if k != "contact_flags"}}
        if _has_truth(ds):
            summary["baseline"]["metrics"] = evaluate(ds, base)
    cols = ["method", "converged", "iterations", "cost", "rmse_state", "rmse_force",
            "contact_timing"]
    files["comparison.csv"] = _csv(rows, cols)
    files["summary.json"] = jsonio.dumps(summary, indent=2) + "\n"
    _print_table(rows, cols)
    _print_table(summary["inertia"], list(summary["inertia"][0]))
    if not sol.converged:
        log.error("estimator stopped after %d iterations without converging", sol.iterations)
        return EXIT_FAIL, files
    return EXIT_OK, files


def cmd_gradcheck(cfg: GradcheckConfig):
    model = _read_model(cfg.model)
    rep = gradcheck(model, samples=cfg.samples, seed=cfg.seed, kappa=cfg.kappa, dt=cfg.dt)
    rows = [{"block": k, "max_rel_error": v} for k, v in rep.errors.items()]
    _print_table(rows, ["block", "max_rel_error"])
    print(f"resampled states: {rep.resampled}")
    files = {"gradcheck.json": jsonio.dumps(rep.to_dict(), indent=2) + "\n",
             "gradcheck.csv": _csv(rows, ["block", "max_rel_error"])}
    return (EXIT_OK if rep.ok else EXIT_FAIL), files


def cmd_sweep(cfg: SweepConfig):
    ds = _read_dataset(cfg.dataset)
    if not _has_truth(ds):
        raise InputError("the kappa sweep needs ground-truth states")
    kw = dict(mass_bias=cfg.mass_bias, weights=_weights(cfg.weights), max_iter=cfg.max_iter,
              threads=cfg.threads)
    rows = sweep_kappa(ds, cfg.kappas, estimate=cfg.estimate, problem_kw=kw, stance=cfg.stance)
    cols = ["kappa", "gap_socp"] + (["iterations", "cost", "rmse_force", "converged", "error"]
                                    if cfg.estimate else [])
    _print_table(rows, cols)
    kap = [r["kappa"] for r in rows]
    panels = [("gap to SOCP step (mean inf-norm, m/s)", [("gap", np.log10(kap),
                                                          [r["gap_socp"] for r in rows])])]
    if cfg.estimate:
        panels.append(("force RMSE (N)", [("rmse_force", np.log10(kap),
                                           [r["rmse_force"] for r in rows])]))
    svg = line_plot(panels, title="kappa sweep (x axis: log10 kappa)")
    return EXIT_OK, {"sweep.csv": _csv(rows, cols),
                     "sweep.json": jsonio.dumps(rows, indent=2) + "\n", "sweep.svg": svg}


def cmd_eval(cfg: EvalConfig):
    ds = _read_dataset(cfg.dataset)
    if not _has_truth(ds):
        raise InputError(f"{cfg.dataset} carries no ground-truth states")
    try:
        sol = EstimationSolution.from_dict(_read_json(cfg.solution))
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError(f"{cfg.solution} is not a solution file: {exc}") from exc
    if sol.xs.shape != ds.xs.shape:
        raise InputError("solution and dataset have different horizons or state sizes")
    out = {"estimate": evaluate(ds, sol), "raw_measurements": raw_metrics(ds),
           "inertia": inertia_summary(sol.pi, ds.model)}
    rows = [dict(source=k, **v) for k, v in out.items() if k != "inertia"]
    cols = ["source"] + sorted({c for r in rows for c in r} - {"source"})
    _print_table(rows, cols)
    return EXIT_OK, {"metrics.json": jsonio.dumps(out, indent=2) + "\n",
                     "metrics.csv": _csv(rows, cols)}


def _plot_sources(path):
    """``(label, {channel: (t, y)})`` pairs contributed by one input file."""
    p = Path(path)
    text = _read_text(path)
    first = text.lstrip()[:1]
    if p.suffix == ".csv":
        rows = list(csv.reader(io.StringIO(text)))
        if len(rows) < 2:
            raise InputError(f"{path}: no data rows")
        head = rows[0]
        data = np.array([[float(v) if v not in ("", "nan") else np.nan for v in r]
                         for r in rows[1:]])
        return [(p.stem, {h: (data[:, 0], data[:, i]) for i, h in enumerate(head) if i})]
    if first == "{" and "\n{" in text.strip():
        ds = _read_dataset(path)
        t = np.arange(ds.T + 1) * ds.dt
        names = state_channel_names(ds.model.nv, ds.model.n_contacts)
        truth, meas = {}, {}
        for i in range(2 * ds.model.nv):
            truth[names[i]] = (t, ds.xs[:, i])
            meas[names[i]] = (t, ds.y[:, i])
        C = ds.model.n_contacts
        for c in range(C):
            truth[names[2 * ds.model.nv + c]] = (t[:-1], ds.lambda_n[:, c] / ds.dt)
            truth[names[2 * ds.model.nv + C + c]] = (t[:-1], ds.lambda_t[:, c] / ds.dt)
        return [("truth", truth), ("measured", meas)]
    try:
        sol = EstimationSolution.from_dict(json.loads(text))
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError(f"{path}: not a dataset, solution or CSV file ({exc})") from exc
    nv = sol.xs.shape[1] // 2
    C = sol.lambda_n.shape[1]
    names = state_channel_names(nv, C)
    k = np.arange(sol.xs.shape[0], dtype=float)
    series = {names[i]: (k, sol.xs[:, i]) for i in range(2 * nv)}
    for c in range(C):
        series[names[2 * nv + c]] = (k[:-1], sol.lambda_n[:, c])
        series[names[2 * nv + C + c]] = (k[:-1], sol.lambda_t[:, c])
    return [(sol.solver, series)]


def _read_text(path):
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def cmd_plot(cfg: PlotConfig):
    sources = []
    for path in cfg.inputs:
        sources.extend(_plot_sources(path))
    available = sorted({c for _, s in sources for c in s})
    bad = [c for c in cfg.channels if c not in available]
    if bad:
        raise UsageError(f"unknown channel(s) {bad}; available: {', '.join(available)}")
    panels = [(ch, [(label, *s[ch]) for label, s in sources if ch in s]) for ch in cfg.channels]
    if Path(cfg.name).name != cfg.name or not cfg.name.endswith(".svg"):
        raise UsageError("--name must be a plain file name ending in .svg")
    return EXIT_OK, {cfg.name: line_plot(panels, cfg.title)}


COMMANDS = {"simulate": cmd_simulate, "corrupt": cmd_corrupt, "estimate": cmd_estimate,
            "gradcheck": cmd_gradcheck, "sweep-kappa": cmd_sweep, "eval": cmd_eval,
            "plot": cmd_plot}


# --------------------------------------------------------------------------
# provenance and execution
# --------------------------------------------------------------------------

def _sha256(path):
    try:
        with open(path, "rb") as fh:
            return hashlib.sha256(fh.read()).hexdigest()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def versions():
    return {"contactfie": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "pydantic": pydantic.VERSION, "python": platform.python_version()}


def execute(command, cfg: _Config, out):
    """Run a validated configuration and write its files and ``run.json`` into ``out``."""
    inputs = {p: _sha256(p) for p in cfg.input_paths()}
    os.makedirs(out, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    code, files = COMMANDS[command](cfg)
    record = {"command": command, "config": cfg.model_dump(mode="json"), "inputs": inputs,
              "versions": versions(), "outputs": sorted(files), "exit_code": code}
    for name, text in sorted(files.items()):
        with open(os.path.join(out, name), "w") as fh:
            fh.write(text)
    jsonio.write(os.path.join(out, "run.json"), record)
    log.info("%s: wrote %d files to %s (exit %d)", command, len(files) + 1, out, code)
    return code


def rerun(record_path, out):
    record = _read_json(record_path)
    try:
        command = record["command"]
        cfg = CONFIGS[command].model_validate(record["config"])
    except KeyError as exc:
        raise InputError(f"{record_path} is not a run record") from exc
    for path, digest in record.get("inputs", {}).items():
        if _sha256(path) != digest:
            log.warning("input %s changed since the recorded run", path)
    return execute(command, cfg, out)


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _assignment(text):
    name, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    try:
        return name.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{value!r} is not a number")


def build_parser():
    ap = argparse.ArgumentParser(prog="contactfie", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--out", required=True, help="output directory")
        return p

    p = add("simulate", "roll out a model and write a noisy dataset")
    p.add_argument("--model", help="model JSON (default: bundled hopper)")
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--dt", type=float, default=0.025)
    p.add_argument("--stepper", choices=STEPPERS, default="lcp")
    p.add_argument("--kappa", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--q0", type=_floats)
    p.add_argument("--noise", type=_assignment, action="append", default=[],
                   metavar="CHANNEL=SIGMA")
    p.add_argument("--schedule", type=_assignment, action="append", default=[],
                   metavar="NAME=VALUE", help="thrust schedule option")

    p = add("corrupt", "redraw a dataset's measurement noise")
    p.add_argument("--dataset", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=_assignment, action="append", default=[],
                   metavar="CHANNEL=SIGMA")

    p = add("estimate", "estimate the trajectory, impulses and inertial parameters")
    p.add_argument("--dataset", required=True)
    p.add_argument("--prior", help="model JSON holding the prior inertia")
    p.add_argument("--mass-bias", type=float, default=1.0,
                   help="scale the torso inertia of the prior by this factor")
    p.add_argument("--kappa", type=float, default=5000.0)
    p.add_argument("--kappa-schedule", type=_floats, default=[])
    p.add_argument("--no-id", dest="identify", action="store_false",
                   help="keep the inertia at the prior")
    p.add_argument("--id-links", type=_ints, default=[0])
    p.add_argument("--baseline", action="store_true",
                   help="also run the fixed-contact baseline")
    p.add_argument("--threshold", type=float, default=0.02,
                   help="contact-height threshold of the baseline (m)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--solver", choices=("fddp", "ddp"), default="fddp")
    p.add_argument("--init", choices=("consistent", "measurements"), default="consistent")
    p.add_argument("--weight", dest="weights", type=_assignment, action="append", default=[],
                   metavar="NAME=VALUE")

    p = add("gradcheck", "compare analytic derivatives with finite differences")
    p.add_argument("--model")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kappa", type=float, default=5000.0)
    p.add_argument("--dt", type=float, default=0.025)

    p = add("sweep-kappa", "estimator and smoothing gap across kappa values")
    p.add_argument("--dataset", required=True)
    p.add_argument("--kappas", type=_floats, default=[50.0, 100.0, 500.0, 1000.0, 5000.0])
    p.add_argument("--no-estimate", dest="estimate", action="store_false",
                   help="only measure the smoothing gap")
    p.add_argument("--mass-bias", type=float, default=1.0)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--stance", type=int, default=50, help="stance states averaged")
    p.add_argument("--weight", dest="weights", type=_assignment, action="append", default=[],
                   metavar="NAME=VALUE")

    p = add("eval", "score a solution against a dataset's ground truth")
    p.add_argument("--dataset", required=True)
    p.add_argument("--solution", required=True)

    p = add("plot", "overlay channels from datasets, solutions and CSV tables")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--channels", required=True, type=lambda s: [c for c in s.split(",") if c])
    p.add_argument("--name", default="plot.svg")
    p.add_argument("--title", default="")

    p = add("rerun", "execute a run.json record again")
    p.add_argument("record")
    return ap


def _config_from_args(args):
    d = {k: v for k, v in vars(args).items() if k not in ("command", "out")}
    for key in ("noise", "schedule", "weights"):
        if key in d:
            pairs = d[key]
            d[key] = dict(pairs)
    return CONFIGS[args.command].model_validate(d)


def _setup_logging():
    level = os.environ.get("PRIME_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        if args.command == "rerun":
            return rerun(args.record, args.out)
        cfg = _config_from_args(args)
        return execute(args.command, cfg, args.out)
    except pydantic.ValidationError as exc:
        print(f"contactfie {args.command}: invalid options\n{exc}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"contactfie {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, OSError) as exc:
        print(f"contactfie {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
