"""Command-line front end: ``onebit {theory,bound,threshold,simulate,figure}``.

Every command produces flat records written as CSV (floats with 17
significant digits, so values round-trip exactly) or JSON.  Sweeps may run
cells in a process pool; output order is always sorted by (loss, delta,
epsilon) so files do not depend on scheduling.

Exit codes: 0 success, 2 usage error, 3 a cell failed numerically under
``--strict``.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bounds import (analytic_noiseless_bound, correlation_upper_bound, fisher_info,
                     separability_threshold)
from .empirical import run_replicates
from .errors import (DivergedError, DomainError, NumericError, OneBitError, OracleError,
                     UnboundedSaddleError, UnboundedSolutionError)
from .expectation import Channel, ExpectationEngine
from .losses import LOSS_NAMES, make_loss
from .system import SolverConfig, predicted_correlation, solve_ao_saddle, solve_fixed_point

log = logging.getLogger("onebit")

OUT_DIR_ENV = "ONEBIT_OUT_DIR"
EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
FIGURES = ("fig2", "fig3", "fig4", "sigma", "threshold")
# statuses that are mathematical outcomes rather than failures
BENIGN = ("ok", "unbounded")
DOMINANCE_SLACK = 1e-3

# column name -> type, in output order
RECORD_FIELDS = {
    "loss": str, "delta": float, "epsilon": float, "r": float, "status": str,
    "mu": float, "alpha": float, "lambda": float, "theory_corr": float,
    "bound_corr": float, "bound_ok": bool, "empirical_mean": float,
    "empirical_std": float, "bias_norm_mean": float, "trials": int,
    "unbounded_count": int, "seeds": str, "engine": str, "version": str, "message": str,
}
BOUND_FIELDS = {
    "delta": float, "epsilon": float, "sigma_min": float, "corr_upper": float,
    "analytic_corr": float, "method": str, "version": str,
}
THRESHOLD_FIELDS = {"epsilon": float, "delta_star": float, "c_star": float, "version": str}
SIGMA_FIELDS = {"epsilon": float, "sigma": float, "h": float}
SCHEMAS = {"record": RECORD_FIELDS, "bound": BOUND_FIELDS, "threshold": THRESHOLD_FIELDS,
           "sigma": SIGMA_FIELDS}


class UsageError(OneBitError):
    """Bad command-line input; reported with exit code 2."""


# ---------------------------------------------------------------------------
# value formatting and parsing

def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def parse_value(text: str, kind):
    if text == "":
        return None
    if kind is float:
        return float(text)
    if kind is int:
        return int(text)
    if kind is bool:
        return text == "true"
    return text


def _json_value(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            return format_value(v)
        return v
    if isinstance(v, np.integer):
        return int(v)
    return v


def _from_json(v, kind):
    if v is None:
        return None
    if kind is float:
        return float(v)
    return v


def render(records, schema, fmt="csv") -> str:
    """Serialise records with a fixed column order."""
    cols = list(schema)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for rec in records:
            writer.writerow([format_value(rec.get(c)) for c in cols])
        return buf.getvalue()
    if fmt == "json":
        rows = [{c: _json_value(rec.get(c)) for c in cols} for rec in records]
        return json.dumps(rows, indent=1) + "\n"
    raise UsageError(f"unknown output format {fmt!r}")


def parse_records(text: str, schema, fmt="csv") -> list:
    """Inverse of :func:`render`."""
    if fmt == "csv":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        return [{c: parse_value(v, schema.get(c, str)) for c, v in zip(header, row)}
                for row in reader]
    rows = json.loads(text)
    return [{c: _from_json(v, schema.get(c, str)) for c, v in row.items()} for row in rows]


def read_records(path, schema=RECORD_FIELDS) -> list:
    path = Path(path)
    fmt = "json" if path.suffix == ".json" else "csv"
    return parse_records(path.read_text(), schema, fmt)


# ---------------------------------------------------------------------------
# argument handling

def parse_grid(text) -> list:
    """``"2"``, ``"2,4,8"``, ``"start:stop:count"`` (linear) or ``"start:stop:count:log"``."""
    if isinstance(text, (int, float)):
        return [float(text)]
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    text = str(text).strip()
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] != "log"):
                raise ValueError
            start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
            if count < 1:
                raise ValueError
            if len(parts) == 4:
                if start <= 0 or stop <= 0:
                    raise ValueError
                return [float(v) for v in np.geomspace(start, stop, count)]
            return [float(v) for v in np.linspace(start, stop, count)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse grid {text!r}; use a number, a comma list,"
                         " start:stop:count or start:stop:count:log") from None


def _names(text) -> list:
    if isinstance(text, (list, tuple)):
        return [str(t) for t in text]
    return [t.strip() for t in str(text).split(",") if t.strip()]


@dataclass
class ExperimentSpec:
    command: str
    losses: list = field(default_factory=lambda: ["ls"])
    deltas: list = field(default_factory=list)
    epsilons: list = field(default_factory=lambda: [0.0])
    r: float = 0.0
    n: int = 128
    trials: int = 25
    seed: int = 0
    engine: str = "gh"
    nodes: int = 128
    samples: int = 100_000
    out: Optional[str] = None
    fmt: str = "csv"
    strict: bool = False
    oracle: str = "fp"
    damping: float = 0.5
    tol: float = 1e-8
    max_iter: int = 500
    workers: int = 1
    figure: Optional[str] = None
    points: int = 40
    sim_points: int = 8

    def engine_config(self) -> dict:
        return {"method": self.engine, "nodes": self.nodes, "samples": self.samples,
                "seed": self.seed}

    def solver_config(self) -> dict:
        return {"damping": self.damping, "tol": self.tol, "max_iter": self.max_iter}

    def make_engine(self) -> ExpectationEngine:
        return ExpectationEngine(**self.engine_config())

    def validate(self):
        for name in self.losses:
            try:
                make_loss(name)
            except DomainError:
                raise UsageError(f"unknown loss {name!r}; choose from {', '.join(LOSS_NAMES)}") from None
        for d in self.deltas:
            if not d > 1:
                raise UsageError(f"delta must exceed 1 (got {d:g}); the estimator needs"
                                 " more measurements than unknowns")
        for e in self.epsilons:
            if not 0.0 <= e <= 0.5:
                raise UsageError(f"epsilon must lie in [0, 0.5] (got {e:g})")
        if self.r < 0:
            raise UsageError("r must be nonnegative")
        if self.trials < 1:
            raise UsageError(f"trials must be at least 1 (got {self.trials})")
        if self.n < 2:
            raise UsageError(f"n must be at least 2 (got {self.n})")
        if self.engine not in ("gh", "mc"):
            raise UsageError("engine must be gh or mc")
        if self.fmt not in ("csv", "json"):
            raise UsageError("format must be csv or json")
        if self.workers < 1:
            raise UsageError("workers must be at least 1")
        if not 0 < self.damping <= 1:
            raise UsageError(f"damping must lie in (0, 1] (got {self.damping:g})")
        if not self.tol > 0 or self.max_iter < 1:
            raise UsageError("tol must be positive and max-iter at least 1")
        return self


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file whose keys supply defaults for any flag")
    common.add_argument("--engine", choices=["gh", "mc"], default="gh",
                        help="expectations by Gauss-Hermite quadrature or Monte Carlo")
    common.add_argument("--nodes", type=int, default=128, help="quadrature nodes per axis")
    common.add_argument("--samples", type=int, default=100_000, help="Monte-Carlo samples")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help=f"output file (directory for figure); default from ${OUT_DIR_ENV} or stdout")
    common.add_argument("--format", dest="fmt", choices=["csv", "json"], default="csv")
    common.add_argument("--damping", type=float, default=0.5, help="fixed-point damping in (0, 1]")
    common.add_argument("--tol", type=float, default=1e-8, help="fixed-point residual tolerance")
    common.add_argument("--max-iter", type=int, default=500, help="fixed-point iteration cap")
    common.add_argument("--strict", action="store_true", help="exit 3 if any cell fails numerically")
    common.add_argument("--workers", type=int, default=1, help="process-pool size for sweeps")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="onebit", description="One-bit M-estimation: theory, bounds and simulation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cell_flags(p, loss=True):
        if loss:
            p.add_argument("--loss", default="ls", help="comma-separated loss names")
        p.add_argument("--delta", default=None, help="number, list, start:stop:count[:log]")
        p.add_argument("--eps", default="0", help="comma-separated flip probabilities")

    p = sub.add_parser("theory", parents=[common], help="solve the saddle system per cell")
    cell_flags(p)
    p.add_argument("--r", type=float, default=0.0, help="ridge weight")
    p.add_argument("--oracle", choices=["fp", "ao", "fp+ao"], default="fp",
                   help="fixed point, nested min-max, or fixed point with min-max fallback")

    p = sub.add_parser("bound", parents=[common], help="Fisher-information correlation bound")
    cell_flags(p, loss=False)

    p = sub.add_parser("threshold", parents=[common], help="separability threshold over eps")
    p.add_argument("--eps", default="0:0.5:11", help="eps list or grid")

    p = sub.add_parser("simulate", parents=[common], help="finite-n replicates against theory")
    cell_flags(p)
    p.add_argument("--r", type=float, default=0.0)
    p.add_argument("--n", type=int, default=128)
    p.add_argument("--trials", type=int, default=25)

    p = sub.add_parser("figure", parents=[common], help="regenerate one figure's data bundle")
    p.add_argument("name", help=f"one of {', '.join(FIGURES)}")
    p.add_argument("--n", type=int, default=128)
    p.add_argument("--trials", type=int, default=25)
    p.add_argument("--points", type=int, default=40, help="theory grid size")
    p.add_argument("--sim-points", type=int, default=8, help="empirical grid size")
    return parser


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = _load_config(args.config)
        if "format" in cfg:
            cfg["fmt"] = cfg.pop("format")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        # config values become defaults, so explicit flags still win
        sub.set_defaults(**{k: (",".join(map(str, v)) if isinstance(v, list) else v)
                            for k, v in cfg.items()})
        args = parser.parse_args(argv)
    return args


def spec_from_args(args) -> ExperimentSpec:
    spec = ExperimentSpec(command=args.command)
    for name in ("engine", "nodes", "samples", "seed", "out", "fmt", "strict", "workers",
                 "damping", "tol", "max_iter"):
        setattr(spec, name, getattr(args, name))
    if hasattr(args, "loss"):
        spec.losses = _names(args.loss)
    if getattr(args, "delta", None) is not None:
        spec.deltas = parse_grid(args.delta)
    if hasattr(args, "eps"):
        spec.epsilons = parse_grid(args.eps)
    for name in ("r", "n", "trials", "oracle", "points"):
        if hasattr(args, name):
            setattr(spec, name, getattr(args, name))
    if hasattr(args, "sim_points"):
        spec.sim_points = args.sim_points
    if args.command == "figure":
        if args.name not in FIGURES:
            raise UsageError(f"unknown figure {args.name!r}; choose from {', '.join(FIGURES)}")
        spec.figure = args.name
    if args.command in ("theory", "bound", "simulate") and not spec.deltas:
        raise UsageError("--delta is required")
    return spec.validate()


# ---------------------------------------------------------------------------
# cells

def _bound_corr(delta, eps, r):
    if r != 0:
        return None
    return correlation_upper_bound(delta, eps).corr_upper


def theory_cell(loss_name, delta, eps, r, engine_cfg, oracle="fp", with_bound=True,
                solver_cfg=None) -> dict:
    """One (loss, delta, eps) solve as a flat record; failures become statuses.

    With ``oracle="fp+ao"`` the saddle oracle is tried when the fixed point
    fails for a reason other than unboundedness, and the message says so.
    """
    engine = ExpectationEngine(**engine_cfg)
    cfg = SolverConfig(**(solver_cfg or {}))
    rec = {"loss": loss_name, "delta": delta, "epsilon": eps, "r": r,
           "engine": engine.fingerprint(), "version": __version__, "message": ""}
    loss, channel = make_loss(loss_name), Channel.bsc(eps)
    solvers = {"fp": [solve_fixed_point], "ao": [solve_ao_saddle],
               "fp+ao": [solve_fixed_point, solve_ao_saddle]}[oracle]
    sol = None
    for solver in solvers:
        try:
            sol = solver(loss, channel, delta, r, engine, cfg)
            if rec.get("status") is not None:
                rec["message"] = f"fixed point {rec['status']}: {rec['message']}; solved by ao_saddle"
            rec["status"] = "ok"
            break
        except (UnboundedSolutionError, UnboundedSaddleError) as exc:
            rec["status"], rec["message"] = "unbounded", str(exc)
            break
        except DivergedError as exc:
            rec["status"], rec["message"] = "diverged", str(exc)
        except OracleError as exc:
            rec["status"], rec["message"] = "oracle_error", str(exc)
        except NumericError as exc:
            rec["status"], rec["message"] = "numeric_error", str(exc)
    if sol is not None:
        rec.update(mu=sol.mu, alpha=sol.alpha, **{"lambda": sol.lam})
        rec["theory_corr"] = predicted_correlation(sol)
    if with_bound:
        rec["bound_corr"] = _bound_corr(delta, eps, r)
        if rec.get("theory_corr") is not None and rec["bound_corr"] is not None:
            rec["bound_ok"] = rec["theory_corr"] <= rec["bound_corr"] + DOMINANCE_SLACK
    return rec


def simulate_cell(loss_name, delta, eps, r, engine_cfg, n, trials, seed, oracle="fp",
                  solver_cfg=None) -> dict:
    rec = theory_cell(loss_name, delta, eps, r, engine_cfg, oracle, solver_cfg=solver_cfg)
    summary = run_replicates(loss_name, n, delta, eps, r, trials, seed)
    rec.update(empirical_mean=summary.corr_mean,
               empirical_std=summary.corr_std if summary.std_available else None,
               bias_norm_mean=summary.bias_mean, trials=trials,
               unbounded_count=summary.unbounded_count,
               seeds=f"{seed}:{seed + trials - 1}")
    failed = summary.status_counts.get("error", 0)
    if failed:
        rec["message"] = (rec["message"] + f"; {failed} trials failed").lstrip("; ")
    return rec


def bound_cell(delta, eps) -> dict:
    res = correlation_upper_bound(delta, eps)
    rec = {"delta": delta, "epsilon": eps, "sigma_min": res.sigma_min,
           "corr_upper": res.corr_upper, "method": res.method, "version": __version__}
    if eps == 0:
        rec["analytic_corr"] = analytic_noiseless_bound(delta).corr_upper
    return rec


def threshold_cell(eps, engine_cfg) -> dict:
    engine = ExpectationEngine(**engine_cfg)
    value, c_star = separability_threshold(eps, engine, return_minimizer=True)
    return {"epsilon": eps, "delta_star": value, "c_star": c_star, "version": __version__}


def _call(job):
    fn, args = job
    return fn(*args)


def run_jobs(jobs, workers=1) -> list:
    """Evaluate ``(fn, args)`` jobs, in a pool if asked; results keep job order."""
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_call, jobs))
    return [_call(j) for j in jobs]


# ---------------------------------------------------------------------------
# commands

def _cells(spec):
    return sorted((l, d, e) for l in spec.losses for d in spec.deltas for e in spec.epsilons)


def cmd_theory(spec: ExperimentSpec) -> list:
    jobs = [(theory_cell, (l, d, e, spec.r, spec.engine_config(), spec.oracle, True,
                           spec.solver_config()))
            for l, d, e in _cells(spec)]
    return run_jobs(jobs, spec.workers)


def cmd_bound(spec: ExperimentSpec) -> list:
    cells = sorted((d, e) for d in spec.deltas for e in spec.epsilons)
    return run_jobs([(bound_cell, c) for c in cells], spec.workers)


def cmd_threshold(spec: ExperimentSpec) -> list:
    jobs = [(threshold_cell, (e, spec.engine_config())) for e in sorted(spec.epsilons)]
    return run_jobs(jobs, spec.workers)


def cmd_simulate(spec: ExperimentSpec) -> list:
    jobs = [(simulate_cell, (l, d, e, spec.r, spec.engine_config(), spec.n, spec.trials, spec.seed,
                             spec.oracle, spec.solver_config()))
            for l, d, e in _cells(spec)]
    return run_jobs(jobs, spec.workers)


def figure_grid(epsilon, points, *, vanishing=True) -> list:
    """Log-spaced delta grid from ``max(1.1, delta*_eps + 0.25)`` to 30.

    Losses that never become unbounded (LS, LAD) start at 1.1.
    """
    start = 1.1
    if vanishing:
        threshold = separability_threshold(epsilon) if epsilon > 0 else math.inf
        start = max(start, threshold + 0.25)
    if not math.isfinite(start):
        return []
    return [float(v) for v in np.geomspace(start, 30.0, points)]


_FIGURE_SETUP = {
    "fig2": (0.0, ["ls", "lad"]),
    "fig3": (0.1, ["ls", "lad", "hinge"]),
    "fig4": (0.25, ["ls", "lad", "hinge"]),
}


def cmd_figure(spec: ExperimentSpec) -> dict:
    """Return ``{file name: (schema name, records)}`` for one figure."""
    name = spec.figure
    files = {}
    cfg = spec.engine_config()
    solver = spec.solver_config()
    if name in _FIGURE_SETUP:
        eps, losses = _FIGURE_SETUP[name]
        for loss in losses:
            vanishing = make_loss(loss).vanishes_at_infinity
            grid = figure_grid(eps, spec.points, vanishing=vanishing)
            sim_grid = figure_grid(eps, spec.sim_points, vanishing=vanishing)
            files[f"theory_{loss}.csv"] = ("record", run_jobs(
                [(theory_cell, (loss, d, eps, 0.0, cfg, "fp+ao", True, solver))
                 for d in grid], spec.workers))
            files[f"empirical_{loss}.csv"] = ("record", run_jobs(
                [(simulate_cell, (loss, d, eps, 0.0, cfg, spec.n, spec.trials, spec.seed,
                                  "fp+ao", solver))
                 for d in sim_grid], spec.workers))
        grid = figure_grid(eps, spec.points, vanishing=False)
        files["bound.csv"] = ("bound", run_jobs([(bound_cell, (d, eps)) for d in grid],
                                                spec.workers))
        if eps > 0:
            files["threshold_marker.csv"] = ("threshold", [threshold_cell(eps, cfg)])
    elif name == "sigma":
        sigmas = np.geomspace(0.01, 100.0, spec.points * 5)
        for eps in (0.0, 0.1, 0.25):
            rows = [{"epsilon": eps, "sigma": float(s), "h": float(s * s * fisher_info(s, eps))}
                    for s in sigmas]
            files[f"sigma_eps{eps:g}.csv"] = ("sigma", rows)
    elif name == "threshold":
        eps_grid = [float(v) for v in np.linspace(0.0, 0.5, 51)]
        files["threshold.csv"] = ("threshold", run_jobs(
            [(threshold_cell, (e, cfg)) for e in eps_grid], spec.workers))
    return files


def _manifest(spec, files, rendered) -> dict:
    entries = []
    for fname, (schema, records) in files.items():
        entries.append({"file": fname, "schema": schema, "columns": list(SCHEMAS[schema]),
                        "rows": len(records),
                        "sha256": hashlib.sha256(rendered[fname].encode()).hexdigest()})
    return {
        "figure": spec.figure,
        "version": __version__,
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "parameters": {"n": spec.n, "trials": spec.trials, "seed": spec.seed,
                       "points": spec.points, "sim_points": spec.sim_points,
                       "engine": spec.engine_config(), "solver": spec.solver_config(),
                       "oracle": "fixed point, falling back to the saddle oracle"},
        "delta_grid": ("log-spaced from max(1.1, delta*_eps + 0.25) to 30 for losses that"
                       " vanish at +inf, from 1.1 to 30 otherwise; the original abscissae"
                       " are not tabulated"),
        "files": entries,
    }


# ---------------------------------------------------------------------------
# output

def _default_out(spec) -> Optional[str]:
    if spec.out:
        return spec.out
    base = os.environ.get(OUT_DIR_ENV)
    if not base:
        return None
    if spec.command == "figure":
        return str(Path(base) / spec.figure)
    return str(Path(base) / f"{spec.command}.{spec.fmt}")


def _emit(text, path):
    if path is None:
        sys.stdout.write(text)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _failed(records) -> list:
    return [r for r in records if r.get("status") not in (None, *BENIGN)]


def run(spec: ExperimentSpec) -> int:
    commands = {"theory": cmd_theory, "bound": cmd_bound, "threshold": cmd_threshold,
                "simulate": cmd_simulate}
    if spec.command == "figure":
        files = cmd_figure(spec)
        out = Path(_default_out(spec) or Path("figures") / spec.figure)
        out.mkdir(parents=True, exist_ok=True)
        rendered = {f: render(recs, SCHEMAS[schema], "csv") for f, (schema, recs) in files.items()}
        for fname, text in rendered.items():
            (out / fname).write_text(text)
        manifest = _manifest(spec, files, rendered)
        (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
        records = [r for _, recs in files.values() for r in recs]
        log.info("wrote %d files to %s", len(rendered) + 1, out)
    else:
        records = commands[spec.command](spec)
        schema = {"bound": BOUND_FIELDS, "threshold": THRESHOLD_FIELDS}.get(spec.command,
                                                                          RECORD_FIELDS)
        _emit(render(records, schema, spec.fmt), _default_out(spec))
    for rec in records:
        if rec.get("bound_ok") is False:
            log.warning("theory correlation exceeds the bound at %s", rec)
    failed = _failed(records)
    for rec in failed:
        log.warning("cell %s/%s/%s: %s (%s)", rec.get("loss"), rec.get("delta"),
                    rec.get("epsilon"), rec["status"], rec.get("message"))
    return EXIT_NUMERIC if (spec.strict and failed) else EXIT_OK


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s: %(message)s")
        spec = spec_from_args(args)
        return run(spec)
    except UsageError as exc:
        sys.stderr.write(f"onebit: error: {exc}\n")
        return EXIT_USAGE
    except DomainError as exc:
        sys.stderr.write(f"onebit: error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
