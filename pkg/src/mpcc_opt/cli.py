"""Command-line front end: ``solve``, ``estimate``, ``simulate`` and ``list``.

Each run reads an optional JSON config and applies command-line flags on top of it.
Every value is type-checked before anything is solved.  The outputs depend only on the
config and the seed, with no wall-clock times, so identical runs write identical bytes.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import problems
from .ipsolver import SolverOptions, solve
from .problems import ParameterError, ProblemEntry
from .transcription import (
    PhaseSequence,
    build_multiphase,
    build_nlp,
    complementarity_residual,
    extract_phases,
    initial_guess_vector,
    make_mode,
)
from .transcription.relaxation import MODE_NAMES

EXIT_OK, EXIT_SOLVER, EXIT_USAGE = 0, 1, 2
CONFIG_KEYS = {"problem", "params", "relaxation", "delta", "rho", "solver", "output", "seed"}


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    problem: str
    params: dict = field(default_factory=dict)
    relaxation: Optional[str] = None
    delta: Optional[float] = None
    rho: Optional[float] = None
    solver: dict = field(default_factory=dict)
    output: str = "out"
    seed: int = 0

    def entry(self) -> ProblemEntry:
        return problems.get(self.problem)

    def validate(self) -> "ScenarioConfig":
        """Type-check everything; returns a copy with resolved problem parameters."""
        entry = self.entry()
        params = entry.resolve(self.params)
        relax = self.relaxation or entry.relaxation
        if relax not in MODE_NAMES:
            raise ConfigError(f"unknown relaxation {relax!r}; known: {', '.join(MODE_NAMES)}")
        for key in ("delta", "rho"):
            v = getattr(self, key)
            if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0):
                raise ConfigError(f"{key} must be a positive number, got {v!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        solver = {**entry.solver, **{k: _check_solver_value(k, v) for k, v in self.solver.items()}}
        return ScenarioConfig(self.problem, params, relax, self.delta, self.rho, solver, self.output, self.seed)

    def mode(self):
        return make_mode(self.relaxation, delta=self.delta, rho=self.rho)

    def options(self) -> SolverOptions:
        try:
            return SolverOptions().with_overrides(**self.solver)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


_SOLVER_TYPES = {f.name: type(f.default) for f in fields(SolverOptions) if f.name != "mode"}


def _check_solver_value(name, value):
    if name not in _SOLVER_TYPES:
        raise ConfigError(f"unknown solver option {name!r}")
    kind = _SOLVER_TYPES[name]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise ConfigError(f"solver option {name}: expected {kind.__name__}, got {value!r}")
    return value


def _parse_solver_flag(text: str):
    name, sep, raw = text.partition("=")
    if not sep:
        raise ConfigError(f"--solver expects key=value, got {text!r}")
    name = name.strip().replace("-", "_")
    if name not in _SOLVER_TYPES:
        raise ConfigError(f"unknown solver option {name!r}")
    kind = _SOLVER_TYPES[name]
    try:
        return name, kind(raw)
    except ValueError as exc:
        raise ConfigError(f"solver option {name}: cannot read {raw!r}") from exc


# --------------------------------------------------------------------------
# formatting


def _num(v) -> str:
    """Shortest round-trip decimal."""
    return repr(float(v))


def _write_csv(path: Path, header: List[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join("" if v is None else (v if isinstance(v, str) else _num(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _to_json(v):
    if isinstance(v, np.ndarray):
        return [_to_json(e) for e in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_to_json(e) for e in v]
    if isinstance(v, dict):
        return {k: _to_json(e) for k, e in v.items()}
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def trajectory_rows(trajs):
    """Rows of the concatenated phases; the junction of two phases appears once."""
    rows = []
    for q, tr in enumerate(trajs):
        for k in range(tr.n_e):
            rows.append([tr.times[k], *tr.x[k], *tr.xdot[k], *tr.y[k], *tr.u[k]])
        if q == len(trajs) - 1:
            k = tr.n_e
            # rates, algebraic states and inputs belong to elements; none starts at the last node
            width = tr.xdot.shape[1] + tr.y.shape[1] + tr.u.shape[1]
            rows.append([tr.times[k], *tr.x[k], *([None] * width)])
    return rows


def trajectory_header(n_x: int, n_y: int, n_u: int) -> List[str]:
    return (["t"] + [f"x{i}" for i in range(n_x)] + [f"xdot{i}" for i in range(n_x)]
            + [f"y{i}" for i in range(n_y)] + [f"u{i}" for i in range(n_u)])


GNUPLOT = """# plot script written next to trajectory.csv
set datafile separator ','
set key autotitle columnhead
set xlabel 't'
set multiplot layout {rows},1
plot {x_plots}
plot {u_plots}
{y_line}unset multiplot
"""


def _gnuplot_script(n_x: int, n_y: int, n_u: int) -> str:
    def cols(first, n):
        return ", ".join(f"'trajectory.csv' using 1:{first + i} with lines" for i in range(n))

    x_plots = cols(2, n_x)
    y_first = 2 + 2 * n_x
    u_plots = cols(y_first + n_y, n_u) if n_u else "NaN notitle"
    y_line = f"plot {cols(y_first, n_y)}\n" if n_y else ""
    return GNUPLOT.format(rows=3 if n_y else 2, x_plots=x_plots, u_plots=u_plots, y_line=y_line)


# --------------------------------------------------------------------------
# commands


def _definitions(built):
    if isinstance(built, PhaseSequence):
        return [ph.definition for ph in built.phases]
    return [built]


def run_solve(cfg: ScenarioConfig, gnuplot: bool = False) -> int:
    entry = cfg.entry()
    built = entry.build(cfg.params, cfg.seed)
    mode = cfg.mode()
    if isinstance(built, PhaseSequence):
        nlp, layout = build_multiphase(built, mode)
    else:
        nlp, layout = build_nlp(built, mode)
    z0 = initial_guess_vector(built, layout) if entry.push is None else initial_guess_vector(built, layout, entry.push)
    sol = solve(nlp, z0, cfg.options())
    trajs = extract_phases(layout, sol.z)
    defs = _definitions(built)
    compl = max(complementarity_residual(tr, d) for tr, d in zip(trajs, defs))
    durations = None
    if any(ph.t_index >= 0 for ph in layout.phases):
        durations = [float(tr.times[-1] - tr.times[0]) for tr in trajs]

    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    d0 = defs[0].info
    _write_csv(out / "trajectory.csv", trajectory_header(d0.n_x, d0.n_y, d0.n_u), trajectory_rows(trajs))
    _write_json(out / "solution.json", _to_json({
        "problem": cfg.problem,
        "params": cfg.params,
        "relaxation": cfg.relaxation,
        "delta": cfg.delta,
        "rho": cfg.rho,
        "seed": cfg.seed,
        "status": sol.status.value,
        "objective": sol.objective,
        "iterations": sol.iterations,
        "eq_violation": sol.eq_violation,
        "compl_residual": compl,
        "kkt_error": sol.kkt_error,
        "durations": durations,
        "message": sol.message,
    }))
    header = list(sol.log[0]) if sol.log else ["iter"]
    _write_csv(out / "iterations.csv", header, [[row[k] for k in header] for row in sol.log])
    if gnuplot:
        (out / "plot.gp").write_text(_gnuplot_script(d0.n_x, d0.n_y, d0.n_u))
    print(f"{cfg.problem}: {sol.status.value} after {sol.iterations} iterations, "
          f"objective {sol.objective:.8g}, complementarity {compl:.3g}; wrote {out}")
    return EXIT_OK if sol.status.value == "Optimal" else EXIT_SOLVER


def run_simulate(cfg: ScenarioConfig, reveal_truth: bool = False) -> int:
    entry = cfg.entry()
    if entry.simulate is None:
        raise ConfigError(f"problem {cfg.problem!r} has no simulation oracle")
    from .problems.cartpole import save_dataset

    ds = entry.simulate(cfg.params, cfg.seed)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, out / "dataset.csv", reveal_truth=reveal_truth)
    print(f"{cfg.problem}: simulated {ds.n_steps} steps (sigma {ds.sigma:g}, seed {ds.seed}); wrote {out}")
    return EXIT_OK


def worker_count() -> int:
    raw = os.environ.get("MPCC_OPT_THREADS", "")
    try:
        n = int(raw) if raw else (os.cpu_count() or 1)
    except ValueError:
        raise ConfigError(f"MPCC_OPT_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def _quartiles(v) -> dict:
    v = np.asarray(v, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return {"q25": None, "median": None, "q75": None}
    q = np.percentile(v, [25, 50, 75])
    return {"q25": float(q[0]), "median": float(q[1]), "q75": float(q[2])}


def run_estimate(cfg: ScenarioConfig) -> int:
    entry = cfg.entry()
    if entry.estimate is None:
        raise ConfigError(f"problem {cfg.problem!r} has no estimation harness")
    sigmas = list(cfg.params["sigmas"])
    n_real = cfg.params["realizations"]
    if n_real < 1 or any(s < 0 for s in sigmas):
        raise ConfigError("need at least one realization and nonnegative noise levels")
    jobs = [(s, cfg.seed + r) for s in sigmas for r in range(n_real)]
    n_p = len(entry.resolve({})["p"]) if "p" in cfg.params else 0

    def one(job):
        sigma, seed = job
        try:
            return entry.estimate(cfg.params, sigma, seed)
        except Exception as exc:  # recorded per row, the sweep goes on
            return {"seed": seed, "sigma": sigma, "status": f"Error: {type(exc).__name__}", "iterations": 0,
                    "params": np.full(n_p, np.nan), "rel_errors": np.full(n_p, np.nan), "nrmse": np.nan}

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        results = list(pool.map(one, jobs))
    order = {s: i for i, s in enumerate(sigmas)}
    results.sort(key=lambda r: (r["seed"], order[r["sigma"]]))

    names = ["m_p", "k1", "k2"][:n_p] if n_p == 3 else [f"p{i}" for i in range(n_p)]
    header = (["seed", "sigma", "status", "iterations"] + names + [f"err_{n}" for n in names]
              + ["max_rel_error", "nrmse"])
    rows = []
    for r in results:
        errs = np.asarray(r["rel_errors"], dtype=float)
        worst = float(np.max(errs)) if np.all(np.isfinite(errs)) else float("nan")
        rows.append([str(r["seed"]), r["sigma"], r["status"], str(r["iterations"]), *r["params"], *errs,
                     worst, r["nrmse"]])
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "estimates.csv", header, rows)

    levels = []
    for s in sigmas:
        sub = [r for r in results if r["sigma"] == s]
        errs = np.array([np.asarray(r["rel_errors"], dtype=float) for r in sub])
        worst = np.where(np.all(np.isfinite(errs), axis=1), np.max(errs, axis=1), np.nan)
        levels.append({
            "sigma": s,
            "realizations": len(sub),
            "optimal": sum(r["status"] == "Optimal" for r in sub),
            "max_rel_error": _quartiles(worst),
            "rel_error": {n: _quartiles(errs[:, i]) for i, n in enumerate(names)},
            "nrmse": _quartiles([r["nrmse"] for r in sub]),
        })
    medians = [lv["max_rel_error"]["median"] for lv in levels]
    monotone = all(a is not None and b is not None and a <= b for a, b in zip(medians, medians[1:]))
    _write_json(out / "summary.json", _to_json({
        "problem": cfg.problem,
        "true_params": cfg.params.get("p"),
        "seed": cfg.seed,
        "levels": levels,
        "median_nondecreasing": monotone,
    }))
    failed = sum(r["status"] != "Optimal" for r in results)
    print(f"{cfg.problem}: {len(results)} estimates, {failed} not optimal; wrote {out}")
    return EXIT_OK if failed == 0 else EXIT_SOLVER


def run_list(as_json: bool = False) -> int:
    entries = [problems.REGISTRY[k] for k in sorted(problems.REGISTRY)]
    if as_json:
        print(json.dumps([_to_json(e.schema()) for e in entries], indent=2, sort_keys=True))
        return EXIT_OK
    for e in entries:
        print(f"{e.name}: {e.description}")
        for p in e.params:
            default = ",".join(repr(v) for v in p.default) if isinstance(p.default, tuple) else repr(p.default)
            print(f"    --{p.flag} <{p.kind}> (default {default})  {p.help}")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument handling


def _base_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mpcc-opt", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    ls = sub.add_parser("list", help="registered problems and their parameters")
    ls.add_argument("--json", action="store_true", help="machine-readable schema")
    for name, helptext in (("solve", "solve a problem"), ("estimate", "Monte-Carlo parameter estimation"),
                           ("simulate", "run the time-stepping oracle and write a dataset")):
        sp = sub.add_parser(name, help=helptext, usage=f"mpcc-opt {name} [PROBLEM] [options]",
                            description="PROBLEM must directly follow the command unless the config names it")
        sp.add_argument("--config", help="JSON scenario file; flags override it")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int)
        if name == "solve":
            sp.add_argument("--relaxation", choices=sorted(MODE_NAMES))
            sp.add_argument("--delta", type=float)
            sp.add_argument("--rho", type=float)
            sp.add_argument("--solver", action="append", default=[], metavar="KEY=VALUE",
                            help="solver option override, repeatable")
            sp.add_argument("--gnuplot", action="store_true", help="also write plot.gp")
        if name == "simulate":
            sp.add_argument("--reveal-truth", action="store_true", help="store the true parameters")
    return ap


def _problem_parser(command: str, entry: ProblemEntry) -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog=f"mpcc-opt {command} {entry.name}")
    for p in entry.params:
        ap.add_argument(f"--{p.flag}", dest=p.name, metavar=p.kind.upper(), help=p.help)
    return ap


def _load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("params", "solver"):
        if key in data and not isinstance(data[key], dict):
            raise ConfigError(f"config {key!r} must be an object")
    return data


def scenario_from_args(args, extra: List[str]) -> ScenarioConfig:
    data = _load_config(args.config)
    name = args.problem or data.get("problem")
    if not name:
        raise ConfigError("no problem named (positional argument or config 'problem')")
    entry = problems.get(name)
    flags = _problem_parser(args.command, entry).parse_args(extra)
    params = dict(data.get("params", {}))
    for p in entry.params:
        raw = getattr(flags, p.name)
        if raw is not None:
            params[p.name] = p.parse(raw)
    solver = dict(data.get("solver", {}))
    for text in getattr(args, "solver", []):
        k, v = _parse_solver_flag(text)
        solver[k] = v

    def pick(flag, key, default=None):
        return flag if flag is not None else data.get(key, default)

    cfg = ScenarioConfig(
        problem=name,
        params=params,
        relaxation=pick(getattr(args, "relaxation", None), "relaxation"),
        delta=pick(getattr(args, "delta", None), "delta"),
        rho=pick(getattr(args, "rho", None), "rho"),
        solver=solver,
        output=pick(args.out, "output", "out"),
        seed=pick(args.seed, "seed", 0),
    )
    return cfg.validate()


def main(argv: Optional[List[str]] = None) -> int:
    ap = _base_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    # the problem name is only taken from the slot after the command, so that the value of an
    # unknown per-problem flag can never be mistaken for it
    problem = None
    if len(argv) > 1 and argv[0] in ("solve", "estimate", "simulate") and not argv[1].startswith("-"):
        problem = argv.pop(1)
    try:
        args, extra = ap.parse_known_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.problem = problem
    try:
        if args.command == "list":
            if extra:
                ap.parse_args(argv)  # reports the unknown flags and exits 2
            return run_list(args.json)
        cfg = scenario_from_args(args, extra)
        if args.command == "solve":
            return run_solve(cfg, args.gnuplot)
        if args.command == "simulate":
            return run_simulate(cfg, args.reveal_truth)
        return run_estimate(cfg)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ConfigError, ParameterError) as exc:
        print(f"mpcc-opt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
