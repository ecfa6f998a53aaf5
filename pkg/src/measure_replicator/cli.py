"""Command-line front end.

Exit codes: 0 success, 2 invalid configuration or input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from ._validation import NumericalError, ValidationError
from .analysis import (
    continuation,
    css_diagnostic,
    find_equilibrium,
    is_ess,
    permanence_check,
    persistence_margin,
    pure_selection_equilibrium,
)
from .dynamics import MutationKernel, integrate_ode
from .measures import AtomicMeasure, flat_distance
from .partitions import approximate, make_partition, mod_limit, refine_sequence
from .scenario import ConfigError, load_scenario
from .vitals import check_assumptions, fitness_report

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


def _jsonable(obj):
    """Recursively replace non-finite floats by None and numpy scalars by Python ones."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _dump_json(path, payload):
    _write(path, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def _spectrum_csv(eigenvalues):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["re", "im"])
    for z in sorted(np.asarray(eigenvalues, dtype=complex), key=lambda z: (z.real, z.imag)):
        writer.writerow([f"{z.real:.17g}", f"{z.imag:.17g}"])
    return buf.getvalue()


def _assumptions(sc):
    opts = sc.assumptions
    grid = None
    if "X_grid" in opts:
        grid = np.asarray(opts["X_grid"], dtype=float)
    elif "n_grid" in opts:
        grid = np.linspace(0.0, sc.vitals.X_max, int(opts["n_grid"]))
    return check_assumptions(sc.vitals, sc.space, grid, float(opts.get("tie_tol", 1e-12)))


def _simulate(sc):
    run = sc.run
    return integrate_ode(
        sc.initial,
        sc.kernel,
        sc.vitals,
        run["T"],
        method=run["method"],
        h=run["h"],
        rtol=run["tol"],
        record_every=run["record_every"],
    )


def _opts(value, key):
    if value is True or value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"analyses.{key}", "expected a mapping or true")
    return value


def _equilibrium(sc, traj, opts, out_dir):
    guess_spec = opts.get("guess", "final")
    if guess_spec == "final":
        guess = traj.final
    elif guess_spec == "pure_selection":
        guess = pure_selection_equilibrium(sc.vitals, sc.space)
    elif isinstance(guess_spec, list):
        guess = AtomicMeasure(sc.space, np.asarray(guess_spec, dtype=float))
    else:
        raise ConfigError("analyses.equilibrium.guess", f"unknown guess {guess_spec!r}")
    res = find_equilibrium(sc.vitals, sc.kernel, guess, tol=float(opts.get("tol", 1e-10)))
    if out_dir:
        _write(os.path.join(out_dir, "spectrum.csv"), _spectrum_csv(res.eigenvalues))
    return res.to_dict()


def _continuation(sc, opts):
    family = opts.get("family", "epsilon_uniform")
    n = sc.space.n_points
    if family == "epsilon_uniform":
        def kernels(e):
            return MutationKernel.epsilon_uniform(n, e)
    elif family == "gaussian":
        def kernels(e):
            return MutationKernel.pure_selection(n) if e == 0 else MutationKernel.gaussian(sc.space, e)
    else:
        raise ConfigError("analyses.continuation.family", f"unknown family {family!r}")
    if "eps" not in opts:
        raise ConfigError("analyses.continuation.eps", "missing required key")
    try:
        res = continuation(sc.vitals, kernels, opts["eps"], sc.space, tol=float(opts.get("tol", 1e-10)))
    except ValidationError as exc:
        raise ConfigError("analyses.continuation", str(exc)) from exc
    return res.to_dict()


def _partitions(sc, traj, opts):
    tol = float(opts.get("tol", 1e-4))
    tail = float(opts.get("tail_fraction", 0.2))
    weight_floor = float(opts.get("support_floor", 1e-3))
    kinds = opts.get("kinds", ["bottom", "r_level_sets", "top"])
    limits = {}
    for kind in kinds:
        if kind not in ("bottom", "top", "r_level_sets"):
            raise ConfigError("analyses.partitions.kinds", f"unsupported kind {kind!r}")
        p = make_partition(sc.space, kind, sc.vitals)
        lim = mod_limit(traj, p, tail_fraction=tail, tol=tol)
        limits[kind] = {
            "converged": lim is not None,
            "n_classes": p.n_classes,
            "limit": None if lim is None else lim.to_dict(),
            "support_above_floor": None if lim is None else int(np.sum(lim.weights > weight_floor)),
        }
    levels = []
    depth = int(opts.get("depth", 0))
    if depth > 0 and sc.space.metric_kind == "euclidean":
        final = traj.final
        for p in refine_sequence(sc.space, depth):
            bound = p.max_diameter * final.total_variation
            levels.append(
                {
                    "level": p.level,
                    "n_classes": p.n_classes,
                    "max_diameter": p.max_diameter,
                    "approximation_distance": flat_distance(approximate(final, p), final),
                    "bound": bound,
                }
            )
    return {"mod_limits": limits, "dyadic_levels": levels, "support_floor": weight_floor}


def _persistence(sc, traj, opts):
    if "E" not in opts or "eps" not in opts:
        raise ConfigError("analyses.persistence", "needs keys E and eps")
    E = [int(i) for i in opts["E"]]
    eps = float(opts["eps"])
    margin = persistence_margin(sc.vitals, sc.kernel, E, eps)
    X = traj.total_mass
    tail = X[traj.tail_slice(float(opts.get("tail_fraction", 0.2)))]
    return {
        "E": E,
        "eps": eps,
        "margin": margin,
        "condition": margin > 1.0,
        "initial_mass_on_E": float(sc.initial.weights[E].sum()),
        "tail_max": float(tail.max()),
        "witnessed": bool(tail.max() >= eps - 1e-3),
    }


def build_summary(sc, traj, command, seed=None, out_dir=None, run_analyses=True):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fit = fitness_report(sc.vitals, sc.space)
    summary = {
        "scenario": sc.name,
        "command": command,
        "version": __version__,
        "seed": seed,
        "space": {"n_points": sc.space.n_points, "dim": sc.space.dim, "space_id": sc.space.space_id},
        "kernel": {"type": sc.kernel.tag, "param": sc.kernel.param},
        "run": dict(sc.run),
        "fitness": fit.to_dict(),
        "trajectory": traj.summary(),
        "permanence": permanence_check(traj, sc.vitals).to_dict(),
        "css": css_diagnostic(traj, sc.vitals).to_dict(),
    }
    if not run_analyses:
        return summary
    an = sc.analyses
    if "permanence" in an:
        opts = _opts(an["permanence"], "permanence")
        summary["permanence"] = permanence_check(
            traj, sc.vitals, float(opts.get("tail_fraction", 0.2)), float(opts.get("tol", 1e-6))
        ).to_dict()
    if "css" in an:
        opts = _opts(an["css"], "css")
        summary["css"] = css_diagnostic(
            traj, sc.vitals, float(opts.get("tie_tol", 1e-12)), float(opts.get("tol", 1e-3))
        ).to_dict()
    if "ess" in an and np.isfinite(fit.K_Q):
        summary["ess"] = {"fittest": fit.fittest, "is_ess": is_ess(sc.vitals, sc.space, fit.fittest)}
    if "equilibrium" in an:
        summary["equilibrium"] = _equilibrium(sc, traj, _opts(an["equilibrium"], "equilibrium"), out_dir)
    if "continuation" in an:
        summary["continuation"] = _continuation(sc, _opts(an["continuation"], "continuation"))
    if "partitions" in an:
        summary["partitions"] = _partitions(sc, traj, _opts(an["partitions"], "partitions"))
    if "persistence" in an:
        summary["persistence"] = _persistence(sc, traj, _opts(an["persistence"], "persistence"))
    return summary


def _out_dir(args, sc):
    out = args.out if args.out else os.path.join("out", sc.name)
    os.makedirs(out, exist_ok=True)
    return out


def run_scenario(config, out=None, command="analyze", seed=None):
    """Load, integrate and analyse one scenario; returns the summary dict.

    Raises ValidationError or NumericalError; the CLI maps them to exit codes.
    """
    sc = load_scenario(config)
    out_dir = out or os.path.join("out", sc.name)
    os.makedirs(out_dir, exist_ok=True)
    report = _assumptions(sc)
    _dump_json(os.path.join(out_dir, "assumptions.json"), report.to_dict())
    traj = _simulate(sc)
    _write(os.path.join(out_dir, "trajectory.csv"), traj.to_csv())
    summary = build_summary(sc, traj, command, seed, out_dir, run_analyses=command != "simulate")
    summary["assumptions"] = {"all_pass": report.all_pass, "failed": report.failed()}
    _dump_json(os.path.join(out_dir, "summary.json"), summary)
    return summary


def _guarded(fn):
    try:
        return fn()
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def cmd_run(args):
    def go():
        summary = run_scenario(args.config, args.out, args.command, args.seed)
        css = summary["css"]
        print(f"{summary['scenario']}: X(T)={summary['trajectory']['final_total_mass']:.6g} css.converged={css['converged']}")
        return EXIT_OK

    return _guarded(go)


def cmd_validate(args):
    def go():
        sc = load_scenario(args.config)
        report = _assumptions(sc)
        for key, ok in report.checks.items():
            print(f"{key}: {'pass' if ok else 'FAIL'}")
        if not report.checks.get("A3", True):
            print("A3 failure: carrying capacity of the fittest class is unbounded")
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            _dump_json(os.path.join(args.out, "assumptions.json"), report.to_dict())
        return EXIT_OK

    return _guarded(go)


def _sweep_one(config, out_root, seed):
    name = os.path.splitext(os.path.basename(config))[0]
    out = os.path.join(out_root, name)
    code = _guarded(lambda: (run_scenario(config, out, "analyze", seed), EXIT_OK)[1])
    return name, code


def cmd_sweep(args):
    if not os.path.isdir(args.config_dir):
        print(f"error: config_dir: not a directory: {args.config_dir}", file=sys.stderr)
        return EXIT_INVALID
    configs = sorted(
        os.path.join(args.config_dir, f) for f in os.listdir(args.config_dir) if f.endswith((".yaml", ".yml"))
    )
    if not configs:
        print(f"error: config_dir: no .yaml scenarios in {args.config_dir}", file=sys.stderr)
        return EXIT_INVALID
    out_root = args.out or "out"
    jobs = max(1, int(args.jobs))
    if jobs == 1:
        results = [_sweep_one(c, out_root, args.seed) for c in configs]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_one, configs, [out_root] * len(configs), [args.seed] * len(configs)))
    for name, code in results:
        print(f"{name}: exit {code}")
    return max(code for _, code in results)


def build_parser():
    parser = argparse.ArgumentParser(prog="measure-replicator", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="directory for artifacts")
        p.add_argument("--seed", type=int, default=None, help="reserved; runs are deterministic")

    for name, helptext in (
        ("simulate", "integrate a scenario and write trajectory.csv, summary.json, assumptions.json"),
        ("analyze", "simulate and run the analyses listed in the scenario"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", help="scenario YAML file or bundled scenario name")
        common(p)
        p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="check the configuration and assumptions A1-A6 without integrating")
    p.add_argument("config")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sweep", help="analyze every scenario in a directory")
    p.add_argument("config_dir")
    p.add_argument("--jobs", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
