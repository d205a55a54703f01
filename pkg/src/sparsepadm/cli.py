"""Command-line harness: generate instances, run solver grids, certify points, replicate sweeps.

Exit codes: 0 success, 1 certification or assertion failure, 2 capacity or
unavailable, 3 input error.
"""
import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
from pathlib import Path

import numpy as np

from . import diagnostics, stationarity
from .baselines import BaselineConfig, Method, solve_baseline
from .core import ProblemSpec, constants_for, eval_F
from .data import Format, GenSpec, gen_random, load_matrix, planted_labels, save_csv
from .errors import CapacityError, DimensionError, NumericalError, PadmError, ParseError, UndecidedError
from .padm import SCHEDULES, Halving, PenaltyConfig, data_scale_mu, initial_point, solve
from .rng import derive_seed, make_rng

EXIT_OK, EXIT_FAIL, EXIT_UNAVAILABLE, EXIT_INPUT = 0, 1, 2, 3
SOLVERS = ("padm-iht", "padm-bcd", "psgd", "admm-iht")
AUTO_MU_FACTOR = 32.0
DESK_SWEEP = (5, 10, 20, 30, 40, 50, 60, 70, 80, 90)
# Generated size when --m/--n are absent; loaded files default to their full size.
GEN_SIZE = (32, 64)

DEFAULTS = {
    "gen": "random",
    "load": None,
    "format": "csv",
    "m": None,
    "n": None,
    "corrupt": False,
    "instance_seed": 0,
    "labels": "regenerate",
    "penalty": "l1",
    "lam": 1e-3,
    "s": [5],
    "solver": ["padm-bcd", "padm-iht"],
    "schedule": "halving",
    "mu0": "1",
    "K": 10,
    "theta": 1e-3,
    "k": 10,
    "greedy_rule": "gradient",
    "inits": 5,
    "seed": 0,
    "max_iter": 1000,
    "min_iter": 0,
    "monitor": False,
    "certify": False,
    "cert_k": 2,
    "cert_sets": 200,
    "workers": None,
    "out": "out",
}


class InputError(Exception):
    """Bad flags or manifest contents."""


@dataclass
class RunManifest:
    """One solver grid: instance, problem parameters, solvers and output location."""

    params: dict = field(default_factory=lambda: dict(DEFAULTS))

    @classmethod
    def build(cls, manifest_path=None, overrides=None):
        params = dict(DEFAULTS)
        if manifest_path:
            try:
                with open(manifest_path) as fh:
                    loaded = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise InputError(f"cannot read manifest: {exc}") from None
            unknown = set(loaded) - set(DEFAULTS)
            if unknown:
                raise InputError(f"unknown manifest keys: {sorted(unknown)}")
            params.update(loaded)
        params.update({k: v for k, v in (overrides or {}).items() if v is not None})
        params["s"] = _int_list(params["s"])
        params["solver"] = _str_list(params["solver"])
        man = cls(params)
        man.validate()
        return man

    def validate(self):
        p = self.params
        if not p["solver"]:
            raise InputError("select at least one solver")
        bad = [s for s in p["solver"] if s not in SOLVERS]
        if bad:
            raise InputError(f"unknown solvers {bad}; choose from {list(SOLVERS)}")
        if p["schedule"] not in SCHEDULES:
            raise InputError(f"unknown schedule {p['schedule']!r}")
        if p["inits"] < 1:
            raise InputError("inits must be positive")
        if not p["s"]:
            raise InputError("give at least one s")

    def instance(self):
        p = self.params
        if p["load"]:
            return ("file", str(p["load"]), p["format"], p["m"], p["n"], p["labels"], p["instance_seed"])
        if p["gen"] != "random":
            raise InputError(f"unknown generator {p['gen']!r}")
        m, n = p["m"] or GEN_SIZE[0], p["n"] or GEN_SIZE[1]
        return ("random", m, n, bool(p["corrupt"]), p["instance_seed"])


def _int_list(value):
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    if isinstance(value, int):
        value = [value]
    try:
        return [int(v) for v in value]
    except (TypeError, ValueError):
        raise InputError(f"expected a list of integers, got {value!r}") from None


def _str_list(value):
    if isinstance(value, str):
        value = value.split(",")
    return [str(v).strip() for v in value if str(v).strip()]


@lru_cache(maxsize=8)
def build_instance(desc):
    """``(A, b)`` for an instance descriptor; cached per worker process."""
    if desc[0] == "random":
        _, m, n, corrupt, seed = desc
        A, b, _ = gen_random(GenSpec(m, n, corrupt=corrupt, seed=seed))
        return A, b
    _, path, fmt, m, n, labels, seed = desc
    A, b = load_matrix(path, Format(fmt), m, n)
    if labels == "regenerate":
        b, _ = planted_labels(A, seed=seed)
    elif labels != "file":
        raise InputError(f"labels must be 'file' or 'regenerate', got {labels!r}")
    return A, b


def make_schedule(params, spec):
    name = params["schedule"]
    mu0 = str(params["mu0"])
    if mu0 == "auto":
        value = AUTO_MU_FACTOR * data_scale_mu(spec)
    else:
        try:
            value = float(mu0)
        except ValueError:
            raise InputError(f"mu0 must be a number or 'auto', got {mu0!r}") from None
    if name == "halving":
        return Halving(value, int(params["K"]))
    if name == "constant":
        return SCHEDULES["constant"](value)
    return SCHEDULES[name]()


def _cells(params):
    return [(solver, s, init) for s in params["s"] for solver in params["solver"]
            for init in range(params["inits"])]


def run_cell(task):
    """Solve one (solver, s, init) cell; returns result row, monitor rows and certificate."""
    desc, params, solver, s, init = task
    A, b = build_instance(desc)
    spec = ProblemSpec(A, b, params["penalty"], params["lam"], s)
    registry = constants_for(spec)
    x0 = initial_point(spec, make_rng(derive_seed(params["seed"], "init", s, init)))
    seed = derive_seed(params["seed"], solver, s, init)
    started = time.perf_counter()
    final_mu, monitors = None, []
    if solver.startswith("padm"):
        k = int(params["k"])
        config = PenaltyConfig(
            strategy=solver.split("-")[1],
            theta=params["theta"],
            schedule=make_schedule(params, spec),
            max_iter=params["max_iter"],
            min_iter=params["min_iter"],
            seed=seed,
            bcd_k=k,
            bcd_random=k - 2,
            bcd_greedy=2,
            greedy_rule=params["greedy_rule"],
        )
        x, _, trace = solve(spec, config, x0, registry)
        final_mu = trace.final_mu
        if params["monitor"]:
            monitors = diagnostics.run_monitors(trace, spec, registry, config.theta)
    else:
        config = BaselineConfig(
            method=Method(solver),
            max_iter=params["max_iter"],
            min_iter=params["min_iter"],
            seed=seed,
        )
        x, trace = solve_baseline(spec, config, x0, registry)
    wall = time.perf_counter() - started
    row = {
        "solver": solver,
        "penalty": spec.penalty.value,
        "s": s,
        "init": init,
        "seed": seed,
        "F_final": eval_F(spec, x),
        "iterations": len(trace),
        "stop_reason": trace.stop_reason,
        "final_mu": final_mu,
        "nnz": int(np.count_nonzero(x)),
        "wall_time": wall,
    }
    cert = None
    if params["certify"]:
        cert = stationarity.hierarchy_report(
            spec, x, min(params["cert_k"], spec.n), final_mu or stationarity.MU_FLOOR,
            theta=params["theta"], max_sets=params["cert_sets"], seed=seed,
        ).to_dict()
        row["certificate"] = f"certificates/{_cell_name(solver, s, init)}.json"
    monitor_rows = []
    for v in monitors:
        item = {"solver": solver, "s": s, "init": init}
        item.update(v.to_dict())
        monitor_rows.append(item)
    return row, monitor_rows, cert


def _cell_name(solver, s, init):
    return f"{solver}_s{s}_i{init}"


def _pool_map(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        yield from map(fn, tasks)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(fn, tasks)


def summarize(rows, solvers, s_values):
    """Per-s mean, std and median of the final objective for each solver."""
    table = []
    for s in s_values:
        line = {"s": s}
        for solver in solvers:
            F = np.array([r["F_final"] for r in rows if r["s"] == s and r["solver"] == solver])
            line[f"{solver}_mean"] = float(F.mean()) if F.size else float("nan")
            line[f"{solver}_std"] = float(F.std()) if F.size else float("nan")
            line[f"{solver}_median"] = float(np.median(F)) if F.size else float("nan")
        table.append(line)
    return table


def summary_header(solvers):
    return ["s"] + [f"{sv}_{stat}" for sv in solvers for stat in ("mean", "std", "median")]


def write_summary(path, table, solvers):
    header = summary_header(solvers)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for line in table:
            writer.writerow([line[h] if h == "s" else repr(line[h]) for h in header])


def run_grid(manifest):
    """Run every cell, stream outputs to disk in cell order, return ``(rows, monitor_rows)``."""
    p = manifest.params
    desc = manifest.instance()
    A, _ = build_instance(desc)
    too_big = [s for s in p["s"] if not 1 <= s <= A.shape[1]]
    if too_big:
        raise InputError(f"s values {too_big} outside [1, {A.shape[1]}]")
    out = Path(p["out"])
    out.mkdir(parents=True, exist_ok=True)
    if p["certify"]:
        (out / "certificates").mkdir(exist_ok=True)
    tasks = [(desc, p, solver, s, init) for solver, s, init in _cells(p)]
    workers = p["workers"] or os.cpu_count() or 1
    rows, monitor_rows = [], []
    results_path, monitors_path = out / "results.jsonl", out / "monitors.jsonl"
    with open(results_path, "w") as res_fh, open(monitors_path, "w") as mon_fh:
        try:
            for row, mons, cert in _pool_map(run_cell, tasks, workers):
                rows.append(row)
                res_fh.write(json.dumps(row, sort_keys=True) + "\n")
                res_fh.flush()
                for item in mons:
                    mon_fh.write(json.dumps(item, sort_keys=True) + "\n")
                monitor_rows.extend(mons)
                if cert is not None:
                    cert_path = out / row["certificate"]
                    cert_path.write_text(json.dumps(cert, indent=2, sort_keys=True) + "\n")
        finally:
            write_summary(out / "summary.csv", summarize(rows, p["solver"], p["s"]), p["solver"])
    if not p["monitor"]:
        monitors_path.unlink()
    return rows, monitor_rows


def cmd_solve(args):
    manifest = RunManifest.build(args.manifest, _overrides(args))
    _, monitor_rows = run_grid(manifest)
    failed = [m for m in monitor_rows if not m["pass"]]
    if failed:
        print(f"{len(failed)} monitor verdicts failed", file=sys.stderr)
        return EXIT_FAIL
    print(f"wrote {manifest.params['out']}")
    return EXIT_OK


def _read_vector(path):
    text = Path(path).read_text().replace(",", " ").split()
    try:
        return np.array([float(t) for t in text])
    except ValueError as exc:
        raise ParseError(f"solution file: {exc}") from None


def cmd_certify(args):
    A, b = load_matrix(args.instance, Format(args.format))
    x = _read_vector(args.solution)
    if x.shape != (A.shape[1],):
        raise InputError(f"solution has length {x.size}, expected {A.shape[1]}")
    spec = ProblemSpec(A, b, args.penalty, args.lam, args.s)
    if args.level == "global" and comb(spec.n, min(spec.s, spec.n)) > args.cap:
        print(f"global check unavailable: C({spec.n}, {spec.s}) exceeds cap {args.cap}", file=sys.stderr)
        return EXIT_UNAVAILABLE
    cert = stationarity.hierarchy_report(
        spec, x, min(args.k, spec.n), args.mu, theta=args.theta,
        with_global=args.level == "global", max_sets=args.max_sets, seed=args.seed, cap=args.cap,
    )
    text = cert.to_json()
    print(text)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    return EXIT_OK if cert.level_holds(args.level) else EXIT_FAIL


def cmd_gen(args):
    A, b, x_true = gen_random(GenSpec(args.m, args.n, corrupt=args.corrupt, seed=args.seed))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_csv(args.out, A, b)
    if args.truth:
        np.savetxt(args.truth, x_true, fmt="%.17g")
    print(f"wrote {args.out}")
    return EXIT_OK


PROFILES = {
    "smoke": {
        "size": (16, 32),
        "s": [3, 5],
        "inits": 3,
        "solvers": list(SOLVERS),
        "variants": [("l1", False), ("linf", False)],
        "monitor": True,
        "required_fraction": 1.0,
    },
    "desk": {
        "size": (256, 1024),
        "s": list(DESK_SWEEP),
        "inits": 5,
        "solvers": ["padm-bcd", "padm-iht", "psgd", "admm-iht"],
        "variants": [("l1", False), ("linf", False), ("l1", True), ("linf", True)],
        "monitor": False,
        "required_fraction": 0.8,
    },
}

# Shared by every solver in a replicate run.
REPLICATE_SETTINGS = {
    "lam": 1e-3,
    "schedule": "halving",
    "mu0": "auto",
    "K": 10,
    "theta": 1e-3,
    "k": 10,
    "greedy_rule": "swap",
    "max_iter": 1000,
    "min_iter": 300,
}


def ordering_report(rows, s_values):
    """Median-over-inits comparison of PADM-BCD with PADM-IHT and PSGD at each s."""
    points = []
    for s in s_values:
        med = {}
        for solver in ("padm-bcd", "padm-iht", "psgd"):
            F = [r["F_final"] for r in rows if r["s"] == s and r["solver"] == solver]
            med[solver] = float(np.median(F))
        points.append({
            "s": s,
            "median": med,
            "bcd_le_iht": med["padm-bcd"] <= med["padm-iht"],
            "bcd_le_psgd": med["padm-bcd"] <= med["psgd"],
        })
    return points


def cmd_replicate(args):
    prof = PROFILES[args.profile]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    m, n = prof["size"]
    report = {"profile": args.profile, "seed": args.seed, "settings": REPLICATE_SETTINGS, "variants": []}
    started = time.perf_counter()
    for penalty, corrupt in prof["variants"]:
        name = f"{penalty}{'-corrupt' if corrupt else ''}"
        overrides = dict(REPLICATE_SETTINGS, gen="random", m=m, n=n, corrupt=corrupt,
                         instance_seed=args.seed, penalty=penalty, s=prof["s"],
                         solver=prof["solvers"], inits=prof["inits"], seed=args.seed,
                         monitor=prof["monitor"], workers=args.workers, out=str(out / name))
        rows, monitor_rows = run_grid(RunManifest.build(None, overrides))
        points = ordering_report(rows, prof["s"])
        both = [p["bcd_le_iht"] and p["bcd_le_psgd"] for p in points]
        fraction = sum(both) / len(both)
        report["variants"].append({
            "name": name,
            "points": points,
            "ordering_fraction": fraction,
            "ordering_pass": fraction >= prof["required_fraction"],
            "monitors_checked": len(monitor_rows),
            "monitors_failed": sum(not r["pass"] for r in monitor_rows),
        })
        print(f"{name}: ordering holds on {sum(both)}/{len(both)} sweep points", flush=True)
    report["wall_time"] = time.perf_counter() - started
    report["pass"] = all(v["ordering_pass"] and v["monitors_failed"] == 0 for v in report["variants"])
    (out / "replicate_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"replicate {args.profile}: {'pass' if report['pass'] else 'FAIL'}")
    return EXIT_OK if report["pass"] else EXIT_FAIL


def _overrides(args):
    keys = [k for k in DEFAULTS if hasattr(args, k)]
    out = {k: getattr(args, k) for k in keys}
    for flag in ("corrupt", "monitor", "certify"):
        if not getattr(args, flag, False):
            out[flag] = None
    return out


def build_parser():
    parser = argparse.ArgumentParser(prog="sparsepadm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run a solver grid on one instance")
    p.add_argument("--manifest", help="JSON file with default values for the flags below")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--gen", choices=["random"])
    src.add_argument("--load", metavar="PATH")
    p.add_argument("--format", choices=[f.value for f in Format])
    p.add_argument("--labels", choices=["file", "regenerate"],
                   help="for loaded data: keep the file's labels or plant new ones")
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--corrupt", action="store_true")
    p.add_argument("--instance-seed", type=int)
    p.add_argument("--penalty", choices=["l1", "linf", "hinge"])
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--s", help="comma-separated sparsity levels")
    p.add_argument("--solver", help=f"comma-separated subset of {','.join(SOLVERS)}")
    p.add_argument("--schedule", choices=sorted(SCHEDULES))
    p.add_argument("--mu0", help="initial mu, or 'auto' for a multiple of the data scale")
    p.add_argument("--K", type=int, help="halving period")
    p.add_argument("--theta", type=float)
    p.add_argument("--k", type=int, help="BCD working-set size")
    p.add_argument("--greedy-rule", choices=["gradient", "swap"])
    p.add_argument("--inits", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--min-iter", type=int)
    p.add_argument("--monitor", action="store_true")
    p.add_argument("--certify", action="store_true", help="write a certificate per cell")
    p.add_argument("--cert-k", type=int)
    p.add_argument("--cert-sets", type=int, help="working sets sampled by the block check")
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    c = sub.add_parser("certify", help="certify a candidate solution")
    c.add_argument("--instance", required=True)
    c.add_argument("--format", choices=[f.value for f in Format], default="csv")
    c.add_argument("--solution", required=True, help="whitespace or comma separated vector")
    c.add_argument("--penalty", choices=["l1", "linf", "hinge"], default="l1")
    c.add_argument("--lambda", dest="lam", type=float, default=1e-3)
    c.add_argument("--s", type=int, required=True)
    c.add_argument("--k", type=int, default=2)
    c.add_argument("--level", choices=["basic", "lipschitz", "block_k", "global"], default="block_k")
    c.add_argument("--mu", type=float, default=stationarity.MU_FLOOR)
    c.add_argument("--theta", type=float, default=1e-3)
    c.add_argument("--max-sets", type=int, default=5000)
    c.add_argument("--cap", type=int, default=200_000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")
    c.set_defaults(func=cmd_certify)

    r = sub.add_parser("replicate", help="run a packaged benchmark profile")
    r.add_argument("--profile", choices=sorted(PROFILES), default="smoke")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--workers", type=int)
    r.add_argument("--out", default="replicate_out")
    r.set_defaults(func=cmd_replicate)

    g = sub.add_parser("gen", help="write a synthetic instance as CSV")
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--corrupt", action="store_true")
    g.add_argument("--out", required=True)
    g.add_argument("--truth", help="also write the planted vector here")
    g.set_defaults(func=cmd_gen)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ParseError, DimensionError, ValueError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (CapacityError, UndecidedError) as exc:
        print(f"unavailable: {exc}", file=sys.stderr)
        return EXIT_UNAVAILABLE
    except (NumericalError, PadmError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
