"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line through the ``report`` fixture and then
asserts, so a failing criterion shows up both in the summary section and as
a failed test.
"""
import itertools
import json
import time

import numpy as np
import pytest

from sparsepadm import ProblemSpec
from sparsepadm.bcd import WorkingSet, budget_for, solve_block_subproblem
from sparsepadm.cli import main
from sparsepadm.core import constants_for, eval_F, eval_G, grad_G, grad_R
from sparsepadm.data import GenSpec, gen_random
from sparsepadm.diagnostics import (
    Variant,
    certify_bcd,
    certify_iht,
    monitor_sufficient_decrease_batch,
    run_monitors,
)
from sparsepadm.padm import (
    Constant,
    Halving,
    Harmonic,
    IterateState,
    PenaltyConfig,
    Sqrt,
    data_scale_mu,
    resolve,
    solve,
)
from sparsepadm.prox import Penalty, prox
from sparsepadm.stationarity import (
    brute_force_global,
    certificate_mu,
    check_basic,
    check_block_k,
    check_lipschitz,
)

PENALTIES = ("l1", "linf", "hinge")
THETA = 1e-3


def _instance(m, n, s, penalty, lam, seed):
    A, b, _ = gen_random(GenSpec(m, n, seed=seed))
    return ProblemSpec(A, b, penalty, lam, s)


def _scalar_h(penalty, y):
    if penalty == "hinge":
        return 0.5 * np.maximum(y, 0.0)
    return 0.5 * np.abs(y)


def test_prox_matches_a_dense_grid(report):
    started = time.perf_counter()
    rng = np.random.default_rng(101)
    step, worst = 1e-4, 0.0
    for penalty, mu in itertools.product(PENALTIES, (0.1, 1.0, 10.0)):
        # spans the zero region |c| <= mu/2 and three times beyond it
        cs = mu * rng.uniform(-1.5, 1.5, 1000)
        for c in cs:
            y = prox(Penalty.parse(penalty), np.array([c]), mu)[0]
            value = _scalar_h(penalty, y) + (c - y) ** 2 / (2 * mu)
            # the grid contains 0, where every kink sits, and brackets the minimiser
            lo, hi = int(np.floor(min(0.0, c) / step)) - 2, int(np.ceil(max(0.0, c) / step)) + 2
            grid = np.arange(lo, hi + 1) * step
            best = np.min(_scalar_h(penalty, grid) + (c - grid) ** 2 / (2 * mu))
            worst = max(worst, abs(value - best))
    elapsed = time.perf_counter() - started
    ok = worst <= 1e-6 and elapsed < 10
    report(1, ok, f"prox vs grid: worst |diff| {worst:.2e} over 9000 probes, {elapsed:.1f} s")
    assert ok


def _central_difference(fn, x, h=1e-6):
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (fn(x + e) - fn(x - e)) / (2 * h)
    return out


def test_gradients_match_finite_differences(report):
    started = time.perf_counter()
    rng = np.random.default_rng(202)
    worst = 0.0
    for i in range(100):
        m, n = int(rng.integers(2, 17)), int(rng.integers(2, 17))
        A = rng.standard_normal((m, n))
        b = 3 * rng.standard_normal(m)
        spec = ProblemSpec(A, b, PENALTIES[i % 3], float(rng.uniform(0, 1)), n)
        x, y = rng.standard_normal(n), rng.standard_normal(m)
        mu = float(10 ** rng.uniform(-2, 1))

        def R(z):
            r = spec.A @ z - spec.b - y
            return 0.5 * spec.lam * z @ z + r @ r / (2 * mu)

        def G(z):
            return eval_G(spec, z, mu, enforce_sparsity=False)[0]

        for g, fd in ((grad_R(spec, x, y, mu), _central_difference(R, x)),
                      (grad_G(spec, x, mu), _central_difference(G, x))):
            worst = max(worst, np.linalg.norm(g - fd) / max(1.0, np.linalg.norm(g)))
    elapsed = time.perf_counter() - started
    ok = worst <= 1e-5 and elapsed < 5
    report(2, ok, f"gradients vs central differences: worst relative error {worst:.2e}, {elapsed:.1f} s")
    assert ok


def test_smoothing_sandwich_and_monotonicity(report):
    rng = np.random.default_rng(303)
    worst = -np.inf
    for i in range(200):
        m, n, s = int(rng.integers(4, 17)), int(rng.integers(4, 17)), 3
        spec = _instance(m, n, min(s, n), PENALTIES[i % 3], 1e-3, 1000 + i)
        reg = constants_for(spec)
        x = np.zeros(n)
        x[rng.choice(n, spec.s, replace=False)] = 3 * rng.standard_normal(spec.s)
        mu1, mu2 = np.sort(10 ** rng.uniform(-3, 1, 2))
        G1, G2, F = eval_G(spec, x, mu1)[0], eval_G(spec, x, mu2)[0], eval_F(spec, x)
        gaps = [
            -(G1 - G2),
            (G1 - G2) - 0.5 * reg.l_h**2 * (mu2 - mu1),
            (F - 0.5 * mu1 * reg.l_h**2) - G1,
            G1 - F,
        ]
        worst = max(worst, max(gaps))
    ok = worst <= 1e-9
    report(3, ok, f"smoothing sandwich on 200 probes: largest violation {worst:.2e} (tol 1e-9)")
    assert ok


def test_iht_monitors_on_randomized_suite(report):
    started = time.perf_counter()
    rng = np.random.default_rng(404)
    schedules = (Constant(), Harmonic(), Sqrt(), Halving())
    failed, checked = [], 0
    for i in range(50):
        m, n, s = int(rng.choice([16, 32])), int(rng.choice([32, 64])), int(rng.choice([3, 5, 8]))
        spec = _instance(m, n, s, PENALTIES[i % 3], 1e-3, 2000 + i)
        config = PenaltyConfig(strategy="iht", schedule=schedules[i % 4], theta=THETA, seed=i)
        _, _, trace = solve(spec, config)
        verdicts = run_monitors(trace, spec, constants_for(spec), THETA)
        checked += len(verdicts)
        failed += [(i, v.name, v.t) for v in verdicts if not v.passed]
    elapsed = time.perf_counter() - started
    ok = not failed and elapsed < 180
    report(4, ok, f"IHT monitors: {len(failed)} of {checked} verdicts failed on 50 instances, {elapsed:.1f} s")
    assert ok, failed[:10]


def test_bcd_expected_sufficient_decrease(report):
    started = time.perf_counter()
    bad, checked = [], 0
    for j in range(5):
        spec = _instance(16, 32, 5, PENALTIES[j % 3], 1e-3, 3000 + j)
        reg = constants_for(spec)
        traces = [solve(spec, PenaltyConfig(strategy="bcd", theta=THETA, seed=seed))[2]
                  for seed in range(30)]
        verdicts = monitor_sufficient_decrease_batch(traces, reg, THETA, z=2.0)
        checked += len(verdicts)
        bad += [(j, v.t) for v in verdicts if not v.passed]
    elapsed = time.perf_counter() - started
    ok = not bad and elapsed < 180
    report(5, ok, f"BCD batch-mean decrease: {len(bad)} of {checked} indices failed, {elapsed:.1f} s")
    assert ok, bad[:10]


def _grid_block_value(spec, state, idx, budget, theta, step=1e-3, half_width=5):
    """Best objective over a step-``step`` lattice near each support's continuous minimiser."""
    mu, y, x = state.mu, state.y, state.x
    idx = np.asarray(idx)
    rest = np.setdiff1d(np.arange(spec.n), idx)
    base = spec.A[:, rest] @ x[rest] - spec.b - y
    ridge_rest = 0.5 * spec.lam * x[rest] @ x[rest]

    def objective(Z, S):
        # Z: (points, |S|) values on support S; other block coordinates are zero
        full = np.zeros((Z.shape[0], len(idx)))
        full[:, S] = Z
        r = base[None, :] + full @ spec.A[:, idx].T
        return (ridge_rest + 0.5 * spec.lam * np.sum(full**2, axis=1)
                + np.sum(r**2, axis=1) / (2 * mu)
                + 0.5 * theta * np.sum((full - x[idx]) ** 2, axis=1))

    best = objective(np.zeros((1, 0)), [])[0]
    offsets = np.arange(-half_width, half_width + 1)
    for size in range(1, min(budget, len(idx)) + 1):
        for S in itertools.combinations(range(len(idx)), size):
            S = list(S)
            AS = spec.A[:, idx[S]]
            H = AS.T @ AS / mu + (spec.lam + theta) * np.eye(size)
            z = np.linalg.solve(H, -AS.T @ base / mu + theta * x[idx[S]])
            centre = np.round(z / step)
            lattice = np.array(list(itertools.product(offsets, repeat=size)), dtype=float)
            best = min(best, objective((centre + lattice) * step, S).min())
    return best


def test_block_solution_beats_grid_search(report):
    rng = np.random.default_rng(606)
    worst = -np.inf
    for i in range(100):
        m, n, s = int(rng.integers(4, 12)), int(rng.integers(4, 10)), int(rng.integers(1, 4))
        spec = _instance(m, n, min(s, n), PENALTIES[i % 3], float(rng.uniform(0, 0.5)), 4000 + i)
        k = int(rng.integers(1, min(4, n) + 1))
        x = np.zeros(n)
        x[rng.choice(n, spec.s, replace=False)] = rng.standard_normal(spec.s)
        y = rng.standard_normal(m)
        mu = float(10 ** rng.uniform(-1, 1))
        state = IterateState(x, y, spec.A @ x - spec.b - y, mu, mu)
        idx = tuple(sorted(rng.choice(n, k, replace=False).tolist()))
        ws = WorkingSet(idx, budget_for(spec, x, idx))
        x_new = solve_block_subproblem(spec, state, ws, THETA)
        r = spec.A @ x_new - spec.b - y
        ours = (0.5 * spec.lam * x_new @ x_new + r @ r / (2 * mu)
                + 0.5 * THETA * np.sum((x_new - x) ** 2))
        grid = _grid_block_value(spec, state, idx, ws.budget, THETA)
        worst = max(worst, ours - grid)
    ok = worst <= 1e-5
    report(6, ok, f"block solve vs 1e-3 grid on 100 subproblems: worst excess {worst:.2e} (tol 1e-5)")
    assert ok


def _hierarchy_instances():
    rng = np.random.default_rng(5)
    for i in range(20):
        m, n, s = int(rng.integers(8, 17)), int(rng.integers(10, 13)), int(rng.integers(2, 5))
        yield i, _instance(m, n, s, PENALTIES[i % 3], 1e-3, 100 + i)


def test_stationarity_hierarchy(report):
    failures, inversions = [], []
    for i, spec in _hierarchy_instances():
        schedule = Halving(32 * data_scale_mu(spec), 10)
        for strategy in ("bcd", "iht"):
            config = PenaltyConfig(strategy=strategy, schedule=schedule, theta=THETA, seed=i,
                                   min_iter=400, polish=True)
            x, _, trace = solve(spec, config)
            mu = certificate_mu(trace.final_mu)
            basic = check_basic(spec, x)[0]
            lip = check_lipschitz(spec, x, mu)[0]
            if strategy == "bcd":
                block, gap, _, exhaustive = check_block_k(spec, x, 2, max_sets=10**6)
                if not (block and exhaustive):
                    failures.append((i, spec.penalty.value, "block_2", round(gap, 4)))
                if block and not (lip and basic):
                    inversions.append((i, "block_2 without lipschitz/basic"))
            else:
                if not lip:
                    failures.append((i, spec.penalty.value, "iht lipschitz"))
                if not basic:
                    failures.append((i, spec.penalty.value, "iht basic"))
            if lip and not basic:
                inversions.append((i, strategy, "lipschitz without basic"))
    ok = not failures and not inversions
    report(7, ok, f"stationarity on 20 instances: failures {failures}, inversions {len(inversions)}")
    assert ok


def test_rate_bound_certificates(report):
    started = time.perf_counter()
    rng = np.random.default_rng(808)
    broken = []
    for i in range(10):
        m, n, s = int(rng.integers(8, 17)), int(rng.integers(10, 15)), int(rng.integers(1, 4))
        spec = _instance(m, n, s, PENALTIES[i % 3], 1.0, 5000 + i)
        reg = constants_for(spec)
        x_star, F_star = brute_force_global(spec)
        mu_bar = 0.1
        for variant, schedule in ((Variant.IHT_CONSTANT, Constant(mu_bar)),
                                  (Variant.IHT_HARMONIC, Harmonic())):
            config = PenaltyConfig(strategy="iht", schedule=schedule, theta=THETA, keep_iterates=True,
                                   seed=i)
            _, _, trace = solve(spec, config)
            cert = certify_iht(variant, trace, reg, x_star, THETA, mu_bar=mu_bar)
            if not cert.holds:
                broken.append((i, variant.value))
        for variant, schedule in ((Variant.BCD_CONSTANT, Constant(mu_bar)), (Variant.BCD_SQRT, Sqrt())):
            eta = resolve(schedule, reg, THETA).eta if isinstance(schedule, Sqrt) else None
            traces = [solve(spec, PenaltyConfig(strategy="bcd", schedule=schedule, theta=THETA, seed=seed,
                                                bcd_k=min(10, n)))[2] for seed in range(30)]
            cert = certify_bcd(variant, traces, reg, F_star, THETA, mu_bar=mu_bar, eta=eta)
            if not cert.holds:
                broken.append((i, variant.value))
    elapsed = time.perf_counter() - started
    ok = not broken and elapsed < 300
    report(8, ok, f"rate-bound certificates on 10 instances: broken {broken}, {elapsed:.1f} s")
    assert ok


def _replicate(profile, out):
    started = time.perf_counter()
    code = main(["replicate", "--profile", profile, "--seed", "0", "--out", str(out)])
    elapsed = time.perf_counter() - started
    return code, json.loads((out / "replicate_report.json").read_text()), elapsed


def test_replicate_profiles_reproduce_the_ordering(report, tmp_path):
    code, smoke, t_smoke = _replicate("smoke", tmp_path / "smoke")
    smoke_ok = code == 0 and smoke["pass"] and t_smoke < 60
    code, desk, t_desk = _replicate("desk", tmp_path / "desk")
    desk_ok = code == 0 and desk["pass"] and t_desk < 1800
    summary = "; ".join(f"{v['name']} {v['ordering_fraction']:.0%}" for v in desk["variants"])
    smoke_summary = "; ".join(
        f"{v['name']} {v['ordering_fraction']:.0%} monitors_failed={v['monitors_failed']}"
        for v in smoke["variants"]
    )
    report(9, smoke_ok and desk_ok,
           f"smoke [{smoke_summary}] {t_smoke:.0f} s; desk [{summary}] {t_desk:.0f} s")
    assert smoke_ok and desk_ok


def _strip_timing(path):
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    for row in rows:
        row.pop("wall_time", None)
    return rows


def _tree_matches(a, b):
    for left in sorted(p for p in a.rglob("*") if p.is_file()):
        right = b / left.relative_to(a)
        if left.name == "results.jsonl":
            if _strip_timing(left) != _strip_timing(right):
                return False
        elif left.name == "replicate_report.json":
            l, r = json.loads(left.read_text()), json.loads(right.read_text())
            l.pop("wall_time"), r.pop("wall_time")
            if l != r:
                return False
        elif left.read_bytes() != right.read_bytes():
            return False
    return True


def test_reruns_are_identical(report, tmp_path):
    runs = {
        "solve": ["solve", "--gen", "random", "--m", "24", "--n", "40", "--penalty", "hinge",
                  "--s", "3,6", "--solver", "padm-bcd,padm-iht,psgd,admm-iht", "--inits", "2",
                  "--monitor", "--certify", "--max-iter", "200"],
        "replicate": ["replicate", "--profile", "smoke", "--seed", "42"],
        "gen": ["gen", "--m", "9", "--n", "11", "--seed", "42", "--corrupt"],
    }
    mismatched = []
    for name, args in runs.items():
        outs = [tmp_path / f"{name}{i}" for i in range(2)]
        for out in outs:
            target = str(out / "inst.csv") if name == "gen" else str(out)
            out.mkdir(exist_ok=True)
            main(args + ["--out", target])
        if not _tree_matches(*outs):
            mismatched.append(name)
    ok = not mismatched
    report(10, ok, f"reruns identical modulo timing for solve, replicate, gen: mismatched {mismatched}")
    assert ok
