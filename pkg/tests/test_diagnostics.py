import copy
import json
import math

import numpy as np
import pytest

from conftest import random_spec
from sparsepadm.core import constants_for
from sparsepadm.diagnostics import (
    Variant,
    all_pass,
    batch_mean_verdicts,
    certify_bcd,
    certify_iht,
    decrease_terms,
    monitor_residual,
    monitor_sandwich,
    monitor_sufficient_decrease,
    monitor_sufficient_decrease_batch,
    monitor_y_step,
    rate_constants,
    run_monitors,
    rate_bound,
    unavailable,
    write_jsonl,
)
from sparsepadm.padm import Constant, Halving, Harmonic, PenaltyConfig, Sqrt, solve
from sparsepadm.stationarity import brute_force_global

THETA = 1e-3


def _run(pen="l1", strategy="iht", schedule=None, seed=0, lam=1e-3, keep=False, **kw):
    spec = random_spec(12, 16, 3, pen, lam=lam, seed=seed)
    config = PenaltyConfig(strategy=strategy, schedule=schedule or Halving(), theta=THETA,
                           seed=seed, keep_iterates=keep, bcd_k=6, bcd_random=4, **kw)
    x, _, trace = solve(spec, config)
    return spec, constants_for(spec), x, trace


@pytest.mark.parametrize("strategy", ["iht", "bcd"])
@pytest.mark.parametrize("pen", ["l1", "linf", "hinge"])
@pytest.mark.parametrize("schedule", [Constant(0.5), Harmonic(4.0), Sqrt(4.0), Halving(4.0)])
def test_monitors_pass_on_real_traces(strategy, pen, schedule):
    spec, reg, _, trace = _run(pen, strategy, schedule)
    verdicts = run_monitors(trace, spec, reg, THETA)
    assert verdicts and all_pass(verdicts)


def test_constant_schedule_has_no_correction():
    _, reg, _, trace = _run(schedule=Constant(0.5))
    lhs, rhs = decrease_terms(trace, reg, THETA)
    np.testing.assert_allclose(rhs, trace.column("J_lag") - trace.column("J_next"))


def test_corrupted_residual_is_detected():
    spec, reg, _, trace = _run()
    bad = copy.deepcopy(trace)
    bad.res_norm[3] = 10 * reg.l_h * bad.mu_prev[3]
    verdicts = monitor_residual(bad, reg)
    assert [v.t for v in verdicts if not v.passed] == [bad.t[3]]


def test_corrupted_objective_is_detected():
    spec, reg, _, trace = _run()
    bad = copy.deepcopy(trace)
    bad.J_next[2] = bad.J_lag[2] + 1.0
    assert not all_pass(monitor_sufficient_decrease(bad, reg, THETA))
    bad = copy.deepcopy(trace)
    bad.G_lag[1] = bad.F[1] + 1.0
    assert not all_pass(monitor_sandwich(bad, spec, reg))


def test_corrupted_y_step_is_detected():
    _, reg, _, trace = _run()
    bad = copy.deepcopy(trace)
    bad.dy_norm[0] = reg.norm_A * bad.dx_norm[0] + 3 * reg.l_h * bad.mu_prev[0]
    assert not all_pass(monitor_y_step(bad, reg))


def test_batch_decrease_passes_for_bcd_seeds():
    traces = [_run(strategy="bcd", seed=s, schedule=Halving(4.0))[3] for s in range(4)]
    reg = _run()[1]
    verdicts = monitor_sufficient_decrease_batch(traces, reg, THETA)
    assert verdicts and all_pass(verdicts)


def test_batch_mean_skips_lonely_indices():
    out = batch_mean_verdicts("x", [[1.0, 1.0, 5.0], [1.0, 1.0]], [[2.0, 2.0, 0.0], [2.0, 2.0]])
    assert [v.t for v in out] == [0, 1] and all_pass(out)


def test_verdict_json(tmp_path):
    _, reg, _, trace = _run()
    path = tmp_path / "m.jsonl"
    write_jsonl(path, monitor_residual(trace, reg), {"run": 1})
    row = json.loads(path.read_text().splitlines()[0])
    assert {"name", "t", "lhs", "rhs", "slack", "pass", "run"} <= set(row)


def test_rate_bound_examples():
    c = {"chi": 2.0, "C1": 3.0, "C2": 4.0, "nu": 0.5, "mu_bar": 0.1}
    assert rate_bound(Variant.IHT_CONSTANT, c, 2) == pytest.approx(1 + 0.3 + 1.0)
    c = {"chi": 1.0, "G1": 2.0, "G2": 3.0}
    assert rate_bound(Variant.IHT_HARMONIC, c, 1) == pytest.approx(1 + 1 + 1.5)
    with pytest.raises(ValueError):
        rate_bound(Variant.IHT_HARMONIC, c, 0)
    c = {"nu": 0.5, "q0": 2.0, "smoothing": 1.0}
    assert rate_bound(Variant.BCD_CONSTANT, c, 1, omega=0.25) == pytest.approx(0.25 + 1.5 + 1.0)
    c = {"Q1": 2.0, "Q3": 1.0, "Q4": 3.0, "q0": 1.0}
    assert rate_bound(Variant.BCD_SQRT, c, 4) == pytest.approx(0.5 * 1.5 + 1.5)


def test_rate_constants_need_a_ridge():
    reg = _run(lam=0.0)[1]
    with pytest.raises(ValueError):
        rate_constants(Variant.IHT_HARMONIC, reg, 1.0, 1.0, THETA)


@pytest.mark.parametrize("variant, schedule", [
    (Variant.IHT_CONSTANT, Constant(0.05)),
    (Variant.IHT_HARMONIC, None),
])
def test_iht_rate_bound_holds(variant, schedule):
    spec, reg, _, _ = _run(lam=0.5)
    x_star, _ = brute_force_global(spec)
    if schedule is None:
        schedule = Harmonic()
    config = PenaltyConfig(strategy="iht", schedule=schedule, theta=THETA, keep_iterates=True,
                           max_iter=200)
    _, _, trace = solve(spec, config)
    mu_bar = schedule.mu_bar if variant is Variant.IHT_CONSTANT else None
    cert = certify_iht(variant, trace, reg, x_star, THETA, mu_bar=mu_bar)
    assert cert.holds and len(cert.t) == len(trace.iterates) - (variant is Variant.IHT_HARMONIC)


def test_bcd_rate_bound_holds():
    spec, reg, _, _ = _run(lam=0.5)
    _, F_star = brute_force_global(spec)
    traces = []
    for seed in range(4):
        config = PenaltyConfig(strategy="bcd", schedule=Constant(0.05), theta=THETA, seed=seed,
                               bcd_k=6, bcd_random=4, max_iter=100)
        traces.append(solve(spec, config)[2])
    cert = certify_bcd(Variant.BCD_CONSTANT, traces, reg, F_star, THETA, mu_bar=0.05)
    assert cert.holds and cert.t[0] == 0
    assert math.isfinite(cert.to_dict()["constants"]["S1"])


def test_unavailable_certificate():
    cert = unavailable("BCD_Sqrt")
    assert not cert.holds and cert.to_dict()["available"] is False
