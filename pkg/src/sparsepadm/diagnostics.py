"""Monitors that replay recorded traces against the solver's guarantees.

Monitors only read :class:`~sparsepadm.padm.SolveTrace` columns and never
re-run a solve.  Each returns a list of :class:`MonitorVerdict`; a verdict
passes when ``rhs - lhs >= -tol``.
"""
import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

RESIDUAL_TOL = 1e-10
DECREASE_TOL = 1e-8
SANDWICH_TOL = 1e-9
GRADIENT_TOL = 1e-9


@dataclass(frozen=True)
class MonitorVerdict:
    name: str
    t: int
    lhs: float
    rhs: float
    slack: float
    passed: bool

    def to_dict(self):
        return {
            "name": self.name,
            "t": self.t,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "pass": self.passed,
        }


def verdict(name, t, lhs, rhs, tol):
    lhs, rhs = float(lhs), float(rhs)
    slack = rhs - lhs
    if not math.isfinite(slack):
        raise ValueError(f"{name} at t={t}: slack is not finite")
    return MonitorVerdict(name, int(t), lhs, rhs, slack, bool(slack >= -tol))


def all_pass(verdicts):
    return all(v.passed for v in verdicts)


def write_jsonl(path, verdicts, extra=None):
    """Append verdicts as JSON lines; ``extra`` keys are merged into every line."""
    with open(path, "a") as fh:
        for v in verdicts:
            row = dict(extra or {})
            row.update(v.to_dict())
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _scaled(tol, *values):
    return tol * max(1.0, *(abs(v) for v in values))


def monitor_residual(trace, registry):
    """``||A x_t - b - y_t|| <= l_h mu_{t-1}``."""
    out = []
    for t, res, mu_prev in zip(trace.t, trace.res_norm, trace.mu_prev):
        rhs = registry.l_h * mu_prev
        out.append(verdict("residual", t, res, rhs, _scaled(RESIDUAL_TOL, rhs)))
    return out


def decrease_terms(trace, registry, theta):
    """Per-iteration ``(lhs, rhs)`` of the sufficient-decrease inequality."""
    lhs = 0.5 * theta * trace.column("dx_norm") ** 2
    mu, mu_prev = trace.column("mu"), trace.column("mu_prev")
    correction = 0.5 * registry.l_h**2 * (mu_prev**2 / mu - mu_prev)
    rhs = trace.column("J_lag") - trace.column("J_next") + correction
    return lhs, rhs


def monitor_sufficient_decrease(trace, registry, theta):
    """``theta/2 ||dx||^2 <= J_lag - J_next + l_h^2/2 (mu_{t-1}^2/mu_t - mu_{t-1})``.

    The tolerance scales with ``|J|`` because both sides are differences of
    values that can be large when ``mu`` is small.
    """
    lhs, rhs = decrease_terms(trace, registry, theta)
    out = []
    for i, t in enumerate(trace.t):
        tol = _scaled(DECREASE_TOL, trace.J_lag[i], trace.J_next[i])
        out.append(verdict("sufficient_decrease", t, lhs[i], rhs[i], tol))
    return out


def batch_mean_verdicts(name, lhs_rows, rhs_rows, tol=0.0, z=2.0):
    """Compare sample means over runs per iteration index with ``z`` standard errors of slack.

    Rows may differ in length; index ``t`` uses the runs that reached it,
    and indices reached by fewer than two runs are skipped.
    """
    n_t = max(len(row) for row in lhs_rows)
    out = []
    for t in range(n_t):
        l = np.array([row[t] for row in lhs_rows if len(row) > t])
        r = np.array([row[t] for row in rhs_rows if len(row) > t])
        if l.size < 2:
            break
        diff = r - l
        se = float(np.std(diff, ddof=1) / math.sqrt(diff.size))
        out.append(verdict(name, t, l.mean(), r.mean() + z * se, tol))
    return out


def monitor_sufficient_decrease_batch(traces, registry, theta, z=2.0):
    """Sample-mean form of the sufficient-decrease inequality over a batch of seeds."""
    lhs_rows, rhs_rows, scale = [], [], 1.0
    for trace in traces:
        lhs, rhs = decrease_terms(trace, registry, theta)
        lhs_rows.append(lhs)
        rhs_rows.append(rhs)
        scale = max(scale, float(np.max(np.abs(trace.J_lag))))
    return batch_mean_verdicts("sufficient_decrease_mean", lhs_rows, rhs_rows, DECREASE_TOL * scale, z)


def monitor_sandwich(trace, spec, registry):
    """``F(x_t) - mu_{t-1} l_h^2 / 2 <= G(x_t; mu_{t-1}) <= F(x_t)``, two verdicts per iteration."""
    out = []
    for t, F, G, mu_prev in zip(trace.t, trace.F, trace.G_lag, trace.mu_prev):
        tol = _scaled(SANDWICH_TOL, F)
        out.append(verdict("sandwich_lower", t, F - 0.5 * mu_prev * registry.l_h**2, G, tol))
        out.append(verdict("sandwich_upper", t, G, F, tol))
    return out


def monitor_gradient_bounds(trace, spec, registry):
    """Bounds on ``grad R(x_t, y_t; mu_t)`` and on the schedule drift ``eps_t``.

    The ridge part is bounded by ``lam ||x_t||`` from the trace rather than by
    the registry's ``l_f``, which only holds inside its radius.
    """
    out = []
    la = registry.l_h * registry.norm_A
    for i, t in enumerate(trace.t):
        ratio = trace.mu_prev[i] / trace.mu[i]
        rhs = spec.lam * trace.x_norm[i] + ratio * la
        out.append(verdict("gradient", t, trace.grad_norm[i], rhs, _scaled(GRADIENT_TOL, rhs)))
        rhs = (ratio - 1.0) * la
        out.append(verdict("drift", t, trace.eps_norm[i], rhs, _scaled(GRADIENT_TOL, rhs)))
    return out


def monitor_y_step(trace, registry):
    """``||y_{t+1} - y_t|| <= ||A|| ||x_{t+1} - x_t|| + 2 l_h mu_{t-1}``."""
    out = []
    for t, dy, dx, mu_prev in zip(trace.t, trace.dy_norm, trace.dx_norm, trace.mu_prev):
        rhs = registry.norm_A * dx + 2 * registry.l_h * mu_prev
        out.append(verdict("y_step", t, dy, rhs, _scaled(RESIDUAL_TOL, rhs)))
    return out


def run_monitors(trace, spec, registry, theta):
    """Every per-trace monitor, concatenated."""
    return (
        monitor_residual(trace, registry)
        + monitor_sufficient_decrease(trace, registry, theta)
        + monitor_sandwich(trace, spec, registry)
        + monitor_gradient_bounds(trace, spec, registry)
        + monitor_y_step(trace, registry)
    )


class Variant(str, Enum):
    IHT_CONSTANT = "IHT_Constant"
    IHT_HARMONIC = "IHT_Harmonic"
    BCD_CONSTANT = "BCD_Constant"
    BCD_SQRT = "BCD_Sqrt"


def rate_constants(variant, registry, x_star_norm, start, theta, mu_bar=None, eta=None):
    """Named constants of the rate bound for ``variant``.

    ``start`` is ``||x_0 - x*||^2`` for the IHT variants and ``q_0`` for BCD.
    """
    variant = Variant(variant)
    a, b, tau = registry.alpha, registry.beta, registry.tau
    l_h, l_o, norm_A = registry.l_h, registry.l_o, registry.norm_A
    if a <= 0:
        raise ValueError("rate bounds need lam > 0")
    if variant is Variant.IHT_CONSTANT:
        return {
            "chi": 4 * l_o * x_star_norm / a,
            "C1": 6 * l_o**2 / (a * tau) + l_h**2 / a,
            "C2": start,
            "nu": 1 - a / (tau / mu_bar + b + theta),
            "mu_bar": mu_bar,
        }
    if variant is Variant.IHT_HARMONIC:
        return {
            "chi": 4 * l_o * x_star_norm / a,
            "G1": (a + b + theta) / a * start,
            "G2": (24 * l_o**2 + tau * l_h**2 + 4 * l_h * l_o * norm_A) / a**2,
        }
    if variant is Variant.BCD_CONSTANT:
        S1 = 2 * (theta + b + tau / mu_bar) ** 2 / (a * theta)
        return {"S1": S1, "nu": (S1 - 1) / S1, "q0": start, "smoothing": mu_bar * l_h**2 / 2}
    Q1 = 2 / (a * theta) * (theta + b + 2 * tau / eta) ** 2
    Q3 = eta * l_h**2 / 2
    Q2 = eta**3 * l_h**2 * a * theta * (0.5 * max(Q1, 1.0) + norm_A**2 / a) / (4 * tau**2)
    return {"Q1": Q1, "Q2": Q2, "Q3": Q3, "Q4": Q3 + 2 * Q2 * (Q1 + 1), "q0": start, "eta": eta}


def rate_bound(variant, constants, t, omega=0.0):
    """Right-hand side of the rate bound at iteration ``t``.

    IHT variants bound ``||x_t - x*||^2``; BCD variants bound the expected
    ``F(x_{t+1}) - F(x*)`` and take ``omega = ||g_Z||^2 / alpha`` from the trace.
    """
    variant = Variant(variant)
    c = constants
    if variant is Variant.IHT_CONSTANT:
        return c["chi"] / 2 + c["C1"] * c["mu_bar"] + c["C2"] * c["nu"] ** t
    if variant is Variant.IHT_HARMONIC:
        if t < 1:
            raise ValueError("the harmonic bound needs t >= 1")
        return c["chi"] + c["G1"] / (t + 1) + c["G2"] * (math.log(t) + 1) / (t + 1)
    if variant is Variant.BCD_CONSTANT:
        return omega + c["nu"] ** t * (c["q0"] + c["smoothing"]) + c["smoothing"]
    if t < 1:
        raise ValueError("the sqrt bound needs t >= 1")
    return omega + c["Q1"] / t * (c["q0"] + c["Q3"] / math.sqrt(t)) + c["Q4"] / math.sqrt(t)


@dataclass
class RateCertificate:
    """Empirical error against a rate bound, one row per iteration."""

    variant: str
    constants: dict
    t: list = field(default_factory=list)
    empirical: list = field(default_factory=list)
    bound: list = field(default_factory=list)
    passed: list = field(default_factory=list)
    available: bool = True

    @property
    def holds(self):
        return self.available and all(self.passed)

    def to_dict(self):
        out = asdict(self)
        out["holds"] = self.holds
        return out


def unavailable(variant):
    return RateCertificate(Variant(variant).value, {}, available=False)


def certify_iht(variant, trace, registry, x_star, theta, mu_bar=None, eta=None, tol=1e-9):
    """Check ``||x_t - x*||^2`` from a trace recorded with ``keep_iterates``."""
    if not trace.iterates:
        raise ValueError("the trace must keep iterates")
    x_star = np.asarray(x_star, dtype=float)
    errors = [float(np.sum((x - x_star) ** 2)) for x in trace.iterates]
    consts = rate_constants(
        variant, registry, float(np.linalg.norm(x_star)), errors[0], theta, mu_bar, eta
    )
    cert = RateCertificate(Variant(variant).value, consts)
    first = 1 if Variant(variant) is Variant.IHT_HARMONIC else 0
    for t in range(first, len(errors)):
        bound = rate_bound(variant, consts, t)
        cert.t.append(t)
        cert.empirical.append(errors[t])
        cert.bound.append(bound)
        cert.passed.append(errors[t] <= bound + tol * max(1.0, bound))
    return cert


def certify_bcd(variant, traces, registry, F_star, theta, mu_bar=None, eta=None, z=2.0):
    """Batch-mean ``F(x_{t+1}) - F*`` over seeds against the bound at ``t``.

    ``omega`` enters as its batch mean, and the slack is ``z`` standard errors
    of the per-run gap between bound and error.
    """
    q0 = float(np.mean([tr.F[0] for tr in traces])) - F_star
    consts = rate_constants(variant, registry, 0.0, q0, theta, mu_bar, eta)
    first = 1 if Variant(variant) is Variant.BCD_SQRT else 0
    q_rows, b_rows = [], []
    for tr in traces:
        q = tr.column("F_next") - F_star
        omega = tr.column("omega_num") / registry.alpha
        steps = range(first, len(q))
        q_rows.append(np.array([q[t] for t in steps]))
        b_rows.append(np.array([rate_bound(variant, consts, t, omega[t]) for t in steps]))
    cert = RateCertificate(Variant(variant).value, consts)
    for v in batch_mean_verdicts("rate", q_rows, b_rows, 1e-9 * max(1.0, abs(F_star)), z):
        cert.t.append(v.t + first)
        cert.empirical.append(v.lhs)
        cert.bound.append(v.rhs)
        cert.passed.append(v.passed)
    return cert
