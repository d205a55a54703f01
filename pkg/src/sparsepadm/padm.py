"""Penalty alternating direction solver.

Each iteration updates ``x`` (a hard-thresholded gradient step or an exact
block solve), refreshes ``y`` through the prox, then shrinks ``mu`` along a
schedule.  The trace records every quantity the monitors in
:mod:`sparsepadm.diagnostics` need, so monitoring never re-runs the solver.
"""
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from . import bcd
from .core import constants_for
from .errors import InfeasibleError, NumericalError
from .prox import Penalty, hard_threshold, penalty_value, prox_residual
from .rng import make_rng


class Strategy(str, Enum):
    IHT = "iht"
    BCD = "bcd"


@dataclass(frozen=True)
class Constant:
    mu_bar: float = 0.1

    def mu(self, t):
        return self.mu_bar


@dataclass(frozen=True)
class Harmonic:
    """``mu_t = eta / (t + 2)``; ``eta=None`` means ``tau / alpha``."""

    eta: Optional[float] = None

    def mu(self, t):
        return self.eta / (t + 2.0)


@dataclass(frozen=True)
class Sqrt:
    """``mu_t = eta / sqrt(t + 2)``; ``eta=None`` picks the rate-optimal value."""

    eta: Optional[float] = None

    def mu(self, t):
        return self.eta / math.sqrt(t + 2.0)


@dataclass(frozen=True)
class Halving:
    """Start at ``mu0`` and halve after every ``K`` completed iterations."""

    mu0: float = 1.0
    K: int = 10

    def mu(self, t):
        return self.mu0 * 0.5 ** max(0, t // self.K)


SCHEDULES = {"constant": Constant, "harmonic": Harmonic, "sqrt": Sqrt, "halving": Halving}


def sqrt_eta(registry, theta):
    a, b, tau = registry.alpha, registry.beta, registry.tau
    return tau * (2 * (theta + b) + math.sqrt(4 * (theta + b) ** 2 + 2 * a * theta)) / (a * theta)


def resolve(schedule, registry, theta):
    """Fill registry-derived defaults for ``eta``."""
    if isinstance(schedule, Harmonic) and schedule.eta is None:
        if registry.alpha <= 0:
            raise ValueError("the default harmonic eta needs lam > 0")
        return Harmonic(registry.tau / registry.alpha)
    if isinstance(schedule, Sqrt) and schedule.eta is None:
        if registry.alpha <= 0:
            raise ValueError("the default sqrt eta needs lam > 0")
        return Sqrt(sqrt_eta(registry, theta))
    return schedule


def data_scale_mu(spec):
    """Smallest ``mu`` at which ``prox(-b; mu)`` vanishes for l1 and linf.

    Starting a halving schedule at a multiple of this keeps the early
    iterations in the least-squares regime regardless of how ``b`` is scaled.
    """
    b = np.abs(spec.b)
    scale = 2.0 * (b.sum() if spec.penalty is Penalty.LINF_HALF else b.max())
    return scale if scale > 0 else 1.0


def next_mu(schedule, t):
    """Penalty parameter for iteration ``t`` (``t = -1`` is the value before the first step)."""
    if t < -1:
        raise ValueError("t must be >= -1")
    mu = schedule.mu(t)
    if not mu > 0:
        raise ValueError(f"schedule produced non-positive mu {mu}")
    return mu


@dataclass(frozen=True)
class PenaltyConfig:
    strategy: Strategy = Strategy.BCD
    theta: float = 1e-3
    schedule: object = field(default_factory=Halving)
    stop_eps: float = 1e-5
    stop_window: int = 50
    max_iter: int = 1000
    min_iter: int = 0
    seed: int = 0
    bcd_k: int = 10
    bcd_random: int = 8
    bcd_greedy: int = 2
    greedy_rule: str = "gradient"
    keep_iterates: bool = False
    polish: bool = False

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if self.bcd_random < 0 or self.bcd_greedy < 0:
            raise ValueError("bcd_random and bcd_greedy must be nonnegative")
        if self.bcd_random + self.bcd_greedy != self.bcd_k:
            raise ValueError("bcd_random + bcd_greedy must equal bcd_k")
        if self.greedy_rule not in ("gradient", "swap"):
            raise ValueError(f"unknown greedy rule {self.greedy_rule!r}")
        if self.stop_window < 1 or self.max_iter < 1:
            raise ValueError("stop_window and max_iter must be positive")


@dataclass
class IterateState:
    """Solver state at the start of iteration ``t``.

    ``r = Ax - b - y`` is kept alongside ``y`` because it is computed as a
    projection and stays accurate when ``mu`` is tiny.
    """

    x: np.ndarray
    y: np.ndarray
    r: np.ndarray
    mu: float
    mu_prev: float
    t: int = 0


TRACE_FIELDS = (
    "t", "mu", "mu_prev", "F", "F_next", "J_lag", "J_cur", "J_next", "G_lag",
    "res_norm", "dx_norm", "dy_norm", "grad_norm", "eps_norm", "x_norm",
    "d", "omega_num",
)


@dataclass
class SolveTrace:
    """Column-wise record of a run; entry ``i`` describes iteration ``t = i``.

    ``J_lag = J(x_t, y_t; mu_{t-1})``, ``J_cur = J(x_t, y_t; mu_t)`` and
    ``J_next = J(x_{t+1}, y_{t+1}; mu_t)``.  ``G_lag`` equals ``J_lag`` since
    ``y_t`` is the prox point at ``mu_{t-1}``.  ``omega_num`` is the squared
    norm of ``grad G(x_t; mu_{t-1})`` on the zero set of ``x_{t+1}``.
    """

    strategy: str
    penalty: str
    t: list = field(default_factory=list)
    mu: list = field(default_factory=list)
    mu_prev: list = field(default_factory=list)
    F: list = field(default_factory=list)
    F_next: list = field(default_factory=list)
    J_lag: list = field(default_factory=list)
    J_cur: list = field(default_factory=list)
    J_next: list = field(default_factory=list)
    G_lag: list = field(default_factory=list)
    res_norm: list = field(default_factory=list)
    dx_norm: list = field(default_factory=list)
    dy_norm: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    eps_norm: list = field(default_factory=list)
    x_norm: list = field(default_factory=list)
    d: list = field(default_factory=list)
    omega_num: list = field(default_factory=list)
    support: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    working_sets: list = field(default_factory=list)
    stop_reason: str = ""
    final_mu: float = float("nan")
    polish_gain: float = 0.0

    def __len__(self):
        return len(self.t)

    def column(self, name):
        return np.asarray(getattr(self, name), dtype=float)


def relative_decrease(f_now, f_next):
    return 0.0 if f_now == 0 else (f_now - f_next) / f_now


def stopping_check(trace, config):
    """Windowed-mean rule on the relative decrease ``d_t``, or the iteration cap."""
    n = len(trace.d)
    if n == 0:
        raise ValueError("stopping_check needs at least one completed iteration")
    if n >= config.max_iter:
        return True
    window = trace.d[-min(n, config.stop_window):]
    return float(np.mean(window)) <= config.stop_eps


def iht_step(spec, state, config, registry):
    """Hard-thresholded gradient step on ``R(., y_t; mu_t)`` with step ``1/(L_t + theta)``.

    The step is written with ``mu`` multiplied through so that tiny ``mu``
    does not amplify rounding in ``A^T r``.
    """
    mu = state.mu
    num = mu * spec.lam * state.x + spec.A.T @ state.r
    den = registry.tau + mu * (registry.beta + config.theta)
    return hard_threshold(state.x - num / den, spec.s)


def initial_point(spec, rng):
    return hard_threshold(1e-3 * rng.standard_normal(spec.n), spec.s)


def _matvec(A, x):
    nz = np.flatnonzero(x)
    if nz.size * 4 < x.size:
        return A[:, nz] @ x[nz]
    return A @ x


def _objective_parts(spec, x, y, r):
    ridge = 0.5 * spec.lam * float(np.dot(x, x))
    return ridge + penalty_value(spec.penalty, y), float(np.dot(r, r))


def solve(spec, config=None, x0=None, registry=None):
    """Run the alternating scheme and return ``(x, y, trace)``."""
    config = config or PenaltyConfig()
    registry = registry or constants_for(spec)
    if config.strategy is Strategy.BCD and not 2 <= config.bcd_k <= spec.n:
        raise ValueError(f"bcd_k must lie in [2, {spec.n}]")
    schedule = resolve(config.schedule, registry, config.theta)
    rng = make_rng(config.seed)
    if x0 is None:
        x = initial_point(spec, rng)
    else:
        x = np.array(x0, dtype=float).reshape(-1)
        if x.shape != (spec.n,):
            raise ValueError(f"x0 must have length {spec.n}")
        if np.count_nonzero(x) > spec.s:
            raise InfeasibleError(f"x0 has {np.count_nonzero(x)} nonzeros, s = {spec.s}")

    mu_prev, mu = next_mu(schedule, -1), next_mu(schedule, 0)
    c = _matvec(spec.A, x) - spec.b
    r = prox_residual(spec.penalty, c, mu)
    y = c - r
    state = IterateState(x, y, r, mu, mu_prev, 0)
    trace = SolveTrace(strategy=config.strategy.value, penalty=spec.penalty.value)
    F = penalty_value(spec.penalty, c) + 0.5 * spec.lam * float(np.dot(x, x))

    for t in range(config.max_iter):
        state.t = t
        base, rr = _objective_parts(spec, state.x, state.y, state.r)
        Atr = spec.A.T @ state.r
        if config.strategy is Strategy.IHT:
            x_new = iht_step(spec, state, config, registry)
        else:
            grad = spec.lam * state.x + Atr / state.mu
            ws = bcd.select_working_set(spec, state.x, grad, config, rng)
            x_new = bcd.solve_block_subproblem(spec, state, ws, config.theta)
            trace.working_sets.append(ws.indices)
        c_new = _matvec(spec.A, x_new) - spec.b
        r_new = prox_residual(spec.penalty, c_new, state.mu)
        y_new = c_new - r_new
        F_new = penalty_value(spec.penalty, c_new) + 0.5 * spec.lam * float(np.dot(x_new, x_new))
        base_new, rr_new = _objective_parts(spec, x_new, y_new, r_new)

        g_lag = spec.lam * state.x + Atr / state.mu_prev
        zero = x_new == 0
        J_lag = base + rr / (2 * state.mu_prev)
        rec = {
            "t": t,
            "mu": state.mu,
            "mu_prev": state.mu_prev,
            "F": F,
            "F_next": F_new,
            "J_lag": J_lag,
            "J_cur": base + rr / (2 * state.mu),
            "J_next": base_new + rr_new / (2 * state.mu),
            "G_lag": J_lag,
            "res_norm": math.sqrt(rr),
            "dx_norm": float(np.linalg.norm(x_new - state.x)),
            "dy_norm": float(np.linalg.norm(y_new - state.y)),
            "grad_norm": float(np.linalg.norm(spec.lam * state.x + Atr / state.mu)),
            "eps_norm": abs(1 / state.mu_prev - 1 / state.mu) * float(np.linalg.norm(Atr)),
            "x_norm": float(np.linalg.norm(state.x)),
            "d": relative_decrease(F, F_new),
            "omega_num": float(np.dot(g_lag[zero], g_lag[zero])),
        }
        for name, value in rec.items():
            if not math.isfinite(value):
                raise NumericalError(f"{name} is not finite at iteration {t}")
            getattr(trace, name).append(value)
        trace.support.append(tuple(int(i) for i in np.flatnonzero(state.x)))
        if config.keep_iterates:
            trace.iterates.append(state.x.copy())

        state = IterateState(x_new, y_new, r_new, next_mu(schedule, t + 1), state.mu, t + 1)
        F = F_new
        if t + 1 >= config.min_iter and stopping_check(trace, config):
            trace.stop_reason = "max_iter" if len(trace) >= config.max_iter else "stalled"
            break

    if config.keep_iterates:
        trace.iterates.append(state.x.copy())
    trace.final_mu = state.mu_prev
    x_out, y_out = state.x, state.y
    if config.polish:
        from .stationarity import polish_support

        x_pol, F_pol = polish_support(spec, x_out)
        if F_pol < F:
            trace.polish_gain = F - F_pol
            x_out = x_pol
            c_out = spec.A @ x_out - spec.b
            y_out = c_out - prox_residual(spec.penalty, c_out, state.mu_prev)
    return x_out, y_out, trace
