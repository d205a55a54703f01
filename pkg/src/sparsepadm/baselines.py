"""Comparison solvers: projected subgradient descent and ADMM with hard-thresholded x-steps."""
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import constants_for, eval_F
from .errors import InfeasibleError, NumericalError
from .padm import initial_point, relative_decrease
from .prox import hard_threshold, penalty_value, prox, subgradient
from .rng import make_rng


class Method(str, Enum):
    PSGD = "psgd"
    ADMM_IHT = "admm-iht"


class StepDecay(str, Enum):
    CONSTANT = "constant"
    INV_SQRT = "invsqrt"


@dataclass(frozen=True)
class BaselineConfig:
    """``step0=None`` means ``1 / l_o``."""

    method: Method = Method.PSGD
    step0: float = None
    step_decay: StepDecay = StepDecay.INV_SQRT
    rho: float = 1.0
    stop_eps: float = 1e-5
    stop_window: int = 50
    max_iter: int = 1000
    min_iter: int = 0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "step_decay", StepDecay(self.step_decay))
        if self.step0 is not None and not self.step0 > 0:
            raise ValueError("step0 must be positive")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.stop_window < 1 or self.max_iter < 1:
            raise ValueError("stop_window and max_iter must be positive")


@dataclass
class BaselineTrace:
    method: str
    F: list = field(default_factory=list)
    best_F: list = field(default_factory=list)
    d: list = field(default_factory=list)
    support: list = field(default_factory=list)
    stop_reason: str = ""

    def __len__(self):
        return len(self.F)

    def column(self, name):
        return np.asarray(getattr(self, name), dtype=float)


def _start(spec, config, x0):
    if x0 is None:
        return initial_point(spec, make_rng(config.seed))
    x = np.array(x0, dtype=float).reshape(-1)
    if x.shape != (spec.n,):
        raise ValueError(f"x0 must have length {spec.n}")
    if np.count_nonzero(x) > spec.s:
        raise InfeasibleError(f"x0 has {np.count_nonzero(x)} nonzeros, s = {spec.s}")
    return x


def _record(trace, config, t, x, F, F_ref):
    """Append one iteration and report whether to stop.

    The stopping statistic uses the decrease of ``F_ref`` so PSGD, which is
    not monotone, is judged on its best-so-far value.
    """
    if not math.isfinite(F):
        raise NumericalError(f"F is not finite at iteration {t}")
    prev = trace.best_F[-1] if trace.best_F else None
    trace.F.append(F)
    trace.best_F.append(F if prev is None else min(prev, F))
    trace.support.append(tuple(int(i) for i in np.flatnonzero(x)))
    if len(trace.F) > 1:
        trace.d.append(relative_decrease(F_ref[0], F_ref[1]))
    n = len(trace.d)
    if n and n + 1 >= config.min_iter:
        if n + 1 >= config.max_iter:
            trace.stop_reason = "max_iter"
            return True
        if float(np.mean(trace.d[-min(n, config.stop_window):])) <= config.stop_eps:
            trace.stop_reason = "stalled"
            return True
    return False


def psgd_solve(spec, config=None, x0=None, registry=None):
    """``x <- Pi_s(x - eta_t g_t)`` with ``g_t`` a subgradient of F; returns the best iterate."""
    config = config or BaselineConfig()
    registry = registry or constants_for(spec)
    step0 = config.step0 or 1.0 / registry.l_o
    x = _start(spec, config, x0)
    trace = BaselineTrace(Method.PSGD.value)
    F = eval_F(spec, x)
    best_x, best_F = x, F
    _record(trace, config, 0, x, F, None)
    for t in range(config.max_iter - 1):
        c = spec.A @ x - spec.b
        g = spec.lam * x + spec.A.T @ subgradient(spec.penalty, c)
        eta = step0 if config.step_decay is StepDecay.CONSTANT else step0 / math.sqrt(t + 1)
        x = hard_threshold(x - eta * g, spec.s)
        F = eval_F(spec, x)
        prev_best = best_F
        if F < best_F:
            best_x, best_F = x, F
        if _record(trace, config, t + 1, x, F, (prev_best, best_F)):
            break
    else:
        trace.stop_reason = "max_iter"
    return best_x, trace


def admm_iht_solve(spec, config=None, x0=None, registry=None):
    """ADMM on ``Ax - b = y`` with one hard-thresholded gradient step per x-update."""
    config = config or BaselineConfig(method=Method.ADMM_IHT)
    registry = registry or constants_for(spec)
    rho = config.rho
    step = 1.0 / (spec.lam + rho * registry.norm_A**2)
    x = _start(spec, config, x0)
    y = spec.A @ x - spec.b
    z = np.zeros(spec.m)
    trace = BaselineTrace(Method.ADMM_IHT.value)
    F = eval_F(spec, x)
    _record(trace, config, 0, x, F, None)
    for t in range(config.max_iter - 1):
        c = spec.A @ x - spec.b
        grad = spec.lam * x + spec.A.T @ (z + rho * (c - y))
        x = hard_threshold(x - step * grad, spec.s)
        c = spec.A @ x - spec.b
        y = prox(spec.penalty, c + z / rho, 1.0 / rho)
        z = z + rho * (c - y)
        F_new = 0.5 * spec.lam * float(np.dot(x, x)) + penalty_value(spec.penalty, c)
        stop = _record(trace, config, t + 1, x, F_new, (F, F_new))
        F = F_new
        if stop:
            break
    else:
        trace.stop_reason = "max_iter"
    return x, trace


def solve_baseline(spec, config, x0=None, registry=None):
    if config.method is Method.PSGD:
        return psgd_solve(spec, config, x0, registry)
    return admm_iht_solve(spec, config, x0, registry)
