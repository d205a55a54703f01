"""Problem data, objective evaluations and problem constants.

The objective family is ``F(x) = (lam/2)||x||^2 + h(Ax - b)`` subject to
``||x||_0 <= s``.  Splitting ``y = Ax - b`` and penalising the constraint
gives

    J(x, y; mu) = R(x, y; mu) + h(y),   R = f(x) + ||Ax - b - y||^2 / (2 mu)

and eliminating ``y`` through the prox gives the smooth surrogate
``G(x; mu) <= F(x)``.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, NumericalError
from .prox import Penalty, penalty_value, prox_residual

DEFAULT_RADIUS = 1e3


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """One sparsity-constrained instance.

    Attributes:
        A: design matrix, shape (m, n).
        b: observations, shape (m,).
        penalty: loss family ``h``.
        lam: ridge weight, ``f(x) = lam/2 ||x||^2``.
        s: sparsity budget.
    """

    A: np.ndarray
    b: np.ndarray
    penalty: Penalty = Penalty.L1_HALF
    lam: float = 1e-3
    s: int = 1

    def __post_init__(self):
        A = np.array(self.A, dtype=float, copy=True)
        b = np.array(self.b, dtype=float, copy=True).reshape(-1)
        if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
            raise ValueError("A must be a non-empty 2-D matrix")
        if b.shape[0] != A.shape[0]:
            raise ValueError(f"b has length {b.shape[0]}, expected {A.shape[0]}")
        if not np.all(np.isfinite(A)) or not np.all(np.isfinite(b)):
            raise ValueError("A and b must be finite")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        s = int(self.s)
        if not 1 <= s <= A.shape[1]:
            raise ValueError(f"s must lie in [1, {A.shape[1]}], got {self.s}")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "penalty", Penalty.parse(self.penalty))
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "s", s)

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    def with_sparsity(self, s):
        return ProblemSpec(self.A, self.b, self.penalty, self.lam, s)


@dataclass(frozen=True)
class ConstantRegistry:
    """Problem constants used by the monitors and rate bounds.

    ``l_h`` is the subgradient bound of h (m/2, m/2, 1/2 for l1, hinge, linf),
    ``l_f = lam * radius`` bounds the ridge gradient on a ball of that radius,
    ``alpha = beta = lam`` and ``tau = ||A||^2``.
    """

    l_h: float
    l_f: float
    l_o: float
    alpha: float
    beta: float
    tau: float
    norm_A: float
    radius: float = DEFAULT_RADIUS
    norm_fallback: bool = False

    def as_dict(self):
        return {
            "l_h": self.l_h,
            "l_f": self.l_f,
            "l_o": self.l_o,
            "alpha": self.alpha,
            "beta": self.beta,
            "tau": self.tau,
            "norm_A": self.norm_A,
            "radius": self.radius,
            "norm_fallback": self.norm_fallback,
        }


def _check_sparse(spec, x):
    nnz = int(np.count_nonzero(x))
    if nnz > spec.s:
        raise InfeasibleError(f"||x||_0 = {nnz} exceeds s = {spec.s}")


def _finite(value, what):
    if not np.isfinite(value):
        raise NumericalError(f"{what} is not finite")
    return value


def ridge(spec, x):
    return 0.5 * spec.lam * float(np.dot(x, x))


def eval_F(spec, x):
    """``F(x) = f(x) + h(Ax - b)``."""
    x = np.asarray(x, dtype=float)
    value = ridge(spec, x) + penalty_value(spec.penalty, spec.A @ x - spec.b)
    return _finite(value, "F")


def eval_J(spec, x, y, mu, enforce_sparsity=True):
    """Penalty objective ``J(x, y; mu)``.

    Sparsity is a precondition, not an infinite objective value.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    x = np.asarray(x, dtype=float)
    if enforce_sparsity:
        _check_sparse(spec, x)
    r = spec.A @ x - spec.b - y
    value = ridge(spec, x) + float(np.dot(r, r)) / (2.0 * mu) + penalty_value(spec.penalty, y)
    return _finite(value, "J")


def smoothed(spec, x, mu):
    """Return ``(G(x; mu), y_star, residual)`` with ``residual = Ax - b - y_star``."""
    c = spec.A @ x - spec.b
    r = prox_residual(spec.penalty, c, mu)
    y = c - r
    value = ridge(spec, x) + penalty_value(spec.penalty, y) + float(np.dot(r, r)) / (2.0 * mu)
    return _finite(value, "G"), y, r


def eval_G(spec, x, mu, enforce_sparsity=True):
    """Smoothed objective ``G(x; mu) = min_y J(x, y; mu)`` and its minimiser."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    x = np.asarray(x, dtype=float)
    if enforce_sparsity:
        _check_sparse(spec, x)
    value, y, _ = smoothed(spec, x, mu)
    return value, y


def grad_R(spec, x, y, mu):
    """``lam x + A^T (Ax - b - y) / mu``."""
    x = np.asarray(x, dtype=float)
    return spec.lam * x + spec.A.T @ (spec.A @ x - spec.b - y) / mu


def grad_G(spec, x, mu):
    """Gradient of ``G(x; mu)``: ``grad_R`` at ``y = prox(Ax - b; mu)``."""
    x = np.asarray(x, dtype=float)
    r = prox_residual(spec.penalty, spec.A @ x - spec.b, mu)
    return spec.lam * x + spec.A.T @ r / mu


def lipschitz_h(penalty, m):
    if penalty is Penalty.LINF_HALF:
        return 0.5
    return m / 2.0


def spectral_norm(A):
    """Return ``(||A||_2, fell_back)``; falls back to the Frobenius norm."""
    try:
        return float(np.linalg.norm(A, 2)), False
    except np.linalg.LinAlgError:
        return float(np.linalg.norm(A, "fro")), True


def constants_for(spec, radius=DEFAULT_RADIUS):
    norm_A, fell_back = spectral_norm(spec.A)
    l_h = lipschitz_h(spec.penalty, spec.m)
    l_f = spec.lam * radius
    return ConstantRegistry(
        l_h=l_h,
        l_f=l_f,
        l_o=l_f + l_h * norm_A,
        alpha=spec.lam,
        beta=spec.lam,
        tau=norm_A**2,
        norm_A=norm_A,
        radius=radius,
        norm_fallback=fell_back,
    )
