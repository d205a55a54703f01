"""Block coordinate step: working-set selection and exact block minimisation.

With ``y`` fixed, the block problem is a quadratic in ``x_B`` plus a
sparsity budget.  Writing ``d = x_B - x_B^t`` and scaling by ``mu``::

    phi(d) = g^T d + 1/2 d^T Q d,   Q = mu (lam + theta) I + A_B^T A_B,
                                    g = mu lam x_B^t + A_B^T r

every support ``S`` fixes ``d = -x^t`` off ``S`` and leaves an ``|S| x |S|``
positive-definite solve on ``S``.  All supports of one size are solved in a
single batched call.
"""
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations, islice
from math import comb

import numpy as np

from .errors import CapacityError, InternalError

MAX_BLOCK = 25
_CHUNK = 8192


@dataclass(frozen=True)
class WorkingSet:
    indices: tuple
    budget: int


def greedy_coordinates(x, grad, count, rule="gradient"):
    """Pick ``count`` coordinates deterministically.

    ``gradient`` takes the largest ``|grad|`` over all coordinates.  ``swap``
    takes half (rounded down) from the support, smallest ``|x|`` first, and
    fills the rest from the zero set by largest ``|grad|``, so the block
    always has room to exchange a support element.  Ties favour lower indices.
    """
    if rule == "gradient":
        return np.argsort(-np.abs(grad), kind="stable")[:count]
    if rule != "swap":
        raise ValueError(f"unknown greedy rule {rule!r}")
    support = np.flatnonzero(x)
    zeros = np.flatnonzero(x == 0)
    out_support = support[np.argsort(np.abs(x[support]), kind="stable")][: count // 2]
    out_zero = zeros[np.argsort(-np.abs(grad[zeros]), kind="stable")][: count - out_support.size]
    picked = np.concatenate([out_support, out_zero])
    if picked.size < count:
        rest = np.setdiff1d(support, picked, assume_unique=True)
        picked = np.concatenate([picked, rest[: count - picked.size]])
    return picked


def select_working_set(spec, x, grad, config, rng):
    """Greedy picks (see :func:`greedy_coordinates`) plus ``bcd_random`` uniform picks."""
    n = spec.n
    k = config.bcd_greedy + config.bcd_random
    if k > n:
        raise ValueError(f"working set of size {k} exceeds n = {n}")
    greedy = greedy_coordinates(x, grad, config.bcd_greedy, config.greedy_rule)
    if config.bcd_random:
        rest = np.setdiff1d(np.arange(n), greedy, assume_unique=True)
        picked = rng.choice(rest, size=config.bcd_random, replace=False)
        chosen = np.concatenate([greedy, picked])
    else:
        chosen = greedy
    idx = np.sort(chosen)
    return WorkingSet(tuple(int(i) for i in idx), budget_for(spec, x, idx))


def budget_for(spec, x, indices):
    mask = np.ones(spec.n, dtype=bool)
    mask[list(indices)] = False
    return spec.s - int(np.count_nonzero(x[mask]))


@lru_cache(maxsize=256)
def _subset_table(k, j):
    """All ``j``-subsets of ``range(k)`` in lexicographic order, shape ``(C(k, j), j)``."""
    return np.array(list(combinations(range(k), j)), dtype=np.intp).reshape(comb(k, j), j)


def _subset_chunks(k, j):
    if comb(k, j) <= 4 * _CHUNK:
        yield _subset_table(k, j)
        return
    it = combinations(range(k), j)
    while True:
        block = list(islice(it, _CHUNK))
        if not block:
            return
        yield np.array(block, dtype=np.intp)


def enumerate_supports(B, r):
    """Every subset of ``B`` with at most ``r`` elements, by size then lexicographically."""
    B = tuple(sorted(B))
    if len(B) > MAX_BLOCK:
        raise CapacityError(f"block of size {len(B)} exceeds the enumeration limit {MAX_BLOCK}")
    if not 0 <= r <= len(B):
        raise ValueError(f"r must lie in [0, {len(B)}]")
    out = []
    for j in range(r + 1):
        out.extend(combinations(B, j))
    return out


def minimize_block_quadratic(Q, g, x_b, budget):
    """Exact minimiser of ``g^T d + 1/2 d^T Q d`` over ``||x_b + d||_0 <= budget``.

    Returns ``(d, value)``; ties go to the first support in enumeration order.
    """
    k = x_b.size
    if k > MAX_BLOCK:
        raise CapacityError(f"block of size {k} exceeds the enumeration limit {MAX_BLOCK}")
    if budget < 0:
        raise InternalError(f"negative sparsity budget {budget}")
    budget = min(budget, k)
    best_val, best_d = np.inf, None
    for j in range(budget + 1):
        for subsets in _subset_chunks(k, j):
            c = subsets.shape[0]
            off = np.ones((c, k), dtype=bool)
            rows = np.arange(c)[:, None]
            off[rows, subsets] = False
            d0 = np.where(off, -x_b, 0.0)
            qd0 = d0 @ Q
            base = d0 @ g + 0.5 * np.einsum("ij,ij->i", d0, qd0)
            if j == 0:
                vals, z = base, None
            else:
                rhs = (g + qd0)[rows, subsets]
                Qs = Q[subsets[:, :, None], subsets[:, None, :]]
                z = -np.linalg.solve(Qs, rhs[:, :, None])[:, :, 0]
                vals = base + 0.5 * np.einsum("ij,ij->i", rhs, z)
            i = int(np.argmin(vals))
            if vals[i] < best_val:
                best_val = float(vals[i])
                best_d = d0[i].copy()
                if z is not None:
                    best_d[subsets[i]] = z[i]
    if not np.isfinite(best_val):
        raise InternalError("block enumeration produced no finite candidate")
    return best_d, best_val


def block_system(spec, x, r, indices, mu, theta):
    """Scaled Hessian and gradient of the block problem (see the module docstring)."""
    idx = np.asarray(indices, dtype=np.intp)
    AB = spec.A[:, idx]
    Q = AB.T @ AB
    Q[np.diag_indices_from(Q)] += mu * (spec.lam + theta)
    g = mu * spec.lam * x[idx] + AB.T @ r
    return Q, g


def solve_block_subproblem(spec, state, ws, theta):
    """Globally minimise ``R(x, y_t; mu_t) + theta/2 ||x_B - x_B^t||^2`` over the block.

    Coordinates outside ``ws.indices`` keep their current values.
    """
    if ws.budget < 0:
        raise InternalError(f"negative sparsity budget {ws.budget}")
    if spec.lam + theta <= 0:
        raise InternalError("block system is singular when lam + theta == 0")
    idx = np.asarray(ws.indices, dtype=np.intp)
    Q, g = block_system(spec, state.x, state.r, idx, state.mu, theta)
    d, _ = minimize_block_quadratic(Q, g, state.x[idx], ws.budget)
    out = state.x.copy()
    out[idx] = state.x[idx] + d
    return out
