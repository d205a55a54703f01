"""Stationarity certificates for sparse candidates.

Three levels, from weakest to strongest:

* basic: ``x`` minimises ``F`` over vectors that vanish wherever ``x`` does;
* lipschitz: ``x`` is a fixed point of the hard-thresholded gradient step on
  the smoothed objective at a concrete ``mu``;
* block-k: no change of ``k`` coordinates (keeping ``||x||_0 <= s``) lowers ``F``.

Every level needs the exact minimum of ``F`` over a fixed support, which is
a small strongly convex nonsmooth problem.  :func:`restricted_minimize`
solves it by semismooth Newton on the smoothed objective with decreasing
``mu``, then recovers the exact active pattern and certifies the result with
a dual lower bound.
"""
import json
from dataclasses import asdict, dataclass, field
from itertools import combinations
from math import comb
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .core import constants_for, eval_F, grad_G
from .errors import CapacityError, UndecidedError
from .prox import Penalty, hard_threshold, penalty_value, prox_residual, prox_residual_jacobian
from .rng import make_rng

DEFAULT_TOLS = {"basic": 1e-8, "lipschitz": 1e-6, "block_k": 1e-6, "global": 1e-8}
MU_FLOOR = 1e-8


@dataclass
class Restricted:
    """Result of a fixed-support minimisation.

    ``lower`` is a certified lower bound on the minimum, so the true
    minimum lies in ``[lower, value]``.
    """

    z: np.ndarray
    value: float
    lower: float

    @property
    def gap(self):
        return self.value - self.lower


def _h_scale(penalty, b):
    b = np.abs(b)
    if b.size == 0:
        return 1.0
    return 1.0 + (b.sum() if penalty is Penalty.LINF_HALF else b.max())


def _objective(penalty, lam, M, b, z):
    return 0.5 * lam * float(z @ z) + penalty_value(penalty, M @ z - b)


def _dual_value(penalty, lam, M, b, u, z):
    """Lower bound from a dual point ``u`` in the penalty's set ``U``.

    With ``lam > 0`` the bound ``-||M^T u||^2 / (2 lam) - <u, b>`` is valid
    for every ``u`` in ``U``.  With ``lam == 0`` it needs ``M^T u = 0``; a
    rounding-level violation is charged at the scale of ``z``.
    """
    u = _into_set(penalty, u)
    v = M.T @ u
    if lam > 0:
        return -float(v @ v) / (2 * lam) - float(u @ b)
    return -float(u @ b) - float(np.linalg.norm(v)) * (2 * float(np.linalg.norm(z)) + 1.0)


def _into_set(penalty, u):
    if penalty is Penalty.L1_HALF:
        return np.clip(u, -0.5, 0.5)
    if penalty is Penalty.HINGE_HALF:
        return np.clip(u, 0.0, 0.5)
    norm = np.abs(u).sum()
    return u if norm <= 0.5 else u * (0.5 / norm)


def _newton(penalty, lam, M, b, z, mu, max_iter=100):
    """Semismooth Newton on ``mu * (lam/2 ||z||^2 + env_mu(Mz - b))``."""
    k = M.shape[1]

    def value(z):
        c = M @ z - b
        r = prox_residual(penalty, c, mu)
        return mu * (0.5 * lam * float(z @ z) + penalty_value(penalty, c - r)) + 0.5 * float(r @ r)

    f = value(z)
    for _ in range(max_iter):
        c = M @ z - b
        r = prox_residual(penalty, c, mu)
        g = mu * lam * z + M.T @ r
        gnorm = float(np.linalg.norm(g))
        if gnorm <= 1e-15 * (1.0 + float(np.linalg.norm(M.T @ np.abs(c)))):
            break
        if penalty is Penalty.LINF_HALF:
            H = M.T @ prox_residual_jacobian(penalty, c, mu) @ M
        else:
            active = np.diag(prox_residual_jacobian(penalty, c, mu)) > 0
            Ma = M[active]
            H = Ma.T @ Ma
        H[np.diag_indices(k)] += mu * lam + 1e-12 * (1.0 + np.trace(H) / k)
        d = -np.linalg.solve(H, g)
        slope = float(g @ d)
        step = 1.0
        while step > 1e-12:
            f_new = value(z + step * d)
            if f_new <= f + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            break
        z = z + step * d
        if f - f_new <= 1e-16 * abs(f):
            f = f_new
            break
        f = f_new
    return z


def _kkt_box(penalty, lam, M, b, c, mu):
    """Exact candidate for l1/hinge from the pattern visible at ``mu``."""
    half = 0.5 * mu
    if penalty is Penalty.L1_HALF:
        E = np.abs(c) < half
        fixed = 0.5 * np.sign(c)
    else:
        E = (c > 0) & (c < half)
        fixed = np.where(c >= half, 0.5, 0.0)
    fixed[E] = 0.0
    k, e = M.shape[1], int(E.sum())
    ME = M[E]
    K = np.zeros((k + e, k + e))
    K[:k, :k] = lam * np.eye(k)
    K[:k, k:] = ME.T
    K[k:, :k] = ME
    rhs = np.concatenate([-(M.T @ fixed), b[E]])
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    u = fixed.copy()
    u[E] = sol[k:]
    return sol[:k], u


def _kkt_linf(lam, M, b, c, mu):
    """Exact candidate for linf: equalise the largest residuals at level ``t``."""
    k, m = M.shape[1], M.shape[0]
    r = prox_residual(Penalty.LINF_HALF, c, mu)
    if np.abs(c).sum() <= 0.5 * mu:
        K = np.zeros((k + m, k + m))
        K[:k, :k] = lam * np.eye(k)
        K[:k, k:] = M.T
        K[k:, :k] = M
        sol = np.linalg.lstsq(K, np.concatenate([np.zeros(k), b]), rcond=None)[0]
        return sol[:k], sol[k:]
    T = np.flatnonzero(r)
    sg = np.sign(c[T])
    q = T.size
    MT = M[T] * sg[:, None]
    # unknowns: z (k), t (1), w (q)
    K = np.zeros((k + 1 + q, k + 1 + q))
    K[:k, :k] = lam * np.eye(k)
    K[:k, k + 1:] = MT.T
    K[k + 1:k + 1 + q, :k] = MT
    K[k + 1:k + 1 + q, k] = -1.0
    K[k, k + 1:] = 1.0
    rhs = np.concatenate([np.zeros(k), [0.5], sg * b[T]])
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    u = np.zeros(m)
    u[T] = sg * np.maximum(sol[k + 1:], 0.0)
    return sol[:k], u


def _linear_program(penalty, M, b):
    """Solve the ``lam == 0`` case as a linear program; returns ``(z, u)``."""
    m, k = M.shape
    if penalty is Penalty.LINF_HALF:
        cost = np.r_[np.zeros(k), 0.5]
        col = -np.ones((m, 1))
        A_ub = np.block([[M, col], [-M, col]])
        b_ub = np.r_[b, -b]
        bounds = [(None, None)] * k + [(0, None)]
    elif penalty is Penalty.L1_HALF:
        cost = np.r_[np.zeros(k), 0.5 * np.ones(m)]
        A_ub = np.block([[M, -np.eye(m)], [-M, -np.eye(m)]])
        b_ub = np.r_[b, -b]
        bounds = [(None, None)] * k + [(0, None)] * m
    else:
        cost = np.r_[np.zeros(k), 0.5 * np.ones(m)]
        A_ub = np.hstack([M, -np.eye(m)])
        b_ub = b
        bounds = [(None, None)] * k + [(0, None)] * m
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise UndecidedError(f"linear program failed: {res.message}")
    p = -res.ineqlin.marginals
    u = p[:m] - p[m:] if p.size == 2 * m else p
    return res.x[:k], u


def restricted_minimize(penalty, lam, M, b, rel_tol=1e-11, max_levels=40):
    """Minimise ``lam/2 ||z||^2 + h(Mz - b)`` exactly, with a certified gap.

    Raises:
        UndecidedError: when no level closes the gap to ``rel_tol * max(1, |F|)``.
    """
    penalty = Penalty.parse(penalty)
    M = np.asarray(M, dtype=float)
    b = np.asarray(b, dtype=float)
    k = M.shape[1]
    if k == 0:
        value = penalty_value(penalty, -b)
        return Restricted(np.zeros(0), value, value)
    scale = _h_scale(penalty, b)
    best_z, best_val, best_low = None, np.inf, -np.inf
    if lam == 0:
        z, u = _linear_program(penalty, M, b)
        best_z, best_val = z, _objective(penalty, lam, M, b, z)
        best_low = _dual_value(penalty, lam, M, b, u, z)
        mu = 1e-9 * scale
        max_levels = 3
    else:
        z, mu = np.zeros(k), 4.0 * scale
    for _ in range(max_levels):
        if lam > 0:
            z = _newton(penalty, lam, M, b, z, mu)
        c = M @ z - b
        if penalty is Penalty.LINF_HALF:
            cand, u = _kkt_linf(lam, M, b, c, mu)
        else:
            cand, u = _kkt_box(penalty, lam, M, b, c, mu)
        for zz, uu in ((cand, u), (z, prox_residual(penalty, c, mu) / mu)):
            if not np.all(np.isfinite(zz)):
                continue
            val = _objective(penalty, lam, M, b, zz)
            if val < best_val:
                best_z, best_val = zz.copy(), val
            best_low = max(best_low, _dual_value(penalty, lam, M, b, uu, zz))
        if best_val - best_low <= rel_tol * max(1.0, abs(best_val)):
            return Restricted(best_z, best_val, min(best_low, best_val))
        mu *= 0.1
        if mu < 1e-15 * scale:
            break
    gap = best_val - best_low
    raise UndecidedError(f"fixed-support solve stalled with duality gap {gap:.3e}", gap=gap)


def _support(x):
    return np.flatnonzero(x)


def polish_support(spec, x):
    """Replace the nonzeros of ``x`` by the exact minimiser of ``F`` on that support."""
    S = _support(x)
    res = restricted_minimize(spec.penalty, spec.lam, spec.A[:, S], spec.b)
    out = np.zeros(spec.n)
    out[S] = res.z
    return out, eval_F(spec, out)


def check_basic(spec, x, tol=None):
    """Return ``(holds, gap)`` with ``gap = F(x) - min F`` over the support of ``x``.

    A vector with more than ``s`` nonzeros is not a candidate and never holds.
    """
    x = np.asarray(x, dtype=float)
    F = eval_F(spec, x)
    tol = DEFAULT_TOLS["basic"] * max(1.0, abs(F)) if tol is None else tol
    S = _support(x)
    if S.size > spec.s:
        return False, float("inf")
    res = restricted_minimize(spec.penalty, spec.lam, spec.A[:, S], spec.b)
    lo, hi = F - res.value, F - res.lower
    if hi <= tol:
        return True, max(lo, 0.0)
    if lo > tol:
        return False, lo
    raise UndecidedError(f"basic gap lies in [{lo:.3e}, {hi:.3e}] around tol {tol:.1e}", gap=lo)


def lipschitz_residual(spec, x, mu, theta=1e-3, registry=None):
    registry = registry or constants_for(spec)
    L = registry.beta + registry.tau / mu
    x = np.asarray(x, dtype=float)
    g = grad_G(spec, x, mu)
    return float(np.linalg.norm(x - hard_threshold(x - g / (L + theta), spec.s)))


def check_lipschitz(spec, x, mu, tol=None, theta=1e-3, registry=None):
    """Return ``(holds, residual)`` for the hard-thresholded gradient fixed point at ``mu``."""
    tol = DEFAULT_TOLS["lipschitz"] if tol is None else tol
    if mu <= 0:
        raise ValueError("mu must be positive")
    if np.count_nonzero(x) > spec.s:
        return False, float("inf")
    res = lipschitz_residual(spec, x, mu, theta, registry)
    return res <= tol, res


def best_block_move(spec, x, B):
    """Smallest ``F`` reachable by changing only the coordinates in ``B``.

    Supports inside ``B`` of the largest admissible size suffice, since a
    restricted minimum over a superset is never worse.
    """
    B = np.asarray(sorted(B), dtype=np.intp)
    rest = np.ones(spec.n, dtype=bool)
    rest[B] = False
    budget = spec.s - int(np.count_nonzero(x[rest]))
    if budget < 0:
        return None
    x_rest = np.where(rest, x, 0.0)
    offset = spec.b - spec.A @ x_rest
    ridge_rest = 0.5 * spec.lam * float(x_rest @ x_rest)
    best_val, best_low, best_x = np.inf, np.inf, None
    for S in combinations(B.tolist(), min(budget, B.size)):
        S = list(S)
        res = restricted_minimize(spec.penalty, spec.lam, spec.A[:, S], offset)
        if res.value + ridge_rest < best_val:
            best_val = res.value + ridge_rest
            best_x = x_rest.copy()
            best_x[S] = res.z
        best_low = min(best_low, res.lower + ridge_rest)
    return best_x, best_val, best_low


def _working_sets(n, k, max_sets, seed):
    total = comb(n, k)
    if total <= max_sets:
        return combinations(range(n), k), True
    rng = make_rng(seed)
    return (tuple(np.sort(rng.choice(n, size=k, replace=False))) for _ in range(max_sets)), False


def check_block_k(spec, x, k, mu=None, tol=None, max_sets=5000, seed=0):
    """Return ``(holds, worst_gap, sets_checked, exhaustive)``.

    ``worst_gap`` is the largest decrease of ``F`` any single working set of
    size ``k`` achieves.  All ``C(n, k)`` sets are checked when that count is
    at most ``max_sets``; otherwise ``max_sets`` sets are drawn uniformly.
    ``mu`` is accepted for interface symmetry; the check is on ``F`` itself.
    """
    tol = DEFAULT_TOLS["block_k"] if tol is None else tol
    if k > 25:
        raise CapacityError(f"k = {k} exceeds the enumeration limit 25")
    if not 2 <= k <= spec.n:
        raise ValueError(f"k must lie in [2, {spec.n}]")
    x = np.asarray(x, dtype=float)
    if np.count_nonzero(x) > spec.s:
        return False, float("inf"), 0, False
    F = eval_F(spec, x)
    sets, exhaustive = _working_sets(spec.n, k, max_sets, seed)
    worst, worst_hi, count = 0.0, 0.0, 0
    for B in sets:
        count += 1
        move = best_block_move(spec, x, B)
        if move is None:
            continue
        _, val, low = move
        worst = max(worst, F - val)
        worst_hi = max(worst_hi, F - low)
    if worst > tol:
        return False, worst, count, exhaustive
    if worst_hi > tol:
        raise UndecidedError(f"block gap lies in [{worst:.3e}, {worst_hi:.3e}]", gap=worst)
    return True, worst, count, exhaustive


def brute_force_global(spec, cap=200_000):
    """Exact global minimiser by enumerating every support of size ``min(s, n)``."""
    size = min(spec.s, spec.n)
    total = comb(spec.n, size)
    if total > cap:
        raise CapacityError(f"{total} supports exceed the cap {cap}")
    best_val, best_x = np.inf, None
    for S in combinations(range(spec.n), size):
        S = list(S)
        res = restricted_minimize(spec.penalty, spec.lam, spec.A[:, S], spec.b)
        if res.value < best_val:
            best_val = res.value
            best_x = np.zeros(spec.n)
            best_x[S] = res.z
    return best_x, eval_F(spec, best_x)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


@dataclass
class Certificate:
    basic: dict
    lipschitz: dict
    block_k: dict
    mu_used: float
    tolerances: dict
    global_: Optional[dict] = None
    inconsistencies: list = field(default_factory=list)

    def to_dict(self):
        """Plain dict with non-finite numbers mapped to ``None`` so the JSON is strict."""
        out = _json_safe(asdict(self))
        out["global"] = out.pop("global_")
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def level_holds(self, level):
        part = {"basic": self.basic, "lipschitz": self.lipschitz, "block_k": self.block_k,
                "global": self.global_}[level]
        return bool(part and part.get("holds"))


def certificate_mu(final_mu):
    return max(float(final_mu), MU_FLOOR)


def hierarchy_report(spec, x, k, mu, tols=None, theta=1e-3, with_global=False,
                     max_sets=5000, seed=0, cap=200_000):
    """Run every check and record any break of block-k => lipschitz => basic."""
    tols = {**DEFAULT_TOLS, **(tols or {})}
    x = np.asarray(x, dtype=float)
    mu = certificate_mu(mu)
    F = eval_F(spec, x)
    basic_tol = tols["basic"] * max(1.0, abs(F))
    ok_b, gap_b = check_basic(spec, x, basic_tol)
    ok_l, res_l = check_lipschitz(spec, x, mu, tols["lipschitz"], theta)
    ok_k, gap_k, count, exhaustive = check_block_k(spec, x, k, mu, tols["block_k"], max_sets, seed)
    cert = Certificate(
        basic={"holds": ok_b, "gap": gap_b},
        lipschitz={"holds": ok_l, "residual": res_l},
        block_k={"holds": ok_k, "worst_gap": gap_k, "sets_checked": count,
                 "exhaustive": exhaustive, "k": k},
        mu_used=mu,
        tolerances={**tols, "basic_abs": basic_tol},
    )
    if with_global:
        x_star, F_star = brute_force_global(spec, cap)
        gap = F - F_star
        cert.global_ = {"holds": gap <= tols["global"] * max(1.0, abs(F)), "gap": gap,
                        "F_star": F_star}
    if ok_k and not ok_l:
        cert.inconsistencies.append("block_k holds but lipschitz fails")
    if ok_l and not ok_b:
        cert.inconsistencies.append("lipschitz holds but basic fails")
    if cert.global_ and cert.global_["holds"] and not ok_k:
        cert.inconsistencies.append("global holds but block_k fails")
    return cert
