"""Proximal operators of the half-weighted penalties and sparse projections.

Every penalty here is the support function of a convex set ``U``::

    l1    h(y) = 1/2 ||y||_1          U = [-1/2, 1/2]^m
    hinge h(y) = 1/2 ||max(0, y)||_1  U = [0, 1/2]^m
    linf  h(y) = 1/2 ||y||_inf        U = {u : ||u||_1 <= 1/2}

so ``c - prox_mu(c)`` is the Euclidean projection of ``c`` onto ``mu * U``.
Computing that projection directly (``prox_residual``) keeps the residual
``Ax - b - y`` exact even when ``mu`` is tiny, which is what the solver and
the monitors rely on.
"""
from enum import Enum

import numpy as np


class Penalty(str, Enum):
    """The three nonsmooth loss families ``h``."""

    L1_HALF = "l1"
    LINF_HALF = "linf"
    HINGE_HALF = "hinge"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("_half", "").replace("half", "")
        for member in cls:
            if member.value == key or member.name.lower() == str(value).lower():
                return member
        raise ValueError(f"unknown penalty {value!r}")


def penalty_value(penalty, y):
    """Evaluate ``h(y)``."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        return 0.0
    if penalty is Penalty.L1_HALF:
        return 0.5 * float(np.abs(y).sum())
    if penalty is Penalty.HINGE_HALF:
        return 0.5 * float(np.maximum(y, 0.0).sum())
    if penalty is Penalty.LINF_HALF:
        return 0.5 * float(np.abs(y).max())
    raise ValueError(f"unknown penalty {penalty!r}")


def project_l1_ball(v, radius):
    """Euclidean projection of ``v`` onto ``{z : ||z||_1 <= radius}``.

    Uses the sort-and-threshold rule: sort magnitudes, find the largest
    prefix whose soft-threshold stays positive, shrink by that threshold.
    """
    v = np.asarray(v, dtype=float)
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    if radius == 0:
        return np.zeros_like(v)
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, u.size + 1)
    hits = np.nonzero(u * idx > css - radius)[0]
    # an empty hit set only happens when radius is below the rounding of u[0]
    rho = hits[-1] if hits.size else 0
    shift = (css[rho] - radius) / (rho + 1.0)
    return np.sign(v) * np.maximum(a - shift, 0.0)


def prox_residual(penalty, c, mu):
    """Return ``c - prox(penalty, c, mu)``, computed without cancellation."""
    c = np.asarray(c, dtype=float)
    half = 0.5 * mu
    if penalty is Penalty.L1_HALF:
        return np.clip(c, -half, half)
    if penalty is Penalty.HINGE_HALF:
        return np.clip(c, 0.0, half)
    if penalty is Penalty.LINF_HALF:
        return project_l1_ball(c, half)
    raise ValueError(f"unknown penalty {penalty!r}")


def prox(penalty, c, mu):
    """Minimiser of ``h(y) + ||c - y||^2 / (2 mu)``.

    l1 soft-thresholds at ``mu/2``; hinge shifts entries above ``mu/2`` down
    by ``mu/2``, zeroes ``[0, mu/2]`` and leaves negatives alone; linf is the
    Moreau complement of the l1-ball projection with radius ``mu/2``.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    c = np.asarray(c, dtype=float)
    return c - prox_residual(penalty, c, mu)


def prox_residual_jacobian(penalty, c, mu):
    """Generalised Jacobian of ``prox_residual`` at ``c`` (m x m)."""
    c = np.asarray(c, dtype=float)
    half = 0.5 * mu
    if penalty is Penalty.L1_HALF:
        return np.diag((np.abs(c) < half).astype(float))
    if penalty is Penalty.HINGE_HALF:
        return np.diag(((c > 0.0) & (c < half)).astype(float))
    if penalty is Penalty.LINF_HALF:
        if np.abs(c).sum() <= half:
            return np.eye(c.size)
        p = project_l1_ball(c, half)
        active = p != 0.0
        jac = np.zeros((c.size, c.size))
        idx = np.nonzero(active)[0]
        sg = np.sign(c[idx])
        jac[np.ix_(idx, idx)] = np.eye(idx.size) - np.outer(sg, sg) / idx.size
        return jac
    raise ValueError(f"unknown penalty {penalty!r}")


def subgradient(penalty, v):
    """A fixed element of ``dh(v)``.

    sign(0) = 0 for l1 and hinge; for linf the lowest index attaining the
    largest magnitude receives the whole weight.
    """
    v = np.asarray(v, dtype=float)
    if penalty is Penalty.L1_HALF:
        return 0.5 * np.sign(v)
    if penalty is Penalty.HINGE_HALF:
        return 0.5 * (v > 0.0)
    if penalty is Penalty.LINF_HALF:
        g = np.zeros_like(v)
        if v.size:
            i = int(np.argmax(np.abs(v)))
            g[i] = 0.5 * np.sign(v[i])
        return g
    raise ValueError(f"unknown penalty {penalty!r}")


def hard_threshold(x, s):
    """Keep the ``s`` largest-magnitude entries of ``x``; ties keep lower indices."""
    x = np.asarray(x, dtype=float)
    if not 1 <= s <= x.size:
        raise ValueError(f"s must lie in [1, {x.size}], got {s}")
    if np.count_nonzero(x) <= s:
        return x.copy()
    keep = np.argsort(-np.abs(x), kind="stable")[:s]
    out = np.zeros_like(x)
    out[keep] = x[keep]
    return out
