"""Synthetic instances, entry corruption and matrix file loading."""
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import DimensionError, ParseError
from .rng import make_rng


class Format(str, Enum):
    CSV_DENSE = "csv"
    SVMLIGHT = "svmlight"


@dataclass(frozen=True)
class GenSpec:
    """Recipe for a Gaussian regression instance.

    ``truth_support`` defaults to ``min(100, n // 2)``.
    """

    m: int
    n: int
    corrupt: bool = False
    corrupt_frac: float = 0.02
    corrupt_scale: float = 100.0
    truth_support: Optional[int] = None
    noise_scale: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("m and n must be positive")
        if self.truth_support is None:
            object.__setattr__(self, "truth_support", max(1, min(100, self.n // 2)))
        if not 1 <= self.truth_support <= self.n:
            raise ValueError("truth_support must lie in [1, n]")
        if not 0 <= self.corrupt_frac <= 1:
            raise ValueError("corrupt_frac must lie in [0, 1]")


def gen_random(gen):
    """Return ``(A, b, x_true)`` with ``b = A x_true + noise``.

    When ``gen.corrupt`` is set, the corruption is applied to ``A`` after
    ``b`` is formed, so the observations come from the clean design.
    """
    rng = make_rng(gen.seed)
    A = rng.standard_normal((gen.m, gen.n))
    x_true = np.zeros(gen.n)
    support = np.sort(rng.choice(gen.n, size=gen.truth_support, replace=False))
    x_true[support] = rng.standard_normal(gen.truth_support)
    b = A @ x_true + gen.noise_scale * rng.standard_normal(gen.m)
    if gen.corrupt:
        A = corrupt(A, gen.corrupt_frac, gen.corrupt_scale, int(rng.integers(2**62)))
    return A, b, x_true


def corrupt(A, frac, scale, seed):
    """Scale exactly ``round(frac * A.size)`` distinct entries, chosen uniformly."""
    if not 0 <= frac <= 1:
        raise ValueError("frac must lie in [0, 1]")
    out = np.array(A, dtype=float, copy=True)
    count = int(round(frac * out.size))
    flat = make_rng(seed).choice(out.size, size=count, replace=False)
    out.reshape(-1)[flat] *= scale
    return out


def save_csv(path, A, b):
    """Write rows ``a_i, b_i`` with 17 significant digits so loading is exact."""
    data = np.column_stack([np.asarray(A, dtype=float), np.asarray(b, dtype=float)])
    np.savetxt(path, data, delimiter=",", fmt="%.17g")


def _parse_float(token, lineno):
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"cannot parse {token!r} as a number", line=lineno) from None


def _load_csv(path):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            rows.append([_parse_float(tok, lineno) for tok in line.split(",")])
            if len(rows[-1]) != len(rows[0]):
                raise ParseError(
                    f"expected {len(rows[0])} columns, found {len(rows[-1])}", line=lineno
                )
    if not rows:
        raise ParseError("file contains no rows", line=0)
    if len(rows[0]) < 2:
        raise ParseError("need at least one feature column and a label column", line=1)
    data = np.array(rows)
    return data[:, :-1], data[:, -1]


def _load_svmlight(path):
    labels, entries, width = [], [], 0
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            labels.append(_parse_float(tokens[0], lineno))
            row = {}
            for tok in tokens[1:]:
                key, sep, val = tok.partition(":")
                if not sep:
                    raise ParseError(f"expected index:value, got {tok!r}", line=lineno)
                if key == "qid":
                    continue
                try:
                    idx = int(key)
                except ValueError:
                    raise ParseError(f"bad feature index {key!r}", line=lineno) from None
                if idx < 1:
                    raise ParseError(f"feature indices start at 1, got {idx}", line=lineno)
                row[idx - 1] = _parse_float(val, lineno)
                width = max(width, idx)
            entries.append(row)
    if not labels:
        raise ParseError("file contains no rows", line=0)
    A = np.zeros((len(labels), width))
    for i, row in enumerate(entries):
        for j, v in row.items():
            A[i, j] = v
    return A, np.array(labels)


def densest_columns(A, n):
    """Indices of the ``n`` columns with most nonzeros, in file order; ties favour earlier columns."""
    counts = np.count_nonzero(A, axis=0)
    return np.sort(np.argsort(-counts, kind="stable")[:n])


def load_matrix(path, fmt=Format.CSV_DENSE, m=None, n=None):
    """Read ``(A, b)`` from a dense CSV or an svmlight file.

    Rows are truncated to the first ``m``.  Dense CSV keeps its first ``n``
    columns; svmlight files keep the ``n`` densest columns of those rows,
    which retains the informative features of a sparse corpus.
    """
    fmt = Format(fmt)
    A, b = _load_csv(path) if fmt is Format.CSV_DENSE else _load_svmlight(path)
    rows, cols = A.shape
    m = rows if m is None else m
    n = cols if n is None else n
    if m < 1 or n < 1:
        raise DimensionError("m and n must be positive")
    if m > rows or n > cols:
        raise DimensionError(f"requested {m}x{n} but the file holds {rows}x{cols}")
    A, b = A[:m], b[:m]
    if fmt is Format.SVMLIGHT:
        return A[:, densest_columns(A, n)].copy(), b.copy()
    return A[:, :n].copy(), b.copy()


def planted_labels(A, truth_support=None, noise_scale=10.0, seed=0):
    """Return ``(b, x_true)`` with ``b = A x_true + noise`` for a loaded design matrix."""
    m, n = A.shape
    k = max(1, min(100, n // 2)) if truth_support is None else truth_support
    rng = make_rng(seed)
    x_true = np.zeros(n)
    support = np.sort(rng.choice(n, size=k, replace=False))
    x_true[support] = rng.standard_normal(k)
    return A @ x_true + noise_scale * rng.standard_normal(m), x_true
