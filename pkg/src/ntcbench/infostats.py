"""Exact discrete information and distance primitives shared by the metrics.

Entropies are plug-in (maximum-likelihood) estimates in bits, computed from
integer co-occurrence counts over a protocol's full table -- the extension is
fully enumerable, so there is no sampling error to correct for.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


def entropy(counts) -> float:
    """Shannon entropy in bits of the distribution given by integer counts.

    Uses H = log2(T) - sum(c*log2(c))/T, which is exact (one rounding) for
    uniform counts.
    """
    c = np.asarray(counts, dtype=np.float64).ravel()
    if c.size == 0 or np.any(c < 0):
        raise ValueError("counts must be a non-empty array of non-negative values")
    total = c.sum()
    if total <= 0:
        raise ValueError("at least one count must be positive")
    pos = c[c > 0]
    return float(np.log2(total) - pos @ np.log2(pos) / total)


def joint_counts(xs, ys, nx: int, ny: int) -> np.ndarray:
    """Co-occurrence count matrix of two paired integer-coded sequences."""
    xs = np.asarray(xs, dtype=np.intp)
    ys = np.asarray(ys, dtype=np.intp)
    if xs.shape != ys.shape:
        raise ValueError("paired sequences must have equal length")
    flat = np.bincount(xs * ny + ys, minlength=nx * ny)
    return flat.reshape(nx, ny)


def mutual_information(joint) -> float:
    """Mutual information in bits of a joint count matrix.

    I(A;B) = H(A) + H(B) - H(A,B) from the same counts; tiny negatives from
    rounding are possible and left in place.
    """
    j = np.asarray(joint, dtype=np.float64)
    if j.ndim != 2 or j.size == 0:
        raise ValueError("joint must be a non-empty 2-d count matrix")
    if np.any(j < 0):
        raise ValueError("joint counts must be non-negative")
    if j.sum() <= 0:
        raise ValueError("joint counts must not be all zero")
    return entropy(j.sum(axis=1)) + entropy(j.sum(axis=0)) - entropy(j)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    n = values.size
    new_group = np.empty(n, dtype=bool)
    new_group[0] = True
    new_group[1:] = sorted_vals[1:] != sorted_vals[:-1]
    group_id = np.cumsum(new_group) - 1
    counts = np.bincount(group_id)
    ends = np.cumsum(counts)
    starts = ends - counts
    avg = (starts + ends + 1) / 2.0  # mean of 1-based ranks within the group
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = avg[group_id]
    return ranks


def spearman(xs, ys) -> float | None:
    """Spearman rank correlation with average-tied ranks.

    Returns None (rather than 0) when either rank vector is constant, so that
    callers can tell `no variation' apart from `no correlation'.
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be 1-d sequences of equal length")
    if x.size < 2:
        raise ValueError("need at least two observations")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    vx = rx @ rx
    vy = ry @ ry
    if vx == 0.0 or vy == 0.0:
        return None
    return float((rx @ ry) / np.sqrt(vx * vy))


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Minimum number of insertions, deletions and substitutions between two
    sequences of comparable items."""
    if len(a) < len(b):
        a, b = b, a
    if len(b) == 0:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, item_a in enumerate(a, start=1):
        current = [i] + [0] * len(b)
        for j, item_b in enumerate(b, start=1):
            current[j] = min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (item_a != item_b),
            )
        previous = current
    return previous[-1]


def hamming(a: Sequence, b: Sequence) -> int:
    """Number of positions at which two equal-length sequences differ."""
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    return sum(x != y for x, y in zip(a, b))
