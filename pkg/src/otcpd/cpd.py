"""Sliding-window change point detection.

For every split point ``t`` in ``n, ..., T - n`` the statistic compares the
``n`` rows before ``t`` (``values[t-n:t]``) with the ``n`` rows from ``t`` on
(``values[t:t+n]``).  ``t`` is therefore the 0-based index of the first row
after a candidate change, the same convention used for ground-truth labels.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial

import numpy as np

from ._parallel import ordered_map
from .gof import GofStatistic

__all__ = [
    "ChangePointSet",
    "StatSeries",
    "detect",
    "local_maxima",
    "peak_search",
    "sliding_statistic",
]

CHUNK = 256


@dataclass(frozen=True)
class StatSeries:
    t: np.ndarray
    z: np.ndarray
    stat: GofStatistic | None = None
    window: int = 0
    unconverged: int = 0

    def __len__(self) -> int:
        return len(self.z)


@dataclass(frozen=True)
class ChangePointSet:
    indices: np.ndarray
    eta: float
    delta: int

    def __len__(self) -> int:
        return len(self.indices)


def _values(series) -> np.ndarray:
    values = getattr(series, "values", series)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    return values


def _chunk(ts: np.ndarray, values: np.ndarray, n: int, stat: GofStatistic):
    ev = stat.evaluator()
    z = [ev(values[t - n : t], values[t : t + n]) for t in ts]
    return z, ev.unconverged


def sliding_statistic(series, n: int, stat: GofStatistic, stride: int = 1, workers: int = 1) -> StatSeries:
    """Statistic sequence over all split points ``t = n, n + stride, ..., <= T - n``.

    Work is cut into fixed chunks of split points; each chunk starts a fresh
    evaluator (shared reference, warm starts inside the chunk), so the
    result is identical for any ``workers``.
    """
    values = _values(series)
    T = len(values)
    if n < 2:
        raise ValueError(f"window n must be >= 2, got {n}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if T < 2 * n:
        raise ValueError(
            f"series has T={T} rows but two windows of n={n} need at least {2 * n}"
        )
    ts = np.arange(n, T - n + 1, stride)
    chunks = [ts[i : i + CHUNK] for i in range(0, len(ts), CHUNK)]
    out = ordered_map(partial(_chunk, values=values, n=n, stat=stat), chunks, workers)
    z = np.concatenate([np.asarray(zc, dtype=float) for zc, _ in out])
    unconverged = sum(u for _, u in out)
    return StatSeries(ts, z, stat, n, unconverged)


def local_maxima(z) -> np.ndarray:
    """Indices with ``z[i] > z[i-1]`` and ``z[i] >= z[i+1]``.

    Missing neighbours at the ends count as ``-inf``, so endpoints can
    qualify; a plateau yields its first index.
    """
    z = np.asarray(z, dtype=float)
    if z.size == 0:
        return np.array([], dtype=int)
    padded = np.concatenate([[-np.inf], z, [-np.inf]])
    mid = padded[1:-1]
    return np.flatnonzero((mid > padded[:-2]) & (mid >= padded[2:]))


def _greedy(t: np.ndarray, z: np.ndarray, candidates: np.ndarray, delta: int) -> np.ndarray:
    # tallest first, ties to the earlier index
    order = candidates[np.lexsort((t[candidates], -z[candidates]))]
    kept: list[int] = []
    for c in order:
        if all(abs(t[c] - t[k]) >= delta for k in kept):
            kept.append(c)
    return np.sort(np.asarray(kept, dtype=int))


def peak_search(z, eta: float, delta: int, t=None) -> ChangePointSet:
    """Peaks of ``z`` at or above ``eta``, at least ``delta`` apart.

    ``z`` is a :class:`StatSeries` or a plain array (then ``t`` defaults to
    positions).  Candidates are :func:`local_maxima` with ``z >= eta``;
    they are accepted greedily from the tallest down, skipping any closer
    than ``delta`` to an accepted one.  Returns time indices.
    """
    if isinstance(z, StatSeries):
        t, z = z.t, z.z
    z = np.asarray(z, dtype=float)
    t = np.arange(len(z)) if t is None else np.asarray(t)
    if delta < 1:
        raise ValueError(f"delta must be >= 1, got {delta}")
    cand = local_maxima(z)
    cand = cand[z[cand] >= eta]
    kept = _greedy(t, z, cand, delta)
    return ChangePointSet(t[kept].astype(int), float(eta), int(delta))


def detect(series, n: int, stat: GofStatistic, eta: float, delta: int, stride: int = 1, workers: int = 1):
    """Run the sliding statistic and peak search; returns ``(StatSeries, ChangePointSet)``."""
    zs = sliding_statistic(series, n, stat, stride, workers)
    return zs, peak_search(zs, eta, delta)
