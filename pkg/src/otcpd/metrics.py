"""Margin-based scoring of predicted change points.

A prediction is a true positive when it is matched, one-to-one, to a true
change point at most ``xi`` samples away.  Metrics over all thresholds are
computed from a single greedy peak pass: the peaks kept at threshold
``eta`` are exactly the peaks kept at ``-inf`` whose height is ``>= eta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .cpd import StatSeries, _greedy, local_maxima

__all__ = [
    "MatchResult",
    "PrCurve",
    "Sweep",
    "auc_pr",
    "best_f1",
    "match_changepoints",
    "precision_recall_f1",
    "report_record",
    "threshold_sweep",
]

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class MatchResult:
    tp: int
    fp: int
    fn: int
    pairs: list[tuple[int, int]] = field(default_factory=list)


@dataclass(frozen=True)
class PrCurve:
    recall: np.ndarray
    precision: np.ndarray
    auc: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.recall.tolist(), self.precision.tolist()))


def _sorted_ints(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64).ravel()
    if np.any(np.diff(x) < 0):
        raise ValueError(f"{name} must be sorted ascending")
    return x


def match_changepoints(pred, truth, xi: int) -> MatchResult:
    """One-to-one matching of predictions to truths within ``xi``.

    Maximizes the number of matched pairs, then minimizes the summed
    distance, by an assignment problem whose pair costs are
    ``|p - t| - M`` with ``M`` large enough that one extra pair always
    outweighs any distance saving.
    """
    if xi < 0:
        raise ValueError(f"xi must be >= 0, got {xi}")
    pred = _sorted_ints(pred, "pred")
    truth = _sorted_ints(truth, "truth")
    if pred.size == 0 or truth.size == 0:
        return MatchResult(0, len(pred), len(truth))
    dist = np.abs(pred[:, None] - truth[None, :])
    ok = dist <= xi
    rows = np.flatnonzero(ok.any(axis=1))
    cols = np.flatnonzero(ok.any(axis=0))
    pairs: list[tuple[int, int]] = []
    if rows.size:
        sub_ok = ok[np.ix_(rows, cols)]
        big = (min(rows.size, cols.size) + 1) * (xi + 1)
        cost = np.where(sub_ok, dist[np.ix_(rows, cols)] - big, 0)
        r, c = linear_sum_assignment(cost)
        keep = sub_ok[r, c]
        pairs = [(int(pred[rows[i]]), int(truth[cols[j]])) for i, j in zip(r[keep], c[keep])]
    tp = len(pairs)
    return MatchResult(tp, len(pred) - tp, len(truth) - tp, sorted(pairs))


def precision_recall_f1(match: MatchResult) -> tuple[float, float, float]:
    """Precision (1 with no predictions), recall (1 with no truths), and F1."""
    precision = match.tp / (match.tp + match.fp) if match.tp + match.fp else 1.0
    recall = match.tp / (match.tp + match.fn) if match.tp + match.fn else 1.0
    denom = precision + recall
    f1 = 2 * precision * recall / denom if denom > 0 else 0.0
    return precision, recall, f1


@dataclass(frozen=True)
class Sweep:
    """Scores at every threshold in ``eta`` (distinct z values, then ``+inf``)."""

    eta: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray


def _tz(z, t):
    if isinstance(z, StatSeries):
        return z.t, np.asarray(z.z, float)
    z = np.asarray(z, dtype=float)
    return (np.arange(len(z)) if t is None else np.asarray(t)), z


def threshold_sweep(z, truth, xi: int, delta: int, t=None) -> Sweep:
    t, z = _tz(z, t)
    truth = _sorted_ints(truth, "truth")
    if delta < 1:
        raise ValueError(f"delta must be >= 1, got {delta}")
    etas = np.append(np.unique(z), np.inf)
    kept = _greedy(t, z, local_maxima(z), delta)
    heights = z[kept]
    # number of kept peaks at or above each threshold
    counts = len(heights) - np.searchsorted(np.sort(heights), etas, side="left")
    order = np.argsort(-heights, kind="stable")

    cache: dict[int, tuple] = {}
    rows = []
    for k in counts:
        if k not in cache:
            pred = np.sort(t[kept[order[:k]]])
            m = match_changepoints(pred, truth, xi)
            cache[k] = (*precision_recall_f1(m), m.tp, m.fp, m.fn)
        rows.append(cache[k])
    p, r, f, tp, fp, fn = (np.array(col) for col in zip(*rows))
    return Sweep(etas, p, r, f, tp.astype(int), fp.astype(int), fn.astype(int))


def best_f1(z, truth, xi: int, delta: int, t=None) -> tuple[float, float]:
    """Best F1 over all thresholds and the smallest threshold reaching it."""
    sw = threshold_sweep(z, truth, xi, delta, t)
    i = int(np.argmax(sw.f1))
    return float(sw.f1[i]), float(sw.eta[i])


def pr_curve(recall, precision) -> PrCurve:
    """Area under (recall, precision) points, anchored at ``(0, 1)``.

    Points are sorted by recall, repeated recalls keep their best precision,
    and the area is the trapezoid rule up to the largest recall reached.
    """
    r = np.append(np.asarray(recall, float), 0.0)
    p = np.append(np.asarray(precision, float), 1.0)
    ur = np.unique(r)
    up = np.array([p[r == v].max() for v in ur])
    return PrCurve(ur, up, float(np.trapezoid(up, ur)) if len(ur) > 1 else 0.0)


def auc_pr(z, truth, xi: int, delta: int, t=None) -> PrCurve:
    sw = threshold_sweep(z, truth, xi, delta, t)
    return pr_curve(sw.recall, sw.precision)


def report_record(dataset: str, method: str, n: int, epsilon, metric: str, value: float, seed) -> dict:
    """One JSON-lines report row (fixed field names, versioned)."""
    return {
        "schema": SCHEMA_VERSION,
        "dataset": dataset,
        "method": method,
        "n": int(n),
        "epsilon": None if epsilon is None else float(epsilon),
        "metric": metric,
        "value": float(value),
        "seed": seed,
    }
