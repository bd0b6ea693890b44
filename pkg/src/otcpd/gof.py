"""Two-sample goodness-of-fit statistics.

All energy-type statistics are returned in their squared (energy) form,
e.g. ``rank_energy`` returns RE^2_{m,n} itself, never its square root.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy.spatial.distance import cdist, pdist

from ._parallel import ordered_map
from .ot import ConvergenceWarning, as_points, build_cost_matrix, exact_plan, sinkhorn
from .ranks import ReferenceSet, hard_rank_map, sample_reference, soft_rank_map

__all__ = [
    "ConsistencyError",
    "GofStatistic",
    "NullSample",
    "energy_statistic",
    "mmd",
    "null_calibration",
    "rank_energy",
    "sinkhorn_divergence",
    "soft_rank_energy",
    "wasserstein1",
]

KINDS = ("re", "sre", "ed", "mmd", "w1", "sinkdiv")
NEG_RTOL = 1e-10


class ConsistencyError(ArithmeticError):
    """A statistic that must be nonnegative came out clearly negative."""


def _clamp(value: float, scale: float, name: str, rtol: float = NEG_RTOL) -> float:
    if value >= 0:
        return float(value)
    if value >= -rtol * max(scale, 1.0):
        return 0.0
    raise ConsistencyError(f"{name} = {value!r} is negative beyond rounding (scale {scale:g})")


def _pair(X, Y) -> tuple[np.ndarray, np.ndarray]:
    X = as_points(X, "X")
    Y = as_points(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: X has d={X.shape[1]}, Y has d={Y.shape[1]}")
    return X, Y


def energy_statistic(A, B) -> float:
    """V-statistic energy distance between two point clouds.

    ``2/(mn) sum ||a_i - b_j|| - 1/m^2 sum ||a_i - a_j|| - 1/n^2 sum ||b_i - b_j||``
    """
    A, B = _pair(A, B)
    cross = cdist(A, B).mean()
    within_a = cdist(A, A).mean()
    within_b = cdist(B, B).mean()
    return _clamp(2 * cross - within_a - within_b, cross, "energy statistic")


def _reference_for(X, Y, ref_seed, scheme, reference) -> ReferenceSet:
    N, d = X.shape[0] + Y.shape[0], X.shape[1]
    if reference is None:
        return sample_reference(N, d, scheme, ref_seed)
    if reference.points.shape != (N, d):
        raise ValueError(f"reference has shape {reference.points.shape}, need ({N}, {d})")
    return reference


def rank_energy(X, Y, ref_seed: int = 0, scheme: str = "iid", reference: ReferenceSet | None = None) -> float:
    """Sample rank energy RE^2_{m,n}: energy statistic of the hard rank images."""
    X, Y = _pair(X, Y)
    ref = _reference_for(X, Y, ref_seed, scheme, reference)
    mapping = hard_rank_map(np.vstack([X, Y]), ref, (len(X), len(Y)))
    return energy_statistic(mapping.x_images, mapping.y_images)


def soft_rank_energy(
    X,
    Y,
    epsilon: float,
    ref_seed: int = 0,
    scheme: str = "iid",
    reference: ReferenceSet | None = None,
    tol: float = 1e-9,
    max_iter: int = 10_000,
) -> float:
    """Sample soft rank energy sRE^2_{m,n} at regularization ``epsilon``."""
    X, Y = _pair(X, Y)
    ref = _reference_for(X, Y, ref_seed, scheme, reference)
    mapping = soft_rank_map(np.vstack([X, Y]), ref, epsilon, (len(X), len(Y)), tol, max_iter)
    return energy_statistic(mapping.x_images, mapping.y_images)


def median_bandwidth(X, Y) -> float:
    """Median pairwise distance of the pooled sample (1.0 if degenerate)."""
    X, Y = _pair(X, Y)
    dist = pdist(np.vstack([X, Y]))
    med = float(np.median(dist)) if dist.size else 0.0
    return med if med > 0 else 1.0


def mmd(X, Y, bandwidth: float | None = None) -> float:
    """Biased (V-statistic) squared MMD with a Gaussian kernel.

    ``k(x, y) = exp(-||x - y||^2 / (2 bandwidth^2))``; ``bandwidth=None``
    uses the median heuristic.
    """
    X, Y = _pair(X, Y)
    if bandwidth is None:
        bandwidth = median_bandwidth(X, Y)
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    gamma = 1.0 / (2.0 * bandwidth**2)

    def k(A, B):
        return np.exp(-gamma * cdist(A, B, "sqeuclidean")).mean()

    kxy = k(X, Y)
    return _clamp(k(X, X) + k(Y, Y) - 2 * kxy, 1.0, "MMD")


def wasserstein1(X, Y) -> float:
    """Exact W1 between the empirical measures, Euclidean ground cost."""
    X, Y = _pair(X, Y)
    D = cdist(X, Y)
    return max(float(np.sum(exact_plan(D).plan * D)), 0.0)


def _entropic_cost(X, Y, epsilon, tol, max_iter) -> float:
    # value of the entropic problem: <P, C> + eps KL(P | a b^T) = sum_ij P_ij (f_i + g_j)
    cp = sinkhorn(build_cost_matrix(X, Y), epsilon=epsilon, tol=tol, max_iter=max_iter, newton_after=30)
    return float(cp.plan.sum(axis=1) @ cp.f + cp.plan.sum(axis=0) @ cp.g)


def sinkhorn_divergence(X, Y, epsilon: float, tol: float = 1e-9, max_iter: int = 10_000) -> float:
    """Debiased entropic cost ``S(X, Y) - S(X, X)/2 - S(Y, Y)/2``."""
    X, Y = _pair(X, Y)
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    sxy = _entropic_cost(X, Y, epsilon, tol, max_iter)
    sxx = _entropic_cost(X, X, epsilon, tol, max_iter)
    syy = _entropic_cost(Y, Y, epsilon, tol, max_iter)
    value = sxy - 0.5 * (sxx + syy)
    # solver tolerance, not rounding, bounds the error here
    slack = max(tol, NEG_RTOL) * 10
    return _clamp(value, max(abs(sxy), epsilon), "Sinkhorn divergence", slack)


@dataclass(frozen=True)
class GofStatistic:
    """A configured statistic.

    ``kind`` is one of ``re, sre, ed, mmd, w1, sinkdiv``.  ``seed`` and
    ``scheme`` pick the reference sample for the rank statistics;
    ``bandwidth=None`` means the median heuristic for MMD.
    """

    kind: str
    epsilon: float | None = None
    bandwidth: float | None = None
    seed: int = 0
    scheme: str = "iid"
    tol: float = 1e-9
    max_iter: int = 10_000

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown statistic {self.kind!r}; expected one of {KINDS}")
        if self.kind in ("sre", "sinkdiv"):
            if self.epsilon is None or not self.epsilon > 0:
                raise ValueError(f"{self.kind} needs epsilon > 0, got {self.epsilon}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")

    @property
    def label(self) -> str:
        if self.kind == "sre":
            return f"sRE(eps={self.epsilon:g})"
        if self.kind == "sinkdiv":
            return f"SinkDiv(eps={self.epsilon:g})"
        if self.kind == "mmd":
            bw = "median" if self.bandwidth is None else f"{self.bandwidth:g}"
            return f"MMD(bw={bw})"
        return {"re": "RE", "ed": "ED", "w1": "W1"}[self.kind]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "epsilon": self.epsilon,
            "bandwidth": self.bandwidth,
            "seed": self.seed,
            "scheme": self.scheme,
            "tol": self.tol,
            "max_iter": self.max_iter,
        }

    def evaluator(self) -> "WindowEvaluator":
        return WindowEvaluator(self)

    def __call__(self, X, Y) -> float:
        return self.evaluator()(X, Y)


@dataclass
class WindowEvaluator:
    """Evaluates one statistic on many two-sample problems of the same shape.

    The reference sample is drawn once per pooled size and reused, and the
    soft rank map is warm-started from the previous call's potential.  Use a
    fresh evaluator for every independent batch so results do not depend on
    how work was split.
    """

    stat: GofStatistic
    unconverged: int = 0
    _refs: dict = field(default_factory=dict)
    _g: np.ndarray | None = None

    def reference(self, N: int, d: int) -> ReferenceSet:
        key = (N, d)
        if key not in self._refs:
            self._refs[key] = sample_reference(N, d, self.stat.scheme, self.stat.seed)
        return self._refs[key]

    def __call__(self, X, Y) -> float:
        s = self.stat
        X, Y = _pair(X, Y)
        if s.kind == "ed":
            return energy_statistic(X, Y)
        if s.kind == "mmd":
            return mmd(X, Y, s.bandwidth)
        if s.kind == "w1":
            return wasserstein1(X, Y)
        if s.kind == "sinkdiv":
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", ConvergenceWarning)
                value = sinkhorn_divergence(X, Y, s.epsilon, s.tol, s.max_iter)
            if any(issubclass(w.category, ConvergenceWarning) for w in caught):
                self.unconverged += 1
            return value

        ref = self.reference(len(X) + len(Y), X.shape[1])
        pooled = np.vstack([X, Y])
        split = (len(X), len(Y))
        if s.kind == "re":
            mapping = hard_rank_map(pooled, ref, split)
        else:
            g0 = self._g if self._g is not None and len(self._g) == len(ref) else None
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                mapping = soft_rank_map(pooled, ref, s.epsilon, split, s.tol, s.max_iter, g0)
            if not mapping.converged:
                self.unconverged += 1
            self._g = mapping.potential
        return energy_statistic(mapping.x_images, mapping.y_images)


@dataclass(frozen=True)
class NullSample:
    """Statistic values under random relabelling, scaled by ``mn/(m+n)``."""

    values: np.ndarray
    stat: GofStatistic
    split: tuple[int, int]

    @property
    def B(self) -> int:
        return len(self.values)

    def quantile(self, q):
        return np.quantile(self.values, q)


def _null_chunk(perms: np.ndarray, pooled: np.ndarray, m: int, stat: GofStatistic) -> list[float]:
    ev = stat.evaluator()
    return [ev(pooled[p[:m]], pooled[p[m:]]) for p in perms]


def _rank_images(pooled: np.ndarray, stat: GofStatistic) -> np.ndarray:
    ref = sample_reference(len(pooled), pooled.shape[1], stat.scheme, stat.seed)
    if stat.kind == "re":
        return hard_rank_map(pooled, ref).images
    return soft_rank_map(pooled, ref, stat.epsilon, tol=stat.tol, max_iter=stat.max_iter).images


def permutations(N: int, B: int, seed: int, include_identity: bool = False) -> np.ndarray:
    """``B`` permutations of ``range(N)``, one independent PCG64 stream each.

    Stream ``b`` is ``SeedSequence(seed).spawn(B)[b]``, so permutation ``b``
    does not depend on how many others are drawn alongside it.
    """
    children = np.random.SeedSequence(seed).spawn(B)
    perms = np.array([np.random.default_rng(c).permutation(N) for c in children], dtype=int)
    if include_identity and B > 0:
        perms[0] = np.arange(N)
    return perms.reshape(B, N)


def null_calibration(
    pooled,
    split: tuple[int, int],
    stat: GofStatistic,
    B: int = 1000,
    seed: int = 0,
    include_identity: bool = False,
    workers: int = 1,
    chunk: int = 50,
) -> NullSample:
    """Permutation null of ``stat`` on the pooled sample.

    Each of the ``B`` permutations splits the pooled points into blocks of
    sizes ``split = (m, n)``; the statistic is scaled by ``mn/(m+n)``.  With
    ``include_identity`` the first permutation is the identity, i.e. the
    observed split.
    """
    pooled = as_points(pooled, "pooled")
    m, n = split
    if m < 1 or n < 1 or m + n != len(pooled):
        raise ValueError(f"split {split} does not partition {len(pooled)} points")
    if B < 1:
        raise ValueError(f"B must be >= 1, got {B}")
    perms = permutations(len(pooled), B, seed, include_identity)
    scale = m * n / (m + n)
    if stat.kind in ("re", "sre"):
        # the rank map sees only the pooled set, so one map serves every split
        images = _rank_images(pooled, stat)
        values = np.array([energy_statistic(images[p[:m]], images[p[m:]]) for p in perms])
        return NullSample(values * scale, stat, (m, n))
    batches = [perms[i : i + chunk] for i in range(0, B, chunk)]
    job = partial(_null_chunk, pooled=pooled, m=m, stat=stat)
    values = np.concatenate([np.asarray(v, float) for v in ordered_map(job, batches, workers)])
    return NullSample(values * scale, stat, (m, n))
