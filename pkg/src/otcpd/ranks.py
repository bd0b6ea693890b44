"""Sample rank maps onto a reference sample of the unit cube.

The pooled sample (X block first, then Y block) is transported onto a set
of reference points in ``[0, 1]^d`` of the same size.  The hard map uses an
optimal assignment; the soft map is the barycentric projection of the
entropic coupling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .ot import as_points, barycentric_map, build_cost_matrix, exact_assignment, sinkhorn

__all__ = [
    "RankMapping",
    "ReferenceSet",
    "hard_rank_map",
    "sample_reference",
    "soft_rank_map",
]

SCHEMES = ("iid", "halton")


@dataclass(frozen=True)
class ReferenceSet:
    points: np.ndarray
    scheme: str = "iid"
    seed: int | None = 0

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class RankMapping:
    """Images of the pooled points.

    ``kind`` is ``"hard"`` or ``"soft"``; ``split = (m, n)`` says the first
    ``m`` images belong to the X block.  ``potential`` is the reference-side
    dual potential of the soft map, kept so the next related problem can be
    warm-started.
    """

    images: np.ndarray
    kind: str
    split: tuple[int, int]
    epsilon: float = 0.0
    converged: bool = True
    potential: np.ndarray | None = field(default=None, repr=False)

    @property
    def x_images(self) -> np.ndarray:
        return self.images[: self.split[0]]

    @property
    def y_images(self) -> np.ndarray:
        return self.images[self.split[0] :]


def sample_reference(N: int, d: int, scheme: str = "iid", seed: int | None = 0) -> ReferenceSet:
    """Draw ``N`` reference points in ``[0, 1]^d``.

    ``"iid"`` draws uniform points from a PCG64 generator seeded with
    ``seed``.  ``"halton"`` is the unscrambled Halton sequence without its
    leading zero point (``seed`` is ignored); it is a low-variance
    alternative, not an i.i.d. uniform sample.
    """
    if N < 1 or d < 1:
        raise ValueError(f"need N >= 1 and d >= 1, got N={N}, d={d}")
    if scheme == "iid":
        points = np.random.default_rng(seed).random((N, d))
    elif scheme == "halton":
        sampler = qmc.Halton(d, scramble=False)
        sampler.fast_forward(1)
        points = sampler.random(N)
    else:
        raise ValueError(f"unknown reference scheme {scheme!r}; expected one of {SCHEMES}")
    return ReferenceSet(points, scheme, seed)


def _check_sizes(pooled: np.ndarray, ref: ReferenceSet) -> None:
    if pooled.shape[0] != len(ref):
        raise ValueError(
            f"pooled sample has {pooled.shape[0]} points but the reference has {len(ref)}"
        )
    if pooled.shape[1] != ref.dim:
        raise ValueError(f"pooled sample has d={pooled.shape[1]}, reference has d={ref.dim}")


def hard_rank_map(pooled, ref: ReferenceSet, split: tuple[int, int] | None = None) -> RankMapping:
    """Sample rank map by optimal assignment of pooled points to the reference.

    With distinct pooled points the images are exactly a permutation of the
    reference.  Repeated points form one atom of the empirical measure, so
    the optimal plan spreads that atom over several reference points; every
    copy is then mapped to the mean of those points (the multivariate
    analogue of mid-ranks for ties).
    """
    pooled = as_points(pooled, "pooled")
    _check_sizes(pooled, ref)
    N = pooled.shape[0]
    split = split or (N, 0)
    perm = exact_assignment(build_cost_matrix(pooled, ref.points)).perm
    images = ref.points[perm]

    _, group, counts = np.unique(pooled, axis=0, return_inverse=True, return_counts=True)
    group = np.ravel(group)
    if np.any(counts > 1):
        sums = np.zeros((len(counts), ref.dim))
        np.add.at(sums, group, images)
        images = (sums / counts[:, None])[group]
    return RankMapping(images, "hard", split)


def soft_rank_map(
    pooled,
    ref: ReferenceSet,
    epsilon: float,
    split: tuple[int, int] | None = None,
    tol: float = 1e-9,
    max_iter: int = 10_000,
    g_init=None,
    newton_after: int | None = 30,
) -> RankMapping:
    """Entropic sample rank map: barycentric projection of the Sinkhorn plan.

    ``newton_after`` is forwarded to :func:`otcpd.ot.sinkhorn`; the default
    polishes with Newton steps after 30 sweeps, which reaches the same plan
    much sooner at small epsilon.
    """
    pooled = as_points(pooled, "pooled")
    _check_sizes(pooled, ref)
    N = pooled.shape[0]
    coupling = sinkhorn(
        build_cost_matrix(pooled, ref.points),
        epsilon=epsilon,
        tol=tol,
        max_iter=max_iter,
        g_init=g_init,
        newton_after=newton_after,
    )
    images = barycentric_map(coupling, ref.points)
    return RankMapping(
        images, "soft", split or (N, 0), epsilon, coupling.converged, coupling.g
    )
