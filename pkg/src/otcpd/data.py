"""Time series container, synthetic segment generator, and CSV I/O.

CSV layout: comma separated, optional single header row, one row per time
step.  Label files hold one 0-based change index per line (the index of
the first sample after the change).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DataError",
    "Gamma",
    "Gaussian",
    "Laplace",
    "SegmentSpec",
    "TimeSeries",
    "generate_synthetic",
    "load_csv",
    "load_labels",
    "benchmark_spec",
    "save_csv",
    "spec_from_dict",
    "save_labels",
]


class DataError(ValueError):
    """Malformed input data (bad CSV cell, out-of-range label, ...)."""


@dataclass(frozen=True)
class TimeSeries:
    values: np.ndarray
    truth: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))
    name: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        truth = np.asarray(self.truth, dtype=int).ravel()
        T = len(values)
        if np.any(np.diff(truth) <= 0):
            raise DataError("change indices must be strictly increasing")
        if truth.size and (truth[0] <= 0 or truth[-1] >= T):
            raise DataError(f"change indices must lie in (0, {T}), got {truth.tolist()}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "truth", truth)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Gaussian:
    """``N(mean, cov)``; scalar ``mean`` is broadcast, scalar ``cov`` means ``cov * I``."""

    mean: float | list = 0.0
    cov: float | list = 1.0

    def sample(self, rng: np.random.Generator, size: int, d: int) -> np.ndarray:
        mean = np.broadcast_to(np.asarray(self.mean, float), (d,))
        cov = np.asarray(self.cov, float)
        if cov.ndim == 0:
            if cov <= 0:
                raise ValueError(f"covariance scale must be positive, got {float(cov)}")
            return mean + math.sqrt(float(cov)) * rng.standard_normal((size, d))
        if cov.shape != (d, d):
            raise ValueError(f"covariance has shape {cov.shape}, expected ({d}, {d})")
        try:
            L = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("covariance matrix is not positive definite") from None
        if not np.allclose(cov, cov.T):
            raise ValueError("covariance matrix is not symmetric")
        return mean + rng.standard_normal((size, d)) @ L.T

    def describe(self) -> dict:
        return {"dist": "gaussian", "mean": self.mean, "cov": self.cov}


@dataclass(frozen=True)
class Laplace:
    """Independent Laplace coordinates with location ``loc`` and scale ``scale``."""

    loc: float = 0.0
    scale: float = 1.0

    def sample(self, rng, size, d):
        if self.scale <= 0:
            raise ValueError(f"Laplace scale must be positive, got {self.scale}")
        return rng.laplace(self.loc, self.scale, (size, d))

    def describe(self) -> dict:
        return {"dist": "laplace", "loc": self.loc, "scale": self.scale}


@dataclass(frozen=True)
class Gamma:
    """Independent Gamma coordinates, shape/rate parameterization."""

    shape: float = 2.0
    rate: float = 2.0

    def sample(self, rng, size, d):
        if self.shape <= 0 or self.rate <= 0:
            raise ValueError("Gamma shape and rate must be positive")
        return rng.gamma(self.shape, 1.0 / self.rate, (size, d))

    def describe(self) -> dict:
        return {"dist": "gamma", "shape": self.shape, "rate": self.rate}


@dataclass(frozen=True)
class SegmentSpec:
    segments: tuple
    d: int
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if not self.segments:
            raise ValueError("need at least one segment")
        for _, length in self.segments:
            if int(length) < 1:
                raise ValueError(f"segment lengths must be >= 1, got {length}")

    @property
    def lengths(self) -> list[int]:
        return [int(length) for _, length in self.segments]

    @property
    def change_points(self) -> list[int]:
        return np.cumsum(self.lengths)[:-1].tolist()

    def describe(self) -> dict:
        return {
            "d": self.d,
            "seed": self.seed,
            "segments": [{**dist.describe(), "length": int(n)} for dist, n in self.segments],
        }


def equicorrelated(d: int, rho: float = 0.5) -> np.ndarray:
    """Unit-diagonal covariance with every off-diagonal entry equal to ``rho``."""
    return (1 - rho) * np.eye(d) + rho * np.ones((d, d))


BENCHMARK_LENGTHS = (300, 400, 500, 300, 400, 300, 200, 300, 200, 400)


def benchmark_spec(d: int = 10, seed: int = 0, sigma=None) -> SegmentSpec:
    """The ten-segment schedule (T = 3300, nine changes).

    Segment 8 is ``N(1, sigma)``; its covariance is not pinned down by the
    source, so it defaults to :func:`equicorrelated` with ``rho = 0.5``.
    """
    sigma = equicorrelated(d) if sigma is None else np.asarray(sigma, float)
    dists = (
        Gaussian(0.0, 0.001),
        Gaussian(0.0, 0.01),
        Gaussian(1.0, 1.0),
        Laplace(0.0, 1.0),
        Gaussian(1.0, 1.0),
        Gamma(2.0, 2.0),
        Gaussian(0.0, 0.1),
        Gaussian(1.0, sigma.tolist()),
        Gaussian(0.0, 0.01),
        Gaussian(0.0, 0.001),
    )
    return SegmentSpec(tuple(zip(dists, BENCHMARK_LENGTHS)), d, seed)


_DISTS = {"gaussian": Gaussian, "laplace": Laplace, "gamma": Gamma}


def spec_from_dict(obj: dict, seed: int | None = None) -> SegmentSpec:
    """Inverse of :meth:`SegmentSpec.describe`; ``seed`` overrides the stored one."""
    try:
        segments = []
        for seg in obj["segments"]:
            seg = dict(seg)
            cls = _DISTS[seg.pop("dist")]
            length = int(seg.pop("length"))
            segments.append((cls(**seg), length))
        d = int(obj["d"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed segment spec: {exc!r}") from None
    return SegmentSpec(tuple(segments), d, int(obj.get("seed", 0) if seed is None else seed))


def generate_synthetic(spec: SegmentSpec, name: str = "synthetic") -> TimeSeries:
    """Concatenate i.i.d. draws per segment.

    Segment ``k`` draws from its own PCG64 stream,
    ``SeedSequence(seed).spawn(K)[k]``, so results are bit-identical across
    platforms and independent of the other segments' lengths.
    """
    streams = np.random.SeedSequence(spec.seed).spawn(len(spec.segments))
    blocks = [
        dist.sample(np.random.default_rng(s), int(length), spec.d)
        for (dist, length), s in zip(spec.segments, streams)
    ]
    return TimeSeries(np.vstack(blocks), np.array(spec.change_points, dtype=int), name)


def _parse_row(row: list[str], lineno: int, path) -> list[float]:
    out = []
    for col, cell in enumerate(row, start=1):
        try:
            x = float(cell)
        except ValueError:
            raise DataError(f"{path}:{lineno}: column {col}: not a number: {cell!r}") from None
        if not math.isfinite(x):
            raise DataError(f"{path}:{lineno}: column {col}: non-finite value {cell!r}")
        out.append(x)
    return out


def load_labels(path, T: int | None = None) -> np.ndarray:
    labels = []
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                labels.append(int(text))
            except ValueError:
                raise DataError(f"{path}:{lineno}: not an integer change index: {text!r}") from None
            if T is not None and not 0 < labels[-1] < T:
                raise DataError(f"{path}:{lineno}: change index {labels[-1]} outside (0, {T})")
    labels = np.array(sorted(labels), dtype=int)
    if np.any(np.diff(labels) == 0):
        raise DataError(f"{path}: duplicate change index")
    return labels


def load_csv(path, has_header: bool | None = None, label_path=None, name: str | None = None) -> TimeSeries:
    """Read a numeric CSV (one row per time step) and optional label file.

    ``has_header=None`` treats the first row as a header when any of its
    cells is non-numeric.  Errors name the offending line and column.
    """
    rows: list[list[float]] = []
    width = None
    header_seen = False
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and has_header is not False:
                if has_header or not _numeric(row):
                    width = len(row)
                    header_seen = True
                    continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataError(f"{path}:{lineno}: expected {width} columns, found {len(row)}")
            rows.append(_parse_row(row, lineno, path))
    if has_header and not header_seen:
        raise DataError(f"{path}: expected a header row")
    values = np.array(rows, dtype=float).reshape(len(rows), width or 0)
    truth = load_labels(label_path, len(values)) if label_path is not None else None
    return TimeSeries(values, np.array([], int) if truth is None else truth, name or Path(path).stem)


def _numeric(row) -> bool:
    try:
        [float(c) for c in row]
    except ValueError:
        return False
    return True


def save_csv(series: TimeSeries, path, label_path=None) -> None:
    """Write values with a ``x0,x1,...`` header, 17 significant digits per float."""
    values = np.asarray(series.values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise DataError("cannot save non-finite values")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{k}" for k in range(values.shape[1])])
        for row in values:
            w.writerow([f"{x:.17g}" for x in row])
    if label_path is not None:
        save_labels(series.truth, label_path)


def save_labels(labels, path) -> None:
    with open(path, "w") as fh:
        for k in np.asarray(labels, dtype=int):
            fh.write(f"{k}\n")
