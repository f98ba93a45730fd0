"""Core data model: grids, partially observed samples, estimator configuration.

Grid indices are 1-based everywhere a caller sees them (``Sample.indices``,
patch windows, file formats, error messages); the only 0-based arithmetic
lives behind :func:`to_dense`, which is the single conversion point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "BandcovError",
    "ConfigurationError",
    "InsufficientDataError",
    "DataFormatError",
    "Grid",
    "Sample",
    "ObservationSet",
    "CvConfig",
    "EstimatorConfig",
    "validate",
    "to_dense",
]


class BandcovError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(BandcovError):
    """A parameter combination violates the estimator's constraints."""


class InsufficientDataError(BandcovError):
    """Too few subjects cover a patch (or an index pair) to estimate it.

    Attributes
    ----------
    patch : int, optional
        1-based patch number the failure refers to, when one is identifiable.
    pair : tuple of int, optional
        1-based grid index pair, set only for pairwise-mode failures.
    """

    def __init__(self, message: str, patch: Optional[int] = None,
                 pair: Optional[Tuple[int, int]] = None):
        super().__init__(message)
        self.patch = patch
        self.pair = pair


class DataFormatError(BandcovError):
    """Malformed input file (bad header, duplicate record, unparsable value)."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Grid:
    """Equally spaced evaluation grid of ``p`` points on ``[t_min, t_max]``."""

    p: int
    t_min: float
    t_max: float
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if self.p < 2 or pts.shape != (self.p,):
            raise ConfigurationError(f"grid needs p >= 2 points, got p={self.p}")
        steps = np.diff(pts)
        if not np.all(steps > 0):
            raise ConfigurationError("grid points must be strictly increasing")
        h = (self.t_max - self.t_min) / (self.p - 1)
        if not (pts[0] == self.t_min and pts[-1] == self.t_max):
            raise ConfigurationError("grid endpoints must equal t_min/t_max")
        scale = max(abs(self.t_min), abs(self.t_max), 1.0)
        if np.max(np.abs(steps - h)) > 1e-12 * scale:
            raise ConfigurationError("grid spacing is not uniform")
        object.__setattr__(self, "points", _freeze(pts))

    @classmethod
    def regular(cls, p: int, t_min: float = 0.0, t_max: float = 1.0) -> "Grid":
        return cls(p=p, t_min=float(t_min), t_max=float(t_max),
                   points=np.linspace(t_min, t_max, p))

    @property
    def spacing(self) -> float:
        return (self.t_max - self.t_min) / (self.p - 1)


@dataclass(frozen=True, eq=False)
class Sample:
    """One subject's measurements at a set of 1-based grid indices.

    Indices must be strictly increasing and need not be contiguous:
    gaps inside a subject's observation window are allowed.
    """

    subject_id: str
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=float)
        if idx.ndim != 1 or idx.size == 0:
            raise ConfigurationError(f"sample {self.subject_id!r}: indices must be non-empty")
        if val.shape != idx.shape:
            raise ConfigurationError(f"sample {self.subject_id!r}: values/indices length mismatch")
        if np.any(np.diff(idx) <= 0):
            raise ConfigurationError(f"sample {self.subject_id!r}: indices must be strictly increasing")
        if idx[0] < 1:
            raise ConfigurationError(f"sample {self.subject_id!r}: indices must be >= 1")
        if not np.all(np.isfinite(val)):
            raise ConfigurationError(f"sample {self.subject_id!r}: values must be finite")
        object.__setattr__(self, "indices", _freeze(idx))
        object.__setattr__(self, "values", _freeze(val))

    @property
    def window_span(self) -> int:
        """Width of the covering window, ``max(indices) - min(indices) + 1``."""
        return int(self.indices[-1] - self.indices[0] + 1)


@dataclass(frozen=True)
class ObservationSet:
    """A collection of partially observed trajectories on a common grid."""

    grid: Grid
    samples: Tuple[Sample, ...]

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if len(self.samples) < 1:
            raise ConfigurationError("observation set needs at least one sample")

    @property
    def n(self) -> int:
        return len(self.samples)

    @property
    def max_window_span(self) -> int:
        """Largest observed window width, the paper-style bandwidth d."""
        return max(s.window_span for s in self.samples)

    def subject_ids(self) -> list[str]:
        return [s.subject_id for s in self.samples]


@dataclass(frozen=True)
class CvConfig:
    """Random sub-sampling cross-validation settings for rank selection."""

    folds: int = 5
    n_splits: int = 5
    min_pair_count: int = 5
    rank_candidates: Optional[Tuple[int, ...]] = None
    seed: int = 0

    def __post_init__(self):
        if self.folds < 2:
            raise ConfigurationError("cv folds must be >= 2")
        if self.n_splits < 1:
            raise ConfigurationError("cv n_splits must be >= 1")
        if self.min_pair_count < 1:
            raise ConfigurationError("cv min_pair_count must be >= 1")
        if self.rank_candidates is not None:
            cand = tuple(int(r) for r in self.rank_candidates)
            if len(cand) == 0:
                raise ConfigurationError("cv rank_candidates must be non-empty when given")
            object.__setattr__(self, "rank_candidates", cand)


@dataclass(frozen=True)
class EstimatorConfig:
    """Pipeline parameters: band width ``band``, shift ``increment``, rank.

    ``rank=None`` requests cross-validated rank selection using ``cv``.
    """

    band: int
    increment: int
    rank: Optional[int] = None
    patch_mode: str = "complete"
    cv: CvConfig = field(default_factory=CvConfig)

    def __post_init__(self):
        if self.patch_mode not in ("complete", "pairwise"):
            raise ConfigurationError(f"unknown patch_mode {self.patch_mode!r}")
        if self.rank is not None and self.rank < 1:
            raise ConfigurationError("rank must be a positive integer or None")


def validate(obs: ObservationSet, cfg: EstimatorConfig) -> list[str]:
    """Collect constraint violations for an estimation run.

    Returns a (possibly empty) list of human-readable violations; an empty
    list means the inputs are valid. Pure: never raises on bad input.
    """
    report: list[str] = []
    p = obs.grid.p
    b, a, r = cfg.band, cfg.increment, cfg.rank

    if b < 1 or b > p:
        report.append(f"band b={b} outside 1..p={p}")
    if a < 1:
        report.append(f"increment a={a} must be >= 1")
    if a > b:
        report.append(f"increment a={a} exceeds band b={b}")
    if r is not None:
        if a > b - r:
            report.append(f"a <= b - r violated: a={a}, b={b}, r={r}")
        if b < r + 1:
            report.append(f"b >= r + 1 violated: b={b}, r={r}")
    else:
        cand = cfg.cv.rank_candidates
        if cand is not None and max(cand) > b - a:
            report.append(f"rank candidates exceed b - a = {b - a}")
        if obs.n < cfg.cv.folds:
            report.append(f"n={obs.n} smaller than cv folds K={cfg.cv.folds}")

    for s in obs.samples:
        if s.indices[-1] > p:
            report.append(f"sample {s.subject_id!r}: index {int(s.indices[-1])} out of range 1..{p}")
    return report


def to_dense(obs: ObservationSet) -> tuple[np.ndarray, np.ndarray]:
    """Lay out an observation set as dense ``(values, observed)`` arrays.

    ``values`` is n-by-p with NaN at unobserved cells, ``observed`` the
    matching boolean mask. This is where 1-based indices become 0-based.
    """
    n, p = obs.n, obs.grid.p
    values = np.full((n, p), np.nan)
    observed = np.zeros((n, p), dtype=bool)
    for k, s in enumerate(obs.samples):
        cols = s.indices - 1
        values[k, cols] = s.values
        observed[k, cols] = True
    return values, observed
