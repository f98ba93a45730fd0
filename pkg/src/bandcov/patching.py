"""Overlapping patch construction and per-patch covariance estimation.

A patch is a contiguous block of ``band`` grid indices; consecutive patches
shift by ``increment`` and therefore overlap in ``band - increment`` indices.
Each patch covariance is estimated either from the subjects that observe the
whole patch (complete mode) or entry-by-entry from whichever subjects observe
each index pair (pairwise mode, for data with within-window gaps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

from .domain import (
    ConfigurationError,
    InsufficientDataError,
    ObservationSet,
    to_dense,
)

__all__ = [
    "PatchPlan",
    "PatchCovariance",
    "build_patch_plan",
    "complete_cohort",
    "patch_cov_complete",
    "patch_cov_pairwise",
    "patch_covariances",
]


@dataclass(frozen=True, eq=False)
class PatchPlan:
    """The ladder of overlapping index windows covering ``{1..p}``."""

    p: int
    band: int
    increment: int
    windows: Tuple[np.ndarray, ...]

    @property
    def l_max(self) -> int:
        return len(self.windows)

    def overlap(self, l: int) -> np.ndarray:
        """1-based indices shared by windows ``l`` and ``l + 1`` (1-based ``l``)."""
        return np.intersect1d(self.windows[l - 1], self.windows[l])


@dataclass(frozen=True, eq=False)
class PatchCovariance:
    """Estimated covariance block for one patch.

    ``n_effective`` is the cohort size in complete mode and the smallest
    per-pair subject count in pairwise mode; it is the quantity whose minimum
    over patches drives the estimator's accuracy.
    """

    index: int
    window: np.ndarray
    matrix: np.ndarray
    n_effective: int
    mode: str

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        k = len(self.window)
        if m.shape != (k, k):
            raise ConfigurationError(f"patch {self.index}: matrix shape {m.shape} != ({k}, {k})")
        scale = max(float(np.max(np.abs(m))), 1.0)
        if np.max(np.abs(m - m.T)) > 1e-12 * scale:
            raise ConfigurationError(f"patch {self.index}: matrix is not symmetric")


def build_patch_plan(p: int, band: int, increment: int) -> PatchPlan:
    """Construct windows ``{(l-1)a+1, ..., min((l-1)a+b, p)}`` for ``l = 1..l_max``.

    ``l_max = 1 + ceil((p - b) / a)``; every window except possibly the last
    holds exactly ``band`` indices, and the union covers ``{1..p}``.
    """
    b, a = band, increment
    if not (1 <= a <= b <= p):
        raise ConfigurationError(f"need 1 <= a <= b <= p, got a={a}, b={b}, p={p}")
    l_max = 1 + math.ceil((p - b) / a)
    windows = []
    for l in range(1, l_max + 1):
        start = (l - 1) * a + 1
        stop = min((l - 1) * a + b, p)
        w = np.arange(start, stop + 1, dtype=np.int64)
        w.flags.writeable = False
        windows.append(w)
    return PatchPlan(p=p, band=b, increment=a, windows=tuple(windows))


def _window_cols(window: Iterable[int], p: int) -> np.ndarray:
    cols = np.asarray(list(window), dtype=np.int64)
    cols = np.unique(cols)
    if cols.size == 0:
        raise ConfigurationError("patch window is empty")
    if cols[0] < 1 or cols[-1] > p:
        raise ConfigurationError(f"patch window {cols[0]}..{cols[-1]} outside 1..{p}")
    return cols - 1


def complete_cohort(obs: ObservationSet, window: Iterable[int]) -> list[str]:
    """Subjects observing every index of ``window`` (1-based), in input order."""
    cols = _window_cols(window, obs.grid.p)
    _, observed = to_dense(obs)
    keep = observed[:, cols].all(axis=1)
    return [s.subject_id for s, k in zip(obs.samples, keep) if k]


def _cov_complete(values: np.ndarray, observed: np.ndarray,
                  cols: np.ndarray, patch_no: int) -> tuple[np.ndarray, int]:
    keep = observed[:, cols].all(axis=1)
    n_eff = int(keep.sum())
    if n_eff < 2:
        raise InsufficientDataError(
            f"patch {patch_no}: complete cohort has {n_eff} subject(s), need >= 2",
            patch=patch_no)
    x = values[keep][:, cols]
    z = x - x.mean(axis=0)
    m = (z.T @ z) / n_eff
    return (m + m.T) / 2.0, n_eff


def _cov_pairwise(values: np.ndarray, observed: np.ndarray,
                  cols: np.ndarray, patch_no: int) -> tuple[np.ndarray, int]:
    # Centering uses per-index means over *all* observers of each index,
    # not pair-specific means; the divisor is the per-pair joint count.
    obs_w = observed[:, cols]
    counts = obs_w.T.astype(np.int64) @ obs_w.astype(np.int64)
    if counts.min() < 2:
        i, j = np.argwhere(counts < 2)[0]
        raise InsufficientDataError(
            f"patch {patch_no}: index pair ({int(cols[i]) + 1}, {int(cols[j]) + 1}) "
            f"observed jointly by {int(counts[i, j])} subject(s), need >= 2",
            patch=patch_no, pair=(int(cols[i]) + 1, int(cols[j]) + 1))
    col_counts = observed.sum(axis=0)[cols]
    col_means = np.nansum(values[:, cols], axis=0) / col_counts
    d = np.where(obs_w, values[:, cols] - col_means, 0.0)
    m = (d.T @ d) / counts
    return (m + m.T) / 2.0, int(counts.min())


def patch_cov_complete(obs: ObservationSet, window: Iterable[int],
                       index: int = 1) -> PatchCovariance:
    """Sample covariance over the complete cohort of ``window``, divisor ``n``."""
    cols = _window_cols(window, obs.grid.p)
    values, observed = to_dense(obs)
    m, n_eff = _cov_complete(values, observed, cols, index)
    return PatchCovariance(index=index, window=cols + 1, matrix=m,
                           n_effective=n_eff, mode="complete")


def patch_cov_pairwise(obs: ObservationSet, window: Iterable[int],
                       index: int = 1) -> PatchCovariance:
    """Entrywise covariance using all subjects that observe each index pair."""
    cols = _window_cols(window, obs.grid.p)
    values, observed = to_dense(obs)
    m, n_eff = _cov_pairwise(values, observed, cols, index)
    return PatchCovariance(index=index, window=cols + 1, matrix=m,
                           n_effective=n_eff, mode="pairwise")


def patch_covariances(obs: ObservationSet, plan: PatchPlan,
                      mode: str = "complete") -> list[PatchCovariance]:
    """Estimate every patch covariance of ``plan`` from one dense pass."""
    if mode not in ("complete", "pairwise"):
        raise ConfigurationError(f"unknown patch mode {mode!r}")
    values, observed = to_dense(obs)
    return covariances_from_dense(values, observed, plan, mode)


def covariances_from_dense(values: np.ndarray, observed: np.ndarray,
                           plan: PatchPlan, mode: str) -> list[PatchCovariance]:
    """Same as :func:`patch_covariances`, reusing prebuilt dense arrays."""
    kernel = _cov_complete if mode == "complete" else _cov_pairwise
    out = []
    for l, w in enumerate(plan.windows, start=1):
        m, n_eff = kernel(values, observed, w - 1, l)
        out.append(PatchCovariance(index=l, window=w, matrix=m,
                                   n_effective=n_eff, mode=mode))
    return out
