"""Factor aggregation, full-grid covariance assembly, and the pipeline.

Rotated patch factors are framed back to full grid scale, rows covered by
several patches are averaged with equal weights, and the final covariance is
the Gram product of the aggregated factor, which makes it positive
semidefinite by construction. A bilinear interpolation view extends the
matrix to a continuous surface between grid points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .align import RotationChain, chain_rotations
from .domain import (
    ConfigurationError,
    EstimatorConfig,
    Grid,
    ObservationSet,
    to_dense,
    validate,
)
from .factorize import PatchFactor, extract_factor
from .patching import PatchCovariance, PatchPlan, build_patch_plan, covariances_from_dense

__all__ = [
    "CovarianceEstimate",
    "aggregate_factors",
    "covariance_from_factor",
    "interpolate_surface",
    "estimate_from_patch_covariances",
    "estimate_covariance",
]


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    """Result of one estimation run.

    ``matrix`` is exactly ``factor @ factor.T`` (symmetrized), so it is
    positive semidefinite with rank at most ``rank``. ``frame_counts[i]`` is
    the number of patches covering grid index ``i + 1``, i.e. the averaging
    weight used for that row of the factor.
    """

    grid: Grid
    factor: np.ndarray
    matrix: np.ndarray
    rank: int
    frame_counts: np.ndarray
    config: Optional[EstimatorConfig] = None
    patch_noise: Tuple[float, ...] = ()
    patch_counts: Tuple[int, ...] = ()
    cv_result: Optional[object] = None


def aggregate_factors(factors: Sequence[PatchFactor], chain: RotationChain,
                      plan: PatchPlan) -> np.ndarray:
    """Average the rotated patch factors row-wise into one p-by-r factor.

    Each grid index takes the plain average, over all patches containing it,
    of the corresponding row of the rotated patch factor.
    """
    if not (len(factors) == len(chain.rotations) == plan.l_max):
        raise ConfigurationError("factors, rotations and plan disagree on patch count")
    r = factors[0].factor.shape[1]
    acc = np.zeros((plan.p, r))
    counts = np.zeros(plan.p, dtype=np.int64)
    for f, rot in zip(factors, chain.rotations):
        rows = f.window - 1
        acc[rows] += f.factor @ rot
        counts[rows] += 1
    return acc / counts[:, None]


def covariance_from_factor(factor: np.ndarray) -> np.ndarray:
    """Gram product of a factor, returned exactly symmetric."""
    a = np.asarray(factor, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("factor contains non-finite entries")
    s = a @ a.T
    return (s + s.T) / 2.0


def frame_counts(plan: PatchPlan) -> np.ndarray:
    """Number of patches covering each grid index (1-based index i at [i-1])."""
    counts = np.zeros(plan.p, dtype=np.int64)
    for w in plan.windows:
        counts[w - 1] += 1
    return counts


def _cell(x: float, grid: Grid) -> tuple[int, float]:
    u = (x - grid.t_min) / grid.spacing
    i = min(max(int(math.floor(u)), 0), grid.p - 2)
    frac = u - i
    # Snap to stored grid points so the surface is exact at the nodes.
    if x == grid.points[i]:
        frac = 0.0
    elif x == grid.points[i + 1]:
        frac = 1.0
    return i, frac


def interpolate_surface(est: CovarianceEstimate, s: float, t: float) -> float:
    """Bilinear interpolation of the covariance matrix at ``(s, t)``.

    Queries outside ``[t_min, t_max]`` raise ``ValueError``; there is no
    extrapolation.
    """
    g = est.grid
    if not (g.t_min <= s <= g.t_max and g.t_min <= t <= g.t_max):
        raise ValueError(f"query ({s}, {t}) outside domain [{g.t_min}, {g.t_max}]")
    i, du = _cell(float(s), g)
    j, dv = _cell(float(t), g)
    m = est.matrix
    return float((1 - du) * (1 - dv) * m[i, j] + du * (1 - dv) * m[i + 1, j]
                 + (1 - du) * dv * m[i, j + 1] + du * dv * m[i + 1, j + 1])


def estimate_from_patch_covariances(patch_covs: Sequence[PatchCovariance],
                                    plan: PatchPlan, grid: Grid, rank: int,
                                    config: Optional[EstimatorConfig] = None,
                                    cv_result: Optional[object] = None) -> CovarianceEstimate:
    """Run factorization, alignment and aggregation on given patch covariances.

    This is the algebraic back half of the pipeline; tests inject exact
    population blocks here to check recovery without sampling noise.
    """
    factors = [extract_factor(pc, rank) for pc in patch_covs]
    chain = chain_rotations(factors, plan)
    a_tilde = aggregate_factors(factors, chain, plan)
    return CovarianceEstimate(
        grid=grid,
        factor=a_tilde,
        matrix=covariance_from_factor(a_tilde),
        rank=rank,
        frame_counts=frame_counts(plan),
        config=config,
        patch_noise=tuple(f.noise_var for f in factors),
        patch_counts=tuple(pc.n_effective for pc in patch_covs),
        cv_result=cv_result,
    )


def estimate_covariance(obs: ObservationSet, cfg: EstimatorConfig) -> CovarianceEstimate:
    """Full pipeline: validate, select rank if requested, patch, and assemble."""
    report = validate(obs, cfg)
    if report:
        raise ConfigurationError("; ".join(report))

    cv_result = None
    rank = cfg.rank
    if rank is None:
        from .rankselect import select_rank  # deferred: rankselect fits via this module
        cv_result = select_rank(obs, cfg)
        rank = cv_result.chosen_rank

    plan = build_patch_plan(obs.grid.p, cfg.band, cfg.increment)
    values, observed = to_dense(obs)
    pcs = covariances_from_dense(values, observed, plan, cfg.patch_mode)
    return estimate_from_patch_covariances(pcs, plan, obs.grid, rank,
                                           config=cfg, cv_result=cv_result)
