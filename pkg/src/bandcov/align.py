"""Closed-form orthogonal alignment of patch factors.

A square-root factor is identified only up to right-multiplication by an
orthogonal matrix, so factors from neighboring patches must be rotated into
a common frame before they can be averaged. The alignment on each overlap
is a Wahba / orthogonal Procrustes problem with an SVD solution, and the
rotations are chained sequentially from the first patch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .domain import ConfigurationError
from .factorize import PatchFactor
from .patching import PatchPlan

__all__ = ["RotationChain", "solve_wahba", "chain_rotations"]


@dataclass(frozen=True, eq=False)
class RotationChain:
    """Per-patch alignment rotations plus overlap conditioning diagnostics.

    ``overlap_min_sv[l-1]`` is the smaller r-th singular value of the two
    factor blocks aligned at step ``l``; values near zero flag ill-posed
    alignments (the chain still completes, with the solver's minimizer).
    """

    rotations: Tuple[np.ndarray, ...]
    overlap_min_sv: Tuple[float, ...]


def solve_wahba(target: np.ndarray, source: np.ndarray) -> np.ndarray:
    """Orthogonal matrix minimizing ``||source @ O - target||_F``.

    The minimizer over the full orthogonal group (reflections included) is
    ``U @ Vt`` where ``U S Vt`` is the SVD of ``source.T @ target``. When the
    cross-product is rank deficient the minimizer is not unique and the one
    induced by the SVD is returned.
    """
    target = np.asarray(target, dtype=float)
    source = np.asarray(source, dtype=float)
    if target.shape != source.shape or target.ndim != 2 or target.shape[0] < 1:
        raise ValueError(f"shape mismatch: target {target.shape}, source {source.shape}")
    if not (np.all(np.isfinite(target)) and np.all(np.isfinite(source))):
        raise ValueError("non-finite entries in alignment blocks")
    u, _, vt = np.linalg.svd(source.T @ target)
    return u @ vt


def chain_rotations(factors: Sequence[PatchFactor], plan: PatchPlan) -> RotationChain:
    """Sequentially align each patch factor to its already-rotated predecessor.

    The first rotation is the identity. For each following patch, the rows
    both patches share (their window intersection) are extracted from each
    factor; the predecessor's rows are rotated by its own chain rotation and
    the new patch's rotation is the Wahba solution aligning to them.
    """
    if len(factors) != plan.l_max:
        raise ConfigurationError(f"got {len(factors)} factors for {plan.l_max} patches")
    r = factors[0].factor.shape[1]
    rotations = [np.eye(r)]
    min_svs = []
    for l in range(1, plan.l_max):
        shared = plan.overlap(l)
        if shared.size < 1:
            raise ConfigurationError(f"patches {l} and {l + 1} do not overlap")
        prev, curr = factors[l - 1], factors[l]
        rows_prev = prev.factor[np.searchsorted(prev.window, shared)]
        rows_curr = curr.factor[np.searchsorted(curr.window, shared)]
        target = rows_prev @ rotations[l - 1]
        rotations.append(solve_wahba(target, rows_curr))
        min_svs.append(min(_rth_sv(rows_prev, r), _rth_sv(rows_curr, r)))
    return RotationChain(rotations=tuple(rotations), overlap_min_sv=tuple(min_svs))


def _rth_sv(block: np.ndarray, r: int) -> float:
    sv = np.linalg.svd(block, compute_uv=False)
    return float(sv[r - 1]) if sv.size >= r else 0.0
