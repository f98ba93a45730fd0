"""Rank-r factor extraction from patch covariances with noise removal.

Each patch covariance is eigendecomposed; the average of the trailing
eigenvalues estimates the measurement-noise variance, which is subtracted
from the leading eigenvalues (clamped at zero) before taking square roots.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .domain import ConfigurationError
from .patching import PatchCovariance

__all__ = [
    "PatchFactor",
    "sym_eig_descending",
    "factor_from_eig",
    "extract_factor",
]


@dataclass(frozen=True, eq=False)
class PatchFactor:
    """Square-root factor of one denoised, rank-truncated patch covariance."""

    index: int
    window: np.ndarray
    factor: np.ndarray
    noise_var: float
    eigenvalues: np.ndarray


def sym_eig_descending(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues non-increasing.

    The input is symmetrized as ``(S + S.T) / 2`` first. Eigenvector signs
    follow a fixed convention: the entry of largest magnitude in each column
    is positive (ties broken by lowest row index), so repeated runs and
    downstream rotation chains are reproducible.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("matrix contains non-finite entries")
    sym = (s + s.T) / 2.0
    d, u = np.linalg.eigh(sym)
    d = d[::-1].copy()
    u = u[:, ::-1].copy()
    anchor = np.argmax(np.abs(u), axis=0)
    flip = u[anchor, np.arange(u.shape[1])] < 0
    u[:, flip] *= -1.0
    return u, d


def factor_from_eig(u: np.ndarray, d: np.ndarray, rank: int) -> tuple[np.ndarray, float]:
    """Build the denoised rank-``rank`` factor from a descending eigensystem.

    The noise variance is the mean of eigenvalues ``rank+1..m`` clamped below
    at zero; leading eigenvalues that fall under it yield exactly-zero factor
    columns.
    """
    m = d.shape[0]
    if rank >= m:
        raise ConfigurationError(f"rank {rank} must be smaller than block size {m}")
    noise_var = max(float(np.mean(d[rank:])), 0.0)
    scale = np.sqrt(np.maximum(d[:rank] - noise_var, 0.0))
    return u[:, :rank] * scale, noise_var


def extract_factor(pc: PatchCovariance, rank: int) -> PatchFactor:
    """Denoised rank-``rank`` square-root factor of one patch covariance."""
    u, d = sym_eig_descending(pc.matrix)
    factor, noise_var = factor_from_eig(u, d, rank)
    return PatchFactor(index=pc.index, window=pc.window, factor=factor,
                       noise_var=noise_var, eigenvalues=d)
