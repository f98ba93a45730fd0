"""Random sub-sampling cross-validation for the truncation rank.

Subjects are split into training and testing groups several times; for each
candidate rank the pipeline is fit on the training group and scored against a
thresholded pairwise test covariance. Prediction-error sums use exactly
rounded accumulation (``math.fsum``) so independent re-evaluations of the
same cells reproduce them bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .align import chain_rotations
from .assemble import aggregate_factors, covariance_from_factor
from .domain import (
    BandcovError,
    ConfigurationError,
    EstimatorConfig,
    InsufficientDataError,
    ObservationSet,
    to_dense,
)
from .factorize import PatchFactor, factor_from_eig, sym_eig_descending
from .patching import build_patch_plan, covariances_from_dense

__all__ = [
    "CvResult",
    "split_subjects",
    "test_covariance",
    "prediction_error",
    "select_rank",
]


@dataclass(frozen=True)
class CvResult:
    """Cross-validation error profile and the selected rank.

    ``errors[r]`` is the prediction error summed over splits (infinite when
    any split failed for that rank); ``pairs_evaluated[t-1]`` counts matrix
    cells that passed the pair-count threshold in split ``t``; ``failures``
    lists the ``(split, rank)`` cells whose fit raised.
    """

    errors: Dict[int, float]
    chosen_rank: int
    splits_used: int
    pairs_evaluated: Tuple[int, ...]
    failures: Tuple[Tuple[int, int], ...] = ()


def _split_positions(n: int, folds: int, seed) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_test = n // folds
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def split_subjects(obs: ObservationSet, folds: int, seed) -> tuple[list[str], list[str]]:
    """One random train/test partition with test share roughly ``1/folds``."""
    if obs.n < folds:
        raise ConfigurationError(f"cannot split n={obs.n} subjects into {folds} folds")
    train_pos, test_pos = _split_positions(obs.n, folds, seed)
    ids = obs.subject_ids()
    return [ids[i] for i in train_pos], [ids[i] for i in test_pos]


def _test_cov_dense(values: np.ndarray, observed: np.ndarray, min_pair_count: int) -> np.ndarray:
    """Thresholded pairwise covariance of the test rows; NaN marks masked cells.

    Each kept entry is the plain pairwise covariance over the subjects
    observing both indices (pair-specific means, divisor = pair count).
    Sums are fsum-exact so the naive per-cell formula reproduces entries
    bit for bit.
    """
    p = values.shape[1]
    obs_f = observed.astype(float)
    counts = obs_f.T @ obs_f
    out = np.full((p, p), np.nan)
    for i in range(p):
        for j in range(i, p):
            c = counts[i, j]
            if c < min_pair_count:
                continue
            joint = observed[:, i] & observed[:, j]
            xi = values[joint, i]
            xj = values[joint, j]
            mi = math.fsum(xi) / c
            mj = math.fsum(xj) / c
            cov = math.fsum((xi - mi) * (xj - mj)) / c
            out[i, j] = cov
            out[j, i] = cov
    return out


def test_covariance(test_obs: ObservationSet, min_pair_count: int) -> np.ndarray:
    """Pairwise test covariance with cells under the count threshold set to NaN."""
    values, observed = to_dense(test_obs)
    return _test_cov_dense(values, observed, min_pair_count)


def prediction_error(est: np.ndarray, test: np.ndarray) -> float:
    """Sum of squared differences over the unmasked (non-NaN) test cells."""
    est = np.asarray(est, dtype=float)
    test = np.asarray(test, dtype=float)
    if est.shape != test.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {test.shape}")
    mask = ~np.isnan(test)
    d = est[mask] - test[mask]
    return math.fsum(d * d)


def select_rank(obs: ObservationSet, cfg: EstimatorConfig) -> CvResult:
    """Choose the rank minimizing cross-validated prediction error.

    Candidate ranks default to ``1..band-increment``. A fit that fails on
    some split poisons that rank's error with infinity but the search
    continues; ties between finite errors go to the smaller rank.
    """
    cv = cfg.cv
    b, a = cfg.band, cfg.increment
    if b - a < 1:
        raise ConfigurationError(f"no rank candidates available with b={b}, a={a}")
    candidates = cv.rank_candidates or tuple(range(1, b - a + 1))
    if max(candidates) > b - a:
        raise ConfigurationError(f"rank candidates exceed b - a = {b - a}")
    if obs.n < cv.folds:
        raise ConfigurationError(f"n={obs.n} smaller than cv folds K={cv.folds}")

    plan = build_patch_plan(obs.grid.p, b, a)
    values, observed = to_dense(obs)

    errors = {r: 0.0 for r in candidates}
    failures: list[Tuple[int, int]] = []
    pairs_evaluated: list[int] = []

    for t in range(1, cv.n_splits + 1):
        seed_t = np.random.SeedSequence(entropy=(cv.seed, t))
        train_pos, test_pos = _split_positions(obs.n, cv.folds, seed_t)
        test_cov = _test_cov_dense(values[test_pos], observed[test_pos], cv.min_pair_count)
        pairs_evaluated.append(int((~np.isnan(test_cov)).sum()))

        eigs = None
        pcs = None
        try:
            pcs = covariances_from_dense(values[train_pos], observed[train_pos],
                                         plan, cfg.patch_mode)
            eigs = [sym_eig_descending(pc.matrix) for pc in pcs]
        except (BandcovError, np.linalg.LinAlgError):
            for r in candidates:
                errors[r] = math.inf
                failures.append((t, r))
            continue

        for r in candidates:
            try:
                factors = []
                for pc, (u, d) in zip(pcs, eigs):
                    fac, noise = factor_from_eig(u, d, r)
                    factors.append(PatchFactor(index=pc.index, window=pc.window,
                                               factor=fac, noise_var=noise,
                                               eigenvalues=d))
                chain = chain_rotations(factors, plan)
                est = covariance_from_factor(aggregate_factors(factors, chain, plan))
                errors[r] += prediction_error(est, test_cov)
            except (BandcovError, np.linalg.LinAlgError):
                errors[r] = math.inf
                failures.append((t, r))

    chosen = None
    for r in candidates:
        if math.isfinite(errors[r]) and (chosen is None or errors[r] < errors[chosen]):
            chosen = r
    if chosen is None:
        raise InsufficientDataError("cross-validation failed for every candidate rank")

    return CvResult(errors=errors, chosen_rank=chosen, splits_used=cv.n_splits,
                    pairs_evaluated=tuple(pairs_evaluated), failures=tuple(failures))
