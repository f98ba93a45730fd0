"""Independent brute-force reference implementations used only by tests.

Everything here restates the target formulas in the most literal way
possible (explicit loops, grid search) so agreement with the production
code is evidence, not tautology.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np


# ---------------------------------------------------------------------------
# rotation grid / Procrustes search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RotationGrid:
    """Finite cover of the 1-D or 2-D orthogonal group for grid search."""

    r: int
    elements: Tuple[np.ndarray, ...]

    @classmethod
    def build(cls, r: int, steps: int = 3600) -> "RotationGrid":
        if r == 1:
            els = (np.array([[1.0]]), np.array([[-1.0]]))
        elif r == 2:
            els = []
            for j in range(steps):
                th = 2.0 * math.pi * j / steps
                rot = np.array([[math.cos(th), -math.sin(th)],
                                [math.sin(th), math.cos(th)]])
                els.append(rot)
                els.append(rot @ np.diag([1.0, -1.0]))
            els = tuple(els)
        else:
            raise ValueError("rotation grid supports r in {1, 2} only")
        return cls(r=r, elements=els)


def brute_force_procrustes(target: np.ndarray, source: np.ndarray,
                           grid: RotationGrid) -> tuple[np.ndarray, float]:
    """Minimize ``||source @ O - target||_F`` over the finite rotation grid."""
    best_o, best_val = None, math.inf
    for o in grid.elements:
        val = np.linalg.norm(source @ o - target)
        if val < best_val:
            best_o, best_val = o, val
    return best_o, best_val


def grid_resolution_bound(source: np.ndarray, steps: int = 3600) -> float:
    """Worst-case excess of the grid minimum over the true optimum."""
    return float(np.linalg.norm(source) * math.pi / steps)


# ---------------------------------------------------------------------------
# direct formula re-evaluations
# ---------------------------------------------------------------------------

def population_covariance_direct(eigenvalues, modes: np.ndarray) -> np.ndarray:
    """Entry-by-entry sum of lambda_k * phi_k(t_i) * phi_k(t_j)."""
    k_total, p = modes.shape
    out = np.zeros((p, p))
    for i in range(p):
        for j in range(p):
            acc = 0.0
            for k in range(k_total):
                acc += eigenvalues[k] * modes[k, i] * modes[k, j]
            out[i, j] = acc
    return out


def patch_cov_complete_direct(samples: List[tuple[np.ndarray, np.ndarray]],
                              window: np.ndarray) -> np.ndarray:
    """Literal cohort covariance: subjects observing all of ``window`` (1-based)."""
    window = np.asarray(window)
    cohort = []
    for indices, values in samples:
        lookup = dict(zip(indices.tolist(), values.tolist()))
        if all(int(i) in lookup for i in window):
            cohort.append(np.array([lookup[int(i)] for i in window]))
    n = len(cohort)
    if n < 2:
        raise ValueError("cohort smaller than 2")
    mean = sum(cohort) / n
    m = len(window)
    out = np.zeros((m, m))
    for x in cohort:
        d = x - mean
        out += np.outer(d, d)
    return out / n


def patch_cov_pairwise_direct(samples: List[tuple[np.ndarray, np.ndarray]],
                              window: np.ndarray) -> np.ndarray:
    """Literal pairwise formula: per-index means over all observers of the index."""
    window = np.asarray(window)
    lookups = [dict(zip(ind.tolist(), val.tolist())) for ind, val in samples]
    means = {}
    for i in window:
        obs = [lk[int(i)] for lk in lookups if int(i) in lk]
        means[int(i)] = sum(obs) / len(obs)
    m = len(window)
    out = np.zeros((m, m))
    for ii, gi in enumerate(window):
        for jj, gj in enumerate(window):
            num, cnt = 0.0, 0
            for lk in lookups:
                if int(gi) in lk and int(gj) in lk:
                    num += (lk[int(gi)] - means[int(gi)]) * (lk[int(gj)] - means[int(gj)])
                    cnt += 1
            if cnt < 2:
                raise ValueError(f"pair ({gi}, {gj}) observed by {cnt} subjects")
            out[ii, jj] = num / cnt
    return out


def test_covariance_direct(samples: List[tuple[np.ndarray, np.ndarray]],
                           p: int, min_pair_count: int) -> np.ndarray:
    """Cell-by-cell thresholded pairwise covariance with pair-specific means.

    Matches the production arithmetic bit for bit: exact (fsum) sums, one
    division per mean, centered products.
    """
    lookups = [dict(zip(ind.tolist(), val.tolist())) for ind, val in samples]
    out = np.full((p, p), np.nan)
    for i in range(1, p + 1):
        for j in range(1, p + 1):
            xs, ys = [], []
            for lk in lookups:
                if i in lk and j in lk:
                    xs.append(lk[i])
                    ys.append(lk[j])
            c = float(len(xs))
            if c < min_pair_count:
                continue
            mi = math.fsum(xs) / c
            mj = math.fsum(ys) / c
            out[i - 1, j - 1] = math.fsum((x - mi) * (y - mj) for x, y in zip(xs, ys)) / c
    return out


def direct_E_r(est: np.ndarray, test_obs, min_pair_count: int) -> float:
    """Naive double-loop re-evaluation of the cross-validation error."""
    samples = [(s.indices, s.values) for s in test_obs.samples]
    test = test_covariance_direct(samples, test_obs.grid.p, min_pair_count)
    return prediction_error_direct(est, test)


def prediction_error_direct(est: np.ndarray, test: np.ndarray) -> float:
    terms = []
    p, q = test.shape
    for i in range(p):
        for j in range(q):
            if not math.isnan(test[i, j]):
                d = est[i, j] - test[i, j]
                terms.append(d * d)
    return math.fsum(terms)


# ---------------------------------------------------------------------------
# Cox-de Boor recursion
# ---------------------------------------------------------------------------

def bspline_basis_direct(n_basis: int, t: float) -> np.ndarray:
    """Cubic basis values at scalar ``t`` by the raw Cox-de Boor recursion."""
    degree = 3
    interior = np.linspace(0.0, 1.0, n_basis - degree + 1)[1:-1]
    knots = np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])

    def b(i: int, k: int, x: float) -> float:
        if k == 0:
            # half-open cells, except the last one which is closed at 1
            if knots[i] <= x < knots[i + 1]:
                return 1.0
            if x == 1.0 and knots[i] < knots[i + 1] == 1.0:
                return 1.0
            return 0.0
        left = 0.0
        if knots[i + k] > knots[i]:
            left = (x - knots[i]) / (knots[i + k] - knots[i]) * b(i, k - 1, x)
        right = 0.0
        if knots[i + k + 1] > knots[i + 1]:
            right = (knots[i + k + 1] - x) / (knots[i + k + 1] - knots[i + 1]) * b(i + 1, k - 1, x)
        return left + right

    return np.array([b(i, degree, float(t)) for i in range(n_basis)])


# ---------------------------------------------------------------------------
# random orthogonal matrices for comparison tests
# ---------------------------------------------------------------------------

def haar_orthogonal(rng: np.random.Generator, r: int, det_sign: int = 0) -> np.ndarray:
    """Haar-distributed orthogonal matrix; ``det_sign`` of +-1 forces a class."""
    z = rng.standard_normal((r, r))
    q, rr = np.linalg.qr(z)
    q = q * np.sign(np.diag(rr))
    if det_sign != 0 and np.sign(np.linalg.det(q)) != det_sign:
        q[:, 0] = -q[:, 0]
    return q
