"""Synthetic mixed-longitudinal data: latent trajectories observed in bands.

Trajectories are sums of orthonormal modes with independent Gaussian scores
plus white measurement noise, observed only inside per-subject windows laid
out by a design (balanced, boundary-enriched, or extended-domain). Generation
is reproducible: each subject draws from its own stream derived from
``(seed, subject index)``, so parallel and serial generation agree exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import BSpline

from .domain import ConfigurationError, Grid, ObservationSet, Sample

__all__ = [
    "DesignSpec",
    "SimSetting",
    "bspline_basis",
    "make_eigenfunctions",
    "make_design",
    "sample_trajectories",
    "generate",
    "population_covariance",
    "rmse",
    "default_eigenvalues",
    "make_setting",
]

# Fixed mixing weights (over 10 cubic B-splines) defining the three smooth
# modes used by the stock settings: a level mode, a central bump, and a
# sign-changing contrast. Committed constants; changing them changes every
# stock benchmark result.
BSPLINE_MIX_COEFFS = np.array([
    [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
    [0.0, 0.4, 1.2, 2.0, 2.4, 2.4, 2.0, 1.2, 0.4, 0.0],
    [1.8, 1.5, 0.9, 0.3, -0.3, -0.9, -1.3, -1.6, -1.8, -1.9],
])
BSPLINE_MIX_SIZE = 10


@dataclass(frozen=True)
class DesignSpec:
    """Observation-window layout: which band of the grid each subject sees."""

    kind: str
    window: int
    subjects_per_start: int
    boundary_fraction: float = 0.0

    def __post_init__(self):
        if self.kind not in ("balanced", "boundary_enriched", "extended_domain"):
            raise ConfigurationError(f"unknown design kind {self.kind!r}")
        if self.window < 1:
            raise ConfigurationError("window length must be >= 1")
        if self.subjects_per_start < 1:
            raise ConfigurationError("subjects_per_start must be >= 1")
        if not (0.0 <= self.boundary_fraction <= 1.0):
            raise ConfigurationError("boundary_fraction must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class SimSetting:
    """Everything needed to generate one synthetic dataset."""

    p: int
    eigenvalues: Tuple[float, ...]
    design: DesignSpec
    basis: str = "bspline_mix"
    noise_sd: float = 1.0
    seed: int = 0
    custom_modes: Optional[np.ndarray] = None

    def __post_init__(self):
        ev = tuple(float(v) for v in self.eigenvalues)
        if len(ev) == 0 or any(v <= 0 for v in ev):
            raise ConfigurationError("eigenvalues must be positive")
        if any(ev[i] < ev[i + 1] for i in range(len(ev) - 1)):
            raise ConfigurationError("eigenvalues must be non-increasing")
        if self.basis not in ("bspline_mix", "sine", "custom"):
            raise ConfigurationError(f"unknown basis {self.basis!r}")
        if self.basis == "custom" and self.custom_modes is None:
            raise ConfigurationError("custom basis requires custom_modes")
        if self.noise_sd < 0:
            raise ConfigurationError("noise_sd must be non-negative")
        object.__setattr__(self, "eigenvalues", ev)

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)


def bspline_basis(n_basis: int, t) -> np.ndarray:
    """Cubic B-spline basis on [0, 1] with clamped, equally spaced knots.

    Returns the ``n_basis`` basis values at ``t`` (shape ``(n_basis,)`` for a
    scalar, ``(len(t), n_basis)`` for an array). Values are nonnegative and
    sum to one.
    """
    if n_basis < 4:
        raise ConfigurationError("cubic B-spline basis needs at least 4 functions")
    pts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(pts < 0.0) or np.any(pts > 1.0):
        raise ValueError("B-spline evaluation points must lie in [0, 1]")
    degree = 3
    interior = np.linspace(0.0, 1.0, n_basis - degree + 1)[1:-1]
    knots = np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])
    design = BSpline.design_matrix(pts, knots, degree).toarray()
    return design[0] if np.ndim(t) == 0 else design


def _orthonormalize_rows(rows: np.ndarray) -> np.ndarray:
    """Gram-Schmidt under the discrete inner product ``mean(f * g)``."""
    out: list[np.ndarray] = []
    for v in rows:
        w = np.asarray(v, dtype=float).copy()
        for _ in range(2):
            for u in out:
                w = w - np.mean(w * u) * u
        nrm = np.sqrt(np.mean(w * w))
        if nrm < 1e-10:
            raise ConfigurationError("modes are linearly dependent on this grid")
        out.append(w / nrm)
    return np.array(out)


def make_eigenfunctions(setting: SimSetting, grid: Grid) -> np.ndarray:
    """Mode functions evaluated on the grid, rows orthonormal in ``mean(f*g)``.

    ``bspline_mix`` uses the three committed spline mixes for modes 1-3 and
    ``sqrt(2) sin(k pi t)`` for modes 4 and up; ``sine`` uses the sine family
    throughout; ``custom`` orthonormalizes caller-supplied rows.
    """
    if not (grid.t_min == 0.0 and grid.t_max == 1.0):
        raise ConfigurationError("mode construction expects a grid on [0, 1]")
    k_total = setting.n_modes
    t = grid.points
    if setting.basis == "custom":
        raw = np.asarray(setting.custom_modes, dtype=float)
        if raw.shape != (k_total, grid.p):
            raise ConfigurationError(
                f"custom_modes shape {raw.shape} != ({k_total}, {grid.p})")
    else:
        rows = []
        for k in range(1, k_total + 1):
            if setting.basis == "bspline_mix" and k <= BSPLINE_MIX_COEFFS.shape[0]:
                basis = bspline_basis(BSPLINE_MIX_SIZE, t)
                rows.append(basis @ BSPLINE_MIX_COEFFS[k - 1])
            else:
                rows.append(np.sqrt(2.0) * np.sin(k * np.pi * t))
        raw = np.array(rows)
    return _orthonormalize_rows(raw)


def make_design(spec: DesignSpec, p: int,
                rng: Optional[np.random.Generator] = None) -> list[np.ndarray]:
    """Materialize the list of per-subject observation windows (1-based).

    Balanced designs assign every possible window start to the same number
    of subjects; boundary-enriched adds extra subjects at the two extreme
    windows (odd remainder to the left); extended-domain draws starts
    uniformly from ``{2-d, ..., p}`` and clips windows to the grid, which
    can leave windows as short as one point.
    """
    d = spec.window
    if d > p:
        raise ConfigurationError(f"window length {d} exceeds grid size {p}")
    n_starts = p - d + 1
    base = [np.arange(w, w + d, dtype=np.int64)
            for w in range(1, n_starts + 1)
            for _ in range(spec.subjects_per_start)]

    if spec.kind == "balanced":
        return base

    if spec.kind == "boundary_enriched":
        n_extra = int(np.ceil(spec.boundary_fraction * len(base)))
        left = (n_extra + 1) // 2
        right = n_extra // 2
        extras = [np.arange(1, d + 1, dtype=np.int64) for _ in range(left)]
        extras += [np.arange(p - d + 1, p + 1, dtype=np.int64) for _ in range(right)]
        return base + extras

    if rng is None:
        raise ConfigurationError("extended_domain design needs a random generator")
    starts = rng.integers(2 - d, p + 1, size=len(base))
    return [np.arange(max(w, 1), min(w + d - 1, p) + 1, dtype=np.int64)
            for w in starts]


def sample_trajectories(setting: SimSetting, grid: Grid,
                        design: Sequence[np.ndarray]) -> ObservationSet:
    """Draw one dataset: scores, then noise, per subject, from keyed streams."""
    modes = make_eigenfunctions(setting, grid)
    scale = np.sqrt(np.asarray(setting.eigenvalues))
    samples = []
    for i, window in enumerate(design):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=setting.seed, spawn_key=(1, i)))
        scores = rng.standard_normal(setting.n_modes) * scale
        noise = rng.standard_normal(window.size) * setting.noise_sd
        values = scores @ modes[:, window - 1] + noise
        samples.append(Sample(subject_id=f"s{i + 1:05d}", indices=window, values=values))
    return ObservationSet(grid=grid, samples=tuple(samples))


def generate(setting: SimSetting) -> ObservationSet:
    """Dataset for a setting: design draw (stream 0) then subject draws."""
    grid = Grid.regular(setting.p, 0.0, 1.0)
    design_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=setting.seed, spawn_key=(0,)))
    design = make_design(setting.design, setting.p, design_rng)
    return sample_trajectories(setting, grid, design)


def population_covariance(setting: SimSetting, grid: Grid) -> np.ndarray:
    """True covariance of the latent process on the grid (noise excluded)."""
    modes = make_eigenfunctions(setting, grid)
    lam = np.asarray(setting.eigenvalues)
    s = (modes.T * lam) @ modes
    return (s + s.T) / 2.0


def rmse(est: np.ndarray, truth: np.ndarray) -> float:
    """Relative Frobenius error ``||est - truth||_F / ||truth||_F``."""
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {truth.shape}")
    denom = np.linalg.norm(truth)
    if denom == 0.0:
        raise ValueError("reference matrix has zero norm")
    return float(np.linalg.norm(est - truth) / denom)


def default_eigenvalues(n_modes: int) -> Tuple[float, ...]:
    """Stock score-variance spectrum: 16, 4, 1, then halving from 1/2."""
    base = [16.0, 4.0, 1.0]
    tail = [2.0 ** -(k - 3) for k in range(4, n_modes + 1)]
    return tuple((base + tail)[:n_modes])


def make_setting(n_rep: int, window: int = 10, n_modes: int = 3, p: int = 30,
                 noise_sd: float = 1.0, seed: int = 0,
                 design_kind: str = "balanced",
                 boundary_fraction: float = 0.0) -> SimSetting:
    """Stock simulation setting: balanced bands on a p-point grid over [0, 1]."""
    design = DesignSpec(kind=design_kind, window=window,
                        subjects_per_start=n_rep,
                        boundary_fraction=boundary_fraction)
    return SimSetting(p=p, eigenvalues=default_eigenvalues(n_modes),
                      design=design, basis="bspline_mix",
                      noise_sd=noise_sd, seed=seed)
