"""Covariance surface estimation from banded, partially observed trajectories."""

from .align import RotationChain, chain_rotations, solve_wahba
from .assemble import (
    CovarianceEstimate,
    aggregate_factors,
    covariance_from_factor,
    estimate_covariance,
    estimate_from_patch_covariances,
    interpolate_surface,
)
from .domain import (
    BandcovError,
    ConfigurationError,
    CvConfig,
    DataFormatError,
    EstimatorConfig,
    Grid,
    InsufficientDataError,
    ObservationSet,
    Sample,
    to_dense,
    validate,
)
from .factorize import PatchFactor, extract_factor, sym_eig_descending
from .patching import (
    PatchCovariance,
    PatchPlan,
    build_patch_plan,
    complete_cohort,
    patch_cov_complete,
    patch_cov_pairwise,
    patch_covariances,
)
from .rankselect import CvResult, prediction_error, select_rank, split_subjects, test_covariance
from .simgen import (
    DesignSpec,
    SimSetting,
    bspline_basis,
    generate,
    make_design,
    make_eigenfunctions,
    make_setting,
    population_covariance,
    rmse,
    sample_trajectories,
)

__version__ = "0.1.0"
