"""Householder-aligned two-sample permutation test for the dispersion of unit-vector clouds."""

__version__ = "0.1.0"

from .dispersion import (
    DispersionStats,
    breadth,
    describe,
    kappa_from_mrl,
    log_breadth,
    mrl,
    test_statistic,
)
from .errors import (
    BadHeader,
    BreadthError,
    DegenerateBreadth,
    DegenerateMean,
    DimensionMismatch,
    EquivalenceFailure,
    InputError,
    MixedShapes,
    TruncatedPayload,
    ZeroVector,
)
from .geometry import (
    HouseholderAlignment,
    align_to,
    apply_alignment,
    build_alignment,
    mean_direction,
    normalize_rows,
)
from .permutation import (
    TestConfig,
    TestResult,
    engine_run,
    generate_sign_block,
    naive_test,
    p_value,
    pool,
    run_batch,
    run_pair,
    subsample,
)
from .synthetic import (
    CalibrationReport,
    VmfSpec,
    power_experiment,
    sample_vmf,
    split_half_check,
    type1_experiment,
)
