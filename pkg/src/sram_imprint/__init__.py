"""Simulator and retrieval pipeline for content imprint in SRAM arrays.

Aging an SRAM array while it holds data skews each cell's power-up
tendency toward the complement of the held bit. This package simulates
that process and implements the retrieval side: differential power-up
counting, thresholded per-cell verdicts, majority voting across chips,
and fingerprint-based chip identification.
"""

from .chip import (
    DEFAULT_SIGMA_NOISE,
    DEFAULT_SIGMA_PV,
    STABLE_0,
    STABLE_1,
    UNSTABLE,
    AgingModel,
    ChipSpec,
    ChipState,
    PowerUpDump,
    age_chip,
    classify_stability,
    load_chip,
    new_chip,
    power_up,
    save_chip,
    stable_fraction,
)
from .dataio import (
    BinaryImage,
    RecoveryMetrics,
    TernaryImage,
    calibrate_amplitude,
    compute_metrics,
    load_dump,
    load_pbm,
    load_ternary_pgm,
    save_dump,
    save_pbm,
    save_ternary_pgm,
)
from .enrollment import (
    DEFAULT_FINGERPRINT_BITS,
    DEFAULT_MATCH_THRESHOLD,
    EnrollmentDatabase,
    EnrollmentRecord,
    Fingerprint,
    MatchResult,
    default_window,
    fractional_hamming,
    make_fingerprint,
)
from .recovery import (
    INDETERMINATE,
    AccumulatedState,
    CountDelta,
    accumulate,
    diff,
    hypothesis_array,
    hypothesis_to_ternary,
    majority_vote,
    partial_retrieve,
)

__version__ = "0.1.0"

__all__ = [
    "AccumulatedState",
    "AgingModel",
    "BinaryImage",
    "ChipSpec",
    "ChipState",
    "CountDelta",
    "DEFAULT_FINGERPRINT_BITS",
    "DEFAULT_MATCH_THRESHOLD",
    "DEFAULT_SIGMA_NOISE",
    "DEFAULT_SIGMA_PV",
    "EnrollmentDatabase",
    "EnrollmentRecord",
    "Fingerprint",
    "INDETERMINATE",
    "MatchResult",
    "PowerUpDump",
    "RecoveryMetrics",
    "STABLE_0",
    "STABLE_1",
    "TernaryImage",
    "UNSTABLE",
    "accumulate",
    "age_chip",
    "calibrate_amplitude",
    "classify_stability",
    "compute_metrics",
    "default_window",
    "diff",
    "fractional_hamming",
    "hypothesis_array",
    "hypothesis_to_ternary",
    "load_chip",
    "load_dump",
    "load_pbm",
    "load_ternary_pgm",
    "majority_vote",
    "make_fingerprint",
    "new_chip",
    "partial_retrieve",
    "power_up",
    "save_chip",
    "save_dump",
    "save_pbm",
    "save_ternary_pgm",
    "stable_fraction",
]
