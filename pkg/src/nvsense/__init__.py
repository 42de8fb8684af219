"""Spin-relaxation (T1) biosensing simulator and analysis toolkit.

Simulates the two-branch relaxometry protocol of an optically polarized
spin ensemble whose longitudinal relaxation is shortened by surface-bound
paramagnetic labels, then recovers T1 by nonlinear fitting and turns T1
shifts into analyte amounts via linear calibration.
"""

from .assay import (CalibrationModel, CalibrationPoint, QuantifyResult,
                    ReplicateGroup, average_replicates, detection_limit,
                    fit_calibration, quantify)
from .config import (DETECTOR_DEFAULTS, PHOTOPHYSICS_PRESETS,
                     PROTOCOL_DEFAULTS, SAMPLE_DEFAULTS, ExperimentConfig,
                     load_config)
from .detector import DetectorParams, differential_signal, expected_counts, sample_counts
from .errors import (BootstrapUnstableError, ConfigError, DegeneracyError,
                     DegenerateReadoutError, InconsistencyError,
                     InsufficientDataError, NonConvergenceError, NVSenseError,
                     ParameterError, SchemaError, SequenceError,
                     UnitMismatchError)
from .fitting import (FitResult, OracleGridSpec, OracleResult, bootstrap_t1_err,
                      exp_decay, fit_exponential, initial_guess, oracle_fit)
from .gdnoise import (RelaxationBudget, SurfaceSample, amount_from_t1,
                      effective_t1, gd_relaxation_rate)
from .sequence import (PulseSegment, PulseSequence, SegmentKind, T1Protocol,
                       Trace, build_t1_pair, default_tau_grid, execute, sweep,
                       validate)
from .spin import (GROUND_EQUILIBRIUM, PhotophysicsParams, apply_pi_pulse,
                   build_rate_matrix, fluorescence_integral, fluorescence_rate,
                   propagate, steady_state)

__version__ = "1.0.0"

__all__ = [
    "CalibrationModel", "CalibrationPoint", "QuantifyResult", "ReplicateGroup",
    "average_replicates", "detection_limit", "fit_calibration", "quantify",
    "DETECTOR_DEFAULTS", "PHOTOPHYSICS_PRESETS", "PROTOCOL_DEFAULTS",
    "SAMPLE_DEFAULTS", "ExperimentConfig", "load_config",
    "DetectorParams", "differential_signal", "expected_counts", "sample_counts",
    "BootstrapUnstableError", "ConfigError", "DegeneracyError",
    "DegenerateReadoutError", "InconsistencyError", "InsufficientDataError",
    "NonConvergenceError", "NVSenseError", "ParameterError", "SchemaError",
    "SequenceError", "UnitMismatchError",
    "FitResult", "OracleGridSpec", "OracleResult", "bootstrap_t1_err",
    "exp_decay", "fit_exponential", "initial_guess", "oracle_fit",
    "RelaxationBudget", "SurfaceSample", "amount_from_t1", "effective_t1",
    "gd_relaxation_rate",
    "PulseSegment", "PulseSequence", "SegmentKind", "T1Protocol", "Trace",
    "build_t1_pair", "default_tau_grid", "execute", "sweep", "validate",
    "GROUND_EQUILIBRIUM", "PhotophysicsParams", "apply_pi_pulse",
    "build_rate_matrix", "fluorescence_integral", "fluorescence_rate",
    "propagate", "steady_state",
    "__version__",
]
