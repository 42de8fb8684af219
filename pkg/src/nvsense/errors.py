"""Exception hierarchy shared across the toolkit."""


class NVSenseError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(NVSenseError, ValueError):
    """A parameter is outside its allowed domain."""


class DegeneracyError(NVSenseError):
    """A rate matrix has no unique steady state."""


class SequenceError(NVSenseError):
    """A pulse sequence failed validation."""


class DegenerateReadoutError(NVSenseError):
    """Both readout branches returned zero counts."""


class InsufficientDataError(NVSenseError):
    """Too few usable data points for the requested operation."""


class InconsistencyError(NVSenseError):
    """Measured value contradicts the stated baseline beyond slack."""


class NonConvergenceError(NVSenseError):
    """Iterative procedure did not converge."""


class BootstrapUnstableError(NVSenseError):
    """Too many bootstrap resamples failed to fit."""


class ConfigError(NVSenseError):
    """Configuration file is malformed or violates an invariant.

    ``key`` carries the offending key path (dotted) when known.
    """

    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key


class SchemaError(NVSenseError):
    """A data file does not match its expected schema.

    ``column`` names the offending column when known.
    """

    def __init__(self, message, column=None):
        super().__init__(message if column is None else f"column '{column}': {message}")
        self.column = column


class UnitMismatchError(SchemaError):
    """Amount units are mixed or inconsistent; silent coercion is forbidden."""

    def __init__(self, message):
        super().__init__(message, column="unit")
