"""Exception hierarchy. CLI exit codes key off the two top branches."""


class DriftcalError(Exception):
    """Base class for all package errors."""


class ConfigError(DriftcalError):
    """Invalid config file, unknown key, or bad CLI arguments (exit 2)."""


class DataError(DriftcalError):
    """Invalid or inconsistent stream data (exit 3)."""


class DumpParseError(DataError):
    """A dump file line is not valid JSON or lacks required fields."""

    def __init__(self, path, line_no, reason):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = str(path)
        self.line_no = line_no


class DumpSchemaError(DataError):
    """A record violates the declared manifest schema (widths, dims, splits)."""


class DumpDataError(DataError):
    """A record carries non-finite or out-of-range values."""


class StreamConsistencyError(DataError):
    """Cross-task violation: class overlap or duplicate/missing task."""


class BufferLookupError(DataError):
    """A class was requested from a buffer or score table that lacks it."""


class DegeneratePrototypeError(DataError):
    """A class prototype with zero norm (cosine undefined)."""


class FitError(DriftcalError):
    """Calibrator fitting is impossible on the given inputs."""


class TemperatureFloorError(DriftcalError):
    """A requested temperature is below the positivity floor."""


class ConvergenceWarning(UserWarning):
    """Optimizer hit the iteration cap before meeting tolerances."""
