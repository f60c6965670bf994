"""Exception types shared across the package."""


class DpctrError(Exception):
    """Base class for all package errors."""


class ConfigError(DpctrError):
    """Invalid or conflicting run configuration."""


class MalformedRecordError(DpctrError):
    """A TSV record that violates the 40-field Criteo layout."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class SplitTooSmallError(DpctrError):
    """Dataset too small for an 80/10/10 chronological split."""


class GeneratorCalibrationError(DpctrError):
    """Synthetic label calibration could not bracket the intercept."""


class NumericOverflowError(DpctrError):
    """Non-finite value produced during forward/loss evaluation."""

    def __init__(self, message: str, layer: int | None = None):
        super().__init__(message)
        self.layer = layer


class ContractError(DpctrError):
    """Caller violated an operation precondition (e.g. shape mismatch)."""


class DivergedError(DpctrError):
    """Training loss became non-finite."""

    def __init__(self, step: int):
        super().__init__(f"training diverged at step {step}")
        self.step = step


class UndefinedAucError(DpctrError):
    """AUC requested for a single-class label vector."""


class TaskMismatchError(DpctrError):
    """Operation applied to a dataset with the wrong label type."""


class CalibrationRangeError(DpctrError):
    """No noise multiplier within the search range meets the target."""


class DiscretizationError(DpctrError):
    """Privacy-loss grid too coarse to carry a valid distribution."""
