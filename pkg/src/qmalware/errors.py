"""Exception types raised across the toolkit.

Every class also derives from a builtin (``ValueError`` or ``OSError``) so
callers that already catch the builtin keep working.
"""


class QmalwareError(Exception):
    """Base class for toolkit errors."""


class CapacityError(QmalwareError, ValueError):
    """Requested register size exceeds the simulator's memory guard."""


class DomainError(QmalwareError, ValueError):
    """An input lies outside the range an operation is defined on."""


class NumericError(QmalwareError, ValueError):
    """A numeric value is outside its admissible range."""


class DegenerateLabelsError(QmalwareError, ValueError):
    """Training labels contain a single class."""


class SchemaError(QmalwareError, ValueError):
    """A data file does not match the expected layout."""


class DatasetSizeError(QmalwareError, ValueError):
    """The dataset is too small for the requested split."""


class ConfigError(QmalwareError, ValueError):
    """An experiment configuration failed validation.

    ``violations`` holds every problem found, not just the first.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.violations))
