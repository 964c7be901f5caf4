"""Exception hierarchy.

Validation problems (bad input, bad config, violated preconditions) derive from
``ValidationError`` so the CLI can map them to exit code 1; everything else that
escapes is a runtime failure.
"""


class CgforgeError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(CgforgeError, ValueError):
    pass


class CsvParseError(ValidationError):
    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(message if row is None else f"row {row}: {message}")


class EncodingError(ValidationError):
    def __init__(self, variable: str, value: str):
        self.variable = variable
        self.value = value
        super().__init__(f"value {value!r} is not a declared state of variable {variable!r}")


class UnknownColumnError(ValidationError):
    def __init__(self, names):
        self.names = sorted(names)
        super().__init__(f"unknown column(s): {', '.join(self.names)}")


class EmptyDatasetError(ValidationError):
    pass


class DiscretizationError(ValidationError):
    pass


class ParentSetTooLargeError(ValidationError):
    pass


class IllegalMoveError(ValidationError):
    pass


class ConstraintError(ValidationError):
    pass


class CycleError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class DocumentError(ValidationError):
    pass


class StageError(CgforgeError):
    """Wraps a failure with the name of the pipeline stage it came from."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")


class EnsembleRunError(CgforgeError):
    def __init__(self, run_index: int, cause: Exception):
        self.run_index = run_index
        self.cause = cause
        super().__init__(f"ensemble run {run_index} failed: {cause}")
