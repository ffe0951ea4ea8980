"""Exception types raised across the package."""


class SynthTreeError(Exception):
    """Base class for all package errors."""


class ValidationError(SynthTreeError, ValueError):
    """Bad user input or configuration; the CLI maps it to exit code 2."""


class MissingTarget(ValidationError):
    pass


class EmptyDataset(ValidationError):
    pass


class RaggedRows(ValidationError):
    pass


class TooManyLevels(ValidationError):
    pass


class DegenerateSplit(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class NonFinite(ValidationError):
    pass


class SingleClass(ValidationError):
    pass


class ColumnMismatch(ValidationError):
    def __init__(self, missing, extra):
        self.missing = list(missing)
        self.extra = list(extra)
        super().__init__(f"column mismatch: missing={self.missing} extra={self.extra}")


class UnsupportedFormat(ValidationError):
    pass


class RowCountMismatch(ValidationError):
    pass


class EmptyPool(ValidationError):
    pass


class UnknownQueryPoint(SynthTreeError, KeyError):
    def __init__(self, row_index, row=None):
        self.row_index = int(row_index)
        self.row = row
        super().__init__(f"query row {self.row_index} is not in the external prediction table")

    def __str__(self):
        return self.args[0]


class StageError(SynthTreeError, RuntimeError):
    """Wraps a failure with the name of the pipeline stage that raised it."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
