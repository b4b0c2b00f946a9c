"""Exception types shared across the toolkit."""


class InvalidArgumentError(ValueError):
    """Caller violated an operation's preconditions (shape, range, enum)."""


class NumericError(ArithmeticError):
    """A computation produced or received non-finite values."""


class DegenerateInputError(ValueError):
    """Input is structurally valid but degenerate (e.g. zero-norm vector)."""


class FormatError(ValueError):
    """A serialized artifact is malformed; carries the byte offset."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
