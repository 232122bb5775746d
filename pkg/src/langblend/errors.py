"""Error types shared across the package.

Four kinds cover every failure mode: bad arguments, operations attempted in
the wrong state, unparseable files, and I/O problems. Each subclasses the
closest builtin so callers can catch either the specific or the generic type.
"""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class IllegalStateError(RuntimeError):
    """The operation is valid in general but not in the object's current state."""


class ParseError(ValueError):
    """A file or string does not conform to its declared format."""

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        loc = ""
        if path is not None:
            loc += str(path)
        if line is not None:
            loc += f":{line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line


class IoError(OSError):
    """Reading or writing an artifact failed."""
