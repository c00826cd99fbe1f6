"""Exception hierarchy shared by every stage of the pipeline."""


class PruningError(Exception):
    """Base class for all errors raised by owlprune."""


class PreconditionError(PruningError, ValueError):
    """An argument violates an operation's documented precondition."""


class StructuralError(PruningError, ValueError):
    """Shapes, layer ids or graph topology do not line up."""


class ConfigError(PruningError, ValueError):
    """A pruning or run configuration is invalid or infeasible."""


class NumericalError(PruningError, ArithmeticError):
    """A computation produced NaN or Inf."""


class FormatError(PruningError, ValueError):
    """A binary or text file could not be decoded.

    ``offset`` is the byte offset at which decoding failed, or None when the
    problem is not tied to a position in the file.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
