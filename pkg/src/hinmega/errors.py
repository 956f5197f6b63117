"""Exception types shared across the package."""


class HinError(ValueError):
    """Base class for invalid-input errors (CLI exit code 2)."""


class SchemaError(HinError):
    """A type or edge type violates the schema."""


class GraphParseError(HinError):
    """A malformed line in a nodes/edges/labels file."""

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{self.path}:{lineno}: {message}")


class DanglingEdgeError(HinError):
    """An edge references a node id that was never declared."""


class MetaGraphError(HinError):
    """A meta-path or meta-graph is structurally invalid."""


class SizeGuardError(HinError):
    """An operation refuses to run because the input is too large."""


class CountOverflowError(ArithmeticError):
    """An instance count does not fit in a signed 64-bit integer."""


class SolverDivergence(ArithmeticError):
    """The CTMD objective became non-finite.

    ``result`` holds the partial :class:`~hinmega.ctmd.EmbeddingResult`
    with the trace up to the failing iteration.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
