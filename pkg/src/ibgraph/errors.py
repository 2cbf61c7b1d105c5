"""Exception types shared across the package."""


class IbgraphError(Exception):
    """Base class for all errors raised by this package."""


class MalformedInput(IbgraphError):
    """Graph file (or certificate file) does not follow the documented format."""


class NotBipartite(IbgraphError):
    """An odd cycle was found while two-coloring an uncolored input."""


class ColorConflict(IbgraphError):
    """Declared colors put both endpoints of an edge in the same class."""


class InvalidOrdering(IbgraphError):
    """An ordering violates a precondition (not total, or not pattern-free)."""


class ModelValidationFailed(IbgraphError):
    """A constructed interval model failed its own cross-color validation."""


class NotTotal(IbgraphError):
    """Relation does not decide every vertex pair."""


class NotTransitive(IbgraphError):
    """Relation is not a transitive tournament."""


class UnknownPair(IbgraphError):
    """Queried pair is not part of the relation."""


class PreconditionViolated(IbgraphError):
    """Operation called outside its stated precondition."""


class TooLarge(IbgraphError):
    """Instance exceeds a configured size or memory budget."""


class InternalInconsistency(IbgraphError):
    """The recognizer contradicted itself.

    Raised when a structural fact the algorithm relies on fails at run
    time (an accepted ordering that is not pattern-free, a circuit where
    none may occur, a malformed minimal circuit).  Carries enough context
    to reproduce the instance; callers are expected to archive it rather
    than retry.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
