"""Exception types shared across the package."""


class SemitoricError(Exception):
    """Base class for all package-specific errors."""


class InvalidPointError(SemitoricError):
    """A phase point violates its manifold constraints beyond tolerance."""


class ExpressionError(SemitoricError):
    """Syntax or name error while parsing a Hamiltonian expression.

    Carries ``position``, the 0-based offset into the source text.
    """

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class EvaluationDomainError(SemitoricError):
    """Domain error (log of a nonpositive number, etc.) during evaluation."""


class IntegrationFailureError(SemitoricError):
    """Flow integration failed; carries the partial trajectory if available."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class NonCompactFiberError(SemitoricError):
    """A trajectory failed to return within the time budget."""


class DegenerateTorusError(SemitoricError):
    """Period-lattice shooting failed to converge near a critical value."""


class RefineStepError(SemitoricError):
    """Lattice transport was too coarse to track the branch unambiguously."""

    def __init__(self, message, suggested_steps=None):
        super().__init__(message)
        self.suggested_steps = suggested_steps


class AffineStructureError(SemitoricError):
    """A contractible loop failed to close under development."""


class NonConvexResultError(SemitoricError):
    """A cut transform produced a non-convex polygon; carries the vertex."""

    def __init__(self, message, vertex=None):
        super().__init__(message)
        self.vertex = vertex


class ResolutionError(SemitoricError):
    """Extrapolation toward a singular value did not converge."""


class ConsistencyError(SemitoricError):
    """Two independent computations of the same quantity disagree."""


class NotSemitoricError(SemitoricError):
    """An operation requiring a semitoric system was refused.

    Carries ``certificate``, the list of violations found by the gate.
    """

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate or []
