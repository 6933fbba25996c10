"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An operation was called with arguments violating its preconditions."""


class NumericOverflow(ArithmeticError):
    """Dynamics evaluation produced a non-finite value.

    Carries the offending state so solver/trajectory callers can report
    where the blow-up happened.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class NonConvergence(RuntimeError):
    """The fixed-point sweep hit its iteration cap (indicates a bug)."""


class InternalInconsistency(RuntimeError):
    """A supposed fixed point failed its own defining test."""


class EmbeddingViolation(ValueError):
    """A claimed embedding cannot reproduce a member's dynamics.

    ``worst`` holds ``(member_index, x, u, residual)`` for the worst sample.
    """

    def __init__(self, message, worst=None):
        super().__init__(message)
        self.worst = worst


class ScenarioError(ValueError):
    """A scenario file failed validation. ``field`` names the bad entry."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class JobCancelled(RuntimeError):
    """A compute job was cancelled cooperatively between sweeps."""
