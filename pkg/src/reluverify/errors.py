"""Exception types shared across the toolkit."""


class ReluVerifyError(Exception):
    """Base class for all toolkit errors."""


class GraphError(ReluVerifyError):
    """A layer graph violates a structural invariant."""


class CycleDetected(GraphError):
    """Layer dependencies contain a cycle."""


class DimensionMismatch(GraphError):
    """Weight/bias/input dimensions of a layer do not chain up."""


class DanglingReference(GraphError):
    """A layer references a predecessor id that does not exist."""


class InvalidWindow(ReluVerifyError):
    """Window endpoints (s, t) are out of range or inverted."""


class ParseError(ReluVerifyError):
    """Malformed input text; carries the byte offset where parsing failed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class SchemaError(ReluVerifyError):
    """Structurally valid input with missing, extra, or ill-typed fields."""


class UnboundedInputBox(ReluVerifyError):
    """Input assertions do not confine every input variable to a finite range."""


class NonlinearTerm(ReluVerifyError):
    """A property expression contains a product of two variables."""


class MixedVariableAtom(ReluVerifyError):
    """A single inequality mixes input (X) and output (Y) variables."""


class ValueOutOfBounds(ReluVerifyError):
    """Attempt to fix a variable outside its declared bounds."""


class UnboundedVariable(ReluVerifyError):
    """A window variable has an infinite stored bound; big-M is undefined."""


class InfeasibleBounds(ReluVerifyError):
    """A bound intersection became empty: the constrained region has no point."""
