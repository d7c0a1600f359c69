"""Exception hierarchy shared by all modules."""


class BiaError(Exception):
    """Base class for every error raised by the package."""

    #: short machine-readable tag used in CLI error records
    kind = "error"


class ParameterError(BiaError, ValueError):
    """Invalid or inconsistent parameters."""

    kind = "parameter"


class MembershipError(BiaError, KeyError):
    """A receiver was looked up in a group it does not belong to."""

    kind = "membership"

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class SizeError(BiaError):
    """The requested scheme exceeds the slot-count guardrail."""

    kind = "size"


class AlignmentViolation(BiaError):
    """Decoder infeasible because the rank conditions do not hold.

    Parameters
    ----------
    message : str
        Human-readable explanation.
    ranks : dict
        Offending rank diagnostics, e.g. ``{"desired": 1, "expected": 2}``.
    """

    kind = "alignment"

    def __init__(self, message: str, ranks: dict | None = None):
        super().__init__(message)
        self.ranks = dict(ranks or {})


class EncodingError(BiaError):
    """A transmitter was asked to send a message it does not know."""

    kind = "encoding"


class DecodingError(BiaError):
    """Decoding could not proceed (e.g. missing side information)."""

    kind = "decoding"


class InvalidRunError(BiaError):
    """A run report cannot be used for dimension counting."""

    kind = "invalid_run"


class ShuffleError(BiaError):
    """Delivered intermediate values do not match what was sent."""

    kind = "shuffle"

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class CorrectnessError(BiaError):
    """Reduce outputs disagree with the centralized oracle."""

    kind = "correctness"
