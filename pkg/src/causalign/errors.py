"""Exception types shared across the package."""


class CausalignError(Exception):
    """Base class for all library errors."""


class MalformedRecord(CausalignError):
    """A log or annotation record has the wrong number/type of fields."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class NegativePosition(MalformedRecord):
    """A video-time position is below zero."""


class UnknownEventKind(MalformedRecord):
    """Event kind is not one of play/pause/seek/end."""


class InconsistentEventOrder(CausalignError):
    """Playback events contradict each other (e.g. pause with no open play).

    Interval reconstruction tolerates and logs these; the class exists so
    the condition has a stable name in logs and docs.
    """


class UnsortedFrames(CausalignError):
    """Annotation frames are not strictly increasing in timestamp."""


class EventOutOfRange(CausalignError):
    """An event time lies outside [0, duration]."""


class SeriesTooShort(CausalignError):
    """The series has too few bins for the requested operation."""


class LengthMismatch(CausalignError):
    """Two series that must be equal-length are not."""


class EmptySeries(CausalignError):
    """An operation requires at least one element."""


class NoFinitePath(CausalignError):
    """Backtracking found no finite-cost predecessor chain to (0, 0)."""


class InvalidP(CausalignError):
    """A p-value is outside (0, 1]."""


class EmptyInput(CausalignError):
    """A nonempty collection was required."""


class InvalidSpec(CausalignError):
    """A synthetic-corpus description is malformed."""
