"""Exception classes shared across the simulator."""


class FigsimError(Exception):
    """Base class for all simulator errors."""


class ParseError(FigsimError):
    """Malformed config or trace input."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(FigsimError):
    """A configuration invariant does not hold."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class OrderingError(FigsimError):
    """Trace records are not sorted by arrival."""


class AlignmentError(FigsimError):
    """Trace address is not block aligned."""


class OutOfRange(FigsimError):
    """Address or index outside the configured geometry."""


class IllegalCommand(FigsimError):
    """A DRAM command was issued while its timing or state constraints were unmet."""


class SlotOccupied(FigsimError):
    """Insertion into a cache slot that still holds a valid segment."""


class StoreFull(FigsimError):
    """The paged block store ran out of row pages."""
