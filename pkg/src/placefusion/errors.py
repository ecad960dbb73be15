"""Exception types shared across the toolkit."""


class PlaceFusionError(Exception):
    """Base class for all toolkit errors."""


class ContractError(PlaceFusionError):
    """An input violates a documented precondition or invariant."""


class EmptyCloudError(PlaceFusionError):
    """An operation that needs valid pixels or points received none."""


class DataError(PlaceFusionError):
    """Inconsistent pipeline data: mismatched ids, dims, or missing files."""


class FormatError(PlaceFusionError):
    """Malformed on-disk binary format. Carries the byte offset of the fault."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DivergenceError(PlaceFusionError):
    """Training produced a non-finite loss."""
