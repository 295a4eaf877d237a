"""Exception hierarchy shared across the package."""


class MaskfedError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(MaskfedError, ValueError):
    """An argument violates a documented precondition (shape, range, finiteness)."""


class DegenerateInputError(MaskfedError, ValueError):
    """Structurally valid input that is numerically unusable (zero norm, all ties)."""


class EmptyBatchError(MaskfedError, ValueError):
    """An operation that needs at least one sample received none."""


class CheckFailedError(MaskfedError):
    """A verification routine could not be evaluated (non-finite objective)."""


class TrainingDivergedError(MaskfedError):
    """A loss became non-finite during local training."""


class SerializationError(MaskfedError):
    """A tensor cannot be encoded for transmission."""


class ProtocolError(MaskfedError):
    """A received packet violates the wire format."""


class BadMagicError(ProtocolError):
    pass


class TruncatedPayloadError(ProtocolError):
    pass


class UnknownDtypeError(ProtocolError):
    pass


class MalformedPacketError(ProtocolError):
    pass


class BankFormatError(MaskfedError):
    """An embedding-bank file is malformed or inconsistent."""


class UndefinedTestError(MaskfedError):
    """A statistical test is undefined for the given data (e.g. all-zero differences)."""
