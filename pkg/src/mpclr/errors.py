"""Exception hierarchy shared by all protocol layers."""


class MpcError(Exception):
    """Base class for everything raised by this package."""


class RangeError(MpcError):
    """A real value does not fit the configured fixed-point integer field."""


class ProtocolError(MpcError):
    """Protocol contract violated: role mismatch, dimension mismatch, abort."""


class TransportError(MpcError):
    """Channel-level failure: refused/reset connection, dead peer, handshake abort."""


class FrameError(TransportError):
    """Malformed wire frame; the connection is considered dead."""


class FormatError(MpcError):
    """Corrupt or mismatched on-disk file (share file, randomness file)."""


class RandomnessUnderflowError(MpcError):
    """A protocol asked for more correlated randomness than was provisioned."""


class IngestionError(FormatError):
    """Bad input data while reading a training CSV (names row/column)."""
