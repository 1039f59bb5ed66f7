"""Exception types raised across the package."""


class RecompressError(Exception):
    """Base class for all package errors."""


class JPEGError(RecompressError):
    """Base class for bitstream parsing failures."""


class UnsupportedFormat(JPEGError):
    """Stream is valid JPEG but uses a coding mode we do not decode."""


class CorruptStream(JPEGError):
    """Malformed markers, bad Huffman codes or a truncated scan."""


class MissingTable(JPEGError):
    """A scan references an undefined Huffman or quantization table."""


class LengthMismatch(RecompressError, ValueError):
    pass


class ShapeMismatch(RecompressError, ValueError):
    pass


class NotBlockAligned(RecompressError, ValueError):
    pass


class InvalidK(RecompressError, ValueError):
    pass


class QFOutOfRange(RecompressError, ValueError):
    pass


class PositionOutOfRange(RecompressError, ValueError):
    pass


class DegenerateLabels(RecompressError, ValueError):
    pass


class SpecInvalid(RecompressError, ValueError):
    pass


class ManifestEmpty(RecompressError, ValueError):
    pass


class IOFailure(RecompressError, OSError):
    pass
