"""Exception types raised by the hybridlinks library.

Configuration and input problems derive from ``ValueError`` so callers that
only care about "bad input" can catch a single type.
"""


class DimensionError(ValueError):
    """Operands have incompatible shapes or lengths."""


class DeskScaleError(ValueError):
    """A requested computation exceeds the desk-scale limits."""


class ConfigError(ValueError):
    """The experiment configuration is invalid."""


class CodewordError(ValueError):
    """A received column could not be mapped back to a unique message."""


class AmbiguousCodewordError(CodewordError):
    """The received codeword appears more than once in the codebook."""


class NotACodewordError(CodewordError):
    """The received word is not in the codebook."""


class DecryptionError(ValueError):
    """A ciphertext failed authentication or has the wrong shape."""


class FrameFormatError(ValueError):
    """A serialized matrix or frame is malformed or truncated."""


class VerificationError(RuntimeError):
    """An experiment ran but its result failed a required check."""
