"""Exception types shared across the package."""


class HefirError(Exception):
    """Base class for all package errors."""


class DomainError(HefirError):
    """Ring element is in the wrong evaluation domain for the operation."""


class ParameterMismatchError(HefirError):
    """Operands were created under different parameter sets."""


class EncodingError(HefirError):
    """Value cannot be represented in the target encoding."""


class CodecOverflowError(EncodingError):
    """Signed value does not fit the centered range of the modulus."""


class CapacityError(HefirError):
    """A magnitude bound or memory budget would be exceeded."""


class MissingKeyError(HefirError):
    """Operation requires a key that was not supplied."""


class UnsupportedParametersError(HefirError):
    """Parameters violate a structural requirement (e.g. 2N does not divide t-1)."""


class IncompleteResultError(HefirError):
    """A CRT channel result is missing; reconstruction refused."""


class FormatError(HefirError):
    """Serialized object is malformed.

    Carries the byte offset at which parsing failed when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class VerificationError(HefirError):
    """Post-hoc verification against the plaintext oracle failed."""
