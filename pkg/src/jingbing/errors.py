"""Exception hierarchy shared by all jingbing modules."""


class JingBingError(Exception):
    """Base class for every error raised by this package."""


class RngError(JingBingError):
    """The configured randomness source failed."""


# --- commutative cipher ------------------------------------------------------

class InvalidIdentifier(JingBingError):
    """Identifier is empty or longer than the supported maximum."""


class InvalidGroupElement(JingBingError):
    """Byte string is not the canonical encoding of a subgroup element."""


# --- homomorphic schemes -----------------------------------------------------

class KeygenError(JingBingError):
    """Key generation could not complete."""


class PlaintextOutOfRange(JingBingError):
    """Plaintext outside the scheme's message space."""


class InvalidCiphertext(JingBingError):
    """Ciphertext fails a structural validity check."""


class KeyMismatch(JingBingError):
    """Operands were produced under different keys."""


class ParamMismatch(JingBingError):
    """Operands were produced under different ring parameters or keys."""


class NoiseOverflow(JingBingError):
    """Ciphertext noise exhausted; decryption is unreliable."""


# --- pki ----------------------------------------------------------------------

class PkiError(JingBingError):
    """Base class for certificate and transcript errors."""


class InvalidSubject(PkiError):
    """Certificate subject does not match ``[A-Z]{2,32}``."""


class InvalidValidity(PkiError):
    """Certificate validity window is empty or inverted."""


class BadSignature(PkiError):
    """Signature verification failed."""


class Expired(PkiError):
    """Certificate validity window ended before `now`."""


class NotYetValid(PkiError):
    """Certificate validity window starts after `now`."""


class BadCertificate(PkiError):
    """Certificate bytes do not parse."""


class HandshakeFailed(PkiError):
    """Mutual authentication did not complete; no protocol data was sent."""


# --- protocol -----------------------------------------------------------------

class ValidationError(JingBingError):
    """Base class for request/dataset validation failures."""


class BoundExceeded(ValidationError):
    """A column value exceeds the active value bound."""


class TooManyRecords(ValidationError):
    """Record count exceeds the active limit."""


class ColumnMismatch(ValidationError):
    """Aggregation spec does not match the dataset's columns."""


class CapacityExceeded(ValidationError):
    """Worst-case aggregate would overflow the homomorphic plaintext space."""


class DuplicateIdentifier(ValidationError):
    """Dataset contains the same identifier twice."""


class NonIntegerValue(ValidationError):
    """Dataset value is not a non-negative integer."""


class BadHeader(ValidationError):
    """Dataset CSV header is malformed."""


class InfeasibleParams(ValidationError):
    """Synthetic data generation parameters are contradictory."""


class PhaseViolation(JingBingError):
    """Protocol message received in the wrong state-machine phase."""


class UnsupportedVersion(JingBingError):
    """Peer requested an unknown protocol version."""


class ProtocolViolation(JingBingError):
    """Peer output violates a protocol invariant (e.g. impossible aggregate)."""


# --- transport ------------------------------------------------------------

class WireError(JingBingError):
    """Base class for framing and payload codec errors."""


class FrameTooLarge(WireError):
    """Declared frame length exceeds the hard cap."""


class UnexpectedEof(WireError):
    """Stream ended in the middle of a frame."""


class UnknownMessageType(WireError):
    """Frame carries an unregistered message type."""


class MalformedMessage(WireError):
    """Payload bytes do not decode to a structurally valid message."""


class RemoteProtocolError(JingBingError):
    """Peer sent an Error frame; carries the 2-byte reason code."""

    def __init__(self, code: int, message: str = ""):
        self.code = code
        super().__init__(message or f"peer reported error code 0x{code:04x}")
