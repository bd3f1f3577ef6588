"""Exception hierarchy shared by every layer of the package."""


class HheError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(HheError, ValueError):
    """Invalid or mismatched parameters."""


class DomainError(HheError, ValueError):
    """Value outside its algebraic domain (wrong NTT domain, word >= p, inv(0))."""


class LevelError(HheError):
    """Operands live at different modulus levels."""


class DepthExhaustedError(HheError):
    """No multiplicative level left for the requested operation."""


class MissingKeyError(HheError, KeyError):
    """A rotation step was requested without the matching Galois key."""


class NoiseBudgetError(HheError):
    """Decryption requested on a ciphertext whose noise budget is exhausted."""


class SerializationError(HheError, ValueError):
    """Malformed, foreign or cross-version serialized blob."""


class CipherError(HheError):
    """Internal failure of the symmetric cipher (e.g. affine retry cap hit)."""


class ProtocolError(HheError):
    """Protocol state machine violation."""


class SignatureError(ProtocolError):
    """Envelope signature did not verify."""


class ReplayError(ProtocolError):
    """Envelope timestamp is not strictly greater than the last one seen."""


class IntegrityError(ProtocolError):
    """Malformed envelope, unusable payload or failed PKE authentication."""


class NotFoundError(ProtocolError, KeyError):
    """Requested stored item (user data, artifact) does not exist."""


class DataError(HheError, ValueError):
    """Invalid dataset, sample or model file."""


class ParseError(DataError):
    """CSV row could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class BalanceError(DataError):
    """A class needed for balancing is absent."""
