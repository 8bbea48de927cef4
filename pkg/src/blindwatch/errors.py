"""Exception types shared across the package."""

from __future__ import annotations


class BlindwatchError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(BlindwatchError):
    """Operands have inconsistent shapes."""


class NonConvergence(BlindwatchError):
    """An iterative routine hit its iteration cap before converging."""


class SingularInnovationCovariance(BlindwatchError):
    """The innovation covariance is numerically singular."""


class DomainError(BlindwatchError):
    """Argument outside the mathematical domain of the function."""


class RankDeficient(BlindwatchError):
    """Matrix does not have the full rank the operation requires."""


class EmptyKernel(BlindwatchError):
    """The requested kernel basis is zero-dimensional."""


class NotPositiveDefinite(BlindwatchError):
    """A covariance matrix failed its Cholesky factorization."""


class DimsInvalid(BlindwatchError):
    """Requested lifting dimensions violate the coding constraints."""


class RankRetryExhausted(BlindwatchError):
    """Random key sampling kept producing rank-deficient matrices."""


class DecodeDrift(BlindwatchError):
    """Decoded alarm is too far from an exact bit; key mismatch or
    desynchronized streams."""


class ProtocolViolation(BlindwatchError):
    """Peer broke the wire protocol. `code` matches the ERROR frame code."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class TransportError(BlindwatchError):
    """Underlying byte stream failed mid-session."""
