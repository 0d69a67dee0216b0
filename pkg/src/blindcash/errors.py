"""Exception hierarchy shared by every service module.

Each error carries a stable ``code`` string so transports can map an
exception to a wire-level Error message and reconstruct the same exception
class on the client side.
"""

from __future__ import annotations


class ProtocolError(Exception):
    """Base class for every protocol-level failure."""

    code = "protocol-error"

    def __init__(self, detail: str = ""):
        super().__init__(detail or self.code)
        self.detail = detail


class ConfigError(ProtocolError):
    code = "config-error"


class NotFound(ProtocolError):
    code = "not-found"


class UnknownDenomination(NotFound):
    code = "unknown-denomination"


class UnknownBank(NotFound):
    code = "unknown-bank"


class UnknownMerchant(NotFound):
    code = "unknown-merchant"


class UnknownCustomer(NotFound):
    code = "unknown-customer"


class UnknownSession(NotFound):
    code = "unknown-session"


class BadCountersignature(ProtocolError):
    code = "bad-countersignature"


class BadCoinSignature(ProtocolError):
    code = "bad-coin-signature"


class BadDenomSignature(ProtocolError):
    code = "bad-denom-signature"


class BadSignature(ProtocolError):
    code = "bad-signature"


class BadMintSignature(ProtocolError):
    code = "bad-mint-signature"


class DenominationExpired(ProtocolError):
    code = "denomination-expired"


class DenominationRevoked(ProtocolError):
    code = "denomination-revoked"


class NotRevoked(ProtocolError):
    code = "not-revoked"


class InsufficientReserves(ProtocolError):
    code = "insufficient-reserves"


class InsufficientFunds(ProtocolError):
    code = "insufficient-funds"


class InsufficientResidual(ProtocolError):
    code = "insufficient-residual"


class DailyLimitExceeded(ProtocolError):
    code = "daily-limit-exceeded"


class MerchantLimitExceeded(ProtocolError):
    code = "merchant-limit-exceeded"


class DoubleSpend(ProtocolError):
    code = "double-spend"


class WrongState(ProtocolError):
    code = "wrong-state"


class RefreshForfeited(ProtocolError):
    """Cut-and-choose proof failed; the reserved residual is forfeited."""

    code = "refresh-forfeited"


class NoMatchingWithdrawal(ProtocolError):
    code = "no-matching-withdrawal"


class AlreadyRefunded(ProtocolError):
    code = "already-refunded"


class AccountMismatch(ProtocolError):
    code = "account-mismatch"


class AuthFailed(ProtocolError):
    code = "auth-failed"


class AmountMismatch(ProtocolError):
    code = "amount-mismatch"


class AmountOverflow(ProtocolError):
    code = "amount-overflow"


class ExactCoverImpossible(ProtocolError):
    code = "exact-cover-impossible"


class ConflictError(ProtocolError):
    """Replayed request whose non-key fields differ from the stored one."""

    code = "conflict"


class InvalidPoint(ProtocolError):
    code = "invalid-point"


class KeygenError(ProtocolError):
    code = "keygen-error"


class FdhExhausted(ProtocolError):
    code = "fdh-exhausted"


class MalformedMessage(ProtocolError):
    code = "malformed-message"


class UnknownType(MalformedMessage):
    code = "unknown-type"


class UnknownVersion(MalformedMessage):
    code = "unknown-version"


class Unreachable(ProtocolError):
    """Transport gave up after retries; the request may or may not have run."""

    code = "unreachable"


class ScenarioError(ProtocolError):
    code = "scenario-error"


class MintRejected(ProtocolError):
    """Gateway-side wrapper around a mint rejection."""

    code = "mint-rejected"

    def __init__(self, inner: ProtocolError):
        super().__init__(f"{inner.code}: {inner.detail}")
        self.inner = inner


_BY_CODE = {}


def _register(cls):
    for sub in cls.__subclasses__():
        _BY_CODE.setdefault(sub.code, sub)
        _register(sub)


_register(ProtocolError)
_BY_CODE[ProtocolError.code] = ProtocolError


def from_code(code: str, detail: str = "") -> ProtocolError:
    """Rebuild the exception for a wire-level error code."""
    cls = _BY_CODE.get(code)
    if cls is None:
        return ProtocolError(f"{code}: {detail}")
    if cls is MintRejected:
        # inner code is carried in the detail text
        inner_code, _, inner_detail = detail.partition(": ")
        return MintRejected(from_code(inner_code, inner_detail))
    return cls(detail)
