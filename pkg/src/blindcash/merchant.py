"""The payee: creates contracts, validates coin and denomination signatures
on received payment parts, and settles by depositing through its bank.
Goods are released only when every part is mint-confirmed."""

from __future__ import annotations

from dataclasses import dataclass, field

from . import amounts, wire
from .crypto import coin_sig_verify, fdh, int_from_bytes, rsa_verify, sha256
from .errors import (
    AmountMismatch,
    BadCoinSignature,
    BadDenomSignature,
    MintRejected,
    ProtocolError,
    Unreachable,
)
from .mint import PublishedRegistry


@dataclass(frozen=True)
class Contract:
    merchant_bank_id: str
    merchant_id: str
    amount: int
    description: bytes
    nonce: bytes
    contract_hash: bytes

    @staticmethod
    def canonical_bytes(merchant_bank_id: str, merchant_id: str, amount: int,
                        description: bytes, nonce: bytes) -> bytes:
        bank = merchant_bank_id.encode()
        merch = merchant_id.encode()
        return (b"contract/"
                + len(bank).to_bytes(2, "big") + bank
                + len(merch).to_bytes(2, "big") + merch
                + amount.to_bytes(8, "big")
                + len(description).to_bytes(2, "big") + description
                + nonce)

    def recompute_hash(self) -> bytes:
        return sha256(self.canonical_bytes(
            self.merchant_bank_id, self.merchant_id, self.amount,
            self.description, self.nonce))


@dataclass
class SettlementResult:
    delivered: bool
    confirmed: list = field(default_factory=list)    # DepositReceipt per part
    failed: list = field(default_factory=list)       # (coin_pub, error)

    @property
    def offending_coins(self):
        return [pub for pub, _ in self.failed]


class Merchant:
    def __init__(self, merchant_id: str, bank_id: str, gateway, registry: PublishedRegistry,
                 rng, profile, max_attempts: int = 4, tracer=None):
        self.merchant_id = merchant_id
        self.bank_id = bank_id
        self.gateway = gateway
        self.registry = registry
        self.rng = rng
        self.group = profile.group
        self.max_attempts = max_attempts
        self._tracer = tracer
        self.settled: dict[bytes, SettlementResult] = {}

    def _trace(self, event: str, **data):
        if self._tracer is not None:
            self._tracer(event, data)

    def create_contract(self, amount: int, description: bytes) -> Contract:
        amounts.check(amount)
        if amount <= 0:
            raise AmountMismatch("contract amount must be positive")
        nonce = self.rng.randbytes(32)
        payload = Contract.canonical_bytes(
            self.bank_id, self.merchant_id, amount, description, nonce)
        return Contract(
            merchant_bank_id=self.bank_id, merchant_id=self.merchant_id,
            amount=amount, description=description, nonce=nonce,
            contract_hash=sha256(payload))

    def validate_payment(self, contract: Contract, parts: list[wire.DepositReq]) -> list[wire.DepositReq]:
        """Check every part's coin signature and denomination signature and
        that the parts exactly cover the contract."""
        accepted = []
        for part in parts:
            if (part.contract_hash != contract.contract_hash
                    or part.merchant_bank_id != contract.merchant_bank_id
                    or part.merchant_id != contract.merchant_id):
                raise BadCoinSignature("part signed over a different contract")
            entry = self.registry.get(part.denom_id)
            payload = wire.deposit_sign_bytes(
                part.contract_hash, part.merchant_bank_id, part.merchant_id, part.amount)
            from .crypto import CoinSignature

            sig = CoinSignature(e=int_from_bytes(part.coin_sig_e),
                                s=int_from_bytes(part.coin_sig_s))
            if not coin_sig_verify(int_from_bytes(part.coin_pub), payload, sig, self.group):
                raise BadCoinSignature(part.coin_pub.hex()[:16])
            pub = entry["pub"]
            if not rsa_verify(pub, fdh(pub.n, part.coin_pub), int_from_bytes(part.denom_sig)):
                raise BadDenomSignature(part.denom_id.hex()[:16])
            accepted.append(part)
        total = sum(p.amount for p in accepted)
        if total != contract.amount:
            raise AmountMismatch(f"parts sum {total} != contract {contract.amount}")
        self._trace("merchant.payment.validated", contract=contract.contract_hash.hex()[:16])
        return accepted

    def settle(self, contract: Contract, parts: list[wire.DepositReq]) -> SettlementResult:
        """Deposit every part via the gateway; at-least-once submission with
        bounded backoff, safe under the mint's idempotency keys. Delivery
        only when all parts confirm."""
        result = SettlementResult(delivered=False)
        for part in parts:
            receipt = None
            error = None
            delay = 1
            for attempt in range(self.max_attempts):
                try:
                    receipt = self.gateway.forward_deposit(self.merchant_id, part)
                    break
                except MintRejected as exc:
                    if isinstance(exc.inner, Unreachable):
                        error = exc
                        self._sleep(delay)
                        delay *= 2
                        continue
                    error = exc.inner
                    break
                except Unreachable as exc:
                    error = exc
                    self._sleep(delay)
                    delay *= 2
                except ProtocolError as exc:
                    error = exc
                    break
            if receipt is not None:
                result.confirmed.append(receipt)
            else:
                result.failed.append((part.coin_pub, error))
        result.delivered = not result.failed and bool(parts)
        self.settled[contract.contract_hash] = result
        if result.delivered:
            self._trace("merchant.deposit.confirmed",
                        contract=contract.contract_hash.hex()[:16])
            self._trace("merchant.delivered",
                        contract=contract.contract_hash.hex()[:16])
        return result

    def _sleep(self, units: int):
        """Backoff hook; the simulation harness patches this onto virtual
        time, real deployments would sleep."""
        return None
