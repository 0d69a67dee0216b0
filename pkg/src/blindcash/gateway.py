"""A commercial bank: authenticates customers and merchants (stub KYC),
holds their deposit accounts, countersigns and forwards withdrawal requests
to the mint, forwards merchant deposits, and enforces regulatory limits.

The gateway never sees an unblinded coin public key for coins it helps
withdraw: its withdrawal records are keyed by the hash of the blinded value
f', and deposit receipts store a hash of (coin, contract, amount) rather
than the coin itself. That is the two-tier privacy boundary.

Account mutations are serialized by one lock which is never held across a
mint call; mint failures after a debit are compensated with a credit, which
is safe because every mint endpoint is idempotent and the gateway retries
before compensating.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from . import amounts, wire
from .crypto import GroupKeyPair, coin_sign, group_keygen, sha256
from .errors import (
    AccountMismatch,
    AuthFailed,
    ConflictError,
    DailyLimitExceeded,
    InsufficientFunds,
    MerchantLimitExceeded,
    MintRejected,
    ProtocolError,
    UnknownCustomer,
    UnknownMerchant,
    Unreachable,
)
from .mint import PublishedRegistry

UNLIMITED = amounts.MAX_AMOUNT


@dataclass
class DepositReceipt:
    merchant_id: str
    coin_hash: str
    contract_hash: bytes
    amount: int
    mint_timestamp: int


class BankGateway:
    def __init__(self, bank_id: str, mint, signing_key: GroupKeyPair | None,
                 profile, rng, retries: int = 3, tracer=None):
        self.bank_id = bank_id
        self.mint = mint
        self.profile = profile
        self.group = profile.group
        self.rng = rng
        self.retries = retries
        self.signing_key = signing_key or group_keygen(self.group, rng)
        self.registry = PublishedRegistry(self._call(mint.keys_message).registry_doc)
        self._lock = threading.Lock()
        self._customers: dict[str, dict] = {}
        self._merchants: dict[str, dict] = {}
        # hash(f') -> relayed blind signature; hash(C|contract|amount) -> receipt
        self._withdrawals: dict[bytes, dict] = {}
        self._deposits: dict[bytes, DepositReceipt] = {}
        self._refunds: dict[bytes, int] = {}
        self._tracer = tracer

    def _trace(self, event: str, **data):
        if self._tracer is not None:
            self._tracer(event, data)

    @classmethod
    def from_config(cls, config: dict, mint, profile, rng, tracer=None) -> "BankGateway":
        """Build a gateway from a configuration mapping (typically a JSON
        file): bank id, optional signing key, customer/merchant accounts
        and their limits."""
        key = None
        if config.get("signing_priv"):
            priv = int(config["signing_priv"], 16)
            pub = int(pow(profile.group.g, priv, profile.group.p))
            key = GroupKeyPair(priv=priv, pub=pub)
        gw = cls(config["bank_id"], mint, key, profile, rng,
                 retries=config.get("retries", 3), tracer=tracer)
        for cust in config.get("customers", []):
            gw.add_customer(cust["id"], cust["secret"],
                            balance=cust.get("balance", 0),
                            daily_limit=cust.get("daily_limit"))
        for merch in config.get("merchants", []):
            gw.add_merchant(merch["id"], balance=merch.get("balance", 0),
                            inbound_limit=merch.get("inbound_limit"))
        return gw

    def _call(self, fn, *args):
        """Invoke a mint endpoint, retrying transport failures; mint-side
        rejections surface as MintRejected."""
        attempt = 0
        while True:
            try:
                return fn(*args)
            except Unreachable:
                attempt += 1
                if attempt >= self.retries:
                    raise MintRejected(Unreachable("mint unreachable"))
            except MintRejected:
                raise
            except ProtocolError as exc:
                raise MintRejected(exc) from None

    def signing_pub_bytes(self) -> bytes:
        return self.group.encode_element(self.signing_key.pub)

    def sync_registry(self):
        self.registry = PublishedRegistry(self._call(self.mint.keys_message).registry_doc)

    # -- accounts -----------------------------------------------------------------

    def add_customer(self, customer_id: str, secret: str, balance: int = 0,
                     daily_limit: int | None = None):
        amounts.check(balance)
        with self._lock:
            if customer_id in self._customers:
                raise ConflictError(f"customer {customer_id} exists")
            self._customers[customer_id] = {
                "secret": secret,
                "balance": balance,
                "withdrawn_today": 0,
                "daily_limit": UNLIMITED if daily_limit is None else daily_limit,
            }

    def add_merchant(self, merchant_id: str, balance: int = 0,
                     inbound_limit: int | None = None):
        amounts.check(balance)
        with self._lock:
            if merchant_id in self._merchants:
                raise ConflictError(f"merchant {merchant_id} exists")
            self._merchants[merchant_id] = {
                "balance": balance,
                "inbound_limit": UNLIMITED if inbound_limit is None else inbound_limit,
            }

    def _authenticate(self, customer_id: str, secret: str) -> dict:
        account = self._customers.get(customer_id)
        if account is None:
            raise UnknownCustomer(customer_id)
        if account["secret"] != secret:
            raise AuthFailed(customer_id)
        return account

    def authenticate(self, customer_id: str, secret: str) -> bool:
        """Stub login check, the session-opening step of a withdrawal."""
        with self._lock:
            self._authenticate(customer_id, secret)
            self._trace("gateway.auth.ok", customer=customer_id)
        return True

    def customer_balance(self, customer_id: str) -> int:
        with self._lock:
            account = self._customers.get(customer_id)
            if account is None:
                raise UnknownCustomer(customer_id)
            return account["balance"]

    def merchant_balance(self, merchant_id: str) -> int:
        with self._lock:
            account = self._merchants.get(merchant_id)
            if account is None:
                raise UnknownMerchant(merchant_id)
            return account["balance"]

    # -- withdrawals ----------------------------------------------------------------

    def withdraw_for_customer(self, customer_id: str, secret: str,
                              denom_id: bytes, f_blinded: bytes) -> bytes:
        """Debit the customer, countersign, forward to the mint, relay s'."""
        wkey = sha256(f_blinded)
        entry = self.registry.get(denom_id)
        value = entry["value"]

        with self._lock:
            account = self._authenticate(customer_id, secret)
            self._trace("gateway.auth.ok", customer=customer_id)
            stored = self._withdrawals.get(wkey)
            if stored is not None:
                if (stored["customer"] != customer_id
                        or stored["denom_id"] != denom_id.hex()
                        or stored["state"] == "pending"):
                    raise ConflictError("withdrawal in flight or parameters differ")
                return stored["blind_sig"]
            if account["balance"] < value:
                raise InsufficientFunds(
                    f"balance {account['balance']} < {value}")
            if account["withdrawn_today"] + value > account["daily_limit"]:
                raise DailyLimitExceeded(
                    f"{account['withdrawn_today']} + {value} > {account['daily_limit']}")
            account["balance"] -= value
            account["withdrawn_today"] += value
            self._withdrawals[wkey] = {
                "customer": customer_id, "state": "pending", "blind_sig": b"",
                "denom_id": denom_id.hex(), "value": value,
            }
            self._trace("gateway.customer.debit", customer=customer_id, value=value)

        sig = coin_sign(self.signing_key.priv,
                        wire.withdraw_auth_bytes(denom_id, f_blinded),
                        self.group, self.rng)
        req = wire.WithdrawReq(
            denom_id=denom_id, f_blinded=f_blinded, bank_id=self.bank_id,
            countersig_e=self.group.encode_scalar(sig.e),
            countersig_s=self.group.encode_scalar(sig.s))
        self._trace("gateway.withdraw.forward", denom=denom_id.hex())
        try:
            resp = self._call(self.mint.withdraw, req)
        except MintRejected:
            with self._lock:
                account = self._customers[customer_id]
                account["balance"] += value
                account["withdrawn_today"] -= value
                del self._withdrawals[wkey]
            raise
        self._trace("gateway.withdraw.mint_response")
        with self._lock:
            self._withdrawals[wkey].update(state="done", blind_sig=resp.blind_sig)
        self._trace("gateway.withdraw.relayed", customer=customer_id)
        return resp.blind_sig

    # -- deposits ----------------------------------------------------------------------

    def forward_deposit(self, merchant_id: str, req: wire.DepositReq) -> DepositReceipt:
        with self._lock:
            merchant = self._merchants.get(merchant_id)
            if merchant is None:
                raise UnknownMerchant(merchant_id)
            if req.merchant_bank_id != self.bank_id or req.merchant_id != merchant_id:
                raise AccountMismatch(
                    f"deposit names {req.merchant_bank_id}/{req.merchant_id}")
            if req.amount > merchant["inbound_limit"]:
                raise MerchantLimitExceeded(
                    f"amount {req.amount} > limit {merchant['inbound_limit']}")
        dkey = sha256(req.coin_pub + req.contract_hash + req.amount.to_bytes(8, "big"))
        self._trace("gateway.deposit.forward", merchant=merchant_id, amount=req.amount)
        resp = self._call(self.mint.deposit, req)
        self._trace("gateway.deposit.mint_response", merchant=merchant_id)
        with self._lock:
            receipt = self._deposits.get(dkey)
            if receipt is None:
                merchant = self._merchants[merchant_id]
                merchant["balance"] = amounts.add(merchant["balance"], req.amount)
                receipt = DepositReceipt(
                    merchant_id=merchant_id, coin_hash=dkey.hex(),
                    contract_hash=req.contract_hash, amount=req.amount,
                    mint_timestamp=resp.timestamp)
                self._deposits[dkey] = receipt
                self._trace("gateway.merchant.credit",
                            merchant=merchant_id, amount=req.amount)
            return receipt

    # -- revocation refunds ----------------------------------------------------------------

    def forward_refund(self, customer_id: str, secret: str,
                       req: wire.RefundReq) -> int:
        """Submit a (C, s, b) disclosure for a revoked coin; on success the
        mint credits this bank's reserves and the bank credits the
        customer's deposit account."""
        with self._lock:
            self._authenticate(customer_id, secret)
        if req.bank_id != self.bank_id:
            raise AccountMismatch(f"refund names bank {req.bank_id}")
        rkey = sha256(req.coin_pub)
        resp = self._call(self.mint.refund_revoked, req)
        with self._lock:
            if rkey not in self._refunds:
                self._refunds[rkey] = resp.credited
                account = self._customers[customer_id]
                account["balance"] = amounts.add(account["balance"], resp.credited)
        return resp.credited

    # -- maintenance ---------------------------------------------------------------------------

    def day_rollover(self):
        with self._lock:
            for account in self._customers.values():
                account["withdrawn_today"] = 0

    def state_dump(self) -> dict:
        """Full gateway state for inspection; must contain no coin public
        keys for withdrawn coins (privacy boundary assertions)."""
        with self._lock:
            return {
                "bank_id": self.bank_id,
                "customers": {k: dict(v) for k, v in self._customers.items()},
                "merchants": {k: dict(v) for k, v in self._merchants.items()},
                "withdrawals": {k.hex(): {kk: (vv.hex() if isinstance(vv, bytes) else vv)
                                          for kk, vv in v.items()}
                                for k, v in self._withdrawals.items()},
                "deposits": {k.hex(): vars(v) | {"contract_hash": v.contract_hash.hex()}
                             for k, v in self._deposits.items()},
                "refunds": {k.hex(): v for k, v in self._refunds.items()},
            }
