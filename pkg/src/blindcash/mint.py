"""The central bank: denomination key lifecycle, blind-signing withdrawals,
deposit verification with atomic double-spend prevention over a range-sharded
spent-coin store, the cut-and-choose refresh (change) protocol, the public
link protocol, key-revocation refunds, and balance auditing.

Concurrency contract: per-coin state (deposits, refresh commit/reveal,
refunds) is linearized by compare-and-set on the coin's record inside its
shard; bank-account balances update via compare-and-set as well. Withdrawals
and refunds additionally serialize under one mint-level lock because they
mutate an account and an issuance/refund record together. Read-only
endpoints (registry, link, audit) observe consistent snapshots.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field

from . import amounts, wire
from .crypto import (
    CoinSignature,
    CryptoProfile,
    RsaPrivateKey,
    RsaPublicKey,
    blind,
    blind_sign,
    coin_sig_verify,
    fdh,
    int_from_bytes,
    int_to_bytes,
    powmod,
    rsa_keygen,
    rsa_verify,
    sha256,
)
from .errors import (
    AlreadyRefunded,
    BadCoinSignature,
    BadCountersignature,
    BadDenomSignature,
    BadSignature,
    ConfigError,
    ConflictError,
    DenominationExpired,
    DenominationRevoked,
    DoubleSpend,
    InsufficientReserves,
    InvalidPoint,
    MalformedMessage,
    NoMatchingWithdrawal,
    NotRevoked,
    RefreshForfeited,
    UnknownBank,
    UnknownDenomination,
    UnknownSession,
    WrongState,
)
from .store import KVStore, ShardedStore

MIN_KAPPA = 2
MAX_KAPPA = 32

SESSION_COMMITTED = "committed"
SESSION_REVEALED = "revealed"   # reserved for stores that persist between verify and sign
SESSION_FORFEITED = "forfeited"
SESSION_COMPLETED = "completed"


# ---------------------------------------------------------------------------
# Denominations

@dataclass(frozen=True)
class DenominationConfig:
    """Schedule entry: one currency value and its validity windows."""

    value: int
    withdraw_start: int
    withdraw_end: int
    deposit_end: int
    legal_end: int
    refresh_fee: int = 0

    def validate(self):
        amounts.check(self.value)
        amounts.check(self.refresh_fee)
        if self.value <= 0:
            raise ConfigError(f"denomination value {self.value} must be positive")
        if not (self.withdraw_start < self.withdraw_end <= self.deposit_end <= self.legal_end):
            raise ConfigError(
                "windows must satisfy withdraw_start < withdraw_end <= deposit_end <= legal_end")


@dataclass
class DenominationKey:
    denom_id: bytes
    value: int
    pub: RsaPublicKey
    priv: RsaPrivateKey | None
    withdraw_start: int
    withdraw_end: int
    deposit_end: int
    legal_end: int
    refresh_fee: int
    revoked: bool = False

    def public_entry(self) -> dict:
        # canonical field order; hex is lowercase fixed-width big-endian
        w = self.pub.width
        return {
            "denom_id": self.denom_id.hex(),
            "value": self.value,
            "e": int_to_bytes(self.pub.e, w).hex(),
            "n": int_to_bytes(self.pub.n, w).hex(),
            "withdraw_start": self.withdraw_start,
            "withdraw_end": self.withdraw_end,
            "deposit_end": self.deposit_end,
            "legal_end": self.legal_end,
            "refresh_fee": self.refresh_fee,
            "revoked": self.revoked,
        }


class DenominationRegistry:
    def __init__(self, keys: list[DenominationKey]):
        self._by_id: dict[bytes, DenominationKey] = {}
        for key in keys:
            if key.denom_id in self._by_id:
                raise ConfigError("duplicate denomination id")
            self._by_id[key.denom_id] = key

    def __len__(self):
        return len(self._by_id)

    def get(self, denom_id: bytes) -> DenominationKey:
        denom = self._by_id.get(denom_id)
        if denom is None:
            raise UnknownDenomination(denom_id.hex())
        return denom

    def all(self) -> list[DenominationKey]:
        return sorted(self._by_id.values(), key=lambda d: (d.value, d.denom_id.hex()))

    def document(self) -> bytes:
        doc = {
            "format": "denomination-registry",
            "denominations": [d.public_entry() for d in self.all()],
        }
        return json.dumps(doc, separators=(",", ":")).encode()

    def document_hash(self) -> bytes:
        return sha256(self.document())

    # full state including private keys, for node restarts
    def to_json(self) -> bytes:
        entries = []
        for d in self.all():
            entry = d.public_entry()
            entry["priv"] = {
                "d": hex(d.priv.d), "p": hex(d.priv.p), "q": hex(d.priv.q),
            } if d.priv else None
            entries.append(entry)
        return json.dumps({"denominations": entries}, separators=(",", ":")).encode()

    @classmethod
    def from_json(cls, raw: bytes) -> "DenominationRegistry":
        data = json.loads(raw.decode())
        keys = []
        for entry in data["denominations"]:
            n = int(entry["n"], 16)
            pub = RsaPublicKey(e=int(entry["e"], 16), n=n)
            priv = None
            if entry.get("priv"):
                priv = RsaPrivateKey(
                    d=int(entry["priv"]["d"], 16), p=int(entry["priv"]["p"], 16),
                    q=int(entry["priv"]["q"], 16), n=n)
            keys.append(DenominationKey(
                denom_id=bytes.fromhex(entry["denom_id"]), value=entry["value"],
                pub=pub, priv=priv,
                withdraw_start=entry["withdraw_start"], withdraw_end=entry["withdraw_end"],
                deposit_end=entry["deposit_end"], legal_end=entry["legal_end"],
                refresh_fee=entry["refresh_fee"], revoked=entry["revoked"]))
        return cls(keys)


def setup_denominations(configs: list[DenominationConfig], profile: CryptoProfile,
                        rng) -> DenominationRegistry:
    """Generate a key per schedule entry and publish the registry."""
    if not configs:
        raise ConfigError("empty denomination schedule")
    keys = []
    seen = set()
    for cfg in configs:
        cfg.validate()
        while True:
            pub, priv = rsa_keygen(profile.rsa_bits, profile.rsa_e, rng)
            denom_id = pub.fingerprint()
            if denom_id not in seen:
                break
        seen.add(denom_id)
        keys.append(DenominationKey(
            denom_id=denom_id, value=cfg.value, pub=pub, priv=priv,
            withdraw_start=cfg.withdraw_start, withdraw_end=cfg.withdraw_end,
            deposit_end=cfg.deposit_end, legal_end=cfg.legal_end,
            refresh_fee=cfg.refresh_fee))
    return DenominationRegistry(keys)


class PublishedRegistry:
    """Client-side view parsed from the mint's registry document; carries no
    private material."""

    def __init__(self, doc: bytes):
        data = json.loads(doc.decode())
        if data.get("format") != "denomination-registry":
            raise MalformedMessage("not a registry document")
        self.doc = doc
        self.entries: dict[bytes, dict] = {}
        for entry in data["denominations"]:
            pub = RsaPublicKey(e=int(entry["e"], 16), n=int(entry["n"], 16))
            parsed = dict(entry)
            parsed["denom_id"] = bytes.fromhex(entry["denom_id"])
            parsed["pub"] = pub
            self.entries[parsed["denom_id"]] = parsed

    def get(self, denom_id: bytes) -> dict:
        entry = self.entries.get(denom_id)
        if entry is None:
            raise UnknownDenomination(denom_id.hex())
        return entry

    def withdrawable(self, now: int) -> list[dict]:
        return sorted(
            (e for e in self.entries.values()
             if not e["revoked"] and e["withdraw_start"] <= now <= e["withdraw_end"]),
            key=lambda e: (e["value"], e["denom_id"].hex()))


# ---------------------------------------------------------------------------
# Per-coin spent record (JSON payload in the sharded store)

@dataclass
class SpentRecord:
    coin_pub: bytes
    denom_id: bytes
    entries: list = field(default_factory=list)
    sessions: list = field(default_factory=list)

    @property
    def spent_total(self) -> int:
        return sum(e["amount"] for e in self.entries)

    def find_session(self, session_id: bytes):
        sid = session_id.hex()
        for s in self.sessions:
            if s["session_id"] == sid:
                return s
        return None

    def to_bytes(self) -> bytes:
        return json.dumps({
            "coin_pub": self.coin_pub.hex(),
            "denom_id": self.denom_id.hex(),
            "entries": self.entries,
            "sessions": self.sessions,
        }, separators=(",", ":")).encode()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "SpentRecord":
        data = json.loads(raw.decode())
        return cls(
            coin_pub=bytes.fromhex(data["coin_pub"]),
            denom_id=bytes.fromhex(data["denom_id"]),
            entries=data["entries"],
            sessions=data["sessions"])


@dataclass
class AuditReport:
    denom_id: bytes
    issued_count: int
    issued_value: int
    deposited_value: int
    refunded_value: int
    forfeited_value: int

    @property
    def violation(self) -> bool:
        """Deposits plus refunds must never exceed issuance for an
        uncompromised key."""
        return self.deposited_value + self.refunded_value > self.issued_value


# ---------------------------------------------------------------------------

class Mint:
    def __init__(self, registry: DenominationRegistry, spent_store: ShardedStore,
                 withdrawal_store: KVStore, account_store: KVStore,
                 clock, rng, profile: CryptoProfile, tracer=None):
        self.registry = registry
        self.spent = spent_store
        self.withdrawals = withdrawal_store
        self.accounts = account_store
        self.clock = clock
        self.rng = rng
        self.profile = profile
        self.group = profile.group
        self._issue_lock = threading.Lock()
        self._gamma_lock = threading.Lock()
        self._session_index: dict[bytes, bytes] = {}
        self._index_lock = threading.Lock()
        self._tracer = tracer
        self._rebuild_session_index()

    def _trace(self, event: str, **data):
        if self._tracer is not None:
            self._tracer(event, data)

    # -- restart support ------------------------------------------------------

    def _rebuild_session_index(self):
        with self._index_lock:
            self._session_index.clear()
            for _, raw, _ in self.spent.scan():
                rec = SpentRecord.from_bytes(raw)
                for s in rec.sessions:
                    self._session_index[bytes.fromhex(s["session_id"])] = rec.coin_pub

    # -- bank accounts ---------------------------------------------------------

    def register_bank(self, bank_id: str, signing_pub: bytes, balance: int = 0):
        amounts.check(balance)
        pub = int_from_bytes(signing_pub)
        if len(signing_pub) != self.group.element_width or not self.group.is_member(pub):
            raise InvalidPoint("gateway signing key not in the subgroup")
        record = {"bank_id": bank_id, "balance": balance,
                  "signing_pub": signing_pub.hex(),
                  "fingerprint": sha256(signing_pub).hex()}
        if not self.accounts.cas(self._bank_key(bank_id), 0, json.dumps(record).encode()):
            raise ConflictError(f"bank {bank_id} already registered")

    @staticmethod
    def _bank_key(bank_id: str) -> bytes:
        return b"bank/" + bank_id.encode()

    def _load_bank(self, bank_id: str):
        hit = self.accounts.get(self._bank_key(bank_id))
        if hit is None:
            raise UnknownBank(bank_id)
        raw, version = hit
        return json.loads(raw.decode()), version

    def bank_balance(self, bank_id: str) -> int:
        return self._load_bank(bank_id)[0]["balance"]

    def _adjust_balance(self, bank_id: str, delta: int):
        """Atomic balance update; negative delta must not overdraw."""
        while True:
            record, version = self._load_bank(bank_id)
            balance = record["balance"] + delta
            if balance < 0:
                raise InsufficientReserves(
                    f"bank {bank_id} balance {record['balance']} cannot cover {-delta}")
            amounts.check(balance)
            record["balance"] = balance
            if self.accounts.cas(self._bank_key(bank_id), version,
                                 json.dumps(record).encode()):
                return

    # -- published registry ----------------------------------------------------

    def registry_document(self) -> bytes:
        return self.registry.document()

    def keys_message(self) -> wire.Keys:
        return wire.Keys(registry_doc=self.registry_document())

    # -- helpers ----------------------------------------------------------------

    def _decode_fixed(self, raw: bytes, width: int, maximum: int, label: str) -> int:
        if len(raw) != width:
            raise MalformedMessage(f"{label}: expected {width} bytes, got {len(raw)}")
        value = int_from_bytes(raw)
        if value >= maximum:
            raise MalformedMessage(f"{label}: value out of range")
        return value

    def _coin_sig(self, e_raw: bytes, s_raw: bytes, label: str) -> CoinSignature:
        sw = self.group.scalar_width
        if len(e_raw) != sw or len(s_raw) != sw:
            raise MalformedMessage(f"{label}: bad signature scalar width")
        return CoinSignature(e=int_from_bytes(e_raw), s=int_from_bytes(s_raw))

    def _verify_denom_sig(self, denom: DenominationKey, coin_pub: bytes, sig_raw: bytes) -> bool:
        s = self._decode_fixed(sig_raw, denom.pub.width, denom.pub.n, "denom_sig")
        return rsa_verify(denom.pub, fdh(denom.pub.n, coin_pub), s)

    def _load_record(self, coin_pub: bytes, denom_id: bytes):
        hit = self.spent.get(coin_pub)
        if hit is None:
            return SpentRecord(coin_pub=coin_pub, denom_id=denom_id), 0
        rec = SpentRecord.from_bytes(hit[0])
        if rec.denom_id != denom_id:
            raise ConflictError("coin already recorded under another denomination")
        return rec, hit[1]

    # -- withdraw ----------------------------------------------------------------

    def withdraw(self, req: wire.WithdrawReq) -> wire.WithdrawResp:
        denom = self.registry.get(req.denom_id)
        bank, _ = self._load_bank(req.bank_id)
        if not req.countersig_e or not req.countersig_s:
            raise BadCountersignature("missing countersignature")
        sig = self._coin_sig(req.countersig_e, req.countersig_s, "countersig")
        signing_pub = int_from_bytes(bytes.fromhex(bank["signing_pub"]))
        payload = wire.withdraw_auth_bytes(req.denom_id, req.f_blinded)
        if not coin_sig_verify(signing_pub, payload, sig, self.group):
            raise BadCountersignature(req.bank_id)

        f_blinded = self._decode_fixed(req.f_blinded, denom.pub.width, denom.pub.n, "f_blinded")
        wkey = sha256(req.f_blinded)

        replay = self._check_withdraw_replay(wkey, req)
        if replay is not None:
            return replay

        if denom.revoked:
            raise DenominationRevoked(req.denom_id.hex())
        now = self.clock.now()
        if not denom.withdraw_start <= now <= denom.withdraw_end:
            raise DenominationExpired(
                f"withdraw window [{denom.withdraw_start}, {denom.withdraw_end}], now {now}")

        with self._issue_lock:
            replay = self._check_withdraw_replay(wkey, req)
            if replay is not None:
                return replay
            bank_balance = self.bank_balance(req.bank_id)
            if bank_balance < denom.value:
                raise InsufficientReserves(
                    f"balance {bank_balance} < denomination value {denom.value}")
            blind_sig = blind_sign(denom.priv, f_blinded)
            record = {
                "denom_id": req.denom_id.hex(),
                "bank_id": req.bank_id,
                "value": denom.value,
                "blind_sig": int_to_bytes(blind_sig, denom.pub.width).hex(),
                "ts": now,
            }
            self._adjust_balance(req.bank_id, -denom.value)
            if not self.withdrawals.cas(wkey, 0, json.dumps(record).encode()):
                # lost a race we should have been protected from; undo the debit
                self._adjust_balance(req.bank_id, denom.value)
                raise ConflictError("concurrent withdrawal with identical blinded coin")
        self._trace("mint.withdraw.issued", bank=req.bank_id, value=denom.value)
        return wire.WithdrawResp(blind_sig=bytes.fromhex(record["blind_sig"]))

    def _check_withdraw_replay(self, wkey: bytes, req: wire.WithdrawReq):
        hit = self.withdrawals.get(wkey)
        if hit is None:
            return None
        record = json.loads(hit[0].decode())
        if record["denom_id"] != req.denom_id.hex() or record["bank_id"] != req.bank_id:
            raise ConflictError("blinded coin already withdrawn with different parameters")
        return wire.WithdrawResp(blind_sig=bytes.fromhex(record["blind_sig"]))

    # -- deposit -----------------------------------------------------------------

    def deposit(self, req: wire.DepositReq) -> wire.DepositResp:
        denom = self.registry.get(req.denom_id)
        amounts.check(req.amount)
        if req.amount <= 0:
            raise MalformedMessage("deposit amount must be positive")
        if denom.revoked:
            raise DenominationRevoked(req.denom_id.hex())
        now = self.clock.now()
        if now > denom.deposit_end:
            raise DenominationExpired(f"deposit window closed at {denom.deposit_end}")
        coin_pub_int = self._decode_fixed(
            req.coin_pub, self.group.element_width, self.group.p, "coin_pub")
        if not self._verify_denom_sig(denom, req.coin_pub, req.denom_sig):
            raise BadDenomSignature(req.denom_id.hex())
        payload = wire.deposit_sign_bytes(
            req.contract_hash, req.merchant_bank_id, req.merchant_id, req.amount)
        sig = self._coin_sig(req.coin_sig_e, req.coin_sig_s, "coin_sig")
        if not coin_sig_verify(coin_pub_int, payload, sig, self.group):
            raise BadCoinSignature("coin signature over the contract is invalid")
        self._load_bank(req.merchant_bank_id)  # UnknownBank before any state change
        self._trace("mint.deposit.verified", amount=req.amount)

        self.spent.begin_op("deposit")
        try:
            entry, replayed = self._append_deposit_entry(req, denom, now)
        finally:
            self.spent.end_op()
        if not replayed:
            self._adjust_balance(req.merchant_bank_id, req.amount)
        self._trace("mint.deposit.recorded", amount=req.amount,
                    bank=req.merchant_bank_id, replay=replayed)
        return wire.DepositResp(
            coin_pub=req.coin_pub, contract_hash=req.contract_hash,
            amount=req.amount, timestamp=entry["ts"])

    def _append_deposit_entry(self, req: wire.DepositReq, denom: DenominationKey, now: int):
        while True:
            rec, version = self._load_record(req.coin_pub, req.denom_id)
            for entry in rec.entries:
                if (entry["kind"] == "deposit"
                        and entry["contract_hash"] == req.contract_hash.hex()
                        and entry["amount"] == req.amount):
                    if (entry["bank"] != req.merchant_bank_id
                            or entry["merchant"] != req.merchant_id):
                        raise ConflictError("deposit replayed with different merchant account")
                    return entry, True
            if rec.spent_total + req.amount > denom.value:
                raise DoubleSpend(
                    f"coin residual {denom.value - rec.spent_total} < amount {req.amount}")
            entry = {
                "kind": "deposit",
                "contract_hash": req.contract_hash.hex(),
                "bank": req.merchant_bank_id,
                "merchant": req.merchant_id,
                "amount": req.amount,
                "ts": now,
            }
            rec.entries.append(entry)
            if self.spent.cas(req.coin_pub, version, rec.to_bytes()):
                return entry, False

    # -- refresh -------------------------------------------------------------------

    def refresh_commit(self, req: wire.RefreshCommitReq) -> wire.RefreshChallenge:
        old = self.registry.get(req.old_denom_id)
        target = self.registry.get(req.target_denom_id)
        if old.revoked or target.revoked:
            raise DenominationRevoked("refresh with a revoked denomination")
        now = self.clock.now()
        if now > old.deposit_end:
            raise DenominationExpired("old denomination past its deposit window")
        if not target.withdraw_start <= now <= target.withdraw_end:
            raise DenominationExpired("target denomination outside its withdraw window")

        kappa = len(req.commitments)
        if not MIN_KAPPA <= kappa <= MAX_KAPPA:
            raise MalformedMessage(f"kappa {kappa} outside [{MIN_KAPPA}, {MAX_KAPPA}]")
        coin_pub_int = self._decode_fixed(
            req.old_coin_pub, self.group.element_width, self.group.p, "old_coin_pub")
        for i, (t_pub, blinded) in enumerate(req.commitments):
            t_int = self._decode_fixed(
                t_pub, self.group.element_width, self.group.p, f"transfer_pub[{i}]")
            if not self.group.is_member(t_int):
                raise InvalidPoint(f"transfer public key {i} not in the subgroup")
            self._decode_fixed(blinded, target.pub.width, target.pub.n, f"blinded[{i}]")
        if not self._verify_denom_sig(old, req.old_coin_pub, req.old_denom_sig):
            raise BadDenomSignature(req.old_denom_id.hex())
        sig = self._coin_sig(req.coin_sig_e, req.coin_sig_s, "coin_sig")
        if not coin_sig_verify(coin_pub_int, req.signing_bytes(), sig, self.group):
            raise BadCoinSignature("commitment signature invalid")

        body = req.encode_body()
        session_id = sha256(body)
        need = amounts.add(target.value, target.refresh_fee)

        self.spent.begin_op("refresh_commit")
        try:
            while True:
                rec, version = self._load_record(req.old_coin_pub, req.old_denom_id)
                session = rec.find_session(session_id)
                if session is not None:
                    return wire.RefreshChallenge(session_id=session_id, gamma=session["gamma"])
                residual = old.value - rec.spent_total
                if need > residual:
                    raise DoubleSpend(f"residual {residual} < target+fee {need}")
                if req.residual_claim != residual - need:
                    raise ConflictError(
                        f"residual claim {req.residual_claim} != actual {residual - need}")
                # persisted at commit time so reveal is verifiable after a crash
                with self._gamma_lock:
                    gamma = self.rng.randrange(1, kappa + 1)
                rec.entries.append({
                    "kind": "refresh", "session_id": session_id.hex(),
                    "amount": need, "fee": target.refresh_fee, "ts": now,
                })
                rec.sessions.append({
                    "session_id": session_id.hex(),
                    "target_denom_id": req.target_denom_id.hex(),
                    "residual_claimed": req.residual_claim,
                    "commitments": [[t.hex(), b.hex()] for t, b in req.commitments],
                    "gamma": gamma,
                    "state": SESSION_COMMITTED,
                    "change_blind_sig": "",
                    "reveal_hash": "",
                    "ts": now,
                })
                if self.spent.cas(req.old_coin_pub, version, rec.to_bytes()):
                    with self._index_lock:
                        self._session_index[session_id] = req.old_coin_pub
                    return wire.RefreshChallenge(session_id=session_id, gamma=gamma)
        finally:
            self.spent.end_op()

    def refresh_reveal(self, req: wire.RefreshRevealReq) -> wire.RefreshRevealResp:
        with self._index_lock:
            coin_pub = self._session_index.get(req.session_id)
        if coin_pub is None:
            raise UnknownSession(req.session_id.hex())
        reveal_hash = sha256(req.encode_body()).hex()

        self.spent.begin_op("refresh_reveal")
        try:
            while True:
                hit = self.spent.get(coin_pub)
                if hit is None:
                    raise UnknownSession(req.session_id.hex())
                rec = SpentRecord.from_bytes(hit[0])
                version = hit[1]
                session = rec.find_session(req.session_id)
                if session is None:
                    raise UnknownSession(req.session_id.hex())

                if session["state"] == SESSION_COMPLETED:
                    if session["reveal_hash"] == reveal_hash:
                        return wire.RefreshRevealResp(
                            status=wire.REFRESH_COMPLETED,
                            blind_sig=bytes.fromhex(session["change_blind_sig"]))
                    raise WrongState("session already completed")
                if session["state"] == SESSION_FORFEITED:
                    if session["reveal_hash"] == reveal_hash:
                        raise RefreshForfeited("session already forfeited")
                    raise WrongState("session already forfeited")

                target = self.registry.get(bytes.fromhex(session["target_denom_id"]))
                ok = self._verify_reveal(rec, session, req.transfer_privs, target)
                if ok:
                    gamma_blinded = bytes.fromhex(session["commitments"][session["gamma"] - 1][1])
                    s_change = blind_sign(target.priv, int_from_bytes(gamma_blinded))
                    session["state"] = SESSION_COMPLETED
                    session["change_blind_sig"] = int_to_bytes(s_change, target.pub.width).hex()
                    session["reveal_hash"] = reveal_hash
                    if self.spent.cas(coin_pub, version, rec.to_bytes()):
                        return wire.RefreshRevealResp(
                            status=wire.REFRESH_COMPLETED,
                            blind_sig=int_to_bytes(s_change, target.pub.width))
                else:
                    session["state"] = SESSION_FORFEITED
                    session["reveal_hash"] = reveal_hash
                    if self.spent.cas(coin_pub, version, rec.to_bytes()):
                        raise RefreshForfeited(
                            "cut-and-choose proof failed; reserved value forfeited")
        finally:
            self.spent.end_op()

    def _verify_reveal(self, rec: SpentRecord, session: dict,
                       transfer_privs: list, target: DenominationKey) -> bool:
        from .crypto import derive_refresh, kx

        grp = self.group
        kappa = len(session["commitments"])
        gamma = session["gamma"]
        if len(transfer_privs) != kappa - 1:
            return False
        coin_pub_int = int_from_bytes(rec.coin_pub)
        reveal_iter = iter(transfer_privs)
        for index in range(1, kappa + 1):
            if index == gamma:
                continue
            t_raw = next(reveal_iter)
            if len(t_raw) != grp.scalar_width:
                return False
            t = int_from_bytes(t_raw)
            if not 1 <= t < grp.q:
                return False
            committed_pub, committed_blinded = session["commitments"][index - 1]
            if int_to_bytes(powmod(grp.g, t, grp.p), grp.element_width).hex() != committed_pub:
                return False
            K = kx(t, coin_pub_int, grp)
            derived = derive_refresh(K, target.pub, grp)
            change_pub = int_to_bytes(powmod(grp.g, derived.c, grp.p), grp.element_width)
            f = fdh(target.pub.n, change_pub)
            expect = blind(f, derived.b, target.pub)
            if int_to_bytes(expect, target.pub.width).hex() != committed_blinded:
                return False
        return True

    # -- link ----------------------------------------------------------------------

    def link(self, coin_pub: bytes) -> wire.LinkResp:
        """Public by design: anyone knowing C learns T_gamma and the blind
        signature of every completed refresh, nothing more."""
        hit = self.spent.get(coin_pub)
        if hit is None:
            return wire.LinkResp(entries=[])
        rec = SpentRecord.from_bytes(hit[0])
        entries = []
        for session in rec.sessions:
            if session["state"] != SESSION_COMPLETED:
                continue
            t_pub = bytes.fromhex(session["commitments"][session["gamma"] - 1][0])
            entries.append((
                t_pub,
                bytes.fromhex(session["change_blind_sig"]),
                bytes.fromhex(session["target_denom_id"]),
            ))
        return wire.LinkResp(entries=entries)

    # -- revocation and refunds ------------------------------------------------------

    def revoke_denomination(self, denom_id: bytes) -> wire.RevocationNotice:
        denom = self.registry.get(denom_id)
        denom.revoked = True  # idempotent
        return wire.RevocationNotice(denom_id=denom_id)

    def refund_revoked(self, req: wire.RefundReq) -> wire.RefundResp:
        denom = self.registry.get(req.denom_id)
        if not denom.revoked:
            raise NotRevoked(req.denom_id.hex())
        self._load_bank(req.bank_id)
        if len(req.coin_pub) != self.group.element_width:
            raise MalformedMessage("coin_pub width")
        if not self._verify_denom_sig(denom, req.coin_pub, req.denom_sig):
            raise BadSignature("denomination signature invalid")
        b = self._decode_fixed(req.blinding, denom.pub.width, denom.pub.n, "blinding")
        f = fdh(denom.pub.n, req.coin_pub)
        f_blinded = int_to_bytes(blind(f, b, denom.pub), denom.pub.width)
        hit = self.withdrawals.get(sha256(f_blinded))
        if hit is None:
            raise NoMatchingWithdrawal("blinding factor matches no recorded withdrawal")
        record = json.loads(hit[0].decode())
        if record["denom_id"] != req.denom_id.hex():
            raise NoMatchingWithdrawal("withdrawal was for another denomination")

        with self._issue_lock:
            self.spent.begin_op("refund")
            try:
                while True:
                    rec, version = self._load_record(req.coin_pub, req.denom_id)
                    for entry in rec.entries:
                        if entry["kind"] == "refund":
                            if entry["bank"] != req.bank_id:
                                raise ConflictError("already refunded to another bank")
                            return wire.RefundResp(credited=entry["amount"])
                    residual = denom.value - rec.spent_total
                    if residual == 0:
                        raise AlreadyRefunded("coin residual is zero")
                    rec.entries.append({
                        "kind": "refund", "bank": req.bank_id,
                        "amount": residual, "ts": self.clock.now(),
                    })
                    if self.spent.cas(req.coin_pub, version, rec.to_bytes()):
                        break
            finally:
                self.spent.end_op()
            self._adjust_balance(req.bank_id, residual)
        return wire.RefundResp(credited=residual)

    # -- audit and maintenance ----------------------------------------------------------

    def audit_denomination(self, denom_id: bytes) -> AuditReport:
        denom = self.registry.get(denom_id)
        hexid = denom_id.hex()
        issued_count = 0
        issued_value = 0
        for _, raw, _ in self.withdrawals.scan():
            record = json.loads(raw.decode())
            if record["denom_id"] == hexid:
                issued_count += 1
                issued_value += record["value"]
        deposited = refunded = forfeited = 0
        for _, raw, _ in self.spent.scan():
            rec = SpentRecord.from_bytes(raw)
            if rec.denom_id == denom_id:
                for entry in rec.entries:
                    if entry["kind"] == "deposit":
                        deposited += entry["amount"]
                    elif entry["kind"] == "refund":
                        refunded += entry["amount"]
                for session in rec.sessions:
                    if session["state"] == SESSION_FORFEITED:
                        need = next(e["amount"] for e in rec.entries
                                    if e["kind"] == "refresh"
                                    and e["session_id"] == session["session_id"])
                        forfeited += need
            for session in rec.sessions:
                if (session["state"] == SESSION_COMPLETED
                        and session["target_denom_id"] == hexid):
                    issued_count += 1
                    issued_value += denom.value
        return AuditReport(
            denom_id=denom_id, issued_count=issued_count, issued_value=issued_value,
            deposited_value=deposited, refunded_value=refunded,
            forfeited_value=forfeited)

    def conservation_totals(self) -> dict:
        """Mint-side sums for the global conservation equation:
        outstanding wallet value = issued_withdrawn - deposited - refunded
        - forfeited_reserved - fees_completed."""
        issued_withdrawn = 0
        for _, raw, _ in self.withdrawals.scan():
            issued_withdrawn += json.loads(raw.decode())["value"]
        deposited = refunded = forfeited = fees = issued_refresh = pending = 0
        for _, raw, _ in self.spent.scan():
            rec = SpentRecord.from_bytes(raw)
            refresh_entries = {e["session_id"]: e for e in rec.entries
                               if e["kind"] == "refresh"}
            for entry in rec.entries:
                if entry["kind"] == "deposit":
                    deposited += entry["amount"]
                elif entry["kind"] == "refund":
                    refunded += entry["amount"]
            for session in rec.sessions:
                need = refresh_entries[session["session_id"]]["amount"]
                fee = refresh_entries[session["session_id"]]["fee"]
                if session["state"] == SESSION_FORFEITED:
                    forfeited += need
                elif session["state"] == SESSION_COMPLETED:
                    fees += fee
                    issued_refresh += need - fee
                else:
                    # committed but never revealed: reserved, not yet settled
                    pending += need
        reserves = {}
        for key, raw, _ in self.accounts.scan():
            if key.startswith(b"bank/"):
                record = json.loads(raw.decode())
                reserves[record["bank_id"]] = record["balance"]
        return {
            "issued_withdrawn": issued_withdrawn,
            "issued_refresh": issued_refresh,
            "deposited": deposited,
            "refunded": refunded,
            "forfeited_reserved": forfeited,
            "fees_completed": fees,
            "pending_reserved": pending,
            "reserves": reserves,
        }

    def gc(self, now: int | None = None) -> int:
        """Drop spent records and withdrawal events whose denomination is
        past legal_end."""
        now = self.clock.now() if now is None else now
        removed = 0
        expired = {d.denom_id.hex() for d in self.registry.all() if d.legal_end < now}
        for key, raw, version in list(self.spent.scan()):
            rec = SpentRecord.from_bytes(raw)
            if rec.denom_id.hex() in expired:
                if self.spent.delete(key):
                    removed += 1
                    with self._index_lock:
                        for session in rec.sessions:
                            self._session_index.pop(
                                bytes.fromhex(session["session_id"]), None)
        for key, raw, version in list(self.withdrawals.scan()):
            record = json.loads(raw.decode())
            if record["denom_id"] in expired:
                if self.withdrawals.delete(key):
                    removed += 1
        return removed

    # -- routing (exposed for tests and benchmarks) ------------------------------------

    def shard_route(self, coin_pub: bytes) -> int:
        return self.spent.route(coin_pub)
