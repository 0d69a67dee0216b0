"""The customer: plans withdrawals across denominations, holds coins, signs
contracts to pay, obtains change through the cut-and-choose refresh
protocol, re-derives linked change coins, and recovers value after a key
revocation.

A coin is a group key pair (c, C); its value is the denomination signature
s over FDH(C). The blinding factor used at withdrawal is kept with the coin
because the revocation refund protocol requires disclosing it.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from . import amounts, wire
from .crypto import (
    CryptoProfile,
    RsaPublicKey,
    blind,
    coin_sign,
    derive_refresh,
    fdh,
    group_keygen,
    int_from_bytes,
    int_to_bytes,
    kx,
    powmod,
    rsa_verify,
    sample_blinding,
    sha256,
    unblind,
)
from .errors import (
    BadMintSignature,
    ExactCoverImpossible,
    InsufficientResidual,
    MalformedMessage,
    ProtocolError,
    RefreshForfeited,
)
from .mint import PublishedRegistry

ORIGIN_WITHDRAWN = 1
ORIGIN_CHANGE = 2


@dataclass
class Coin:
    denom_id: bytes
    priv: int
    pub_bytes: bytes
    denom_sig: int
    face_value: int
    local_residual: int
    blinding: int              # retained for revocation refunds
    origin_kind: int
    origin_withdrawal: bytes = b""      # hash(f') for withdrawn coins
    origin_parent: bytes = b""          # parent C for change coins
    origin_session: bytes = b""
    origin_gamma: int = 0

    def key(self) -> bytes:
        return self.pub_bytes


@dataclass
class PaymentPlan:
    contract_hash: bytes
    merchant_bank_id: str
    merchant_id: str
    items: list            # (coin, amount)
    total: int


class Wallet:
    def __init__(self, customer_id: str, secret: str, gateway, mint_public,
                 profile: CryptoProfile, rng, kappa: int = 3, tracer=None):
        self.customer_id = customer_id
        self.secret = secret
        self.gateway = gateway
        self.mint_public = mint_public
        self.profile = profile
        self.group = profile.group
        self.rng = rng
        self.kappa = kappa
        self.coins: list[Coin] = []
        # (denom_id, hash(f'), blinding) kept when an issued signature fails
        # verification: enough to prove which withdrawal is in dispute
        self.disputes: list[tuple[bytes, bytes, int]] = []
        self.registry = PublishedRegistry(mint_public.keys_message().registry_doc)
        self._tracer = tracer

    def _trace(self, event: str, **data):
        if self._tracer is not None:
            self._tracer(event, data)

    def sync_registry(self):
        self.registry = PublishedRegistry(self.mint_public.keys_message().registry_doc)

    # -- planning ---------------------------------------------------------------

    def plan_withdrawal(self, amount: int, now: int) -> list[dict]:
        """Greedy largest-first exact decomposition of amount into currently
        withdrawable denominations."""
        amounts.check(amount)
        if amount <= 0:
            raise ExactCoverImpossible("amount must be positive")
        available = self.registry.withdrawable(now)
        if not available:
            raise ExactCoverImpossible("no withdrawable denominations")
        plan = []
        remaining = amount
        for entry in sorted(available, key=lambda e: e["value"], reverse=True):
            while entry["value"] <= remaining:
                plan.append(entry)
                remaining -= entry["value"]
        if remaining:
            raise ExactCoverImpossible(f"{remaining} not coverable by denominations")
        return plan

    # -- withdrawal ----------------------------------------------------------------

    def withdraw(self, amount: int, now: int) -> list[Coin]:
        plan = self.plan_withdrawal(amount, now)
        coins = []
        for entry in plan:
            coins.append(self._withdraw_one(entry))
        return coins

    def _withdraw_one(self, entry: dict) -> Coin:
        pub: RsaPublicKey = entry["pub"]
        kp = group_keygen(self.group, self.rng)
        coin_pub = self.group.encode_element(kp.pub)
        f = fdh(pub.n, coin_pub)
        b = sample_blinding(pub.n, self.rng)
        f_blinded = int_to_bytes(blind(f, b, pub), pub.width)
        self._trace("wallet.coin.blinded", denom=entry["denom_id"].hex())
        self._trace("wallet.withdraw.request")
        blind_sig_raw = self.gateway.withdraw_for_customer(
            self.customer_id, self.secret, entry["denom_id"], f_blinded)
        s = unblind(int_from_bytes(blind_sig_raw), b, pub.n)
        if not rsa_verify(pub, f, s):
            self.disputes.append((entry["denom_id"], sha256(f_blinded), b))
            raise BadMintSignature("unblinded signature fails verification")
        coin = Coin(
            denom_id=entry["denom_id"], priv=kp.priv, pub_bytes=coin_pub,
            denom_sig=s, face_value=entry["value"],
            local_residual=entry["value"], blinding=b,
            origin_kind=ORIGIN_WITHDRAWN, origin_withdrawal=sha256(f_blinded))
        self.coins.append(coin)
        self._trace("wallet.coin.stored", coin=coin_pub.hex()[:16])
        return coin

    # -- payments -------------------------------------------------------------------

    def make_payment_plan(self, contract) -> PaymentPlan:
        """Select coins largest-residual-first (ties by coin key bytes) to
        cover the contract amount exactly."""
        target = contract.amount
        items = []
        for coin in sorted(self.coins,
                           key=lambda c: (-c.local_residual, c.pub_bytes)):
            if target == 0:
                break
            entry = self.registry.entries.get(coin.denom_id)
            if coin.local_residual == 0 or entry is None or entry["revoked"]:
                continue
            take = min(coin.local_residual, target)
            items.append((coin, take))
            target -= take
        if target:
            raise InsufficientResidual(f"short {target} for contract")
        return PaymentPlan(
            contract_hash=contract.contract_hash,
            merchant_bank_id=contract.merchant_bank_id,
            merchant_id=contract.merchant_id,
            items=items, total=contract.amount)

    def pay(self, contract, plan: PaymentPlan | None = None) -> list[wire.DepositReq]:
        """Sign the contract with each planned coin and emit deposit-ready
        payment parts; residuals are decremented as signatures are made."""
        plan = plan or self.make_payment_plan(contract)
        if plan.contract_hash != contract.contract_hash:
            raise MalformedMessage("plan does not match contract")
        if sum(a for _, a in plan.items) != contract.amount or plan.total != contract.amount:
            raise InsufficientResidual("plan does not cover the contract amount")
        for coin, amount in plan.items:
            if amount <= 0 or amount > coin.local_residual:
                raise InsufficientResidual(
                    f"coin residual {coin.local_residual} cannot pay {amount}")
        parts = []
        for coin, amount in plan.items:
            payload = wire.deposit_sign_bytes(
                contract.contract_hash, plan.merchant_bank_id, plan.merchant_id, amount)
            sig = coin_sign(coin.priv, payload, self.group, self.rng)
            entry = self.registry.get(coin.denom_id)
            parts.append(wire.DepositReq(
                denom_id=coin.denom_id, coin_pub=coin.pub_bytes,
                denom_sig=int_to_bytes(coin.denom_sig, entry["pub"].width),
                amount=amount, contract_hash=contract.contract_hash,
                merchant_bank_id=plan.merchant_bank_id, merchant_id=plan.merchant_id,
                coin_sig_e=self.group.encode_scalar(sig.e),
                coin_sig_s=self.group.encode_scalar(sig.s)))
            coin.local_residual -= amount
        self._trace("wallet.pay.signed", contract=contract.contract_hash.hex()[:16],
                    parts=len(parts))
        return parts

    # -- refresh (change) --------------------------------------------------------------

    def refresh(self, coin: Coin, target_denom_id: bytes) -> Coin:
        """Obtain a change coin for part of coin's residual; repeatable until
        all change is collected."""
        target = self.registry.get(target_denom_id)
        need = amounts.add(target["value"], target["refresh_fee"])
        if coin.local_residual < need:
            raise InsufficientResidual(
                f"residual {coin.local_residual} < target+fee {need}")
        target_pub: RsaPublicKey = target["pub"]
        grp = self.group

        transfers = []
        commitments = []
        for _ in range(self.kappa):
            t = group_keygen(grp, self.rng)
            K = kx(t.priv, int_from_bytes(coin.pub_bytes), grp)
            derived = derive_refresh(K, target_pub, grp)
            change_pub = grp.encode_element(powmod(grp.g, derived.c, grp.p))
            blinded = blind(fdh(target_pub.n, change_pub), derived.b, target_pub)
            commitments.append((grp.encode_element(t.pub),
                                int_to_bytes(blinded, target_pub.width)))
            transfers.append((t, derived))

        old_entry = self.registry.get(coin.denom_id)
        req = wire.RefreshCommitReq(
            old_denom_id=coin.denom_id, old_coin_pub=coin.pub_bytes,
            old_denom_sig=int_to_bytes(coin.denom_sig, old_entry["pub"].width),
            target_denom_id=target_denom_id,
            residual_claim=coin.local_residual - need,
            commitments=commitments)
        sig = coin_sign(coin.priv, req.signing_bytes(), grp, self.rng)
        req.coin_sig_e = grp.encode_scalar(sig.e)
        req.coin_sig_s = grp.encode_scalar(sig.s)

        # refresh and link are anonymous: the wallet talks to the mint's
        # public endpoints directly, not through its bank
        challenge = self.mint_public.refresh_commit(req)
        reveal = wire.RefreshRevealReq(
            session_id=challenge.session_id,
            transfer_privs=[
                grp.encode_scalar(t.priv)
                for i, (t, _) in enumerate(transfers, start=1)
                if i != challenge.gamma
            ])
        try:
            resp = self.mint_public.refresh_reveal(reveal)
        except RefreshForfeited:
            coin.local_residual = 0  # value lost, matching mint state
            raise
        _, derived = transfers[challenge.gamma - 1]
        s_change = unblind(int_from_bytes(resp.blind_sig), derived.b, target_pub.n)
        change_pub = grp.encode_element(powmod(grp.g, derived.c, grp.p))
        if not rsa_verify(target_pub, fdh(target_pub.n, change_pub), s_change):
            raise BadMintSignature("change signature fails verification")
        change = Coin(
            denom_id=target_denom_id, priv=derived.c, pub_bytes=change_pub,
            denom_sig=s_change, face_value=target["value"],
            local_residual=target["value"], blinding=derived.b,
            origin_kind=ORIGIN_CHANGE, origin_parent=coin.pub_bytes,
            origin_session=challenge.session_id, origin_gamma=challenge.gamma)
        coin.local_residual -= need
        self.coins.append(change)
        self._trace("wallet.refresh.change", value=target["value"])
        return change

    # -- linked change -----------------------------------------------------------------

    def derive_linked_change(self, coin: Coin) -> list[Coin]:
        """Recover every change coin linked to ``coin`` from public link
        data; only the holder of c can complete the derivation."""
        resp = self.mint_public.link(coin.pub_bytes)
        held = {c.pub_bytes for c in self.coins}
        recovered = []
        for t_pub_raw, blind_sig_raw, target_denom_id in resp.entries:
            target = self.registry.get(target_denom_id)
            target_pub: RsaPublicKey = target["pub"]
            K = kx(coin.priv, int_from_bytes(t_pub_raw), self.group)
            derived = derive_refresh(K, target_pub, self.group)
            change_pub = self.group.encode_element(
                powmod(self.group.g, derived.c, self.group.p))
            s = unblind(int_from_bytes(blind_sig_raw), derived.b, target_pub.n)
            if not rsa_verify(target_pub, fdh(target_pub.n, change_pub), s):
                continue  # not derivable with this key; not ours
            if change_pub in held:
                continue
            change = Coin(
                denom_id=target_denom_id, priv=derived.c, pub_bytes=change_pub,
                denom_sig=s, face_value=target["value"],
                local_residual=target["value"], blinding=derived.b,
                origin_kind=ORIGIN_CHANGE, origin_parent=coin.pub_bytes)
            held.add(change_pub)
            self.coins.append(change)
            recovered.append(change)
        return recovered

    # -- revocation recovery ----------------------------------------------------------------

    def recover_revoked(self, notice: wire.RevocationNotice) -> tuple[int, list]:
        """Disclose (C, s, b) for every held coin of the revoked denomination
        via the gateway; returns (total credited, per-coin failures)."""
        self.sync_registry()
        total = 0
        failures = []
        for coin in self.coins:
            if coin.denom_id != notice.denom_id or coin.local_residual == 0:
                continue
            entry = self.registry.get(coin.denom_id)
            req = wire.RefundReq(
                denom_id=coin.denom_id, coin_pub=coin.pub_bytes,
                denom_sig=int_to_bytes(coin.denom_sig, entry["pub"].width),
                blinding=int_to_bytes(coin.blinding, entry["pub"].width),
                bank_id=self.gateway.bank_id)
            try:
                credited = self.gateway.forward_refund(self.customer_id, self.secret, req)
                total = amounts.add(total, credited)
                coin.local_residual = 0
            except ProtocolError as exc:
                failures.append((coin.pub_bytes, exc))
        return total, failures

    # -- expiry sweep ---------------------------------------------------------------------------

    def sweep(self, now: int, window: int) -> list[Coin]:
        """Refresh residuals of coins whose denomination is within ``window``
        seconds of its deposit deadline into fresh denominations. Residual
        slices that no denomination covers stay as dust."""
        self.sync_registry()
        new_coins = []
        targets = self.registry.withdrawable(now)
        for coin in list(self.coins):
            entry = self.registry.entries.get(coin.denom_id)
            if entry is None or coin.local_residual == 0:
                continue
            if entry["deposit_end"] - now > window:
                continue
            while coin.local_residual > 0:
                usable = [t for t in targets
                          if t["value"] + t["refresh_fee"] <= coin.local_residual
                          and t["denom_id"] != coin.denom_id]
                if not usable:
                    break
                target = max(usable, key=lambda t: t["value"])
                new_coins.append(self.refresh(coin, target["denom_id"]))
        return new_coins

    # -- accounting ------------------------------------------------------------------------------

    def total_residual(self) -> int:
        return sum(c.local_residual for c in self.coins)

    # -- persistence -----------------------------------------------------------------------------

    MAGIC = b"WLT1"
    FORMAT_VERSION = 1

    def save_coins(self) -> bytes:
        """Canonical versioned record file; round-trips bit-exactly."""
        out = bytearray(self.MAGIC)
        out.append(self.FORMAT_VERSION)
        out += struct.pack(">I", len(self.coins))
        sw = self.group.scalar_width
        for c in self.coins:
            entry = self.registry.get(c.denom_id)
            w = entry["pub"].width
            out += c.denom_id
            for blob in (int_to_bytes(c.priv, sw), c.pub_bytes,
                         int_to_bytes(c.denom_sig, w), int_to_bytes(c.blinding, w)):
                out += struct.pack(">H", len(blob))
                out += blob
            out += struct.pack(">QQ", c.face_value, c.local_residual)
            out.append(c.origin_kind)
            if c.origin_kind == ORIGIN_WITHDRAWN:
                out += c.origin_withdrawal or bytes(32)
            else:
                out += struct.pack(">H", len(c.origin_parent))
                out += c.origin_parent
                out += c.origin_session or bytes(32)
                out += struct.pack(">I", c.origin_gamma)
        return bytes(out)

    def save_to(self, path):
        with open(path, "wb") as fh:
            fh.write(self.save_coins())

    def load_from(self, path):
        with open(path, "rb") as fh:
            self.load_coins(fh.read())

    def load_coins(self, raw: bytes):
        if len(raw) < 9:
            raise MalformedMessage("truncated wallet file")
        if raw[:4] != self.MAGIC:
            raise MalformedMessage("not a wallet file")
        if raw[4] != self.FORMAT_VERSION:
            raise MalformedMessage(f"wallet format version {raw[4]}")
        pos = 5
        (count,) = struct.unpack_from(">I", raw, pos)
        pos += 4

        def take(n):
            nonlocal pos
            if pos + n > len(raw):
                raise MalformedMessage("truncated wallet file")
            blob = raw[pos:pos + n]
            pos += n
            return blob

        def take16():
            (ln,) = struct.unpack(">H", take(2))
            return take(ln)

        coins = []
        for _ in range(count):
            denom_id = take(32)
            priv = int_from_bytes(take16())
            pub_bytes = take16()
            denom_sig = int_from_bytes(take16())
            blinding = int_from_bytes(take16())
            face_value, local_residual = struct.unpack(">QQ", take(16))
            origin_kind = take(1)[0]
            if origin_kind == ORIGIN_WITHDRAWN:
                coin = Coin(denom_id=denom_id, priv=priv, pub_bytes=pub_bytes,
                            denom_sig=denom_sig, face_value=face_value,
                            local_residual=local_residual, blinding=blinding,
                            origin_kind=origin_kind, origin_withdrawal=take(32))
            elif origin_kind == ORIGIN_CHANGE:
                parent = take16()
                session = take(32)
                (gamma,) = struct.unpack(">I", take(4))
                coin = Coin(denom_id=denom_id, priv=priv, pub_bytes=pub_bytes,
                            denom_sig=denom_sig, face_value=face_value,
                            local_residual=local_residual, blinding=blinding,
                            origin_kind=origin_kind, origin_parent=parent,
                            origin_session=session, origin_gamma=gamma)
            else:
                raise MalformedMessage(f"unknown coin origin {origin_kind}")
            coins.append(coin)
        if pos != len(raw):
            raise MalformedMessage("trailing bytes in wallet file")
        self.coins = coins
