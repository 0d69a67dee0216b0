"""Shared scaffolding: builds a toy-profile mint and crafts protocol
requests directly at the crypto level, independent of the wallet/gateway
implementations, so service surfaces are exercised on their own."""

import random
from dataclasses import dataclass

from blindcash import crypto, wire
from blindcash.clock import SimClock
from blindcash.crypto import TOY_PROFILE
from blindcash.mint import DenominationConfig, Mint, setup_denominations
from blindcash.store import MemoryKV, memory_sharded

T0 = 1_700_000_000
YEAR = 365 * 24 * 3600


def schedule(values, start=T0, fee=0):
    return [
        DenominationConfig(
            value=v, withdraw_start=start, withdraw_end=start + YEAR,
            deposit_end=start + 2 * YEAR, legal_end=start + 3 * YEAR,
            refresh_fee=fee)
        for v in values
    ]


@dataclass
class TestCoin:
    __test__ = False
    priv: int
    pub_bytes: bytes
    denom_id: bytes
    denom_sig: bytes
    value: int
    blinding: int


class MintHarness:
    def __init__(self, values=(100,), seed=1, shard_count=4, fee=0,
                 profile=TOY_PROFILE, instrument=False, bank_balance=1_000_000):
        self.rng = random.Random(seed)
        self.profile = profile
        self.grp = profile.group
        self.clock = SimClock(T0)
        self.registry = setup_denominations(schedule(values, fee=fee), profile, self.rng)
        self.spent = memory_sharded(shard_count, instrument=instrument)
        self.mint = Mint(self.registry, self.spent, MemoryKV(), MemoryKV(),
                         self.clock, self.rng, profile)
        self.bank_key = crypto.group_keygen(self.grp, self.rng)
        self.bank_id = "bank-1"
        self.mint.register_bank(
            self.bank_id, self.grp.encode_element(self.bank_key.pub), bank_balance)

    def denom(self, value):
        for d in self.registry.all():
            if d.value == value:
                return d
        raise KeyError(value)

    def withdraw_req(self, denom, coin_keypair=None, blinding=None):
        grp = self.grp
        kp = coin_keypair or crypto.group_keygen(grp, self.rng)
        coin_pub = grp.encode_element(kp.pub)
        f = crypto.fdh(denom.pub.n, coin_pub)
        b = blinding if blinding is not None else crypto.sample_blinding(denom.pub.n, self.rng)
        f_blinded = crypto.int_to_bytes(crypto.blind(f, b, denom.pub), denom.pub.width)
        sig = crypto.coin_sign(
            self.bank_key.priv, wire.withdraw_auth_bytes(denom.denom_id, f_blinded),
            grp, self.rng)
        req = wire.WithdrawReq(
            denom_id=denom.denom_id, f_blinded=f_blinded, bank_id=self.bank_id,
            countersig_e=grp.encode_scalar(sig.e), countersig_s=grp.encode_scalar(sig.s))
        return req, kp, b

    def withdraw_coin(self, value=None) -> TestCoin:
        denom = self.denom(value if value is not None else self.registry.all()[0].value)
        req, kp, b = self.withdraw_req(denom)
        resp = self.mint.withdraw(req)
        f = crypto.fdh(denom.pub.n, self.grp.encode_element(kp.pub))
        s = crypto.unblind(crypto.int_from_bytes(resp.blind_sig), b, denom.pub.n)
        assert crypto.rsa_verify(denom.pub, f, s)
        return TestCoin(
            priv=kp.priv, pub_bytes=self.grp.encode_element(kp.pub),
            denom_id=denom.denom_id,
            denom_sig=crypto.int_to_bytes(s, denom.pub.width),
            value=denom.value, blinding=b)

    def deposit_req(self, coin: TestCoin, amount, contract_hash=None,
                    bank_id=None, merchant_id="m-1", rng=None):
        rng = rng or self.rng
        contract_hash = contract_hash or crypto.sha256(rng.randbytes(16))
        bank_id = bank_id or self.bank_id
        payload = wire.deposit_sign_bytes(contract_hash, bank_id, merchant_id, amount)
        sig = crypto.coin_sign(coin.priv, payload, self.grp, rng)
        return wire.DepositReq(
            denom_id=coin.denom_id, coin_pub=coin.pub_bytes, denom_sig=coin.denom_sig,
            amount=amount, contract_hash=contract_hash,
            merchant_bank_id=bank_id, merchant_id=merchant_id,
            coin_sig_e=self.grp.encode_scalar(sig.e),
            coin_sig_s=self.grp.encode_scalar(sig.s))

    def build_commitments(self, coin: TestCoin, target, kappa=3, corrupt_index=None):
        """Honest cut-and-choose commitments; corrupt_index (1-based) gets a
        garbage blinded value while its transfer key stays honest."""
        grp = self.grp
        transfers = []
        commitments = []
        for i in range(1, kappa + 1):
            t = crypto.group_keygen(grp, self.rng)
            K = crypto.kx(t.priv, crypto.int_from_bytes(coin.pub_bytes), grp)
            derived = crypto.derive_refresh(K, target.pub, grp)
            change_pub = grp.encode_element(crypto.powmod(grp.g, derived.c, grp.p))
            f = crypto.fdh(target.pub.n, change_pub)
            blinded = crypto.blind(f, derived.b, target.pub)
            if i == corrupt_index:
                blinded = (blinded + 1) % target.pub.n or 1
            commitments.append((
                grp.encode_element(t.pub),
                crypto.int_to_bytes(blinded, target.pub.width)))
            transfers.append((t, derived))
        return commitments, transfers

    def commit_req(self, coin: TestCoin, target, commitments, spent_so_far):
        residual_claim = coin.value - spent_so_far - target.value - target.refresh_fee
        req = wire.RefreshCommitReq(
            old_denom_id=coin.denom_id, old_coin_pub=coin.pub_bytes,
            old_denom_sig=coin.denom_sig, target_denom_id=target.denom_id,
            residual_claim=residual_claim, commitments=commitments)
        sig = crypto.coin_sign(coin.priv, req.signing_bytes(), self.grp, self.rng)
        req.coin_sig_e = self.grp.encode_scalar(sig.e)
        req.coin_sig_s = self.grp.encode_scalar(sig.s)
        return req

    def reveal_req(self, challenge, transfers):
        privs = [
            self.grp.encode_scalar(t.priv)
            for i, (t, _) in enumerate(transfers, start=1)
            if i != challenge.gamma
        ]
        return wire.RefreshRevealReq(session_id=challenge.session_id, transfer_privs=privs)

    def run_refresh(self, coin: TestCoin, target, spent_so_far=0, kappa=3,
                    corrupt_index=None):
        commitments, transfers = self.build_commitments(
            coin, target, kappa=kappa, corrupt_index=corrupt_index)
        challenge = self.mint.refresh_commit(
            self.commit_req(coin, target, commitments, spent_so_far))
        resp = self.mint.refresh_reveal(self.reveal_req(challenge, transfers))
        return challenge, transfers, resp
