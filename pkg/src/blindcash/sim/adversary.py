"""Adversary drivers run against a directly-wired mint (no bus) so that
thousands of seeded trials finish quickly."""

from __future__ import annotations

import random

from .. import wire
from ..crypto import (
    PROFILES,
    blind,
    coin_sign,
    derive_refresh,
    fdh,
    group_keygen,
    int_from_bytes,
    int_to_bytes,
    kx,
    powmod,
    sample_blinding,
    unblind,
)
from ..errors import RefreshForfeited, ScenarioError
from ..mint import DenominationConfig, Mint, setup_denominations
from ..store import MemoryKV, memory_sharded

EPOCH = 1_700_000_000
YEAR = 365 * 24 * 3600


class _FixedClock:
    def now(self):
        return EPOCH + 1


def _build_mint(profile, rng, values):
    configs = [DenominationConfig(
        value=v, withdraw_start=EPOCH, withdraw_end=EPOCH + YEAR,
        deposit_end=EPOCH + 2 * YEAR, legal_end=EPOCH + 3 * YEAR)
        for v in values]
    registry = setup_denominations(configs, profile, rng)
    return Mint(registry, memory_sharded(1), MemoryKV(), MemoryKV(),
                _FixedClock(), rng, profile)


def cheating_refresher(trials: int, kappa: int, seed: int, mode: str = "toy") -> dict:
    """One-bad-index refresh cheat: commitments are honest except one index
    whose blinded change is garbage. The mint catches the cheat whenever its
    challenge gamma lands on any other index, so the expected forfeiture
    rate is 1 - 1/kappa."""
    if kappa < 2:
        raise ScenarioError(
            "kappa must be >= 2: with kappa=1 nothing is ever revealed, the "
            "cheat is never caught and the tax rate 1 - 1/kappa is zero")
    if trials < 1:
        raise ScenarioError("trials must be positive")
    profile = PROFILES[mode]
    rng = random.Random(seed)
    grp = profile.group
    mint = _build_mint(profile, rng, values=(100, 1000))
    gw_key = group_keygen(grp, rng)
    mint.register_bank("bank-adv", grp.encode_element(gw_key.pub),
                       trials * 1000 + 1000)
    old_denom = next(d for d in mint.registry.all() if d.value == 1000)
    target = next(d for d in mint.registry.all() if d.value == 100)

    caught = completed = 0
    for _ in range(trials):
        kp = group_keygen(grp, rng)
        coin_pub = grp.encode_element(kp.pub)
        f = fdh(old_denom.pub.n, coin_pub)
        b = sample_blinding(old_denom.pub.n, rng)
        f_blinded = int_to_bytes(blind(f, b, old_denom.pub), old_denom.pub.width)
        counter = coin_sign(gw_key.priv,
                            wire.withdraw_auth_bytes(old_denom.denom_id, f_blinded),
                            grp, rng)
        resp = mint.withdraw(wire.WithdrawReq(
            denom_id=old_denom.denom_id, f_blinded=f_blinded, bank_id="bank-adv",
            countersig_e=grp.encode_scalar(counter.e),
            countersig_s=grp.encode_scalar(counter.s)))
        denom_sig = unblind(int_from_bytes(resp.blind_sig), b, old_denom.pub.n)

        bad_index = rng.randrange(1, kappa + 1)
        transfers = []
        commitments = []
        for i in range(1, kappa + 1):
            t = group_keygen(grp, rng)
            K = kx(t.priv, kp.pub, grp)
            derived = derive_refresh(K, target.pub, grp)
            change_pub = grp.encode_element(powmod(grp.g, derived.c, grp.p))
            blinded = blind(fdh(target.pub.n, change_pub), derived.b, target.pub)
            if i == bad_index:
                blinded = (blinded + 1) % target.pub.n or 1
            commitments.append((grp.encode_element(t.pub),
                                int_to_bytes(blinded, target.pub.width)))
            transfers.append(t)

        commit = wire.RefreshCommitReq(
            old_denom_id=old_denom.denom_id, old_coin_pub=coin_pub,
            old_denom_sig=int_to_bytes(denom_sig, old_denom.pub.width),
            target_denom_id=target.denom_id,
            residual_claim=old_denom.value - target.value,
            commitments=commitments)
        sig = coin_sign(kp.priv, commit.signing_bytes(), grp, rng)
        commit.coin_sig_e = grp.encode_scalar(sig.e)
        commit.coin_sig_s = grp.encode_scalar(sig.s)
        challenge = mint.refresh_commit(commit)

        reveal = wire.RefreshRevealReq(
            session_id=challenge.session_id,
            transfer_privs=[grp.encode_scalar(t.priv)
                            for i, t in enumerate(transfers, start=1)
                            if i != challenge.gamma])
        try:
            mint.refresh_reveal(reveal)
            completed += 1
        except RefreshForfeited:
            caught += 1

    return {
        "adversary": "cheating-refresher",
        "trials": trials,
        "kappa": kappa,
        "seed": seed,
        "mode": mode,
        "caught": caught,
        "completed": completed,
        "caught_fraction": caught / trials,
        "expected_fraction": 1 - 1 / kappa,
    }
