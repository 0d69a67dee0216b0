#!/usr/bin/env python3
"""Regenerate the golden wire-format fixtures in tests/fixtures/wire/.

Deterministic: fixed seed, full-size (2048-bit) keys. Run from the repo
root after any intentional format change, and commit the results.
"""

import pathlib
import random
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from blindcash import crypto, wire

OUT = pathlib.Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "wire"


def main():
    rng = random.Random(0xF1D0)
    grp = crypto.FULL_GROUP
    pub, priv = crypto.rsa_keygen(2048, 65537, rng)
    w = pub.width
    ew = grp.element_width
    sw = grp.scalar_width

    denom_id = crypto.sha256(pub.encode())
    target_id = crypto.sha256(b"target" + pub.encode())
    coin = crypto.group_keygen(grp, rng)
    coin_pub = grp.encode_element(coin.pub)
    f = crypto.fdh(pub.n, coin_pub)
    b = crypto.sample_blinding(pub.n, rng)
    f_blinded = crypto.int_to_bytes(crypto.blind(f, b, pub), w)
    denom_sig = crypto.int_to_bytes(
        crypto.unblind(crypto.blind_sign(priv, crypto.blind(f, b, pub)), b, pub.n), w
    )
    contract_hash = crypto.sha256(b"contract-fixture")
    session_id = crypto.sha256(b"session-fixture")

    gateway = crypto.group_keygen(grp, rng)
    counter = crypto.coin_sign(
        gateway.priv, wire.withdraw_auth_bytes(denom_id, f_blinded), grp, rng
    )
    pay_sig = crypto.coin_sign(
        coin.priv, wire.deposit_sign_bytes(contract_hash, "bank-1", "merchant-1", 100), grp, rng
    )

    registry_doc = (
        b'{"version":1,"denominations":[{"denom_id":"%s","value":100}]}'
        % denom_id.hex().encode()
    )

    kappa = 3
    commitments = [
        (
            grp.encode_element(crypto.group_keygen(grp, rng).pub),
            crypto.int_to_bytes(rng.randrange(pub.n), w),
        )
        for _ in range(kappa)
    ]
    commit = wire.RefreshCommitReq(
        old_denom_id=denom_id,
        old_coin_pub=coin_pub,
        old_denom_sig=denom_sig,
        target_denom_id=target_id,
        residual_claim=400,
        commitments=commitments,
    )
    csig = crypto.coin_sign(coin.priv, commit.signing_bytes(), grp, rng)
    commit.coin_sig_e = grp.encode_scalar(csig.e)
    commit.coin_sig_s = grp.encode_scalar(csig.s)

    messages = [
        ("keys", wire.Keys(registry_doc=registry_doc)),
        ("withdraw_req", wire.WithdrawReq(
            denom_id=denom_id, f_blinded=f_blinded, bank_id="bank-1",
            countersig_e=grp.encode_scalar(counter.e),
            countersig_s=grp.encode_scalar(counter.s))),
        ("withdraw_resp", wire.WithdrawResp(
            blind_sig=crypto.int_to_bytes(crypto.blind_sign(priv, crypto.blind(f, b, pub)), w))),
        ("deposit_req", wire.DepositReq(
            denom_id=denom_id, coin_pub=coin_pub, denom_sig=denom_sig,
            amount=100, contract_hash=contract_hash,
            merchant_bank_id="bank-1", merchant_id="merchant-1",
            coin_sig_e=grp.encode_scalar(pay_sig.e),
            coin_sig_s=grp.encode_scalar(pay_sig.s))),
        ("deposit_resp", wire.DepositResp(
            coin_pub=coin_pub, contract_hash=contract_hash,
            amount=100, timestamp=1_700_000_000)),
        ("refresh_commit_req", commit),
        ("refresh_challenge", wire.RefreshChallenge(session_id=session_id, gamma=2)),
        ("refresh_reveal_req", wire.RefreshRevealReq(
            session_id=session_id,
            transfer_privs=[crypto.int_to_bytes(rng.randrange(1, grp.q), sw)
                            for _ in range(kappa - 1)])),
        ("refresh_reveal_resp", wire.RefreshRevealResp(
            status=wire.REFRESH_COMPLETED,
            blind_sig=crypto.int_to_bytes(rng.randrange(pub.n), w))),
        ("link_req", wire.LinkReq(coin_pub=coin_pub)),
        ("link_resp", wire.LinkResp(entries=[
            (grp.encode_element(crypto.group_keygen(grp, rng).pub),
             crypto.int_to_bytes(rng.randrange(pub.n), w),
             target_id)
            for _ in range(3)])),
        ("revocation_notice", wire.RevocationNotice(denom_id=denom_id)),
        ("refund_req", wire.RefundReq(
            denom_id=denom_id, coin_pub=coin_pub, denom_sig=denom_sig,
            blinding=crypto.int_to_bytes(b, w), bank_id="bank-1")),
        ("refund_resp", wire.RefundResp(credited=100)),
        ("error", wire.Error(code="double-spend", detail="residual exhausted")),
    ]

    OUT.mkdir(parents=True, exist_ok=True)
    for stale in OUT.glob("*.bin"):
        stale.unlink()
    for name, msg in messages:
        data = wire.encode(msg)
        path = OUT / f"{msg.TYPE:02d}_{name}.bin"
        path.write_bytes(data)
        print(f"{path.name:32s} {len(data):6d} bytes")


if __name__ == "__main__":
    main()
