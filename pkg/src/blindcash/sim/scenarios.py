"""Named scenarios: the step-by-step withdrawal/spend replay, the
conspiring-merchant demonstration, and stock configurations for the CLI and
the test suite."""

from __future__ import annotations

from .. import wire
from ..crypto import (
    blind,
    coin_sign,
    fdh,
    group_keygen,
    int_from_bytes,
    int_to_bytes,
    rsa_verify,
    sample_blinding,
    sha256,
    unblind,
)
from ..errors import ScenarioError
from ..wallet import ORIGIN_WITHDRAWN, Coin

# trace events that realize each step of the two protocol figures
FIG1_STEPS = [
    ("fig1.step1.customer-authenticates", None),
    ("fig1.step2.wallet-creates-and-blinds-coin", None),
    ("fig1.step3.wallet-sends-blinded-coin", None),
    ("fig1.step4.bank-debits-customer", "gateway.customer.debit"),
    ("fig1.step5.bank-countersigns-and-forwards", "gateway.withdraw.forward"),
    ("fig1.step6.mint-debits-bank-and-blind-signs", "mint.withdraw.issued"),
    ("fig1.step7.mint-returns-blind-signature", "gateway.withdraw.mint_response"),
    ("fig1.step8.bank-relays-blind-signature", "gateway.withdraw.relayed"),
    ("fig1.step9.wallet-unblinds-verifies-stores", None),
]
FIG2_STEPS = [
    ("fig2.step1.customer-signs-contract-with-coin", None),
    ("fig2.step2.merchant-validates-and-forwards", "merchant.payment.validated"),
    ("fig2.step3.bank-confirms-merchant-and-forwards", "gateway.deposit.forward"),
    ("fig2.step4.mint-verifies-and-checks-spent-list", "mint.deposit.verified"),
    ("fig2.step5.mint-records-coin-and-credits-bank", "mint.deposit.recorded"),
    ("fig2.step6.mint-confirms-to-bank", "gateway.deposit.mint_response"),
    ("fig2.step7.bank-credits-merchant", "gateway.merchant.credit"),
    ("fig2.step8.bank-informs-merchant", "merchant.deposit.confirmed"),
    ("fig2.step9.merchant-delivers", "merchant.delivered"),
]


def _assert_trace_order(log, names: list[str], start_index: int):
    """Every name must appear in the log after start_index, in order."""
    pos = start_index
    for name in names:
        found = None
        for i in range(pos, len(log.entries)):
            entry = log.entries[i]
            if entry["event"] == "trace" and entry.get("name") == name:
                found = i
                break
        if found is None:
            raise ScenarioError(f"protocol step trace {name} missing or out of order")
        pos = found + 1


def fig_replay_flow(dep, op):
    """Replay the withdrawal figure (9 steps) then the spend/deposit figure
    (9 steps) with one coin, asserting the trace sequence and the final
    balance identity: customer debit = merchant credit = coin value."""
    log = dep.log
    wallet = dep.wallets[op.get("wallet", 0)]
    # prefer a merchant banking at a different gateway: the full two-tier path
    merchant = None
    customer_gw = dep.gateway_of_wallet(op.get("wallet", 0))
    for j, cand in enumerate(dep.merchants):
        if dep.gateway_of_merchant(j).bank_id != customer_gw.bank_id:
            merchant = cand
            break
    merchant = merchant or dep.merchants[0]
    value = op.get("amount", dep.config.denominations[0])
    entry = next(e for e in wallet.registry.entries.values() if e["value"] == value)
    grp = dep.profile.group

    customer_before = customer_gw.customer_balance(wallet.customer_id)
    merchant_gw = next(g for g in dep.gateways if g.bank_id == merchant.bank_id)
    merchant_before = merchant_gw.merchant_balance(merchant.merchant_id)
    trace_start = len(log.entries)

    # figure 1: withdrawal
    log.emit(FIG1_STEPS[0][0])
    customer_gw.authenticate(wallet.customer_id, wallet.secret)

    kp = group_keygen(grp, wallet.rng)
    coin_pub = grp.encode_element(kp.pub)
    pub = entry["pub"]
    f = fdh(pub.n, coin_pub)
    b = sample_blinding(pub.n, wallet.rng)
    f_blinded = int_to_bytes(blind(f, b, pub), pub.width)
    log.emit(FIG1_STEPS[1][0])

    log.emit(FIG1_STEPS[2][0])
    blind_sig = wallet.gateway.withdraw_for_customer(
        wallet.customer_id, wallet.secret, entry["denom_id"], f_blinded)

    s = unblind(int_from_bytes(blind_sig), b, pub.n)
    if not rsa_verify(pub, f, s):
        raise ScenarioError("withdrawn coin failed verification")
    coin = Coin(denom_id=entry["denom_id"], priv=kp.priv, pub_bytes=coin_pub,
                denom_sig=s, face_value=value, local_residual=value, blinding=b,
                origin_kind=ORIGIN_WITHDRAWN, origin_withdrawal=sha256(f_blinded))
    wallet.coins.append(coin)
    log.emit(FIG1_STEPS[8][0])
    _assert_trace_order(log, [t for _, t in FIG1_STEPS if t], trace_start)
    for name, trace in FIG1_STEPS:
        if trace:
            log.emit(name, realized_by=trace)

    # figure 2: spend and deposit
    trace_start = len(log.entries)
    contract = merchant.create_contract(value, op.get("desc", "fig-replay").encode())
    parts = wallet.pay(contract)
    log.emit(FIG2_STEPS[0][0])
    accepted = merchant.validate_payment(contract, parts)
    result = merchant.settle(contract, accepted)
    if not result.delivered:
        raise ScenarioError("fig replay settlement failed")
    _assert_trace_order(log, [t for _, t in FIG2_STEPS if t], trace_start)
    for name, trace in FIG2_STEPS:
        if trace:
            log.emit(name, realized_by=trace)

    customer_after = customer_gw.customer_balance(wallet.customer_id)
    merchant_after = merchant_gw.merchant_balance(merchant.merchant_id)
    debit = customer_before - customer_after
    credit = merchant_after - merchant_before
    if not (debit == credit == value):
        raise ScenarioError(
            f"balance identity violated: debit {debit}, credit {credit}, value {value}")
    log.emit("fig_replay.balances", customer_debit=debit, merchant_credit=credit,
             coin_value=value)


def conspiring_merchant_flow(dep, op) -> int:
    """A merchant tries to take value through the customer's refresh instead
    of a deposit. Whoever deposits the linked change coin first wins; the
    other side hits DoubleSpend, so the merchant never gains exclusive,
    hidden control. Returns the number of double-spend rejections seen."""
    log = dep.log
    wallet = dep.wallets[op.get("wallet", 0)]
    conspirator = dep.merchants[op.get("merchant", 0)]
    honest = dep.merchants[op.get("other_merchant", len(dep.merchants) - 1)]
    variant = op.get("variant", "customer-first")
    values = sorted(dep.config.denominations)
    big = values[-1]
    small = values[0]

    (coin,) = wallet.withdraw(big, dep.clock.now())
    target = next(e for e in wallet.registry.entries.values() if e["value"] == small)
    change = wallet.refresh(coin, target["denom_id"])
    # hand the change coin key material to the merchant off the books
    wallet.coins.remove(change)
    log.emit("conspiracy.handoff", value=small)

    def merchant_deposit():
        contract = conspirator.create_contract(small, b"off-book settlement")
        payload = wire.deposit_sign_bytes(
            contract.contract_hash, conspirator.bank_id,
            conspirator.merchant_id, small)
        sig = coin_sign(change.priv, payload, dep.profile.group, conspirator.rng)
        part = wire.DepositReq(
            denom_id=change.denom_id, coin_pub=change.pub_bytes,
            denom_sig=int_to_bytes(change.denom_sig, target["pub"].width),
            amount=small, contract_hash=contract.contract_hash,
            merchant_bank_id=conspirator.bank_id,
            merchant_id=conspirator.merchant_id,
            coin_sig_e=dep.profile.group.encode_scalar(sig.e),
            coin_sig_s=dep.profile.group.encode_scalar(sig.s))
        return conspirator.settle(contract, [part])

    def customer_reclaim():
        from ..wallet import PaymentPlan

        recovered = wallet.derive_linked_change(coin)
        if not recovered:
            return None
        contract = honest.create_contract(small, b"reclaimed change")
        # pay with the recovered change coin specifically
        plan = PaymentPlan(contract_hash=contract.contract_hash,
                           merchant_bank_id=contract.merchant_bank_id,
                           merchant_id=contract.merchant_id,
                           items=[(recovered[0], small)], total=small)
        parts = wallet.pay(contract, plan)
        return honest.settle(contract, parts)

    # link data is public and identity-free: group elements, blind
    # signatures, denomination ids only
    link = dep.mint.link(coin.pub_bytes)
    for t_pub, blind_sig, denom_id in link.entries:
        if not (isinstance(t_pub, bytes) and isinstance(blind_sig, bytes)
                and len(denom_id) == 32):
            raise ScenarioError("link entries must be raw public data")
    blob = b"".join(t + s + d for t, s, d in link.entries)
    for ident in [wallet.customer_id, conspirator.merchant_id,
                  *(gw.bank_id for gw in dep.gateways)]:
        if ident.encode() in blob:
            raise ScenarioError("identity leaked into link data")
    log.emit("conspiracy.link_checked", entries=len(link.entries))

    rejections = 0
    if variant == "customer-first":
        reclaim = customer_reclaim()
        if reclaim is None or not reclaim.delivered:
            raise ScenarioError("customer reclaim should have settled first")
        result = merchant_deposit()
        if result.delivered:
            raise ScenarioError("conspirator deposit must hit DoubleSpend")
        rejections += 1
        log.emit("conspiracy.outcome", variant=variant,
                 winner="customer", merchant_claim="double-spend")
    else:
        result = merchant_deposit()
        if not result.delivered:
            raise ScenarioError("merchant deposit should settle in this variant")
        reclaim = customer_reclaim()
        if reclaim is not None and reclaim.delivered:
            raise ScenarioError("customer reclaim must hit DoubleSpend")
        rejections += 1
        log.emit("conspiracy.outcome", variant=variant,
                 winner="merchant", customer_claim="double-spend")
    return rejections


# -- stock configurations ------------------------------------------------------

def happy_path_config(seed=1, customers=100) -> dict:
    script = []
    for i in range(customers):
        script.append({"op": "withdraw", "wallet": i, "amount": 100})
        script.append({"op": "pay", "wallet": i, "merchant": i % 4, "amount": 100})
    script.append({"op": "audit"})
    return {
        "name": "happy-path", "seed": seed, "mode": "toy",
        "denominations": [100, 500], "gateways": 2, "wallets": customers,
        "merchants": 4, "script": script,
    }


def double_spender_config(seed=2) -> dict:
    return {
        "name": "double-spender", "seed": seed, "mode": "toy",
        "denominations": [100], "gateways": 2, "wallets": 2, "merchants": 2,
        "script": [
            {"op": "withdraw", "wallet": 0, "amount": 100},
            {"op": "withdraw", "wallet": 1, "amount": 100},
            {"op": "double_spend", "wallet": 0, "merchants": [0, 1], "amount": 100},
            {"op": "pay", "wallet": 1, "merchant": 0, "amount": 100},
            {"op": "audit"},
        ],
    }


def duplication_config(seed=3, duplication=0.0) -> dict:
    cfg = happy_path_config(seed=seed, customers=20)
    cfg["name"] = "duplication"
    cfg["duplication"] = duplication
    return cfg


def fig_replay_config(seed=4) -> dict:
    return {
        "name": "fig-replay", "seed": seed, "mode": "toy",
        "denominations": [100], "gateways": 2, "wallets": 1, "merchants": 2,
        "script": [{"op": "fig_replay", "wallet": 0, "amount": 100}],
    }


def revocation_config(seed=5) -> dict:
    script = [{"op": "withdraw", "wallet": 0, "amount": 100} for _ in range(10)]
    for k in range(4):
        script.append({"op": "pay", "wallet": 0, "merchant": 0, "amount": 100})
    script += [
        {"op": "revoke", "value": 100},
        {"op": "recover", "wallet": 0},
        {"op": "audit"},
    ]
    return {
        "name": "revocation", "seed": seed, "mode": "toy",
        "denominations": [100], "gateways": 1, "wallets": 1, "merchants": 1,
        "script": script,
    }


def conspiring_merchant_config(seed=6, variant="customer-first") -> dict:
    return {
        "name": f"conspiring-merchant-{variant}", "seed": seed, "mode": "toy",
        "denominations": [100, 1000], "gateways": 2, "wallets": 1, "merchants": 2,
        "script": [
            {"op": "conspiring_merchant", "wallet": 0, "merchant": 0,
             "other_merchant": 1, "variant": variant},
        ],
    }


NAMED_CONFIGS = {
    "happy-path": happy_path_config,
    "double-spender": double_spender_config,
    "duplication": duplication_config,
    "fig-replay": fig_replay_config,
    "revocation": revocation_config,
    "conspiring-merchant": conspiring_merchant_config,
}
