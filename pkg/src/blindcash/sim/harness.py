"""Deterministic in-process deployment: one mint, N bank gateways, M
wallets, K merchants wired over the fault-injecting virtual-time bus.

Everything derives from one seed: actor RNGs are seeded from
sha256(seed, actor name), message faults from the bus's own child seed, and
time is virtual, so identical (config, seed) pairs produce byte-identical
event logs and reports.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field

from .. import wire
from ..crypto import PROFILES, sha256
from ..errors import RefreshForfeited, ScenarioError
from ..gateway import BankGateway
from ..merchant import Merchant
from ..mint import DenominationConfig, Mint, PublishedRegistry, setup_denominations
from ..store import MemoryKV, file_sharded, memory_sharded
from ..wallet import Wallet
from .bus import Bus, VirtualClock
from .endpoints import GatewayClient, GatewayEndpoint, MintClient, MintEndpoint

EPOCH_START = 1_700_000_000
YEAR = 365 * 24 * 3600


def child_seed(seed: int, name: str) -> int:
    return int.from_bytes(sha256(seed.to_bytes(8, "big") + name.encode()), "big")


class EventLog:
    """Append-only scenario log; serializes to canonical JSON lines."""

    def __init__(self, clock: VirtualClock):
        self.clock = clock
        self.entries: list[dict] = []

    def emit(self, event: str, **data):
        entry = {"i": len(self.entries), "t_ms": self.clock.now_ms, "event": event}
        entry.update(data)
        self.entries.append(entry)

    def tracer(self, actor: str):
        def trace(event, data):
            self.emit("trace", actor=actor, name=event, **data)
        return trace

    def to_bytes(self) -> bytes:
        return b"".join(
            json.dumps(e, sort_keys=True, separators=(",", ":")).encode() + b"\n"
            for e in self.entries)


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    seed: int = 1
    mode: str = "toy"                      # crypto profile name
    denominations: list = field(default_factory=lambda: [100, 500, 1000])
    refresh_fee: int = 0
    gateways: int = 1
    wallets: int = 1
    merchants: int = 1
    customer_balance: int = 1_000_000
    bank_reserve: int = 100_000_000
    daily_limit: int | None = None
    kappa: int = 3
    shard_count: int = 1
    loss: float = 0.0
    duplication: float = 0.0
    latency_ms: tuple = (5, 15)
    script: list = field(default_factory=list)
    workload_ops: int = 0                  # arrival-style generated ops
    store_dir: str | None = None           # file-backed spent store

    def __post_init__(self):
        if self.kappa < 2:
            raise ScenarioError("kappa must be >= 2 (kappa=1 is never caught)")
        if self.mode not in PROFILES:
            raise ScenarioError(f"unknown crypto mode {self.mode}")
        if not self.script and not self.workload_ops:
            raise ScenarioError("config needs a script or workload_ops")

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ScenarioError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**{k: v for k, v in data.items()})
        cfg.latency_ms = tuple(cfg.latency_ms)
        return cfg

    @classmethod
    def from_json(cls, raw: bytes) -> "ScenarioConfig":
        return cls.from_dict(json.loads(raw.decode()))


class Deployment:
    def __init__(self, config: ScenarioConfig):
        self.config = config
        profile = PROFILES[config.mode]
        self.profile = profile
        self.clock = VirtualClock(EPOCH_START)
        self.log = EventLog(self.clock)
        self.bus = Bus(child_seed(config.seed, "bus"), self.clock,
                       loss=config.loss, duplication=config.duplication,
                       latency_ms=config.latency_ms, log=self.log)

        t0 = EPOCH_START
        denom_configs = [
            DenominationConfig(value=v, withdraw_start=t0 - 1,
                               withdraw_end=t0 + YEAR,
                               deposit_end=t0 + 2 * YEAR, legal_end=t0 + 3 * YEAR,
                               refresh_fee=config.refresh_fee)
            for v in config.denominations
        ]
        registry = setup_denominations(
            denom_configs, profile, random.Random(child_seed(config.seed, "keys")))
        if config.store_dir:
            spent = file_sharded(config.store_dir, config.shard_count)
        else:
            spent = memory_sharded(config.shard_count)
        self.mint = Mint(registry, spent, MemoryKV(), MemoryKV(), self.clock,
                         random.Random(child_seed(config.seed, "mint")), profile,
                         tracer=self.log.tracer("mint"))
        self.bus.register("mint", MintEndpoint(self.mint).handle)

        self.gateways: list[BankGateway] = []
        for i in range(config.gateways):
            bank_id = f"bank-{i:03d}"
            gw = BankGateway(
                bank_id, MintClient(self.bus, bank_id), None, profile,
                random.Random(child_seed(config.seed, bank_id)),
                tracer=self.log.tracer(bank_id))
            self.mint.register_bank(bank_id, gw.signing_pub_bytes(), config.bank_reserve)
            self.bus.register(bank_id, GatewayEndpoint(gw).handle)
            self.gateways.append(gw)

        self.wallets: list[Wallet] = []
        for i in range(config.wallets):
            name = f"wallet-{i:03d}"
            customer = f"cust-{i:03d}"
            secret = f"pw-{i:03d}"
            gw = self.gateways[i % config.gateways]
            gw.add_customer(customer, secret, balance=config.customer_balance,
                            daily_limit=config.daily_limit)
            wallet = Wallet(
                customer, secret,
                GatewayClient(self.bus, name, gw.bank_id, gw.bank_id),
                MintClient(self.bus, name), profile,
                random.Random(child_seed(config.seed, name)),
                kappa=config.kappa, tracer=self.log.tracer(name))
            self.wallets.append(wallet)

        self.merchants: list[Merchant] = []
        for j in range(config.merchants):
            name = f"merchant-{j:03d}"
            gw = self.gateways[j % config.gateways]
            gw.add_merchant(name)
            merchant = Merchant(
                name, gw.bank_id,
                GatewayClient(self.bus, name, gw.bank_id, gw.bank_id),
                PublishedRegistry(self.mint.registry_document()),
                random.Random(child_seed(config.seed, name)), profile,
                tracer=self.log.tracer(name))
            self.merchants.append(merchant)

        self.initial_reserves = {gw.bank_id: config.bank_reserve for gw in self.gateways}

    def gateway_of_wallet(self, i: int) -> BankGateway:
        return self.gateways[i % self.config.gateways]

    def gateway_of_merchant(self, j: int) -> BankGateway:
        return self.gateways[j % self.config.gateways]


@dataclass
class MetricsReport:
    scenario: str
    seed: int
    ops_total: int = 0
    wall_seconds: float = 0.0
    virtual_ms: int = 0
    latency_ms: dict = field(default_factory=dict)     # op -> {count,p50,p95,p99}
    throughput_ops_per_wall_sec: float = 0.0
    store_records: int = 0
    store_bytes: int = 0
    double_spend_attempts: int = 0
    double_spend_rejections: int = 0
    forfeitures: int = 0
    conservation_green: bool = False
    conservation: dict = field(default_factory=dict)
    balances: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "ops_total": self.ops_total,
            "wall_seconds": round(self.wall_seconds, 3),
            "virtual_ms": self.virtual_ms,
            "latency_ms": self.latency_ms,
            "throughput_ops_per_wall_sec": round(self.throughput_ops_per_wall_sec, 1),
            "store_records": self.store_records,
            "store_bytes": self.store_bytes,
            "double_spend_attempts": self.double_spend_attempts,
            "double_spend_rejections": self.double_spend_rejections,
            "forfeitures": self.forfeitures,
            "conservation_green": self.conservation_green,
            "conservation": self.conservation,
            "balances": self.balances,
        }

    def to_json(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2).encode() + b"\n"

    def summary(self) -> str:
        lines = [
            f"scenario {self.scenario} seed {self.seed}: {self.ops_total} ops "
            f"in {self.wall_seconds:.2f}s wall / {self.virtual_ms} virtual ms",
            f"conservation: {'GREEN' if self.conservation_green else 'RED'}",
            f"double-spend: {self.double_spend_rejections}/{self.double_spend_attempts} rejected",
            f"forfeitures: {self.forfeitures}",
            f"spent store: {self.store_records} records, {self.store_bytes} bytes",
        ]
        for op, stats in sorted(self.latency_ms.items()):
            lines.append(
                f"  {op}: n={stats['count']} p50={stats['p50']}ms "
                f"p95={stats['p95']}ms p99={stats['p99']}ms")
        return "\n".join(lines)


def _percentile(sorted_values, q):
    if not sorted_values:
        return 0
    idx = min(len(sorted_values) - 1, max(0, round(q * (len(sorted_values) - 1))))
    return sorted_values[idx]


class ScenarioRunner:
    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.dep = Deployment(config)
        self.report = MetricsReport(scenario=config.name, seed=config.seed)
        self.durations: dict[str, list] = {}

    # -- script ops -------------------------------------------------------------

    def run(self) -> tuple[MetricsReport, bytes]:
        dep = self.dep
        log = dep.log
        log.emit("scenario.start", name=self.config.name, seed=self.config.seed,
                 mode=self.config.mode)
        script = list(self.config.script) + self._generated_ops()
        wall_start = time.monotonic()
        for op in script:
            name = op["op"]
            t0 = dep.clock.now_ms
            log.emit("op.start", op=name)
            handler = getattr(self, f"_op_{name}", None)
            if handler is None:
                raise ScenarioError(f"unknown op {name}")
            handler(op)
            self.durations.setdefault(name, []).append(dep.clock.now_ms - t0)
            self.report.ops_total += 1
        dep.bus.drain()
        self.report.wall_seconds = time.monotonic() - wall_start
        self.report.virtual_ms = dep.clock.now_ms
        if self.report.wall_seconds > 0:
            self.report.throughput_ops_per_wall_sec = (
                self.report.ops_total / self.report.wall_seconds)
        for op, values in self.durations.items():
            values.sort()
            self.report.latency_ms[op] = {
                "count": len(values),
                "p50": _percentile(values, 0.50),
                "p95": _percentile(values, 0.95),
                "p99": _percentile(values, 0.99),
            }
        records, nbytes = dep.mint.spent.size_info()
        self.report.store_records = records
        self.report.store_bytes = nbytes
        self._check_conservation()
        log.emit("scenario.end",
                 conservation="green" if self.report.conservation_green else "red")
        return self.report, log.to_bytes()

    def _generated_ops(self) -> list:
        if not self.config.workload_ops:
            return []
        rng = random.Random(child_seed(self.config.seed, "workload"))
        values = sorted(self.config.denominations)
        ops = []
        for _ in range(self.config.workload_ops):
            w = rng.randrange(self.config.wallets)
            m = rng.randrange(self.config.merchants)
            v = values[rng.randrange(len(values))]
            ops.append({"op": "withdraw", "wallet": w, "amount": v})
            ops.append({"op": "pay", "wallet": w, "merchant": m, "amount": v})
        return ops

    # each op below is one scripted scenario step

    def _op_withdraw(self, op):
        wallet = self.dep.wallets[op["wallet"]]
        coins = wallet.withdraw(op["amount"], self.dep.clock.now())
        self.dep.log.emit("op.withdraw", wallet=op["wallet"], amount=op["amount"],
                          coins=len(coins))

    def _op_pay(self, op):
        dep = self.dep
        wallet = dep.wallets[op["wallet"]]
        merchant = dep.merchants[op["merchant"]]
        contract = merchant.create_contract(
            op["amount"], op.get("desc", "purchase").encode())
        parts = wallet.pay(contract)
        accepted = merchant.validate_payment(contract, parts)
        result = merchant.settle(contract, accepted)
        for _, error in result.failed:
            if error is not None and getattr(error, "code", "") == "double-spend":
                self.report.double_spend_rejections += 1
        dep.log.emit("op.pay", wallet=op["wallet"], merchant=op["merchant"],
                     amount=op["amount"], delivered=result.delivered)
        if not result.delivered and not op.get("allow_failure"):
            raise ScenarioError(f"payment failed: {result.failed}")

    def _op_refresh(self, op):
        dep = self.dep
        wallet = dep.wallets[op["wallet"]]
        target_value = op["target_value"]
        target = next(e for e in wallet.registry.entries.values()
                      if e["value"] == target_value)
        need = target["value"] + target["refresh_fee"]
        coin = next(c for c in wallet.coins if 0 < c.local_residual >= need)
        try:
            wallet.refresh(coin, target["denom_id"])
        except RefreshForfeited:
            self.report.forfeitures += 1
            raise
        dep.log.emit("op.refresh", wallet=op["wallet"], target=target_value)

    def _op_derive_linked(self, op):
        wallet = self.dep.wallets[op["wallet"]]
        recovered = []
        for coin in list(wallet.coins):
            recovered.extend(wallet.derive_linked_change(coin))
        self.dep.log.emit("op.derive_linked", wallet=op["wallet"],
                          recovered=len(recovered))

    def _op_advance(self, op):
        self.dep.clock.advance_seconds(op["seconds"])
        self.dep.log.emit("op.advance", seconds=op["seconds"])

    def _op_rollover(self, op):
        for gw in self.dep.gateways:
            gw.day_rollover()
        self.dep.log.emit("op.rollover")

    def _op_revoke(self, op):
        denom = next(d for d in self.dep.mint.registry.all()
                     if d.value == op["value"])
        self.dep.mint.revoke_denomination(denom.denom_id)
        for gw in self.dep.gateways:
            gw.sync_registry()
        self.dep.log.emit("op.revoke", value=op["value"])

    def _op_recover(self, op):
        dep = self.dep
        wallet = dep.wallets[op["wallet"]]
        revoked = [d for d in dep.mint.registry.all() if d.revoked]
        total = 0
        for denom in revoked:
            credited, failures = wallet.recover_revoked(
                wire.RevocationNotice(denom_id=denom.denom_id))
            total += credited
        dep.log.emit("op.recover", wallet=op["wallet"], credited=total)

    def _op_gc(self, op):
        removed = self.dep.mint.gc()
        self.dep.log.emit("op.gc", removed=removed)

    def _op_audit(self, op):
        for denom in self.dep.mint.registry.all():
            report = self.dep.mint.audit_denomination(denom.denom_id)
            self.dep.log.emit(
                "op.audit", value=denom.value, issued=report.issued_value,
                deposited=report.deposited_value, refunded=report.refunded_value,
                forfeited=report.forfeited_value, violation=report.violation)

    def _op_double_spend(self, op):
        """Adversary: sign one coin's full value to two merchants; exactly
        one deposit settles."""
        from ..crypto import coin_sign, int_to_bytes

        dep = self.dep
        wallet = dep.wallets[op["wallet"]]
        amount = op["amount"]
        coin = next(c for c in wallet.coins
                    if c.local_residual == c.face_value == amount)
        entry = wallet.registry.get(coin.denom_id)
        outcomes = []
        for j in op["merchants"]:
            merchant = dep.merchants[j]
            contract = merchant.create_contract(amount, b"double-spend")
            payload = wire.deposit_sign_bytes(
                contract.contract_hash, merchant.bank_id, merchant.merchant_id, amount)
            sig = coin_sign(coin.priv, payload, dep.profile.group, wallet.rng)
            part = wire.DepositReq(
                denom_id=coin.denom_id, coin_pub=coin.pub_bytes,
                denom_sig=int_to_bytes(coin.denom_sig, entry["pub"].width),
                amount=amount, contract_hash=contract.contract_hash,
                merchant_bank_id=merchant.bank_id, merchant_id=merchant.merchant_id,
                coin_sig_e=dep.profile.group.encode_scalar(sig.e),
                coin_sig_s=dep.profile.group.encode_scalar(sig.s))
            self.report.double_spend_attempts += 1
            result = merchant.settle(contract, [part])
            if result.delivered:
                outcomes.append("accepted")
            else:
                self.report.double_spend_rejections += 1
                outcomes.append("rejected")
        coin.local_residual = 0  # the one accepted deposit consumed it
        dep.log.emit("op.double_spend", wallet=op["wallet"], outcomes=outcomes)
        if outcomes.count("accepted") != 1:
            raise ScenarioError(f"double spend outcomes {outcomes}")

    def _op_stolen_key_forgery(self, op):
        """Inject the stolen-key fault: a coin signed with a compromised
        denomination private key is deposited without any withdrawal. The
        audit must flag deposits exceeding issuance."""
        from ..crypto import coin_sign, fdh, group_keygen, int_to_bytes, rsa_sign

        dep = self.dep
        denom = next(d for d in dep.mint.registry.all() if d.value == op["value"])
        merchant = dep.merchants[op.get("merchant", 0)]
        rng = random.Random(child_seed(self.config.seed, "stolen-key"))
        grp = dep.profile.group
        kp = group_keygen(grp, rng)
        coin_pub = grp.encode_element(kp.pub)
        forged_sig = rsa_sign(denom.priv, fdh(denom.pub.n, coin_pub))
        contract = merchant.create_contract(denom.value, b"forged value")
        payload = wire.deposit_sign_bytes(
            contract.contract_hash, merchant.bank_id, merchant.merchant_id,
            denom.value)
        sig = coin_sign(kp.priv, payload, grp, rng)
        part = wire.DepositReq(
            denom_id=denom.denom_id, coin_pub=coin_pub,
            denom_sig=int_to_bytes(forged_sig, denom.pub.width),
            amount=denom.value, contract_hash=contract.contract_hash,
            merchant_bank_id=merchant.bank_id, merchant_id=merchant.merchant_id,
            coin_sig_e=grp.encode_scalar(sig.e), coin_sig_s=grp.encode_scalar(sig.s))
        result = merchant.settle(contract, [part])
        report = dep.mint.audit_denomination(denom.denom_id)
        dep.log.emit("op.stolen_key_forgery", value=op["value"],
                     accepted=result.delivered, audit_violation=report.violation)
        if not report.violation:
            raise ScenarioError("audit failed to flag deposits exceeding issuance")

    def _op_fig_replay(self, op):
        from .scenarios import fig_replay_flow

        fig_replay_flow(self.dep, op)

    def _op_conspiring_merchant(self, op):
        from .scenarios import conspiring_merchant_flow

        rejections = conspiring_merchant_flow(self.dep, op)
        self.report.double_spend_attempts += rejections
        self.report.double_spend_rejections += rejections

    # -- conservation ---------------------------------------------------------------

    def _check_conservation(self):
        dep = self.dep
        totals = dep.mint.conservation_totals()
        wallets_outstanding = sum(w.total_residual() for w in dep.wallets)

        claimed = set()
        for wallet in dep.wallets:
            for coin in wallet.coins:
                if coin.origin_withdrawal:
                    claimed.add(coin.origin_withdrawal)
        unclaimed_value = 0
        for key, raw, _ in dep.mint.withdrawals.scan():
            if key not in claimed:
                unclaimed_value += json.loads(raw.decode())["value"]

        expected = (totals["issued_withdrawn"] - totals["deposited"]
                    - totals["refunded"] - totals["forfeited_reserved"]
                    - totals["fees_completed"] - unclaimed_value)

        reserves_delta = sum(
            totals["reserves"][bank] - dep.initial_reserves[bank]
            for bank in dep.initial_reserves)
        reserve_expected = (totals["deposited"] + totals["refunded"]
                            - totals["issued_withdrawn"])

        green = (wallets_outstanding == expected
                 and totals["pending_reserved"] == 0
                 and reserves_delta == reserve_expected)
        self.report.conservation_green = green
        self.report.conservation = {
            "wallets_outstanding": wallets_outstanding,
            "expected_outstanding": expected,
            "unclaimed_value": unclaimed_value,
            "reserves_delta": reserves_delta,
            "reserve_expected": reserve_expected,
            **{k: v for k, v in totals.items() if k != "reserves"},
        }
        self.report.balances = {
            "banks": dict(sorted(totals["reserves"].items())),
            "customers": {
                cust: gw.customer_balance(cust)
                for gw in dep.gateways
                for cust in sorted(gw.state_dump()["customers"])
            },
            "merchants": {
                merch: gw.merchant_balance(merch)
                for gw in dep.gateways
                for merch in sorted(gw.state_dump()["merchants"])
            },
            "wallets_outstanding": wallets_outstanding,
        }


def run(config: ScenarioConfig) -> tuple[MetricsReport, bytes]:
    """Execute a scenario; returns (metrics report, event log bytes)."""
    return ScenarioRunner(config).run()
