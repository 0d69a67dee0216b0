"""Throughput benchmarks.

Signing benchmarks run single-core. Deposit scaling runs one worker process
per shard: shard isolation means deposits for different key ranges share no
state, so capacity grows by adding database servers, one per range;
processes (not threads) are required to see that CPU scaling from Python.
"""

from __future__ import annotations

import multiprocessing
import os
import platform
import random
import time

from .. import wire
from ..crypto import (
    PROFILES,
    coin_sign,
    fdh,
    group_keygen,
    int_to_bytes,
    rsa_keygen,
    rsa_sign,
    rsa_verify,
)
from ..mint import DenominationConfig, DenominationRegistry, Mint, setup_denominations
from ..store import MemoryKV, ShardMap, memory_sharded

EPOCH = 1_700_000_000
YEAR = 365 * 24 * 3600


class _FixedClock:
    def now(self):
        return EPOCH + 1


def machine_info() -> dict:
    model = "unknown"
    try:
        with open("/proc/cpuinfo", "r", encoding="utf-8") as fh:
            for line in fh:
                if line.lower().startswith("model name"):
                    model = line.split(":", 1)[1].strip()
                    break
    except OSError:
        pass
    return {
        "platform": platform.platform(),
        "machine": platform.machine(),
        "cpu_model": model,
        "cpu_count": os.cpu_count(),
        "python": platform.python_version(),
    }


def sign_bench(duration: float = 2.0, bits: int = 2048, seed: int = 1) -> dict:
    """Single-core RSA blind_sign and verify rates at deployment key size."""
    rng = random.Random(seed)
    pub, priv = rsa_keygen(bits, 65537, rng)
    blinded = [rng.randrange(pub.n) for _ in range(256)]

    from ..crypto import blind_sign

    # warm up the modexp backend before timing
    for x in blinded[:8]:
        blind_sign(priv, x)
    count = 0
    t0 = time.perf_counter()
    while time.perf_counter() - t0 < duration:
        blind_sign(priv, blinded[count % 256])
        count += 1
    sign_elapsed = time.perf_counter() - t0

    msgs = [(m, rsa_sign(priv, m)) for m in blinded[:64]]
    vcount = 0
    t0 = time.perf_counter()
    while time.perf_counter() - t0 < duration / 2:
        m, s = msgs[vcount % 64]
        rsa_verify(pub, m, s)
        vcount += 1
    verify_elapsed = time.perf_counter() - t0

    return {
        "bits": bits,
        "blind_sign_ops_per_sec": round(count / sign_elapsed, 1),
        "verify_ops_per_sec": round(vcount / verify_elapsed, 1),
        "machine": machine_info(),
    }


def _make_deposit_requests(profile, registry, denom, count, seed):
    rng = random.Random(seed)
    grp = profile.group
    reqs = []
    for i in range(count):
        kp = group_keygen(grp, rng)
        coin_pub = grp.encode_element(kp.pub)
        f = fdh(denom.pub.n, coin_pub)
        s = rsa_sign(denom.priv, f)
        contract_hash = bytes(rng.getrandbits(8) for _ in range(32))
        payload = wire.deposit_sign_bytes(contract_hash, "bank-bench", "m-bench", 100)
        sig = coin_sign(kp.priv, payload, grp, rng)
        reqs.append(wire.DepositReq(
            denom_id=denom.denom_id, coin_pub=coin_pub,
            denom_sig=int_to_bytes(s, denom.pub.width), amount=100,
            contract_hash=contract_hash, merchant_bank_id="bank-bench",
            merchant_id="m-bench",
            coin_sig_e=grp.encode_scalar(sig.e),
            coin_sig_s=grp.encode_scalar(sig.s)))
    return reqs


def _deposit_worker(args):
    registry_json, profile_name, encoded_reqs, seed = args
    profile = PROFILES[profile_name]
    registry = DenominationRegistry.from_json(registry_json)
    rng = random.Random(seed)
    mint = Mint(registry, memory_sharded(1), MemoryKV(), MemoryKV(),
                _FixedClock(), rng, profile)
    grp = profile.group
    gw = group_keygen(grp, rng)
    mint.register_bank("bank-bench", grp.encode_element(gw.pub), 0)
    reqs = [wire.decode(raw) for raw in encoded_reqs]
    t0 = time.perf_counter()
    for req in reqs:
        mint.deposit(req)
    return time.perf_counter() - t0, len(reqs)


def deposit_bench(shard_counts=(1, 2, 4), total_ops: int = 200,
                  mode: str = "full", seed: int = 7) -> dict:
    """Deposit throughput vs shard count, one process per shard.

    The same request corpus is partitioned by coin-hash range, mirroring
    range sharding; every worker owns one range and one store.
    """
    profile = PROFILES[mode]
    rng = random.Random(seed)
    configs = [DenominationConfig(value=100, withdraw_start=EPOCH,
                                  withdraw_end=EPOCH + YEAR,
                                  deposit_end=EPOCH + 2 * YEAR,
                                  legal_end=EPOCH + 3 * YEAR)]
    registry = setup_denominations(configs, profile, rng)
    denom = registry.all()[0]
    reqs = _make_deposit_requests(profile, registry, denom, total_ops, seed + 1)
    registry_json = registry.to_json()

    ctx = multiprocessing.get_context("fork")
    results = {}
    for shards in shard_counts:
        shard_map = ShardMap.even(shards)
        buckets = [[] for _ in range(shards)]
        for req in reqs:
            buckets[shard_map.route(req.coin_pub)].append(wire.encode(req))
        args = [(registry_json, mode, bucket, seed + 100 + i)
                for i, bucket in enumerate(buckets)]
        # every shard count pays the same pool overhead, so ratios compare
        # shard-parallel work, not process bootstrapping
        t0 = time.perf_counter()
        with ctx.Pool(processes=shards) as pool:
            outcomes = pool.map(_deposit_worker, args)
        elapsed = time.perf_counter() - t0
        done = sum(n for _, n in outcomes)
        results[shards] = {
            "ops": done,
            "elapsed_sec": round(elapsed, 3),
            "ops_per_sec": round(done / elapsed, 1),
        }
    return {
        "mode": mode,
        "total_ops": total_ops,
        "shards": results,
        "machine": machine_info(),
    }


def store_growth_bench(deposits: int = 100_000, seed: int = 9) -> dict:
    """Store size growth across deposit volume: one record per coin."""
    checkpoints = {}
    store = memory_sharded(4)
    rng = random.Random(seed)
    from ..mint import SpentRecord

    for i in range(1, deposits + 1):
        coin = rng.randbytes(20)
        rec = SpentRecord(coin_pub=coin, denom_id=bytes(32))
        rec.entries.append({"kind": "deposit", "contract_hash": "00" * 32,
                            "bank": "b", "merchant": "m", "amount": 100, "ts": EPOCH})
        store.cas(coin, 0, rec.to_bytes())
        if i in (deposits // 4, deposits // 2, deposits):
            records, nbytes = store.size_info()
            checkpoints[i] = {"records": records, "bytes": nbytes}
    return {"deposits": deposits, "checkpoints": checkpoints}
