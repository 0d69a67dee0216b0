"""Acceptance suite: one test per release criterion, every tolerance pinned.

Each test prints one `ACCEPTANCE n PASS` line on success (run pytest with
-s or check captured output); a failing criterion fails its test.
"""

import json
import math
import os
import random
import time
from concurrent.futures import ThreadPoolExecutor

from blindcash import wire
from blindcash.crypto import (
    blind,
    blind_sign,
    rsa_key_from_primes,
    rsa_sign,
    rsa_verify,
    unblind,
)
from blindcash.errors import DoubleSpend, MalformedMessage, UnknownType, UnknownVersion
from blindcash.sim.adversary import cheating_refresher
from blindcash.sim.bench import deposit_bench, machine_info, sign_bench
from blindcash.sim.harness import ScenarioConfig, run
from blindcash.sim.scenarios import (
    double_spender_config,
    fig_replay_config,
    happy_path_config,
    revocation_config,
)

from helpers import MintHarness
import test_wire

TOY_PUB, TOY_PRIV = rsa_key_from_primes(5, 11, 3)
UNITS_55 = [b for b in range(1, 55) if math.gcd(b, 55) == 1]


def ok(n, detail):
    print(f"\nACCEPTANCE {n:2d} PASS - {detail}")


class TestAcceptance:
    def test_01_blind_signature_identity_exhaustive(self):
        t0 = time.perf_counter()
        checked = 0
        for f in range(55):
            direct = rsa_sign(TOY_PRIV, f)
            for b in UNITS_55:
                assert unblind(blind_sign(TOY_PRIV, blind(f, b, TOY_PUB)), b, 55) == direct
                checked += 1
        elapsed = time.perf_counter() - t0
        assert checked == 55 * 40
        assert elapsed < 1.0, f"exhaustive check took {elapsed:.2f}s"
        ok(1, f"unblind(blind_sign(blind(f)))=sign(f) for all {checked} (f,b); "
              f"{elapsed*1000:.0f}ms")

    def test_02_worked_vector(self):
        f_blinded = blind(2, 7, TOY_PUB)
        assert f_blinded == 26
        s_blinded = blind_sign(TOY_PRIV, 26)
        assert s_blinded == 16
        s = unblind(16, 7, 55)
        assert s == 18
        assert rsa_verify(TOY_PUB, 2, 18) is True
        ok(2, "f=2,b=7 -> f'=26, s'=16, s=18, verify=true (bit-exact)")

    def test_03_perfect_blinding_unlinkability(self):
        # every withdrawal record f' is consistent with every deposit f via
        # exactly one blinding factor, so cross-pairing reveals nothing
        for f in UNITS_55:
            for f_prime in UNITS_55:
                matches = [b for b in UNITS_55 if blind(f, b, TOY_PUB) == f_prime]
                assert len(matches) == 1, (f, f_prime, matches)
        ok(3, f"all {len(UNITS_55)}x{len(UNITS_55)} (f, f') cross-pairs have "
              f"exactly one consistent b")

    def test_04_cut_and_choose_rate(self):
        t0 = time.perf_counter()
        r3 = cheating_refresher(trials=3000, kappa=3, seed=1001, mode="toy")
        r2 = cheating_refresher(trials=3000, kappa=2, seed=1002, mode="toy")
        elapsed = time.perf_counter() - t0
        assert abs(r3["caught_fraction"] - 2 / 3) <= 0.04, r3
        assert abs(r2["caught_fraction"] - 1 / 2) <= 0.04, r2
        assert elapsed < 60, f"trials took {elapsed:.1f}s"
        ok(4, f"kappa=3 caught {r3['caught_fraction']:.3f} (2/3 +/- 0.04), "
              f"kappa=2 caught {r2['caught_fraction']:.3f} (1/2 +/- 0.04), "
              f"{elapsed:.1f}s")

    def test_05_concurrent_double_spend_prevention(self):
        h = MintHarness(values=(1000,), seed=500, shard_count=4,
                        bank_balance=200_000)
        reps = 100
        with ThreadPoolExecutor(max_workers=32) as pool:
            for rep in range(reps):
                coin = h.withdraw_coin(1000)
                reqs = [h.deposit_req(coin, 100, rng=random.Random(rep * 100 + i))
                        for i in range(32)]

                def submit(req):
                    try:
                        h.mint.deposit(req)
                        return "ok"
                    except DoubleSpend:
                        return "ds"

                outcomes = list(pool.map(submit, reqs))
                assert outcomes.count("ok") == 10, (rep, outcomes)
                assert outcomes.count("ds") == 22, (rep, outcomes)
                from blindcash.mint import SpentRecord

                rec = SpentRecord.from_bytes(h.mint.spent.get(coin.pub_bytes)[0])
                assert rec.spent_total == 1000  # never above face value
        report = h.mint.audit_denomination(h.denom(1000).denom_id)
        assert not report.violation
        assert report.deposited_value == reps * 1000
        assert report.issued_value == reps * 1000
        ok(5, f"{reps} reps x 32 racers: exactly 10 accepted / 22 DoubleSpend, "
              f"no conservation violation")

    def test_06_figure_replay_end_to_end(self):
        report, log = run(ScenarioConfig.from_dict(fig_replay_config(seed=600)))
        assert report.conservation_green
        text = log.decode()
        for fig in ("fig1", "fig2"):
            for step in range(1, 10):
                assert f'"{fig}.step{step}.' in text, f"{fig} step {step} missing"
        entry = next(json.loads(line) for line in log.splitlines()
                     if b"fig_replay.balances" in line)
        assert entry["customer_debit"] == entry["merchant_credit"] == entry["coin_value"]
        ok(6, "9+9 figure steps replayed; customer debit = merchant credit = "
              f"coin value = {entry['coin_value']}")

    def test_07_revocation_refund(self):
        report, log = run(ScenarioConfig.from_dict(revocation_config(seed=700)))
        assert report.conservation_green
        recover = next(json.loads(line) for line in log.splitlines()
                       if b'"op.recover"' in line)
        assert recover["credited"] == 600  # 10 coins of 1.00, 4 spent
        audit = next(json.loads(line) for line in log.splitlines()
                     if b'"op.audit"' in line)
        assert audit["refunded"] == 600
        assert audit["deposited"] == 400
        ok(7, "10 coins, 4 spent, revoke -> exactly the 6 unspent face values "
              "(600) refunded; spent coins 0")

    def test_08_link_derive_round_trip(self):
        import test_wallet

        trials = 100
        for trial in range(trials):
            h, gw, wallet, _ = test_wallet.make_stack(
                values=(100, 1000), seed=8000 + trial)
            (coin,) = wallet.withdraw(1000, 1_700_000_000)
            change = wallet.refresh(coin, h.denom(100).denom_id)
            wallet.coins.remove(change)
            recovered = wallet.derive_linked_change(coin)
            assert len(recovered) == 1
            got = recovered[0]
            assert got.priv == change.priv
            assert got.pub_bytes == change.pub_bytes
            assert got.denom_sig == change.denom_sig
        ok(8, f"derive_linked_change reproduced (c, C, s) bit-exactly in "
              f"{trials} seeded trials")

    def test_09_message_size_budget(self):
        fixtures = test_wire.FIXTURES
        assert len(fixtures) == len(wire.MESSAGE_TYPES)
        sizes = {}
        for path in fixtures:
            data = path.read_bytes()
            wire.decode(data)  # must be a valid message
            assert len(data) <= 10_240, f"{path.name}: {len(data)} bytes"
            sizes[path.stem] = len(data)
        ok(9, f"all {len(sizes)} message types at 2048-bit keys <= 10240 bytes "
              f"(max {max(sizes.values())})")

    def test_10_throughput(self):
        info = machine_info()
        bench = sign_bench(duration=2.0)
        rate = bench["blind_sign_ops_per_sec"]
        assert rate >= 1000, f"blind_sign {rate}/s on {info['cpu_model']}"
        detail = (f"RSA-2048 blind_sign {rate:.0f} ops/sec/core on "
                  f"{info['cpu_count']} x {info['cpu_model']} ({info['platform']})")
        cores = os.cpu_count() or 1
        if cores >= 4:
            scaling = deposit_bench(shard_counts=(1, 2, 4), total_ops=400, mode="full")
            r1 = scaling["shards"][1]["ops_per_sec"]
            r2 = scaling["shards"][2]["ops_per_sec"]
            r4 = scaling["shards"][4]["ops_per_sec"]
            assert r1 < r2 < r4, f"no strict shard scaling: {r1} -> {r2} -> {r4}"
            detail += f"; deposits {r1:.0f} -> {r2:.0f} -> {r4:.0f} ops/sec at 1/2/4 shards"
        else:
            scaling = deposit_bench(shard_counts=(1, 2), total_ops=400, mode="full")
            r1 = scaling["shards"][1]["ops_per_sec"]
            r2 = scaling["shards"][2]["ops_per_sec"]
            detail += (f"; shard-scaling clause requires >= 4 cores, this machine has "
                       f"{cores} (measured 1 shard {r1:.0f}, 2 shards {r2:.0f} ops/sec)")
        ok(10, detail)

    def test_11_determinism(self):
        for builder, seed in ((happy_path_config, 1100), (double_spender_config, 1101)):
            cfg = builder(seed=seed)
            _, log1 = run(ScenarioConfig.from_dict(cfg))
            _, log2 = run(ScenarioConfig.from_dict(cfg))
            assert log1 == log2, f"{cfg['name']} logs differ for identical config+seed"
            assert len(log1) > 0
        ok(11, "two runs with identical config+seed give byte-identical logs "
               "(happy-path, double-spender)")

    def test_12_wire_fuzz_million(self):
        corpus = [path.read_bytes() for path in test_wire.FIXTURES]
        for data in corpus:
            assert wire.encode(wire.decode(data)) == data
        rng = random.Random(0xF00D)
        accepted = (MalformedMessage, UnknownType, UnknownVersion)
        iterations = 1_000_000
        decoded = 0
        t0 = time.perf_counter()
        for i in range(iterations):
            r = i % 10
            if r < 4:
                data = rng.randbytes(rng.randrange(0, 64))
            elif r < 7:
                blob = bytearray(corpus[rng.randrange(len(corpus))])
                for _ in range(rng.randrange(1, 6)):
                    blob[rng.randrange(len(blob))] = rng.randrange(256)
                data = bytes(blob)
            else:
                base = corpus[rng.randrange(len(corpus))]
                data = base[:rng.randrange(len(base) + 1)]
            try:
                wire.decode(data)
                decoded += 1
            except accepted:
                pass
        elapsed = time.perf_counter() - t0
        ok(12, f"{iterations} fuzz decodes, no crash ({decoded} parsed clean, "
               f"{elapsed:.0f}s); decode-encode identity on all "
               f"{len(corpus)} golden fixtures")
