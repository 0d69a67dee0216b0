"""Command-line entry point.

    blindcash run --config scenario.json --seed 42 [--report out.json] [--log out.log]
    blindcash run --name happy-path --seed 42
    blindcash bench --shards 1,2,4 --duration 2 --mode full
    blindcash adversary --name cheating-refresher --trials 3000 --kappa 3 --seed 1
"""

from __future__ import annotations

import argparse
import json
import sys

from .adversary import cheating_refresher
from .bench import deposit_bench, sign_bench, store_growth_bench
from .harness import ScenarioConfig, run
from .scenarios import NAMED_CONFIGS


def _cmd_run(args) -> int:
    if args.config:
        with open(args.config, "rb") as fh:
            data = json.loads(fh.read().decode())
    elif args.name:
        data = NAMED_CONFIGS[args.name](seed=args.seed if args.seed is not None else 1)
    else:
        print("run: need --config FILE or --name SCENARIO", file=sys.stderr)
        return 2
    if args.seed is not None:
        data["seed"] = args.seed
    config = ScenarioConfig.from_dict(data)
    report, log_bytes = run(config)
    if args.report:
        with open(args.report, "wb") as fh:
            fh.write(report.to_json())
    if args.log:
        with open(args.log, "wb") as fh:
            fh.write(log_bytes)
    print(report.summary())
    return 0 if report.conservation_green else 1


def _cmd_bench(args) -> int:
    shard_counts = tuple(int(s) for s in args.shards.split(","))
    out = {"sign": sign_bench(duration=args.duration)}
    out["deposits"] = deposit_bench(
        shard_counts=shard_counts, total_ops=args.ops, mode=args.mode)
    if args.store_growth:
        out["store_growth"] = store_growth_bench(deposits=args.store_growth)
    print(json.dumps(out, indent=2, sort_keys=True))
    sign_rate = out["sign"]["blind_sign_ops_per_sec"]
    print(f"\nblind_sign: {sign_rate} ops/sec/core "
          f"on {out['sign']['machine']['cpu_model']}", file=sys.stderr)
    for shards, stats in sorted(out["deposits"]["shards"].items()):
        print(f"deposits @ {shards} shard(s): {stats['ops_per_sec']} ops/sec",
              file=sys.stderr)
    return 0


def _cmd_adversary(args) -> int:
    if args.name != "cheating-refresher":
        print(f"unknown adversary {args.name}", file=sys.stderr)
        return 2
    result = cheating_refresher(args.trials, args.kappa, args.seed, mode=args.mode)
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blindcash",
        description="deterministic simulation of a blind-signature token money deployment")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario")
    p_run.add_argument("--config", help="scenario config JSON file")
    p_run.add_argument("--name", choices=sorted(NAMED_CONFIGS),
                       help="built-in scenario name")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--report", help="write the metrics report JSON here")
    p_run.add_argument("--log", help="write the replayable event log here")
    p_run.set_defaults(fn=_cmd_run)

    p_bench = sub.add_parser("bench", help="signing and deposit throughput")
    p_bench.add_argument("--shards", default="1,2,4",
                         help="comma-separated shard counts")
    p_bench.add_argument("--duration", type=float, default=2.0,
                         help="seconds per signing benchmark")
    p_bench.add_argument("--ops", type=int, default=200,
                         help="total deposits per shard-count run")
    p_bench.add_argument("--mode", choices=["toy", "full"], default="full")
    p_bench.add_argument("--store-growth", type=int, default=0,
                         help="also measure store growth over N deposits")
    p_bench.set_defaults(fn=_cmd_bench)

    p_adv = sub.add_parser("adversary", help="run an adversary experiment")
    p_adv.add_argument("--name", default="cheating-refresher")
    p_adv.add_argument("--trials", type=int, default=3000)
    p_adv.add_argument("--kappa", type=int, default=3)
    p_adv.add_argument("--seed", type=int, default=1)
    p_adv.add_argument("--mode", choices=["toy", "full"], default="toy")
    p_adv.set_defaults(fn=_cmd_adversary)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
