"""Command-line entry point."""
from __future__ import annotations

import argparse
import sys

from .config import ConfigError, parse_config
from .engine import Simulation, StalledSimulation
from .simnet import BadSampleFile, load_latency_samples

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_STALLED = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chainsim",
        description="Deterministic single-process DHT-blockchain simulator.",
    )
    parser.add_argument("--config", required=True, help="simulation.config file")
    parser.add_argument("--out", default="run.csv", help="output CSV path")
    parser.add_argument("--seed", type=int, default=42, help="run seed")
    parser.add_argument("--latency-samples", metavar="FILE",
                        help="pairwise latency samples, one ms value per line")
    parser.add_argument("--latency-median", type=float, default=50.0, metavar="MS",
                        help="median of the builtin log-normal latency model")
    parser.add_argument("--latency-sigma", type=float, default=0.5, metavar="S",
                        help="shape of the builtin log-normal latency model")
    parser.add_argument("--summary-only", action="store_true",
                        help="print the summary but do not write the CSV")
    parser.add_argument("--check-invariants", type=int, default=0, metavar="N",
                        help="run structural invariant checks every N events")
    parser.add_argument("--dump-overlay", action="store_true",
                        help="print one line per overlay vertex after the run")
    return parser


def print_summary(report) -> None:
    print("simulation summary")
    print(f"  finalized transactions : {report.finalized_tx_count}")
    print(f"  finalized blocks       : {report.finalized_block_count}"
          f" (chain: {report.chain_block_count})")
    print(f"  avg tx time            : {report.avg_tx_time_ms:.1f} ms")
    print(f"  avg block time         : {report.avg_block_time_ms:.1f} ms")
    print(f"  avg block size         : {report.avg_block_size:.2f}")
    print(f"  total messages         : {report.total_messages}")
    print(f"  total bytes            : {report.total_bytes}")
    print(f"  minted total           : {report.total_minted}")
    print(f"  negative balance events: {report.negative_balance_events}")
    print(f"  max per-node stored    : {max(report.per_node_stored)}")
    print(f"  wall clock             : {report.wall_clock_s:.2f} s")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = parse_config(fh.read())
        samples = None
        if args.latency_samples:
            samples = load_latency_samples(args.latency_samples)
    except (OSError, ConfigError, BadSampleFile) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    sim = Simulation(
        cfg, seed=args.seed, latency_samples=samples,
        latency_median_ms=args.latency_median, latency_sigma=args.latency_sigma,
        check_invariants_every=args.check_invariants,
    )
    try:
        report = sim.run()
    except StalledSimulation as exc:
        print(f"stalled simulation: {exc}", file=sys.stderr)
        return EXIT_STALLED

    if not args.summary_only:
        try:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(sim.csv_text())
        except OSError as exc:
            print(f"cannot write output: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    print_summary(report)
    if args.dump_overlay:
        for line in sim.overlay.dump_lines():
            print(line)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
