"""Command line front end: ``bench pingpong|life|sweep``."""

from __future__ import annotations

import argparse
import sys

from ..costmodel import CostModel, load_cost_model, parse_overrides
from ..errors import StmpiError
from . import BACKENDS
from .halo import parse_grid
from .life import PATTERNS, run_game_of_life, sequential_life_digest
from .pingpong import run_pingpong
from .results import BenchKnobs, format_results, write_csv
from .sweep import problem_side, run_scaling_sweep


def _parse_sizes(text: str) -> list[int]:
    suffix = {"k": 1 << 10, "m": 1 << 20, "g": 1 << 30}
    sizes = []
    for token in text.split(","):
        token = token.strip().lower()
        if token[-1] in suffix:
            sizes.append(int(token[:-1]) * suffix[token[-1]])
        else:
            sizes.append(int(token))
    return sizes


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--cost-model", metavar="FILE",
                        help="key=value file overriding cost model fields")
    parser.add_argument("--set", metavar="KEY=VALUE", action="append",
                        default=[], dest="overrides",
                        help="override one cost model field (repeatable)")
    parser.add_argument("--csv", metavar="PATH", help="write results CSV")
    parser.add_argument("--trace", metavar="PATH",
                        help="write event trace (time,seq,target,kind lines)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--copy-bw", type=float, default=100.0,
                        help="GPU pack/unpack bandwidth, bytes per ns")
    parser.add_argument("--cells-per-ns", type=float, default=1.0,
                        help="automaton update rate for the compute kernel")


def _cost_from(args) -> CostModel:
    cost = CostModel()
    if args.cost_model:
        cost = load_cost_model(args.cost_model, cost)
    if args.overrides:
        pairs = {}
        for item in args.overrides:
            key, _, value = item.partition("=")
            if not value:
                raise StmpiError(f"--set expects KEY=VALUE, got {item!r}")
            pairs[key] = value
        cost = cost.with_overrides(**parse_overrides(pairs))
    return cost


def _knobs_from(args) -> BenchKnobs:
    return BenchKnobs(gpu_copy_bytes_per_ns=args.copy_bw,
                      life_cells_per_ns=args.cells_per_ns)


def _dump_traces(path: str, worlds) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for world in worlds:
            for record in world.sim.trace:
                fh.write(record.line() + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bench",
        description="Desk-scale benchmarks of stream-triggered vs CPU-driven "
                    "GPU communication (virtual time).")
    sub = parser.add_subparsers(dest="command", required=True)

    pp = sub.add_parser("pingpong", help="two-rank GPU ping-pong")
    pp.add_argument("--backend", choices=BACKENDS, default="st-send")
    pp.add_argument("--sizes", type=_parse_sizes,
                    default=[2 ** i for i in range(3, 21)],
                    help="comma-separated byte sizes (k/m/g suffixes ok)")
    pp.add_argument("--iterations", type=int, default=None,
                    help="round trips per size (default: size-based policy)")
    _add_common(pp)

    life = sub.add_parser("life", help="Game-of-Life halo exchange")
    life.add_argument("--backend", choices=BACKENDS, default="st-send")
    life.add_argument("--size", type=int, default=64, metavar="N",
                      help="board is N x N cells")
    life.add_argument("--grid", type=parse_grid, default=(2, 2), metavar="RxC")
    life.add_argument("--steps", type=int, default=100)
    life.add_argument("--pattern", choices=PATTERNS, default="glider-blinker")
    life.add_argument("--check-oracle", action="store_true",
                      help="compare the final digest to the sequential oracle")
    _add_common(life)

    sweep = sub.add_parser("sweep", help="strong-scaling sweep over rank grids")
    sweep.add_argument("--problem-bytes", type=_parse_sizes, default=[1 << 20],
                       metavar="BYTES",
                       help="square board sizes in bytes (one byte per cell)")
    sweep.add_argument("--grids", default="1x1,2x1,2x2,4x2,4x4",
                       help="comma-separated RxC rank grids")
    sweep.add_argument("--backends", default=",".join(BACKENDS),
                       help="comma-separated backend list")
    sweep.add_argument("--steps", type=int, default=20)
    sweep.add_argument("--pattern", choices=PATTERNS, default="random")
    sweep.add_argument("--replicates", type=int, default=1)
    _add_common(sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cost = _cost_from(args)
    knobs = _knobs_from(args)
    record_trace = bool(args.trace)

    if args.command == "pingpong":
        results, worlds = run_pingpong(
            args.backend, args.sizes, iterations=args.iterations,
            cost=cost, knobs=knobs, record_trace=record_trace)
    elif args.command == "life":
        result, digest, world = run_game_of_life(
            args.backend, args.size, args.grid, args.steps, cost=cost,
            knobs=knobs, pattern=args.pattern, seed=args.seed,
            record_trace=record_trace)
        results, worlds = [result], [world]
        print(f"final board digest: {digest}")
        if args.check_oracle:
            oracle = sequential_life_digest(args.size, args.steps,
                                            args.pattern, args.seed)
            if oracle != digest:
                print(f"oracle mismatch: expected {oracle}", file=sys.stderr)
                return 1
            print("oracle digest matches")
    else:
        grids = [parse_grid(g) for g in args.grids.split(",")]
        backends = [b.strip() for b in args.backends.split(",")]
        for b in backends:
            if b not in BACKENDS:
                raise StmpiError(f"unknown backend {b!r}")
        results = []
        worlds = []
        for problem in args.problem_bytes:
            problem_side(problem)  # validate early
            res, digests, ws = run_scaling_sweep(
                problem, grids, backends, steps=args.steps, cost=cost,
                knobs=knobs, pattern=args.pattern, seed=args.seed,
                replicates=args.replicates, record_trace=record_trace)
            results.extend(res)
            worlds.extend(ws)
            unique = sorted(set(digests.values()))
            print(f"problem {problem}: {len(digests)} runs, "
                  f"{len(unique)} distinct digest(s)")

    print(format_results(results))
    if args.csv:
        write_csv(args.csv, results)
    if args.trace:
        _dump_traces(args.trace, worlds)
    return 0


if __name__ == "__main__":
    sys.exit(main())
