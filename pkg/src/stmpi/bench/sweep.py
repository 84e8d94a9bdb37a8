"""Strong-scaling sweep: fixed problem size, growing rank grids, speedup
against the single-rank baseline solve time."""

from __future__ import annotations

import math

from ..costmodel import CostModel
from ..errors import StmpiError
from .life import run_game_of_life
from .results import BenchKnobs, BenchResult


def problem_side(problem_bytes: int) -> int:
    n = math.isqrt(problem_bytes)
    if n * n != problem_bytes:
        raise StmpiError(f"problem bytes {problem_bytes} is not a square "
                         "board size (one byte per cell)")
    return n


def run_scaling_sweep(problem_bytes: int, grids: list[tuple[int, int]],
                      backends: list[str], steps: int = 20,
                      cost: CostModel | None = None,
                      knobs: BenchKnobs | None = None,
                      pattern: str = "random", seed: int = 0,
                      replicates: int = 1, record_trace: bool = False):
    """Returns (results, digests, worlds).

    Speedup is measured against the baseline 1x1 solve time of the same
    replicate; every (backend, grid) cell must reproduce the same final
    board digest, which is reported for cross-checks.
    """
    n = problem_side(problem_bytes)
    results: list[BenchResult] = []
    digests: dict[tuple, str] = {}
    worlds = []
    for rep in range(replicates):
        rep_seed = seed + rep
        base_result, base_digest, base_world = run_game_of_life(
            "baseline", n, (1, 1), steps, cost=cost, knobs=knobs,
            pattern=pattern, seed=rep_seed, record_trace=record_trace)
        base_ns = base_result.metrics["solve_ns"]
        digests[("baseline", (1, 1), rep)] = base_digest
        worlds.append(base_world)
        for backend in backends:
            for grid in grids:
                if backend == "baseline" and grid == (1, 1):
                    result, digest = base_result, base_digest
                else:
                    result, digest, world = run_game_of_life(
                        backend, n, grid, steps, cost=cost, knobs=knobs,
                        pattern=pattern, seed=rep_seed,
                        record_trace=record_trace)
                    worlds.append(world)
                digests[(backend, grid, rep)] = digest
                result.metrics["speedup"] = base_ns / result.metrics["solve_ns"]
                results.append(result)
    return results, digests, worlds
