"""Benchmarks: GPU ping-pong and Game-of-Life halo exchange, runnable under
the CPU-driven baseline and the stream-triggered regular/ready-send
backends."""

from .results import BenchKnobs, BenchResult, write_csv
from .pingpong import default_iterations, run_pingpong
from .life import run_game_of_life, sequential_life_digest
from .sweep import run_scaling_sweep

BACKENDS = ("baseline", "st-send", "st-rsend")

__all__ = [
    "BACKENDS", "BenchKnobs", "BenchResult", "write_csv",
    "run_pingpong", "default_iterations",
    "run_game_of_life", "sequential_life_digest",
    "run_scaling_sweep",
]
