"""Game of Life over the halo machinery, plus the sequential reference
stepper used to validate distributed results.

Each rank holds its interior block padded with a one-cell ghost ring.  A
step is: gather ghosts from the eight neighbors, then advance the
automaton on the interior.  The final board is stitched across ranks and
digested, so every backend and decomposition can be checked against the
single-array reference.
"""

from __future__ import annotations

import hashlib

import numpy as np

from ..costmodel import CostModel
from ..errors import StmpiError
from ..world import World
from . import halo
from .halo import DIRECTIONS, HaloBuffers, HaloPattern
from .results import BenchKnobs, BenchResult

PATTERNS = ("glider", "blinker", "glider-blinker", "random")


def initial_board(n: int, pattern: str, seed: int = 0) -> np.ndarray:
    if pattern != "random" and n < 8:
        raise StmpiError(f"board of {n}x{n} is too small for {pattern!r}")
    board = np.zeros((n, n), dtype=np.uint8)
    if pattern == "random":
        rng = np.random.default_rng(seed)
        board[:] = (rng.random((n, n)) < 0.35).astype(np.uint8)
        return board
    if pattern in ("glider", "glider-blinker"):
        # Glider heading south-east from the top-left area.
        glider = [(1, 2), (2, 3), (3, 1), (3, 2), (3, 3)]
        for r, c in glider:
            board[r, c] = 1
    if pattern in ("blinker", "glider-blinker"):
        mid = n // 2
        for c in (mid - 1, mid, mid + 1):
            board[mid, c] = 1
    if pattern not in PATTERNS:
        raise StmpiError(f"unknown pattern {pattern!r}; choose from {PATTERNS}")
    return board


def sequential_life_step(board: np.ndarray) -> np.ndarray:
    """Reference stepper: periodic neighbor count via array rolls."""
    count = sum(np.roll(np.roll(board, dr, axis=0), dc, axis=1)
                for dr, dc in DIRECTIONS)
    return ((count == 3) | ((board == 1) & (count == 2))).astype(np.uint8)


def board_digest(board: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(f"{board.shape[0]}x{board.shape[1]}:".encode())
    h.update(np.ascontiguousarray(board, dtype=np.uint8).tobytes())
    return h.hexdigest()


def sequential_life_digest(n: int, steps: int, pattern: str = "glider-blinker",
                           seed: int = 0) -> str:
    board = initial_board(n, pattern, seed)
    for _ in range(steps):
        board = sequential_life_step(board)
    return board_digest(board)


class _RankState:
    """Per-rank padded board plus the pack/unpack/step kernels' effects."""

    def __init__(self, api, pattern: HaloPattern, block: np.ndarray):
        self.api = api
        self.pattern = pattern
        self.board = np.zeros((pattern.rows + 2, pattern.cols + 2),
                              dtype=np.uint8)
        self.board[1:-1, 1:-1] = block
        self.buffers = HaloBuffers(api, pattern)

    # Interior slices adjacent to each direction, and ghost ring targets.
    def _send_slice(self, d: int) -> np.ndarray:
        rows, cols = self.pattern.rows, self.pattern.cols
        dr, dc = DIRECTIONS[d]
        rs = {-1: slice(1, 2), 0: slice(1, rows + 1), 1: slice(rows, rows + 1)}[dr]
        cs = {-1: slice(1, 2), 0: slice(1, cols + 1), 1: slice(cols, cols + 1)}[dc]
        return self.board[rs, cs]

    def _ghost_slice(self, d: int) -> np.ndarray:
        rows, cols = self.pattern.rows, self.pattern.cols
        dr, dc = DIRECTIONS[d]
        rs = {-1: slice(0, 1), 0: slice(1, rows + 1), 1: slice(rows + 1, rows + 2)}[dr]
        cs = {-1: slice(0, 1), 0: slice(1, cols + 1), 1: slice(cols + 1, cols + 2)}[dc]
        return self.board[rs, cs]

    def pack(self) -> None:
        for d in range(len(DIRECTIONS)):
            base, _ = self.buffers.send[d]
            self.api.write(base, self._send_slice(d).tobytes())

    def unpack(self) -> None:
        for d in range(len(DIRECTIONS)):
            base, nbytes = self.buffers.ghost[d]
            target = self._ghost_slice(d)
            data = np.frombuffer(self.api.read(base, nbytes), dtype=np.uint8)
            target[:] = data.reshape(target.shape)

    def step(self) -> None:
        padded = self.board
        count = (padded[:-2, :-2].astype(np.int16) + padded[:-2, 1:-1]
                 + padded[:-2, 2:] + padded[1:-1, :-2] + padded[1:-1, 2:]
                 + padded[2:, :-2] + padded[2:, 1:-1] + padded[2:, 2:])
        interior = padded[1:-1, 1:-1]
        interior[:] = ((count == 3) | ((interior == 1) & (count == 2))).astype(np.uint8)

    def interior(self) -> np.ndarray:
        return self.board[1:-1, 1:-1].copy()


def _check_decomposition(n: int, grid: tuple[int, int]) -> None:
    R, C = grid
    if n % R or n % C:
        raise StmpiError(f"{R}x{C} ranks do not divide a {n}x{n} board")


def run_game_of_life(backend: str, n: int, grid: tuple[int, int], steps: int,
                     cost: CostModel | None = None,
                     knobs: BenchKnobs | None = None,
                     pattern: str = "glider-blinker", seed: int = 0,
                     record_trace: bool = False):
    """Run the distributed automaton; returns (BenchResult, digest, world)."""
    _check_decomposition(n, grid)
    cost = cost if cost is not None else CostModel()
    knobs = knobs if knobs is not None else BenchKnobs()
    R, C = grid
    rows, cols = n // R, n // C
    init = initial_board(n, pattern, seed)
    world = World(R * C, cost=cost, record_trace=record_trace)
    states: dict[int, _RankState] = {}
    start_times: dict[int, int] = {}

    def make_program(rank: int):
        r, c = divmod(rank, C)
        block = init[r * rows:(r + 1) * rows, c * cols:(c + 1) * cols]
        hp = HaloPattern(grid, rank, rows, cols)
        api = world.apis[rank]
        state = _RankState(api, hp, block)
        states[rank] = state
        pack_ns = knobs.copy_ns(state.buffers.total_send_bytes())
        unpack_ns = pack_ns
        step_ns = knobs.life_step_ns(rows * cols)

        if backend == "baseline":
            def program(api):
                start_times[rank] = world.sim.now
                for _ in range(steps):
                    api.enqueue_compute(pack_ns, state.pack, label="pack")
                    yield from api.stream_synchronize()
                    yield from halo.baseline_exchange(api, state.buffers)
                    api.enqueue_compute(unpack_ns, state.unpack, label="unpack")
                    api.enqueue_compute(step_ns, state.step, label="life")
                yield from api.stream_synchronize()
        else:
            ready = backend == "st-rsend"

            def program(api):
                queue = api.queue_init("cxi")
                shalo = yield from halo.create_stream_halo(
                    api, queue, state.buffers, ready)
                start_times[rank] = world.sim.now
                for _ in range(steps):
                    yield from shalo.enqueue_gather(
                        pack_ns, state.pack, unpack_ns, state.unpack)
                    api.enqueue_compute(step_ns, state.step, label="life")
                yield from api.queue_wait(queue)
                api.queue_free(queue)
        return program

    for rank in range(R * C):
        world.add_program(rank, make_program(rank))
    outcome = world.run()
    if not outcome.completed:
        raise StmpiError("life run deadlocked:\n" + outcome.describe())

    final = np.zeros((n, n), dtype=np.uint8)
    for rank, state in states.items():
        r, c = divmod(rank, C)
        final[r * rows:(r + 1) * rows, c * cols:(c + 1) * cols] = state.interior()
    digest = board_digest(final)

    solve_ns = outcome.time - max(start_times.values())
    result = BenchResult(
        backend=backend, size_bytes=n * n, ranks=R * C, iterations=steps,
        mean_ns=solve_ns / steps,
        metrics={"solve_ns": float(solve_ns),
                 "edge_bytes": halo.average_edge_bytes(n * n, n, grid)},
    )
    return result, digest, world
