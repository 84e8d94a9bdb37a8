"""8-point halo exchange machinery over a periodic R x C rank grid.

Each rank owns an interior block and exchanges four edges plus four corners
per iteration.  Tags are the sender's direction index, so the receive for
ghost side d matches the neighbor's send toward the opposite direction.
The same buffers and tags serve the CPU-driven baseline and both
stream-triggered backends.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Generator

from ..errors import StmpiError
from ..world import RankApi

# Direction order doubles as the tag space: N, S, W, E, NW, NE, SW, SE.
DIRECTIONS: tuple[tuple[int, int], ...] = (
    (-1, 0), (1, 0), (0, -1), (0, 1),
    (-1, -1), (-1, 1), (1, -1), (1, 1),
)


def opposite(d: int) -> int:
    dr, dc = DIRECTIONS[d]
    return DIRECTIONS.index((-dr, -dc))


@dataclass(frozen=True)
class HaloPattern:
    """Rank layout and per-direction buffer sizing for one rank."""

    grid: tuple[int, int]          # R x C ranks, periodic
    rank: int
    rows: int                      # interior rows on this rank
    cols: int                      # interior cols on this rank
    cell_bytes: int = 1
    width: int = 1                 # halo width in cells

    @property
    def coords(self) -> tuple[int, int]:
        return divmod(self.rank, self.grid[1])

    def neighbor(self, d: int) -> int:
        R, C = self.grid
        r, c = self.coords
        dr, dc = DIRECTIONS[d]
        return ((r + dr) % R) * C + (c + dc) % C

    def edge_cells(self, d: int) -> int:
        dr, dc = DIRECTIONS[d]
        if dr != 0 and dc != 0:
            return self.width * self.width
        return self.width * (self.cols if dc == 0 else self.rows)

    def buffer_bytes(self, d: int) -> int:
        return self.edge_cells(d) * self.cell_bytes


def parse_grid(text: str) -> tuple[int, int]:
    try:
        r, c = text.lower().split("x")
        grid = (int(r), int(c))
    except ValueError:
        raise StmpiError(f"bad grid spec {text!r}; expected RxC") from None
    if grid[0] < 1 or grid[1] < 1:
        raise StmpiError(f"bad grid spec {text!r}")
    return grid


def average_edge_bytes(problem_bytes: int, n: int, grid: tuple[int, int]) -> float:
    """Average halo edge size: problem bytes over total perimeter cells."""
    R, C = grid
    return problem_bytes / (2 * n * (R + C))


class HaloBuffers:
    """Send and ghost buffers for one rank, allocated in its buffer space."""

    def __init__(self, api: RankApi, pattern: HaloPattern):
        self.pattern = pattern
        self.send: list[tuple[int, int]] = []
        self.ghost: list[tuple[int, int]] = []
        for d in range(len(DIRECTIONS)):
            nbytes = pattern.buffer_bytes(d)
            self.send.append((api.alloc(nbytes), nbytes))
            self.ghost.append((api.alloc(nbytes), nbytes))

    def total_send_bytes(self) -> int:
        return sum(n for _, n in self.send)


class StreamHalo:
    """Persistent-request halo object bound to one stream queue.

    Created through :func:`create_stream_halo`, which performs the match of
    all sixteen requests before the object is handed back; gathers assume
    permanently paired requests.
    """

    def __init__(self, api: RankApi, queue, buffers: HaloBuffers,
                 ready: bool):
        self.api = api
        self.queue = queue
        self.buffers = buffers
        pattern = buffers.pattern
        self.recv_requests = []
        self.send_requests = []
        for d in range(len(DIRECTIONS)):
            self.recv_requests.append(api.recv_init(
                buffers.ghost[d], peer=pattern.neighbor(d), tag=opposite(d)))
            self.send_requests.append(api.send_init(
                buffers.send[d], peer=pattern.neighbor(d), tag=d,
                ready=ready))
        self.requests = self.recv_requests + self.send_requests

    def enqueue_gather(self, pack_ns: int, pack_effect,
                       unpack_ns: int, unpack_effect) -> Generator:
        """Enqueue one gather: receive starts, pack, send starts, wait for
        all sixteen, unpack."""
        api, q = self.api, self.queue
        yield from api.enqueue_start_all(q, self.recv_requests)
        api.enqueue_compute(pack_ns, pack_effect, label="pack",
                            stream=q.stream)
        yield from api.enqueue_start_all(q, self.send_requests)
        api.enqueue_wait_all(q)
        api.enqueue_compute(unpack_ns, unpack_effect, label="unpack",
                            stream=q.stream)

    def enqueue_scatter(self, pack_ns: int, pack_effect,
                        unpack_ns: int, unpack_effect) -> Generator:
        """Reverse-direction exchange: ghost contents flow back to owners.

        Mirrors the gather with owned/ghost roles swapped; requests are
        created and matched lazily on first use (reversed tag space)."""
        if not hasattr(self, "scatter_requests"):
            api = self.api
            pattern = self.buffers.pattern
            recvs, sends = [], []
            ntags = len(DIRECTIONS)
            for d in range(len(DIRECTIONS)):
                recvs.append(api.recv_init(
                    self.buffers.send[d], peer=pattern.neighbor(d),
                    tag=ntags + opposite(d)))
                sends.append(api.send_init(
                    self.buffers.ghost[d], peer=pattern.neighbor(d),
                    tag=ntags + d,
                    ready=self.send_requests[0].kind == "rsend"))
            self.scatter_requests = (recvs, sends)
            yield from api.match_all(recvs + sends)
        recvs, sends = self.scatter_requests
        api, q = self.api, self.queue
        yield from api.enqueue_start_all(q, recvs)
        api.enqueue_compute(pack_ns, pack_effect, label="scatter-pack",
                            stream=q.stream)
        yield from api.enqueue_start_all(q, sends)
        api.enqueue_wait_all(q)
        api.enqueue_compute(unpack_ns, unpack_effect, label="scatter-unpack",
                            stream=q.stream)


def create_stream_halo(api: RankApi, queue, buffers: HaloBuffers,
                       ready: bool) -> Generator:
    """Build a StreamHalo and match its requests (blocking)."""
    halo = StreamHalo(api, queue, buffers, ready)
    yield from api.match_all(halo.requests)
    return halo


def baseline_exchange(api: RankApi, buffers: HaloBuffers) -> Generator:
    """Blocking CPU-driven exchange of all eight directions.

    When every message is below the eager threshold, sends complete
    immediately, so all sends go first and receives drain concurrently.
    Otherwise directions proceed in phases; within a phase the rank whose
    coordinate along the direction axis is even sends first, which breaks
    rendezvous cycles on rings of any length.  Self-sends are always eager.
    """
    pattern = buffers.pattern
    all_eager = all(api.cost.is_eager(pattern.buffer_bytes(d))
                    for d in range(len(DIRECTIONS)))
    if all_eager:
        for d in range(len(DIRECTIONS)):
            yield from api.blocking_send(buffers.send[d],
                                         peer=pattern.neighbor(d), tag=d)
        for d in range(len(DIRECTIONS)):
            yield from api.blocking_recv(buffers.ghost[opposite(d)],
                                         peer=pattern.neighbor(opposite(d)),
                                         tag=d)
        return
    r, c = pattern.coords
    for d in range(len(DIRECTIONS)):
        dr, dc = DIRECTIONS[d]
        axis_coord = r if dr != 0 else c
        send_first = pattern.neighbor(d) == pattern.rank or axis_coord % 2 == 0
        if send_first:
            yield from api.blocking_send(buffers.send[d],
                                         peer=pattern.neighbor(d), tag=d)
            yield from api.blocking_recv(buffers.ghost[opposite(d)],
                                         peer=pattern.neighbor(opposite(d)),
                                         tag=d)
        else:
            yield from api.blocking_recv(buffers.ghost[opposite(d)],
                                         peer=pattern.neighbor(opposite(d)),
                                         tag=d)
            yield from api.blocking_send(buffers.send[d],
                                         peer=pattern.neighbor(d), tag=d)
