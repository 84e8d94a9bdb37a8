"""Assembly of one simulated machine: event engine, per-rank NIC/GPU/host
pieces, and the per-rank API handle that rank programs are written against.

Rank programs are generators; API calls that can block the host are
generators too and must be driven with ``yield from``.
"""

from __future__ import annotations

from typing import Callable, Generator

from .costmodel import CostModel
from .errors import OutstandingStartError
from .gpusim import Stream, compute
from .mpicore import (Communicator, MatchRequest, MatchService,
                      PersistentRequest, RequestFactory, Transport)
from .nicsim import Fabric
from .simclock import Completed, DeadlockReport, Simulator, Sleep
from .stqueue import StProtocol, StQueue


class World:
    def __init__(self, n_ranks: int, cost: CostModel | None = None,
                 record_trace: bool = False, log_events: bool = False):
        self.n_ranks = n_ranks
        self.cost = cost if cost is not None else CostModel()
        self.sim = Simulator(record_trace=record_trace)
        self.fabric = Fabric(self.sim, self.cost, n_ranks,
                             log_events=log_events)
        self.transport = Transport(self.sim, self.cost, self.fabric)
        self.protocol = StProtocol(self.fabric)
        self.match = MatchService(self.transport, self.protocol)
        self.comm_world = Communicator(0, tuple(range(n_ranks)))
        self._next_stream = 0
        self._next_queue = 0
        self.apis = [RankApi(self, rank) for rank in range(n_ranks)]

    def new_stream(self, rank: int) -> Stream:
        stream = Stream(self.fabric, rank, self._next_stream)
        self._next_stream += 1
        return stream

    def new_queue(self, kind: str, stream: Stream) -> StQueue:
        queue = StQueue(self.fabric, kind, stream, self._next_queue)
        self._next_queue += 1
        return queue

    def add_program(self, rank: int,
                    program: Callable[["RankApi"], Generator]) -> None:
        self.sim.spawn(rank, f"host{rank}", program(self.apis[rank]))

    def run(self) -> Completed | DeadlockReport:
        return self.sim.run_until_quiescent()

    @property
    def events(self) -> list[dict]:
        assert self.fabric.events is not None, "log_events=True required"
        return self.fabric.events


class RankApi:
    """Everything one rank's host program may touch."""

    def __init__(self, world: World, rank: int):
        self.world = world
        self.rank = rank
        self.cost = world.cost
        self.comm_world = world.comm_world
        self.mem = world.fabric.mems[rank]
        self.nic = world.fabric.nics[rank]
        self.stream = world.new_stream(rank)
        self._requests = RequestFactory(rank, world.match)

    # -- memory -----------------------------------------------------------------

    def alloc(self, nbytes: int) -> int:
        return self.mem.alloc(nbytes)

    def write(self, base: int, payload: bytes) -> None:
        self.mem.write(base, payload)

    def read(self, base: int, nbytes: int) -> bytes:
        return self.mem.read(base, nbytes)

    # -- host control -------------------------------------------------------------

    def sleep(self, delay: int) -> Generator:
        yield Sleep(delay)

    # -- GPU stream ----------------------------------------------------------------

    def new_stream(self) -> Stream:
        return self.world.new_stream(self.rank)

    def enqueue_compute(self, duration: int,
                        effect: Callable[[], None] | None = None,
                        label: str = "compute",
                        stream: Stream | None = None) -> None:
        (stream or self.stream).enqueue(compute(duration, effect, label))

    def stream_synchronize(self, stream: Stream | None = None) -> Generator:
        yield from (stream or self.stream).synchronize()

    # -- persistent requests and matching ----------------------------------------

    def send_init(self, buf: tuple[int, int], peer: int, tag: int,
                  comm: Communicator | None = None,
                  ready: bool = False) -> PersistentRequest:
        return self._requests.send_init(buf, peer, tag,
                                        comm or self.comm_world, ready)

    def recv_init(self, buf: tuple[int, int], peer: int, tag: int,
                  comm: Communicator | None = None) -> PersistentRequest:
        return self._requests.recv_init(buf, peer, tag,
                                        comm or self.comm_world)

    def match_all(self, requests: list[PersistentRequest]) -> Generator:
        yield from self.world.match.match_all(self.rank, requests)

    def imatch_all(self, requests: list[PersistentRequest]) -> MatchRequest:
        return self.world.match.imatch_all(self.rank, requests)

    def match_wait(self, handle: MatchRequest) -> Generator:
        yield from self.world.match.wait(self.rank, handle)

    def is_matched(self, request: PersistentRequest) -> bool:
        return self.world.match.is_matched(request)

    def request_free(self, request: PersistentRequest) -> None:
        if request.start_epoch != request.wait_epoch:
            raise OutstandingStartError(
                f"{request!r} still has an unwaited start")
        self.world.protocol.release(request)
        request.pair = None
        request.state = "freed"

    # -- stream-triggered queues ---------------------------------------------------

    def queue_init(self, kind: str, stream: Stream | None = None) -> StQueue:
        return self.world.new_queue(kind, stream or self.stream)

    def queue_free(self, queue: StQueue) -> None:
        queue.free()

    def enqueue_start_all(self, queue: StQueue,
                          requests: list[PersistentRequest]) -> Generator:
        yield from queue.enqueue_start_all(requests)

    def enqueue_wait_all(self, queue: StQueue,
                         requests: list[PersistentRequest] | None = None) -> None:
        queue.enqueue_wait_all(requests)

    def queue_wait(self, queue: StQueue) -> Generator:
        yield from queue.wait()

    # -- CPU-driven (baseline) messaging ---------------------------------------------

    def blocking_send(self, buf: tuple[int, int], peer: int, tag: int,
                      comm: Communicator | None = None) -> Generator:
        yield from self.world.transport.blocking_send(
            self.rank, buf, peer, tag, comm or self.comm_world)

    def blocking_recv(self, buf: tuple[int, int], peer: int, tag: int,
                      comm: Communicator | None = None) -> Generator:
        yield from self.world.transport.blocking_recv(
            self.rank, buf, peer, tag, comm or self.comm_world)
