"""Stream-bound progress queues: enqueue_start/enqueue_wait over the NIC's
triggered primitives.

Per matched request the protocol uses deferred work entries and counters as
follows (at most 2 deferred entries per send or receive):

* regular send: the data remote-write arms on the send triggering counter at
  an even threshold (2 * start epoch).  The GPU contributes one increment per
  start via a stream write-value; the receiver's Clear-To-Send atomic lands
  in an 8-byte counted region wired to the same counter and contributes the
  other.  Data therefore moves only when both have happened, in either
  order.  A second entry chains the write-completion counter to an atomic
  into the local completion slot.
* ready send: the data write arms on a group counter incremented once per
  startall call; no CTS is involved, readiness is the caller's promise.
* receive: an atomic into the local completion slot arms on the receive
  buffer's remote-write counter at the start epoch.  When paired with a
  regular send, a second atomic targeting the sender's CTS slot arms on the
  group counter, released by the stream write-value of the startall call.

Ready sends and receives in one startall share one group counter and one
stream write-value; regular sends never share.  Group thresholds equal the
group's startall count, which for a stable request set is exactly the
per-request start epoch.

Only enqueue_wait blocks the stream: startall enqueues write-values (and
nothing else), waitall enqueues a single poll over the requests' completion
slots at their start epochs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Generator

from . import gpusim
from .errors import (ForeignQueueError, MatchInputError, NeverStartedError,
                     OutstandingStartError, QueueNotEmptyError, StmpiError,
                     UnknownQueueKindError, UnmatchedRequestError)
from .gpusim import Stream
from .mpicore import PersistentRequest
from .nicsim import Fabric, MemoryRegion, RemoteWrite, TriggeredAtomic
from .simclock import Condition, Sleep, Wait

QUEUE_KINDS = ("cxi",)
MAX_ENTRIES_PER_OP = 2


@dataclass
class SendResources:
    trigger_counter: int | None  # permanent for regular sends, per-start group id otherwise
    write_completion_counter: int
    completion_slot_base: int
    completion_slot_key: int
    cts_region: MemoryRegion | None
    dest: tuple[int, int] | None = None  # (rank, region key) of the paired receive buffer


@dataclass
class RecvResources:
    data_region: MemoryRegion
    completion_slot_base: int
    completion_slot_key: int
    peer_cts_slot: tuple[int, int] | None = None  # set when paired with a regular send


class StProtocol:
    """Allocates per-request NIC resources at match time and splices the
    RMA keys each side needs into the match payload."""

    def __init__(self, fabric: Fabric):
        self.fabric = fabric

    def _completion_slot(self, rank: int) -> tuple[int, int]:
        mem = self.fabric.mems[rank]
        nic = self.fabric.nics[rank]
        base = mem.alloc(8)
        mem.write_u64(base, 0)
        region = nic.register_region(base, 8)
        return base, region.key

    def prepare(self, req: PersistentRequest) -> dict:
        nic = self.fabric.nics[req.rank]
        mem = self.fabric.mems[req.rank]
        slot_base, slot_key = self._completion_slot(req.rank)
        if req.is_send_side:
            wcc = nic.alloc_counter()
            trigger = cts_region = None
            if req.kind == "send":
                trigger = nic.alloc_counter()
                cts_base = mem.alloc(8)
                mem.write_u64(cts_base, 0)
                cts_region = nic.register_region(cts_base, 8, counter=trigger)
            req.resources = SendResources(trigger, wcc, slot_base, slot_key,
                                          cts_region)
            return {"cts": (req.rank, cts_region.key) if cts_region else None}
        data_region = nic.register_region(req.buf[0], req.buf[1],
                                          count_remote_writes=True)
        req.resources = RecvResources(data_region, slot_base, slot_key)
        return {"data": (req.rank, data_region.key)}

    def absorb(self, req: PersistentRequest, payload: dict) -> None:
        if req.is_send_side:
            req.resources.dest = payload["data"]
        else:
            req.resources.peer_cts_slot = payload["cts"]

    def release(self, req: PersistentRequest) -> None:
        if req.resources is None:
            return
        nic = self.fabric.nics[req.rank]
        res = req.resources
        nic.free_region(res.completion_slot_key)
        if isinstance(res, SendResources):
            nic.free_counter(res.write_completion_counter)
            if res.cts_region is not None:
                nic.free_region(res.cts_region.key)
            if req.kind == "send" and res.trigger_counter is not None:
                nic.free_counter(res.trigger_counter)
        else:
            nic.free_region(res.data_region.key)
        req.resources = None


class StQueue:
    def __init__(self, fabric: Fabric, kind: str, stream: Stream, qid: int):
        if kind not in QUEUE_KINDS:
            raise UnknownQueueKindError(f"unknown queue kind {kind!r}; "
                                        f"supported: {QUEUE_KINDS}")
        self.fabric = fabric
        self.kind = kind
        self.stream = stream
        self.qid = qid
        self.rank = stream.rank
        # one entry per started-but-not-poll-completed (request, epoch) pair;
        # a pipelined restart is a distinct entry, possibly on another queue
        self.outstanding: dict[tuple[int, int], PersistentRequest] = {}
        self.outstanding_change = Condition(f"queue{qid}-outstanding@{self.rank}")
        # group counters shared by ready sends / receives of one startall
        # call, keyed by the participating request ids: (counter id, arm count)
        self._groups: dict[tuple, list[int]] = {}
        self.freed = False

    # -- start ------------------------------------------------------------------

    def enqueue_start_all(self, requests: list[PersistentRequest]) -> Generator:
        self._check_open()
        seen: set[int] = set()
        for req in requests:
            if not isinstance(req, PersistentRequest):
                raise MatchInputError(
                    f"{req!r} is not a persistent request and cannot be "
                    "enqueued")
            if req.rank != self.rank:
                raise StmpiError(f"{req!r} does not belong to rank {self.rank}")
            if not req.matched:
                raise UnmatchedRequestError(
                    f"{req!r} must be matched before it can be enqueued")
            if req.start_epoch != req.wait_epoch or id(req) in seen:
                raise OutstandingStartError(
                    f"{req!r} has a start without a corresponding wait")
            seen.add(id(req))

        nic = self.fabric.nics[self.rank]
        group = [r for r in requests
                 if r.kind == "rsend"
                 or (r.kind == "recv" and r.pair_kind == "send")]
        group_counter = group_threshold = None
        if group:
            key = tuple(sorted(r.req_id for r in group))
            state = self._groups.get(key)
            if state is None:
                state = [nic.alloc_counter(), 0]
                self._groups[key] = state
            state[1] += 1
            group_counter, group_threshold = state[0], state[1]

        for req in requests:
            epoch = req.start_epoch + 1
            res = req.resources
            entries = 0
            if req.kind == "send":
                yield from nic.post_deferred(
                    RemoteWrite(req.buf[0], req.buf[1], res.dest[0],
                                res.dest[1], 0),
                    res.trigger_counter, 2 * epoch,
                    completion_counter=res.write_completion_counter)
                yield from nic.post_deferred(
                    TriggeredAtomic(self.rank, res.completion_slot_key, 0, 1),
                    res.write_completion_counter, epoch)
                entries = 2
            elif req.kind == "rsend":
                res.trigger_counter = group_counter
                yield from nic.post_deferred(
                    RemoteWrite(req.buf[0], req.buf[1], res.dest[0],
                                res.dest[1], 0),
                    group_counter, group_threshold,
                    completion_counter=res.write_completion_counter)
                yield from nic.post_deferred(
                    TriggeredAtomic(self.rank, res.completion_slot_key, 0, 1),
                    res.write_completion_counter, epoch)
                entries = 2
            else:
                yield from nic.post_deferred(
                    TriggeredAtomic(self.rank, res.completion_slot_key, 0, 1),
                    res.data_region.remote_write_counter, epoch)
                entries = 1
                if req.pair_kind == "send":
                    peer_rank, peer_key = res.peer_cts_slot
                    yield from nic.post_deferred(
                        TriggeredAtomic(peer_rank, peer_key, 0, 1),
                        group_counter, group_threshold)
                    entries = 2
            assert entries <= MAX_ENTRIES_PER_OP
            req.start_epoch = epoch
            req.state = "started"
            req.active_queue = self
            self.outstanding[(req.req_id, epoch)] = req

        for req in requests:
            if req.kind == "send":
                self.stream.enqueue(gpusim.write_value(
                    req.resources.trigger_counter,
                    label=f"trigger:r{self.rank}req{req.req_id}"))
        if group:
            self.stream.enqueue(gpusim.write_value(
                group_counter, label=f"trigger:r{self.rank}group"))

    # -- wait -------------------------------------------------------------------

    def enqueue_wait_all(self,
                         requests: list[PersistentRequest] | None = None) -> None:
        self._check_open()
        if requests is None:
            # Everything started on this queue that does not yet have a wait.
            requests = [r for (rid, epoch), r in self.outstanding.items()
                        if r.start_epoch == epoch
                        and r.start_epoch == r.wait_epoch + 1]
        seen: set[int] = set()
        for req in requests:
            if not isinstance(req, PersistentRequest):
                raise MatchInputError(
                    f"{req!r} is not a persistent request and cannot be "
                    "waited on")
            if req.start_epoch != req.wait_epoch + 1 or id(req) in seen:
                raise NeverStartedError(
                    f"{req!r} has no unwaited start to wait for")
            if req.active_queue is not self:
                raise ForeignQueueError(
                    f"{req!r} was started on a different queue")
            seen.add(id(req))

        targets = []
        waited = []
        for req in requests:
            req.wait_epoch += 1
            waited.append((req, req.start_epoch))
            targets.append((req.resources.completion_slot_base,
                            req.start_epoch))

        def retire() -> None:
            for req, epoch in waited:
                self.outstanding.pop((req.req_id, epoch), None)
                if req.start_epoch == epoch and req.state == "started":
                    req.state = "matched"
            self.fabric.sim.signal(self.outstanding_change)

        if targets:
            op = gpusim.poll_value(targets, label=f"waitall:q{self.qid}")
            op.on_complete = retire
            self.stream.enqueue(op)

    # -- host-side wait / teardown ----------------------------------------------

    def wait(self) -> Generator:
        """Block the calling host task until the queue is empty; charges at
        minimum a stream synchronization."""
        while not (self.stream.idle and not self.outstanding):
            if not self.stream.idle:
                yield Wait(self.stream.idle_cond)
            else:
                yield Wait(self.outstanding_change)
        yield Sleep(self.fabric.cost.gpu_barrier_ns)

    def free(self) -> None:
        self._check_open()
        if self.outstanding:
            raise QueueNotEmptyError(
                f"queue {self.qid} freed with outstanding requests: "
                f"{sorted(self.outstanding)}")
        nic = self.fabric.nics[self.rank]
        for counter, _ in self._groups.values():
            nic.free_counter(counter)
        self._groups.clear()
        self.freed = True

    def _check_open(self) -> None:
        if self.freed:
            raise StmpiError(f"queue {self.qid} was freed")
