"""Host-side two-sided layer: communicators, persistent requests, blocking
send/recv transport, and the tag-matching engine.

The blocking path serves two roles: it is the CPU-driven baseline
communication mode, and it carries the key-exchange messages that the match
engine sends on a reserved internal tag space (tags used internally are
tuples, user tags are ints, so the spaces cannot collide).

Pairing is by (communicator, tag, source, destination) with posting-order
FIFO among identical signatures.  Each side numbers its own requests per
signature, so both ranks derive the same pairing independently and the
engine never needs a global arbiter.  Wildcards are not supported:
permanent pairing is ill-defined under them.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Any, Generator

from .costmodel import CostModel
from .errors import InvalidRankError, MatchInputError, StmpiError
from .nicsim import Fabric
from .simclock import Condition, Simulator, Wait

CTRL_NBYTES = 64  # modeled size of a match key-exchange message


@dataclass(frozen=True)
class Communicator:
    cid: int
    ranks: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.ranks)

    def check_rank(self, rank: int) -> int:
        if not 0 <= rank < self.size:
            raise InvalidRankError(f"rank {rank} outside communicator "
                                   f"{self.cid} of size {self.size}")
        return rank


class PersistentRequest:
    """A persistent send/rsend/recv.  States move along
    inactive -> match_pending -> matched -> (started <-> matched via wait),
    and matched -> freed."""

    def __init__(self, rank: int, req_id: int, kind: str, peer: int, tag: int,
                 comm: Communicator, buf: tuple[int, int]):
        assert kind in ("send", "rsend", "recv")
        self.rank = rank
        self.req_id = req_id
        self.kind = kind
        self.peer = peer
        self.tag = tag
        self.comm = comm
        self.buf = buf  # (base, length) in the owner's buffer space
        self.state = "inactive"
        self.pair: tuple[int, int] | None = None  # (peer rank, peer req id)
        self.pair_kind: str | None = None
        self.resources: Any = None  # filled by the stream-queue protocol
        self.start_epoch = 0
        self.wait_epoch = 0
        self.active_queue: Any = None

    @property
    def is_send_side(self) -> bool:
        return self.kind in ("send", "rsend")

    @property
    def matched(self) -> bool:
        return self.pair is not None

    def signature(self) -> tuple:
        src, dst = ((self.rank, self.peer) if self.is_send_side
                    else (self.peer, self.rank))
        return (self.comm.cid, self.tag, src, dst)

    def __repr__(self) -> str:
        return (f"PersistentRequest(r{self.rank} #{self.req_id} {self.kind} "
                f"peer={self.peer} tag={self.tag} {self.state})")


class MatchRequest:
    """Handle returned by a non-blocking match; completes when every covered
    request has paired.  Non-persistent and cannot be canceled."""

    def __init__(self, covered: list[PersistentRequest]):
        self.covered = list(covered)

    @property
    def done(self) -> bool:
        return all(r.matched for r in self.covered)


@dataclass
class _RecvSlot:
    buf: tuple[int, int]
    cond: Condition
    arrived: bool = False


@dataclass
class _SendState:
    cond: Condition
    done: bool = False


class Transport:
    """Delivery machinery for blocking sends/receives.

    Small messages are eager (the sender completes without waiting for the
    receiver); large ones simulate an RTS/CTS rendezvous.  Per-signature
    sequence numbers keep consumption in send order (MPI non-overtaking)
    even when eager and rendezvous traffic interleave.  Self-sends are
    always eager; a blocking self-rendezvous could never hand itself a CTS.
    """

    def __init__(self, sim: Simulator, cost: CostModel, fabric: Fabric):
        self.sim = sim
        self.cost = cost
        self.fabric = fabric
        n = len(fabric.mems)
        self._send_seq: list[dict[tuple, int]] = [dict() for _ in range(n)]
        self._inbox: list[dict[tuple, dict]] = [dict() for _ in range(n)]
        self._posted: list[dict[tuple, deque[_RecvSlot]]] = [dict() for _ in range(n)]
        self.match_handler = None  # set by MatchService

    # -- internal control messages -------------------------------------------

    def send_ctrl(self, src: int, dst: int, payload: dict) -> None:
        delay = self.cost.match_setup_ns + self.cost.transfer_time(CTRL_NBYTES)
        self.sim.schedule(delay, f"host{dst}", "match_ctrl",
                          lambda: self.match_handler(dst, payload))

    # -- user messages ----------------------------------------------------------

    def _next_seq(self, src: int, sig: tuple) -> int:
        seq = self._send_seq[src].get(sig, 0)
        self._send_seq[src][sig] = seq + 1
        return seq

    def _sig_inbox(self, dst: int, sig: tuple) -> dict:
        return self._inbox[dst].setdefault(sig, {"next": 0, "items": {}})

    def blocking_send(self, src: int, buf: tuple[int, int], dst: int,
                      tag: int, comm: Communicator) -> Generator:
        comm.check_rank(dst)
        base, length = buf
        sig = (comm.cid, tag, src, dst)
        seq = self._next_seq(src, sig)
        if self.cost.is_eager(length) or src == dst:
            payload = bytes(self.fabric.mems[src].read(base, length))
            delay = self.cost.match_setup_ns + self.cost.transfer_time(length)
            self.sim.schedule(delay, f"host{dst}", "eager_deliver",
                              lambda: self._arrive(dst, sig, seq,
                                                   ("eager", payload)))
            return
            yield  # pragma: no cover - marks this function as a generator
        state = _SendState(Condition(f"rndv-send@{src}:{tag}"))
        rts_delay = self.cost.match_setup_ns + self.cost.wire_latency_ns
        self.sim.schedule(rts_delay, f"host{dst}", "rts_arrive",
                          lambda: self._arrive(dst, sig, seq,
                                               ("rts", src, base, length, state)))
        while not state.done:
            yield Wait(state.cond)

    def blocking_recv(self, dst: int, buf: tuple[int, int], src: int,
                      tag: int, comm: Communicator) -> Generator:
        comm.check_rank(src)
        sig = (comm.cid, tag, src, dst)
        slot = _RecvSlot(buf, Condition(f"recv@{dst}:{tag}"))
        self._posted[dst].setdefault(sig, deque()).append(slot)
        self._pump(dst, sig)
        while not slot.arrived:
            yield Wait(slot.cond)

    def _arrive(self, dst: int, sig: tuple, seq: int, item: tuple) -> None:
        box = self._sig_inbox(dst, sig)
        box["items"][seq] = item
        self._pump(dst, sig)

    def _pump(self, dst: int, sig: tuple) -> None:
        box = self._sig_inbox(dst, sig)
        slots = self._posted[dst].setdefault(sig, deque())
        while slots and box["next"] in box["items"]:
            item = box["items"].pop(box["next"])
            box["next"] += 1
            slot = slots.popleft()
            if item[0] == "eager":
                self._deliver(dst, slot, item[1])
            else:
                _, src, base, length, state = item
                self._start_rendezvous(src, base, length, dst, slot, state)

    def _deliver(self, dst: int, slot: _RecvSlot, payload: bytes) -> None:
        base, length = slot.buf
        if len(payload) > length:
            raise StmpiError(f"message of {len(payload)} bytes overflows "
                             f"receive buffer of {length}")
        self.fabric.mems[dst].write(base, payload)
        slot.arrived = True
        self.sim.signal(slot.cond)

    def _start_rendezvous(self, src: int, base: int, length: int, dst: int,
                          slot: _RecvSlot, state: _SendState) -> None:
        wire = self.cost.wire_latency_ns

        def capture_and_ship() -> None:
            payload = bytes(self.fabric.mems[src].read(base, length))
            delay = wire + self.cost.serialization_ns(length)
            self.sim.schedule(delay, f"host{dst}", "rndv_deliver",
                              lambda: finish(payload))

        def finish(payload: bytes) -> None:
            self._deliver(dst, slot, payload)
            state.done = True
            self.sim.signal(state.cond)

        # CTS crosses back to the sender, which then ships the data.
        self.sim.schedule(wire, f"host{src}", "cts_arrive", capture_and_ship)


class MatchService:
    """Pairs persistent requests permanently and exchanges RMA keys.

    Each rank numbers its match submissions per signature; the k-th send-side
    request of a signature pairs with the peer's k-th recv-side request of
    the same signature.  Key material rides on internal control messages.
    """

    def __init__(self, transport: Transport, protocol) -> None:
        self.transport = transport
        self.transport.match_handler = self.on_ctrl
        self.protocol = protocol
        n = len(transport.fabric.mems)
        self._local_idx: list[dict[tuple, int]] = [dict() for _ in range(n)]
        self._pending: list[dict[tuple, PersistentRequest]] = [dict() for _ in range(n)]
        self._foreign: list[dict[tuple, dict]] = [dict() for _ in range(n)]
        self.progress = [Condition(f"match-progress@{r}") for r in range(n)]
        self._requests: list[dict[int, PersistentRequest]] = [dict() for _ in range(n)]

    def register(self, req: PersistentRequest) -> None:
        self._requests[req.rank][req.req_id] = req

    def imatch_all(self, rank: int,
                   requests: list[PersistentRequest]) -> MatchRequest:
        for req in requests:
            if not isinstance(req, PersistentRequest):
                raise MatchInputError(
                    f"{req!r} is not a persistent request and cannot be "
                    "matched with this API")
            if req.rank != rank:
                raise MatchInputError(f"{req!r} does not belong to rank {rank}")
            if req.state != "inactive":
                raise MatchInputError(f"{req!r} already entered matching")
        if len({id(r) for r in requests}) != len(requests):
            raise MatchInputError("duplicate request in match call")
        for req in requests:
            req.state = "match_pending"
            sig = req.signature()
            side = "send" if req.is_send_side else "recv"
            idx = self._local_idx[rank].get((sig, side), 0)
            self._local_idx[rank][(sig, side)] = idx + 1
            payload = self.protocol.prepare(req)
            self._pending[rank][(sig, side, idx)] = req
            self.transport.send_ctrl(rank, req.peer, {
                "sig": sig, "side": side, "idx": idx,
                "req_id": req.req_id, "kind": req.kind,
                "resources": payload,
            })
            self._try_pair(rank, sig, side, idx)
        return MatchRequest(requests)

    def match_all(self, rank: int,
                  requests: list[PersistentRequest]) -> Generator:
        handle = self.imatch_all(rank, requests)
        yield from self.wait(rank, handle)

    def wait(self, rank: int, handle: MatchRequest) -> Generator:
        while not handle.done:
            yield Wait(self.progress[rank])

    @staticmethod
    def is_matched(req: PersistentRequest) -> bool:
        if not isinstance(req, PersistentRequest):
            raise MatchInputError(f"{req!r} is not a persistent request")
        return req.matched

    def on_ctrl(self, rank: int, payload: dict) -> None:
        sig = payload["sig"]
        side = payload["side"]
        idx = payload["idx"]
        self._foreign[rank][(sig, side, idx)] = payload
        other = "recv" if side == "send" else "send"
        self._try_pair(rank, sig, other, idx)

    def _try_pair(self, rank: int, sig: tuple, side: str, idx: int) -> None:
        req = self._pending[rank].get((sig, side, idx))
        if req is None:
            return
        other = "recv" if side == "send" else "send"
        payload = self._foreign[rank].get((sig, other, idx))
        if payload is None:
            return
        del self._pending[rank][(sig, side, idx)]
        del self._foreign[rank][(sig, other, idx)]
        req.pair = (req.peer, payload["req_id"])
        req.pair_kind = payload["kind"]
        req.state = "matched"
        self.protocol.absorb(req, payload["resources"])
        self.transport.fabric.log("matched", rank=rank, req=req.req_id,
                                  peer=req.peer, peer_req=payload["req_id"])
        self.transport.sim.signal(self.progress[rank])


class RequestFactory:
    """Creates persistent requests for one rank."""

    def __init__(self, rank: int, match: MatchService):
        self.rank = rank
        self.match = match
        self._next_id = 0

    def _new(self, kind: str, buf: tuple[int, int], peer: int, tag: int,
             comm: Communicator) -> PersistentRequest:
        comm.check_rank(peer)
        if buf[1] < 0:
            raise StmpiError("buffer length must be >= 0")
        req = PersistentRequest(self.rank, self._next_id, kind, peer, tag,
                                comm, buf)
        self._next_id += 1
        self.match.register(req)
        return req

    def send_init(self, buf: tuple[int, int], peer: int, tag: int,
                  comm: Communicator, ready: bool = False) -> PersistentRequest:
        return self._new("rsend" if ready else "send", buf, peer, tag, comm)

    def recv_init(self, buf: tuple[int, int], peer: int, tag: int,
                  comm: Communicator) -> PersistentRequest:
        return self._new("recv", buf, peer, tag, comm)
