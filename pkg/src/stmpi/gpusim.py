"""Simulated GPU streams: strict-FIFO op execution with launch latency.

Stream ops never read NIC counters; completion waits poll 8-byte memory
slots that triggered atomics update.  Value polls are modeled as condition
waits (with an optional fixed overhead), which is trace-equivalent to a
busy spin and keeps runs deterministic.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Generator, Optional

from .nicsim import Fabric
from .simclock import Condition, Sleep, Wait


@dataclass
class StreamOp:
    kind: str  # compute | write_value | poll_value | barrier
    label: str = ""
    duration: int = 0
    effect: Optional[Callable[[], None]] = None
    counter: int | None = None
    amount: int = 1
    # poll targets: (addr, value) pairs in the stream owner's buffer space;
    # the op completes when every slot has reached its value.
    targets: list[tuple[int, int]] = field(default_factory=list)
    overhead: int = 0
    on_complete: Optional[Callable[[], None]] = None


def compute(duration: int, effect: Callable[[], None] | None = None,
            label: str = "compute") -> StreamOp:
    return StreamOp("compute", label=label, duration=duration, effect=effect)


def write_value(counter: int, amount: int = 1,
                label: str = "write_value") -> StreamOp:
    return StreamOp("write_value", label=label, counter=counter, amount=amount)


def poll_value(targets: list[tuple[int, int]], overhead: int = 0,
               label: str = "poll_value") -> StreamOp:
    return StreamOp("poll_value", label=label, targets=list(targets),
                    overhead=overhead)


def barrier(label: str = "barrier") -> StreamOp:
    return StreamOp("barrier", label=label)


class Stream:
    def __init__(self, fabric: Fabric, rank: int, sid: int):
        self.fabric = fabric
        self.sim = fabric.sim
        self.cost = fabric.cost
        self.rank = rank
        self.sid = sid
        self.name = f"gpu{rank}.s{sid}"
        self.fifo: deque[StreamOp] = deque()
        self.busy = False
        self.idle_cond = Condition(f"{self.name}-idle")
        self._poll_unhooks: list[Callable[[], None]] = []

    @property
    def idle(self) -> bool:
        return not self.busy and not self.fifo

    def enqueue(self, op: StreamOp) -> StreamOp:
        self.fifo.append(op)
        self.fabric.log("stream_enqueue", rank=self.rank, stream=self.sid,
                        op=op.kind, label=op.label)
        if not self.busy:
            self._start_next()
        return op

    def synchronize(self) -> Generator:
        """Host-side stream synchronize: drain the FIFO, then pay the
        memory-barrier cost."""
        while not self.idle:
            yield Wait(self.idle_cond)
        yield Sleep(self.cost.gpu_barrier_ns)

    # -- engine ---------------------------------------------------------------

    def _start_next(self) -> None:
        self.busy = True
        op = self.fifo[0]
        self.sim.schedule(self.cost.kernel_launch_ns, self.name,
                          f"launch:{op.label}", lambda: self._run_body(op))

    def _run_body(self, op: StreamOp) -> None:
        if op.kind == "compute":
            self.sim.schedule(op.duration, self.name, f"done:{op.label}",
                              lambda: self._finish_compute(op))
        elif op.kind == "write_value":
            nic = self.fabric.nics[self.rank]
            self.fabric.log("wv_exec", rank=self.rank, stream=self.sid,
                            counter=op.counter, label=op.label)
            nic.increment_counter(op.counter, op.amount, cause="gpu")
            self._complete(op)
        elif op.kind == "poll_value":
            self._try_poll(op, first=True)
        elif op.kind == "barrier":
            self.sim.schedule(self.cost.gpu_barrier_ns, self.name,
                              f"done:{op.label}", lambda: self._complete(op))
        else:
            raise ValueError(f"unknown stream op kind {op.kind!r}")

    def _finish_compute(self, op: StreamOp) -> None:
        if op.effect is not None:
            op.effect()
        self._complete(op)

    def _try_poll(self, op: StreamOp, first: bool = False) -> None:
        if not self.fifo or self.fifo[0] is not op:
            return  # stale watcher callback after completion
        mem = self.fabric.mems[self.rank]
        if all(mem.read_u64(addr) >= value for addr, value in op.targets):
            self._unhook_polls()
            if op.overhead > 0:
                self.sim.schedule(op.overhead, self.name, f"done:{op.label}",
                                  lambda: self._complete(op))
            else:
                self._complete(op)
        elif first:
            for addr, _ in op.targets:
                self._poll_unhooks.append(
                    mem.add_watcher(addr, 8, lambda: self._try_poll(op)))

    def _unhook_polls(self) -> None:
        for unhook in self._poll_unhooks:
            unhook()
        self._poll_unhooks.clear()

    def _complete(self, op: StreamOp) -> None:
        self.fabric.log("stream_op_done", rank=self.rank, stream=self.sid,
                        op=op.kind, label=op.label)
        popped = self.fifo.popleft()
        assert popped is op, "stream completion out of FIFO order"
        if op.on_complete is not None:
            op.on_complete()
        if self.fifo:
            self._start_next()
        else:
            self.busy = False
            self.sim.signal(self.idle_cond)
