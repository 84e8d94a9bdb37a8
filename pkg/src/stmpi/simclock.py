"""Deterministic discrete-event engine with blockable per-rank host tasks.

The engine is strictly single threaded.  Host programs are generators that
yield blocking requests (a Condition to wait on, or a virtual-time sleep);
everything else in the system advances through scheduled events.  Identical
programs and parameters therefore produce byte-identical event traces.

Quiescence with unfinished tasks is reported as deadlock, never as a silent
exit: when the event heap drains, any task still blocked is listed together
with its blocking condition and whatever armed-but-unfired hardware state
the registered diagnostic callbacks contribute.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Any, Callable, Generator, Iterable


@dataclass(frozen=True)
class TraceRecord:
    time: int
    seq: int
    target: str
    kind: str

    def line(self) -> str:
        return f"{self.time},{self.seq},{self.target},{self.kind}"


@dataclass(order=True)
class SimEvent:
    time: int
    seq: int
    target: str = field(compare=False)
    kind: str = field(compare=False)
    action: Callable[[], None] = field(compare=False)
    cancelled: bool = field(default=False, compare=False)


class Condition:
    """A named wait point.  Signaling wakes every waiter (Mesa style);
    waiters re-check their predicate and may wait again."""

    __slots__ = ("name", "_waiters")

    def __init__(self, name: str):
        self.name = name
        self._waiters: list[HostTask] = []

    def __repr__(self) -> str:
        return f"Condition({self.name})"


class Wait:
    __slots__ = ("condition",)

    def __init__(self, condition: Condition):
        self.condition = condition


class Sleep:
    __slots__ = ("delay",)

    def __init__(self, delay: int):
        if delay < 0:
            raise ValueError("sleep delay must be >= 0")
        self.delay = delay


class HostTask:
    RUNNABLE = "runnable"
    BLOCKED = "blocked"
    FINISHED = "finished"

    def __init__(self, sim: "Simulator", rank: int, name: str,
                 program: Generator[Any, Any, Any]):
        self.sim = sim
        self.rank = rank
        self.name = name
        self.program = program
        self.state = HostTask.RUNNABLE
        self.waiting_on: Condition | None = None

    def __repr__(self) -> str:
        return f"HostTask({self.name}, {self.state})"

    def _step(self) -> None:
        try:
            request = next(self.program)
        except StopIteration:
            self.state = HostTask.FINISHED
            return
        if isinstance(request, Wait):
            self.state = HostTask.BLOCKED
            self.waiting_on = request.condition
            request.condition._waiters.append(self)
        elif isinstance(request, Sleep):
            self.state = HostTask.BLOCKED
            self.waiting_on = None
            self.sim.schedule(request.delay, self.name, "resume", self._wake)
        else:
            raise TypeError(f"host program yielded {request!r}; "
                            "expected Wait or Sleep")

    def _wake(self) -> None:
        self.state = HostTask.RUNNABLE
        self.waiting_on = None
        self._step()


@dataclass
class DeadlockReport:
    """Outcome of a run that went quiescent with unfinished tasks."""

    time: int
    blocked_tasks: list[tuple[str, str]]
    armed_entries: list[dict]

    @property
    def completed(self) -> bool:
        return False

    def describe(self) -> str:
        lines = [f"deadlock at t={self.time}"]
        for name, cond in self.blocked_tasks:
            lines.append(f"  task {name} blocked on {cond}")
        for entry in self.armed_entries:
            lines.append(f"  armed-but-unfired: {entry}")
        return "\n".join(lines)


@dataclass
class Completed:
    time: int

    @property
    def completed(self) -> bool:
        return True


class Simulator:
    def __init__(self, record_trace: bool = False):
        self.now = 0
        self._heap: list[SimEvent] = []
        self._seq = 0
        self.tasks: list[HostTask] = []
        self.record_trace = record_trace
        self.trace: list[TraceRecord] = []
        # Callbacks returning iterables of dicts describing armed-but-unfired
        # deferred hardware state, consulted when building a deadlock report.
        self.diagnostics: list[Callable[[], Iterable[dict]]] = []

    # -- event scheduling ---------------------------------------------------

    def schedule(self, delay: int, target: str, kind: str,
                 action: Callable[[], None]) -> SimEvent:
        if delay < 0:
            raise ValueError("delay must be >= 0")
        event = SimEvent(self.now + delay, self._seq, target, kind, action)
        self._seq += 1
        heapq.heappush(self._heap, event)
        return event

    def signal(self, condition: Condition) -> None:
        """Wake every task waiting on condition, in wait order."""
        waiters, condition._waiters = condition._waiters, []
        for task in waiters:
            self.schedule(0, task.name, f"wake:{condition.name}", task._wake)

    # -- tasks ----------------------------------------------------------------

    def spawn(self, rank: int, name: str,
              program: Generator[Any, Any, Any]) -> HostTask:
        task = HostTask(self, rank, name, program)
        self.tasks.append(task)
        self.schedule(0, name, "start", task._step)
        return task

    # -- main loop ------------------------------------------------------------

    def run_until_quiescent(self) -> Completed | DeadlockReport:
        while self._heap:
            event = heapq.heappop(self._heap)
            if event.cancelled:
                continue
            assert event.time >= self.now, "virtual time went backwards"
            self.now = event.time
            if self.record_trace:
                self.trace.append(
                    TraceRecord(event.time, event.seq, event.target, event.kind))
            event.action()
        if all(t.state == HostTask.FINISHED for t in self.tasks):
            return Completed(self.now)
        blocked = [
            (t.name, t.waiting_on.name if t.waiting_on else "<resume pending>")
            for t in self.tasks if t.state != HostTask.FINISHED
        ]
        armed: list[dict] = []
        for probe in self.diagnostics:
            armed.extend(probe())
        return DeadlockReport(self.now, blocked, armed)

    def dump_trace(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for record in self.trace:
                fh.write(record.line() + "\n")
