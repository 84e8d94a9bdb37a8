"""Per-rank simulated NIC: RMA-keyed memory regions, triggering counters,
and deferred work queue entries for remote writes and triggered atomics.

Semantics that matter for protocol correctness:

* A counter never decreases; a watcher fires exactly once, at the first
  instant the counter value reaches its threshold.  If the threshold is
  already met when an entry is posted, it fires immediately.
* Remote-write payloads are captured when the entry fires (the NIC reads
  memory at operation launch, not at arming time).
* Payload delivery and the destination region's remote-write count are a
  single simulation event, so data is never observed to lag its count.
* NIC-executed writes and atomics into a counted region increment that
  region's counter regardless of whether source and destination ranks
  coincide (loopback still traverses the NIC).
* The deferred-entry pool is bounded; posting into a full pool blocks the
  calling host task until an entry retires.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Generator

from .costmodel import CostModel
from .errors import SimulationFault, StmpiError
from .memory import RankMemory
from .simclock import Condition, Simulator, Wait


@dataclass
class TriggerCounter:
    rank: int
    cid: int
    value: int = 0
    writeback: int = 0
    # (threshold, arm_seq, entry) triples; fired entries are removed.
    watchers: list[tuple[int, int, "DeferredWorkEntry"]] = field(default_factory=list)


@dataclass
class MemoryRegion:
    rank: int
    key: int
    base: int
    length: int
    remote_write_counter: int | None = None
    owns_counter: bool = False


@dataclass
class RemoteWrite:
    src_base: int
    length: int
    dest_rank: int
    dest_key: int
    dest_offset: int


@dataclass
class TriggeredAtomic:
    dest_rank: int
    dest_key: int
    dest_offset: int
    add: int = 1


@dataclass
class DeferredWorkEntry:
    rank: int
    eid: int
    op: RemoteWrite | TriggeredAtomic
    trigger_counter: int
    threshold: int
    completion_counter: int | None = None
    fired: bool = False
    retired: bool = False

    @property
    def kind(self) -> str:
        return "remote_write" if isinstance(self.op, RemoteWrite) else "triggered_atomic"

    def summary(self) -> dict:
        return {
            "rank": self.rank,
            "entry": self.eid,
            "kind": self.kind,
            "trigger_counter": self.trigger_counter,
            "threshold": self.threshold,
        }


class DwqPool:
    def __init__(self, sim: Simulator, rank: int, capacity: int):
        self.sim = sim
        self.rank = rank
        self.capacity = capacity
        self.in_use = 0
        self.high_water = 0
        self.freed = Condition(f"dwq-pool-free@{rank}")

    def acquire(self) -> Generator:
        while self.in_use >= self.capacity:
            yield Wait(self.freed)
        self.in_use += 1
        self.high_water = max(self.high_water, self.in_use)

    def release(self) -> None:
        assert self.in_use > 0
        self.in_use -= 1
        self.sim.signal(self.freed)


class Fabric:
    """All NICs plus the rank-local memories they operate on."""

    def __init__(self, sim: Simulator, cost: CostModel, n_ranks: int,
                 log_events: bool = False):
        self.sim = sim
        self.cost = cost
        self.mems = [RankMemory(r) for r in range(n_ranks)]
        self.nics = [Nic(self, r) for r in range(n_ranks)]
        self.events: list[dict] | None = [] if log_events else None
        sim.diagnostics.append(self.armed_entries)

    def log(self, kind: str, **fields) -> None:
        if self.events is not None:
            self.events.append({"t": self.sim.now, "kind": kind, **fields})

    def armed_entries(self) -> list[dict]:
        out = []
        for nic in self.nics:
            out.extend(e.summary() for e in nic.armed_entries())
        return out


class Nic:
    def __init__(self, fabric: Fabric, rank: int):
        self.fabric = fabric
        self.sim = fabric.sim
        self.cost = fabric.cost
        self.rank = rank
        self.mem = fabric.mems[rank]
        self.counters: dict[int, TriggerCounter] = {}
        self.regions: dict[int, MemoryRegion] = {}
        self.pool = DwqPool(self.sim, rank, self.cost.dwq_pool_capacity)
        self._next_counter = 0
        self._next_region = 0
        self._next_entry = 0
        self._entries: dict[int, DeferredWorkEntry] = {}

    # -- resources ----------------------------------------------------------

    def alloc_counter(self) -> int:
        cid = self._next_counter
        self._next_counter += 1
        self.counters[cid] = TriggerCounter(self.rank, cid)
        return cid

    def free_counter(self, cid: int) -> None:
        self.counters.pop(cid, None)

    def register_region(self, base: int, length: int,
                        count_remote_writes: bool = False,
                        counter: int | None = None) -> MemoryRegion:
        """Register [base, base+length) with a fresh key.  Overlapping
        registrations are permitted (MPI buffers may alias).  Remote-write
        counting can use a freshly allocated counter or bind an existing one
        (the CTS region shares the send triggering counter)."""
        self.mem.check_range(base, length)
        key = self._next_region
        self._next_region += 1
        owns = False
        if counter is not None:
            self._counter(counter)
        elif count_remote_writes:
            counter = self.alloc_counter()
            owns = True
        region = MemoryRegion(self.rank, key, base, length, counter, owns)
        self.regions[key] = region
        return region

    def free_region(self, key: int) -> None:
        region = self.regions.pop(key, None)
        if region is not None and region.owns_counter:
            self.free_counter(region.remote_write_counter)

    def armed_entries(self) -> list[DeferredWorkEntry]:
        return [e for e in self._entries.values() if not e.fired]

    # -- counters -------------------------------------------------------------

    def counter_value(self, cid: int) -> int:
        return self._counter(cid).value

    def read_counter_writeback(self, cid: int) -> int:
        # Host progress copies the live value into the writeback shadow.
        counter = self._counter(cid)
        counter.writeback = counter.value
        return counter.writeback

    def increment_counter(self, cid: int, amount: int = 1,
                          cause: str = "host") -> int:
        if amount < 0:
            raise ValueError("counters are monotone; amount must be >= 0")
        counter = self._counter(cid)
        counter.value += amount
        self.fabric.log("counter_incr", rank=self.rank, counter=cid,
                        value=counter.value, cause=cause)
        ready = [w for w in counter.watchers if w[0] <= counter.value]
        if ready:
            ready.sort(key=lambda w: (w[0], w[1]))
            for w in ready:
                counter.watchers.remove(w)
            for _, _, entry in ready:
                self._fire(entry)
        return counter.value

    def _counter(self, cid: int) -> TriggerCounter:
        try:
            return self.counters[cid]
        except KeyError:
            raise StmpiError(f"unknown counter {cid} on rank {self.rank}") from None

    # -- deferred work entries -------------------------------------------------

    def post_deferred(self, op: RemoteWrite | TriggeredAtomic,
                      trigger_counter: int, threshold: int,
                      completion_counter: int | None = None) -> Generator:
        """Arm a deferred entry; blocks the caller while the pool is full.

        Returns the armed entry (via StopIteration value).
        """
        counter = self._counter(trigger_counter)
        if completion_counter is not None:
            self._counter(completion_counter)
        dest_nic = self.fabric.nics[self._check_rank(op.dest_rank)]
        if op.dest_key not in dest_nic.regions:
            raise StmpiError(f"unknown region key {op.dest_key} "
                             f"on rank {op.dest_rank}")
        if isinstance(op, RemoteWrite):
            self.mem.check_range(op.src_base, op.length)

        if self.pool.in_use >= self.pool.capacity:
            self.fabric.log("pool_block", rank=self.rank,
                            in_use=self.pool.in_use)
        yield from self.pool.acquire()

        entry = DeferredWorkEntry(self.rank, self._next_entry, op,
                                  trigger_counter, threshold,
                                  completion_counter)
        self._next_entry += 1
        self._entries[entry.eid] = entry
        self.fabric.log("dwq_arm", rank=self.rank, entry=entry.eid,
                        entry_kind=entry.kind, counter=trigger_counter,
                        threshold=threshold)
        if counter.value >= threshold:
            self._fire(entry)
        else:
            counter.watchers.append((threshold, entry.eid, entry))
        return entry

    def _check_rank(self, rank: int) -> int:
        if not 0 <= rank < len(self.fabric.nics):
            raise StmpiError(f"unknown rank {rank}")
        return rank

    def _fire(self, entry: DeferredWorkEntry) -> None:
        assert not entry.fired, "deferred entries execute exactly once"
        entry.fired = True
        self.fabric.log("dwq_fire", rank=self.rank, entry=entry.eid,
                        entry_kind=entry.kind, counter=entry.trigger_counter,
                        threshold=entry.threshold)
        if isinstance(entry.op, RemoteWrite):
            payload = self.mem.read(entry.op.src_base, entry.op.length)
            delay = self.cost.transfer_time(entry.op.length)
            self.sim.schedule(delay, f"nic{self.rank}", "rw_deliver",
                              lambda: self._deliver_write(entry, payload))
        else:
            delay = self.cost.atomic_ns
            if entry.op.dest_rank != self.rank:
                delay += self.cost.wire_latency_ns
            self.sim.schedule(delay, f"nic{self.rank}", "atomic_land",
                              lambda: self._land_atomic(entry))

    def _dest_region(self, op: RemoteWrite | TriggeredAtomic,
                     length: int) -> tuple["Nic", MemoryRegion, int]:
        nic = self.fabric.nics[op.dest_rank]
        region = nic.regions.get(op.dest_key)
        if region is None:
            raise SimulationFault(f"region key {op.dest_key} vanished "
                                  f"on rank {op.dest_rank}")
        if op.dest_offset < 0 or op.dest_offset + length > region.length:
            raise SimulationFault(
                f"write of {length} bytes at offset {op.dest_offset} "
                f"overflows region {region.key} (len {region.length}) "
                f"on rank {region.rank}")
        return nic, region, region.base + op.dest_offset

    def _deliver_write(self, entry: DeferredWorkEntry, payload: bytes) -> None:
        op = entry.op
        assert isinstance(op, RemoteWrite)
        nic, region, addr = self._dest_region(op, op.length)
        nic.mem.write(addr, payload)
        self.fabric.log("rw_deliver", rank=self.rank, entry=entry.eid,
                        dest_rank=op.dest_rank, dest_key=op.dest_key,
                        dest_offset=op.dest_offset, length=op.length)
        if region.remote_write_counter is not None:
            nic.increment_counter(region.remote_write_counter,
                                  cause="remote_write")
        self.sim.schedule(self.cost.atomic_ns, f"nic{self.rank}",
                          "rw_local_completion",
                          lambda: self._complete_write(entry))

    def _complete_write(self, entry: DeferredWorkEntry) -> None:
        if entry.completion_counter is not None:
            self.increment_counter(entry.completion_counter,
                                   cause="local_completion")
        self._retire(entry)

    def _land_atomic(self, entry: DeferredWorkEntry) -> None:
        op = entry.op
        assert isinstance(op, TriggeredAtomic)
        nic, region, addr = self._dest_region(op, 8)
        if addr % 8 != 0:
            raise SimulationFault(f"misaligned atomic slot at {addr} "
                                  f"on rank {op.dest_rank}")
        nic.mem.write_u64(addr, nic.mem.read_u64(addr) + op.add)
        self.fabric.log("atomic_land", rank=self.rank, entry=entry.eid,
                        dest_rank=op.dest_rank, dest_key=op.dest_key,
                        dest_offset=op.dest_offset, add=op.add)
        if region.remote_write_counter is not None:
            nic.increment_counter(region.remote_write_counter,
                                  cause="remote_write")
        if entry.completion_counter is not None:
            self.increment_counter(entry.completion_counter,
                                   cause="local_completion")
        self._retire(entry)

    def _retire(self, entry: DeferredWorkEntry) -> None:
        assert not entry.retired
        entry.retired = True
        del self._entries[entry.eid]
        self.fabric.log("dwq_retire", rank=self.rank, entry=entry.eid)
        self.pool.release()
