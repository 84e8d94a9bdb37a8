"""Two-rank GPU ping-pong under the baseline and stream-triggered backends.

Rank 0 packs a fresh payload each round trip, sends it, and validates the
echo rank 1 returns.  Under the baseline every hop pays two kernel launches
and a stream synchronization around the blocking transfer; under the
stream-triggered backends every operation of every iteration is enqueued up
front and the host blocks once at the end.  Round-trip times come from the
virtual timestamps at which rank 0's unpack kernels execute, so warmup
iterations are excluded exactly.
"""

from __future__ import annotations

import struct

from ..costmodel import CostModel
from ..errors import StmpiError
from ..world import World
from .results import BenchKnobs, BenchResult

_MIB = 1 << 20


def default_iterations(nbytes: int) -> int:
    """Desk-scale iteration policy (scaled down 100x from production-size
    ping-pong campaigns)."""
    if nbytes < 4 * _MIB:
        return 1000
    if nbytes <= 64 * _MIB:
        return 100
    return 10


def _payload(k: int, nbytes: int) -> bytes:
    if nbytes >= 16:
        head = struct.pack("<QQ", k, nbytes)
        return head + bytes([(k * 31 + 7) & 0xFF]) * (nbytes - 16)
    return bytes([(k * 31 + 7) & 0xFF]) * nbytes


def run_pingpong(backend: str, sizes: list[int],
                 iterations: int | None = None, warmup: int = 1,
                 cost: CostModel | None = None,
                 knobs: BenchKnobs | None = None,
                 record_trace: bool = False):
    """Returns (results, worlds); one world per message size."""
    cost = cost if cost is not None else CostModel()
    knobs = knobs if knobs is not None else BenchKnobs()
    results: list[BenchResult] = []
    worlds: list[World] = []
    for nbytes in sizes:
        iters = iterations if iterations is not None else default_iterations(nbytes)
        world = World(2, cost=cost, record_trace=record_trace)
        stamps: list[int] = []
        mismatches: list[int] = []
        if backend == "baseline":
            _baseline_programs(world, nbytes, iters, warmup, knobs,
                               stamps, mismatches)
        elif backend in ("st-send", "st-rsend"):
            _stream_programs(world, nbytes, iters, warmup, knobs,
                             stamps, mismatches, ready=backend == "st-rsend")
        else:
            raise StmpiError(f"unknown backend {backend!r}")
        outcome = world.run()
        if not outcome.completed:
            raise StmpiError("ping-pong deadlocked:\n" + outcome.describe())
        if mismatches:
            raise StmpiError(f"payload mismatch in iterations {mismatches}")
        deltas = [b - a for a, b in zip(stamps, stamps[1:])]
        measured = deltas[warmup:]
        assert len(measured) == iters
        mean_rt = sum(measured) / len(measured)
        latency = mean_rt / 2
        results.append(BenchResult(
            backend=backend, size_bytes=nbytes, ranks=2, iterations=iters,
            mean_ns=mean_rt,
            metrics={"latency_ns": latency,
                     "bandwidth_gbps": nbytes / latency if latency else 0.0},
        ))
        worlds.append(world)
    return results, worlds


def _baseline_programs(world, nbytes, iters, warmup, knobs, stamps, mismatches):
    """CPU-driven loop: pack kernel, stream sync, blocking send; blocking
    recv, unpack kernel."""
    copy_ns = knobs.copy_ns(nbytes)
    # One extra round trip so the measured window spans exactly `iters`
    # boundary-to-boundary deltas after dropping the warmup ones.
    total = iters + warmup + 1

    def rank0(api):
        app = api.alloc(nbytes)
        sbuf, rbuf = api.alloc(nbytes), api.alloc(nbytes)
        for k in range(total):
            expect = _payload(k, nbytes)
            api.write(app, expect)
            api.enqueue_compute(
                copy_ns, lambda: api.write(sbuf, api.read(app, nbytes)),
                label="pack")
            yield from api.stream_synchronize()
            yield from api.blocking_send((sbuf, nbytes), peer=1, tag=0)
            yield from api.blocking_recv((rbuf, nbytes), peer=1, tag=1)
            stamps.append(world.sim.now)
            if api.read(rbuf, nbytes) != expect:
                mismatches.append(k)
            api.enqueue_compute(copy_ns, lambda: None, label="unpack")
        yield from api.stream_synchronize()

    def rank1(api):
        app = api.alloc(nbytes)
        sbuf, rbuf = api.alloc(nbytes), api.alloc(nbytes)
        for _ in range(total):
            yield from api.blocking_recv((rbuf, nbytes), peer=0, tag=0)
            api.enqueue_compute(
                copy_ns, lambda: api.write(app, api.read(rbuf, nbytes)),
                label="unpack")
            api.enqueue_compute(
                copy_ns, lambda: api.write(sbuf, api.read(app, nbytes)),
                label="pack")
            yield from api.stream_synchronize()
            yield from api.blocking_send((sbuf, nbytes), peer=0, tag=1)

    world.add_program(0, rank0)
    world.add_program(1, rank1)


def _stream_programs(world, nbytes, iters, warmup, knobs, stamps, mismatches,
                     ready):
    """Everything enqueued at startup; a single queue wait at the end."""
    copy_ns = knobs.copy_ns(nbytes)
    total = iters + warmup + 1

    def rank0(api):
        app = api.alloc(nbytes)
        sbuf, rbuf = api.alloc(nbytes), api.alloc(nbytes)
        queue = api.queue_init("cxi")
        send = api.send_init((sbuf, nbytes), peer=1, tag=0, ready=ready)
        recv = api.recv_init((rbuf, nbytes), peer=1, tag=1)
        yield from api.match_all([send, recv])

        def pack(k):
            def effect():
                api.write(app, _payload(k, nbytes))
                api.write(sbuf, api.read(app, nbytes))
            return effect

        def unpack(k):
            def effect():
                stamps.append(world.sim.now)
                if api.read(rbuf, nbytes) != _payload(k, nbytes):
                    mismatches.append(k)
            return effect

        for k in range(total):
            yield from api.enqueue_start_all(queue, [recv])
            api.enqueue_compute(copy_ns, pack(k), label="pack")
            yield from api.enqueue_start_all(queue, [send])
            api.enqueue_wait_all(queue)
            api.enqueue_compute(copy_ns, unpack(k), label="unpack")
        yield from api.queue_wait(queue)
        api.queue_free(queue)

    def rank1(api):
        app = api.alloc(nbytes)
        sbuf, rbuf = api.alloc(nbytes), api.alloc(nbytes)
        queue = api.queue_init("cxi")
        recv = api.recv_init((rbuf, nbytes), peer=0, tag=0)
        send = api.send_init((sbuf, nbytes), peer=0, tag=1, ready=ready)
        yield from api.match_all([recv, send])

        def unpack_eff():
            api.write(app, api.read(rbuf, nbytes))

        def pack_eff():
            api.write(sbuf, api.read(app, nbytes))

        for _ in range(total):
            yield from api.enqueue_start_all(queue, [recv])
            api.enqueue_wait_all(queue)  # covers this recv and the prior send
            api.enqueue_compute(copy_ns, unpack_eff, label="unpack")
            api.enqueue_compute(copy_ns, pack_eff, label="pack")
            yield from api.enqueue_start_all(queue, [send])
        api.enqueue_wait_all(queue)
        yield from api.queue_wait(queue)
        api.queue_free(queue)

    world.add_program(0, rank0)
    world.add_program(1, rank1)
