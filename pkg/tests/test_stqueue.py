import pytest

from stmpi import CostModel, World
from stmpi.errors import (ForeignQueueError, MatchInputError,
                          NeverStartedError, OutstandingStartError,
                          QueueNotEmptyError, StmpiError,
                          UnknownQueueKindError, UnmatchedRequestError)


def exchange_world(nbytes=64, ready=False, sender_gpu_delay=0,
                   receiver_host_delay=0, receiver_gpu_delay=0,
                   cost=None):
    """One matched pair, one start/wait each side; returns (world, state)."""
    world = World(2, cost=cost, log_events=True)
    state = {}

    def sender(api):
        buf = api.alloc(nbytes)
        api.write(buf, bytes((7 * i + 1) & 0xFF for i in range(nbytes)))
        q = api.queue_init("cxi")
        req = api.send_init((buf, nbytes), peer=1, tag=0, ready=ready)
        yield from api.match_all([req])
        state["send_req"] = req
        if sender_gpu_delay:
            api.enqueue_compute(sender_gpu_delay, label="delay")
        yield from api.enqueue_start_all(q, [req])
        api.enqueue_wait_all(q, [req])
        yield from api.queue_wait(q)
        state["send_done"] = world.sim.now
        api.queue_free(q)

    def receiver(api):
        buf = api.alloc(nbytes)
        q = api.queue_init("cxi")
        req = api.recv_init((buf, nbytes), peer=0, tag=0)
        yield from api.match_all([req])
        state["recv_req"] = req
        if receiver_host_delay:
            yield from api.sleep(receiver_host_delay)
        if receiver_gpu_delay:
            api.enqueue_compute(receiver_gpu_delay, label="delay")
        yield from api.enqueue_start_all(q, [req])
        api.enqueue_wait_all(q, [req])
        yield from api.queue_wait(q)
        state["recv_done"] = world.sim.now
        state["data"] = api.read(buf, nbytes)
        api.queue_free(q)

    world.add_program(0, sender)
    world.add_program(1, receiver)
    return world, state


def events_of(world, kind):
    return [e for e in world.events if e["kind"] == kind]


class TestRegularSendProtocol:
    def test_exchange_delivers_and_completes(self):
        world, state = exchange_world()
        assert world.run().completed
        assert state["data"] == bytes((7 * i + 1) & 0xFF for i in range(64))

    def test_data_write_armed_at_even_threshold(self):
        world, state = exchange_world()
        assert world.run().completed
        arms = [e for e in events_of(world, "dwq_arm")
                if e["entry_kind"] == "remote_write"]
        assert arms[0]["threshold"] == 2

    @pytest.mark.parametrize("delays", [
        dict(receiver_host_delay=50_000),   # CTS arrives long after GPU trigger
        dict(sender_gpu_delay=50_000),      # GPU trigger long after CTS
    ])
    def test_fires_only_after_gpu_and_cts_in_either_order(self, delays):
        world, state = exchange_world(**delays)
        assert world.run().completed
        send_req = state["send_req"]
        trigger = send_req.resources.trigger_counter
        incr = [e for e in events_of(world, "counter_incr")
                if e["rank"] == 0 and e["counter"] == trigger]
        gpu_t = [e["t"] for e in incr if e["cause"] == "gpu"]
        cts_t = [e["t"] for e in incr if e["cause"] == "remote_write"]
        fires = [e for e in events_of(world, "dwq_fire")
                 if e["entry_kind"] == "remote_write"]
        assert len(fires) == 1
        assert fires[0]["t"] >= max(gpu_t[0], cts_t[0])

    def test_no_write_before_receiver_start_op(self):
        world, state = exchange_world(receiver_gpu_delay=25_000)
        assert world.run().completed
        recv_wv = [e for e in events_of(world, "wv_exec") if e["rank"] == 1]
        deliver = events_of(world, "rw_deliver")
        assert deliver[0]["t"] >= recv_wv[0]["t"]

    def test_completion_slots_hit_exactly_once(self):
        world, state = exchange_world()
        assert world.run().completed
        for req in (state["send_req"], state["recv_req"]):
            mem = world.fabric.mems[req.rank]
            assert mem.read_u64(req.resources.completion_slot_base) == 1


class TestReadySendProtocol:
    def test_data_write_depends_only_on_gpu_trigger(self):
        world, state = exchange_world(ready=True)
        assert world.run().completed
        fires = [e for e in events_of(world, "dwq_fire")
                 if e["entry_kind"] == "remote_write"]
        wv = [e for e in events_of(world, "wv_exec") if e["rank"] == 0]
        assert fires[0]["t"] == wv[0]["t"]
        # no CTS traffic at all: no remote atomic ever lands on rank 0
        lands = [e for e in events_of(world, "atomic_land")
                 if e["dest_rank"] == 0 and e["rank"] == 1]
        assert lands == []

    def test_rsend_faster_than_regular_send(self):
        w1, s1 = exchange_world(ready=False)
        w2, s2 = exchange_world(ready=True)
        assert w1.run().completed and w2.run().completed
        assert s2["recv_done"] < s1["recv_done"]


class TestCounterSharing:
    def _halo_like(self, n_pairs=4, starts=1):
        """n_pairs rsends rank0 -> rank1 plus n_pairs recvs paired with
        regular sends rank1 -> rank0, all started in one call per side."""
        world = World(2, log_events=True)
        state = {}

        def p0(api):
            q = api.queue_init("cxi")
            rsends = [api.send_init((api.alloc(8), 8), peer=1, tag=t, ready=True)
                      for t in range(n_pairs)]
            recvs = [api.recv_init((api.alloc(8), 8), peer=1, tag=100 + t)
                     for t in range(n_pairs)]
            yield from api.match_all(rsends + recvs)
            state["thresholds"] = []
            for _ in range(starts):
                yield from api.enqueue_start_all(q, recvs + rsends)
                api.enqueue_wait_all(q)
            yield from api.queue_wait(q)
            state["queue"] = q

        def p1(api):
            q = api.queue_init("cxi")
            recvs = [api.recv_init((api.alloc(8), 8), peer=0, tag=t)
                     for t in range(n_pairs)]
            sends = [api.send_init((api.alloc(8), 8), peer=0, tag=100 + t)
                     for t in range(n_pairs)]
            yield from api.match_all(recvs + sends)
            for _ in range(starts):
                yield from api.enqueue_start_all(q, recvs)
                yield from api.enqueue_start_all(q, sends)
                api.enqueue_wait_all(q)
            yield from api.queue_wait(q)

        world.add_program(0, p0)
        world.add_program(1, p1)
        return world, state

    def test_mixed_startall_enqueues_one_write_value(self):
        world, state = self._halo_like(n_pairs=4)
        assert world.run().completed
        wv_ops = [e for e in world.events
                  if e["kind"] == "stream_enqueue" and e["op"] == "write_value"
                  and e["rank"] == 0]
        assert len(wv_ops) == 1  # 4 recvs + 4 rsends share a single trigger

    def test_regular_sends_never_share(self):
        world, state = self._halo_like(n_pairs=4)
        assert world.run().completed
        # rank 1's recvs pair with ready sends (no CTS release op), so its
        # write-values are exactly one per regular send, on distinct counters
        wv_execs = [e for e in world.events
                    if e["kind"] == "wv_exec" and e["rank"] == 1]
        assert len(wv_execs) == 4
        assert len({e["counter"] for e in wv_execs}) == 4

    def test_group_thresholds_advance_with_each_startall(self):
        world, state = self._halo_like(n_pairs=2, starts=3)
        assert world.run().completed
        arms = [e for e in events_of(world, "dwq_arm")
                if e["rank"] == 0 and e["entry_kind"] == "remote_write"]
        assert [e["threshold"] for e in arms] == [1, 1, 2, 2, 3, 3]


class TestEnqueueValidation:
    def _matched_pair(self, world):
        state = {}

        def p0(api):
            q = api.queue_init("cxi")
            req = api.send_init((api.alloc(8), 8), peer=1, tag=0)
            unmatched = api.send_init((api.alloc(8), 8), peer=1, tag=1)
            yield from api.match_all([req])
            state.update(q=q, req=req, unmatched=unmatched, api=api)

        def p1(api):
            req = api.recv_init((api.alloc(8), 8), peer=0, tag=0)
            yield from api.match_all([req])

        world.add_program(0, p0)
        world.add_program(1, p1)
        world.run()
        return state

    @staticmethod
    def _drive(gen):
        try:
            while True:
                next(gen)
        except StopIteration:
            pass

    def test_unmatched_enqueue_all_or_nothing(self):
        world = World(2, log_events=True)
        state = self._matched_pair(world)
        q, req, unmatched = state["q"], state["req"], state["unmatched"]
        nic = world.fabric.nics[0]
        before = (len(nic.armed_entries()), nic.pool.in_use,
                  req.start_epoch, len(q.stream.fifo), len(q.outstanding))
        with pytest.raises(UnmatchedRequestError):
            self._drive(q.enqueue_start_all([req, unmatched]))
        after = (len(nic.armed_entries()), nic.pool.in_use,
                 req.start_epoch, len(q.stream.fifo), len(q.outstanding))
        assert before == after  # nothing armed, nothing enqueued

    def test_non_persistent_enqueue_rejected(self):
        world = World(2)
        state = self._matched_pair(world)
        with pytest.raises(MatchInputError):
            self._drive(state["q"].enqueue_start_all([object()]))

    def test_double_start_without_wait_rejected(self):
        world = World(2)
        state = self._matched_pair(world)
        q, req = state["q"], state["req"]
        self._drive(q.enqueue_start_all([req]))
        with pytest.raises(OutstandingStartError):
            self._drive(q.enqueue_start_all([req]))

    def test_wait_on_foreign_queue_rejected(self):
        world = World(2)
        state = self._matched_pair(world)
        q, req, api = state["q"], state["req"], state["api"]
        other = api.queue_init("cxi", api.new_stream())
        self._drive(q.enqueue_start_all([req]))
        with pytest.raises(ForeignQueueError):
            other.enqueue_wait_all([req])

    def test_wait_without_start_rejected(self):
        world = World(2)
        state = self._matched_pair(world)
        with pytest.raises(NeverStartedError):
            state["q"].enqueue_wait_all([state["req"]])

    def test_free_with_unwaited_start_rejected(self):
        world = World(2)
        state = self._matched_pair(world)
        q, req = state["q"], state["req"]
        self._drive(q.enqueue_start_all([req]))
        with pytest.raises(QueueNotEmptyError):
            q.free()

    def test_unknown_queue_kind_rejected(self):
        world = World(1)
        with pytest.raises(UnknownQueueKindError):
            world.apis[0].queue_init("portals")


class TestQueueLifecycle:
    def test_init_then_free_restores_resource_balance(self):
        world = World(1)
        api = world.apis[0]
        nic = world.fabric.nics[0]
        before = (len(nic.counters), len(nic.regions), nic.pool.in_use)
        q = api.queue_init("cxi")
        api.queue_free(q)
        after = (len(nic.counters), len(nic.regions), nic.pool.in_use)
        assert before == after

    def test_request_free_releases_nic_resources(self):
        world = World(2)
        counts = {}

        def p0(api):
            nic = world.fabric.nics[0]
            counts["before"] = (len(nic.counters), len(nic.regions))
            req = api.send_init((api.alloc(8), 8), peer=1, tag=0)
            yield from api.match_all([req])
            counts["matched"] = (len(nic.counters), len(nic.regions))
            api.request_free(req)
            counts["after"] = (len(nic.counters), len(nic.regions))
            assert req.state == "freed" and req.pair is None

        def p1(api):
            req = api.recv_init((api.alloc(8), 8), peer=0, tag=0)
            yield from api.match_all([req])
            api.request_free(req)

        world.add_program(0, p0)
        world.add_program(1, p1)
        assert world.run().completed
        assert counts["matched"] > counts["before"]
        assert counts["after"] == counts["before"]

    def test_queue_wait_on_empty_queue_costs_one_barrier(self):
        world = World(1)
        times = {}

        def p0(api):
            q = api.queue_init("cxi")
            yield from api.queue_wait(q)
            times["first"] = world.sim.now
            yield from api.queue_wait(q)
            times["second"] = world.sim.now

        world.add_program(0, p0)
        assert world.run().completed
        assert times == {"first": 1000, "second": 2000}

    def test_poll_targets_follow_start_epochs(self):
        world = World(2)
        targets = []

        def p0(api):
            q = api.queue_init("cxi")
            req = api.send_init((api.alloc(8), 8), peer=1, tag=0, ready=True)
            yield from api.match_all([req])
            for _ in range(2):
                yield from api.enqueue_start_all(q, [req])
                api.enqueue_wait_all(q, [req])
                targets.append(q.stream.fifo[-1].targets[0][1])
            yield from api.queue_wait(q)

        def p1(api):
            q = api.queue_init("cxi")
            req = api.recv_init((api.alloc(8), 8), peer=0, tag=0)
            yield from api.match_all([req])
            for _ in range(2):
                yield from api.enqueue_start_all(q, [req])
                api.enqueue_wait_all(q, [req])
            yield from api.queue_wait(q)

        world.add_program(0, p0)
        world.add_program(1, p1)
        assert world.run().completed
        assert targets == [1, 2]

    def test_startall_enqueues_only_write_values(self):
        world, state = exchange_world()
        assert world.run().completed
        enq = [e for e in world.events if e["kind"] == "stream_enqueue"]
        start_ops = [e["op"] for e in enq if e["label"].startswith("trigger:")]
        assert set(start_ops) == {"write_value"}

    def test_two_queues_one_stream_interleave_fifo(self):
        world = World(1, log_events=True)

        def p0(api):
            q1 = api.queue_init("cxi")
            q2 = api.queue_init("cxi", api.stream)
            api.enqueue_compute(10, label="a-q1")
            api.enqueue_compute(10, label="b-q2")
            api.enqueue_compute(10, label="c-q1")
            yield from api.queue_wait(q1)
            yield from api.queue_wait(q2)

        world.add_program(0, p0)
        assert world.run().completed
        done = [e["label"] for e in world.events
                if e["kind"] == "stream_op_done" and e["op"] == "compute"]
        assert done == ["a-q1", "b-q2", "c-q1"]

    def test_queue_wait_returns_after_unpack_in_gather_sequence(self):
        world = World(2, log_events=True)
        times = {}

        def p0(api):
            q = api.queue_init("cxi")
            req = api.send_init((api.alloc(8), 8), peer=1, tag=0, ready=True)
            yield from api.match_all([req])
            api.enqueue_compute(100, label="pack")
            yield from api.enqueue_start_all(q, [req])
            api.enqueue_wait_all(q)
            api.enqueue_compute(100, label="unpack")
            yield from api.queue_wait(q)
            times["host"] = world.sim.now

        def p1(api):
            q = api.queue_init("cxi")
            req = api.recv_init((api.alloc(8), 8), peer=0, tag=0)
            yield from api.match_all([req])
            yield from api.enqueue_start_all(q, [req])
            api.enqueue_wait_all(q)
            yield from api.queue_wait(q)

        world.add_program(0, p0)
        world.add_program(1, p1)
        assert world.run().completed
        unpack_done = [e["t"] for e in world.events
                       if e["kind"] == "stream_op_done" and e["label"] == "unpack"]
        assert times["host"] >= unpack_done[0]


class TestPipelinedRestarts:
    def test_request_stays_outstanding_until_its_latest_wait(self):
        # start/wait/start/wait enqueued before anything executes: the first
        # poll's completion must not clear the request while the second
        # start is still in flight (queue_free would lie otherwise)
        world = World(2, log_events=True)
        observed = {}

        def p0(api):
            q = api.queue_init("cxi")
            req = api.send_init((api.alloc(8), 8), peer=1, tag=0, ready=True)
            yield from api.match_all([req])
            yield from api.enqueue_start_all(q, [req])
            api.enqueue_wait_all(q, [req])
            # FIFO position: right after the first poll, before the second
            # start's trigger executes
            api.enqueue_compute(
                0, lambda: observed.setdefault("between", len(q.outstanding)),
                label="probe")
            yield from api.enqueue_start_all(q, [req])
            api.enqueue_wait_all(q, [req])
            yield from api.queue_wait(q)
            observed["end"] = len(q.outstanding)

        def p1(api):
            q = api.queue_init("cxi")
            req = api.recv_init((api.alloc(8), 8), peer=0, tag=0)
            yield from api.match_all([req])
            for _ in range(2):
                yield from api.enqueue_start_all(q, [req])
                api.enqueue_wait_all(q, [req])
            yield from api.queue_wait(q)

        world.add_program(0, p0)
        world.add_program(1, p1)
        assert world.run().completed
        assert observed["between"] == 1  # still outstanding: restart pending
        assert observed["end"] == 0

    def test_restart_on_second_queue_waits_there(self):
        world = World(2)

        def p0(api):
            q1 = api.queue_init("cxi")
            q2 = api.queue_init("cxi", api.new_stream())
            req = api.send_init((api.alloc(8), 8), peer=1, tag=0, ready=True)
            yield from api.match_all([req])
            yield from api.enqueue_start_all(q1, [req])
            api.enqueue_wait_all(q1, [req])
            yield from api.queue_wait(q1)
            yield from api.enqueue_start_all(q2, [req])
            api.enqueue_wait_all(q2, [req])
            yield from api.queue_wait(q2)
            api.queue_free(q1)
            api.queue_free(q2)

        def p1(api):
            q = api.queue_init("cxi")
            req = api.recv_init((api.alloc(8), 8), peer=0, tag=0)
            yield from api.match_all([req])
            for _ in range(2):
                yield from api.enqueue_start_all(q, [req])
                api.enqueue_wait_all(q, [req])
            yield from api.queue_wait(q)

        world.add_program(0, p0)
        world.add_program(1, p1)
        assert world.run().completed

    def test_cross_queue_restart_while_first_poll_pending(self):
        # restart on queue 2 before queue 1's poll has completed: both
        # queues must drain, and queue 1 must not keep a stale entry
        world = World(2)

        def p0(api):
            q1 = api.queue_init("cxi")
            q2 = api.queue_init("cxi", api.new_stream())
            req = api.send_init((api.alloc(8), 8), peer=1, tag=0, ready=True)
            yield from api.match_all([req])
            yield from api.enqueue_start_all(q1, [req])
            api.enqueue_wait_all(q1, [req])
            yield from api.enqueue_start_all(q2, [req])
            api.enqueue_wait_all(q2, [req])
            yield from api.queue_wait(q1)
            yield from api.queue_wait(q2)
            api.queue_free(q1)
            api.queue_free(q2)

        def p1(api):
            q = api.queue_init("cxi")
            req = api.recv_init((api.alloc(8), 8), peer=0, tag=0)
            yield from api.match_all([req])
            for _ in range(2):
                yield from api.enqueue_start_all(q, [req])
                api.enqueue_wait_all(q, [req])
            yield from api.queue_wait(q)

        world.add_program(0, p0)
        world.add_program(1, p1)
        assert world.run().completed


class TestDeadlockReporting:
    def test_partner_never_starts_receive(self):
        world = World(2, log_events=True)
        captured = {}

        def sender(api):
            q = api.queue_init("cxi")
            req = api.send_init((api.alloc(8), 8), peer=1, tag=0)
            yield from api.match_all([req])
            captured["trigger"] = None
            yield from api.enqueue_start_all(q, [req])
            captured["trigger"] = req.resources.trigger_counter
            api.enqueue_wait_all(q, [req])
            yield from api.queue_wait(q)

        def receiver(api):
            req = api.recv_init((api.alloc(8), 8), peer=0, tag=0)
            yield from api.match_all([req])  # matched, but never started

        world.add_program(0, sender)
        world.add_program(1, receiver)
        outcome = world.run()
        assert not outcome.completed
        assert any("host0" == name for name, _ in outcome.blocked_tasks)
        stuck_writes = [e for e in outcome.armed_entries
                        if e["kind"] == "remote_write"
                        and e["trigger_counter"] == captured["trigger"]
                        and e["threshold"] == 2]
        assert stuck_writes, outcome.describe()
