import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from expanderquorum.simnet import (
    RUNNING,
    AdversarySchedule,
    ByzantineAssignment,
    CrashAdaptive,
    CrashStatic,
    Decided,
    Envelope,
    FaultBudgetExceeded,
    Halted,
    IrrevocabilityViolation,
    Multicast,
    NodeProgram,
    PortIsolator,
    ProtocolViolation,
    RoundLimitExceeded,
    StepResult,
    TargetLittleNodes,
    UniformRandom,
    UnknownStrategy,
    crash_adversary_strategy,
    metrics_csv,
    parse_byzantine,
    run_multiport,
    run_singleport,
)


class Script(NodeProgram):
    """Sends a fixed list of envelopes per round and halts after ``last``."""

    def __init__(self, plan, last, poll=None):
        self.plan, self.last, self.poll = plan, last, poll or {}
        self.got = []

    def step(self, r, inbox):
        self.got.append((r, [(e.sender, e.payload) for e in inbox]))
        out = [Envelope(self.node_id, w, p) for w, p in self.plan.get(r, [])]
        if r >= self.last:
            return StepResult(out, Halted(len(self.got)))
        return StepResult(out, RUNNING, self.poll.get(r))


class Flooder(NodeProgram):
    """Broadcasts a counter each round to everyone; decides on the first round."""

    def __init__(self, rounds):
        self.rounds = rounds

    def step(self, r, inbox):
        n = self.ctx.n
        out = [Multicast(self.node_id, tuple(w for w in range(n) if w != self.node_id), ("c", r))]
        if r >= self.rounds:
            return StepResult([], Halted(0))
        return StepResult(out, Decided(0) if r == 1 else RUNNING)


def test_single_node_halts_immediately():
    m = run_multiport([Script({}, 1)])
    assert (m.rounds_elapsed, m.messages_total) == (1, 0)


def test_echo_pair():
    ping = Script({1: [(1, "x")]}, 2)
    pong = Script({2: [(0, "y")]}, 3)
    m = run_multiport([ping, pong])
    assert (m.messages_total, m.bits_total, m.rounds_elapsed) == (2, 2, 2)
    assert pong.got[1] == (2, [(0, "x")])
    assert ping.got[1] == (2, [])


def test_multicast_counts_per_receiver():
    m = run_multiport([Flooder(2) for _ in range(5)])
    assert m.messages_total == 5 * 4
    assert m.bits_total == 5 * 4


def test_round_limit():
    with pytest.raises(RoundLimitExceeded):
        run_multiport([Flooder(100) for _ in range(3)], max_rounds=5)


def test_irrevocable_decisions():
    class Flip(NodeProgram):
        def step(self, r, inbox):
            return StepResult([], Decided(r) if r < 3 else Halted())
    with pytest.raises(IrrevocabilityViolation):
        run_multiport([Flip()])


def test_spoofed_sender_rejected():
    class Spoof(NodeProgram):
        def step(self, r, inbox):
            return StepResult([Envelope(0, 0, "x")], Halted())
    with pytest.raises(ProtocolViolation):
        run_multiport([Script({}, 1), Spoof()])


def test_single_port_two_sends_is_violation():
    p = Script({1: [(1, "a"), (2, "b")]}, 2)
    with pytest.raises(ProtocolViolation):
        run_singleport([p, Script({}, 2), Script({}, 2)])


def test_single_port_unpolled_message_is_lost():
    sender = Script({1: [(1, "hello")]}, 2)
    receiver = Script({}, 2, poll={1: 2})
    third = Script({}, 2)
    run_singleport([sender, receiver, third])
    assert receiver.got[1] == (2, [])
    sender2 = Script({1: [(1, "hello")]}, 2)
    receiver2 = Script({}, 2, poll={1: 0})
    run_singleport([sender2, receiver2, Script({}, 2)])
    assert receiver2.got[1] == (2, [(0, "hello")])


def test_static_crash_before_sending_drops_everything():
    progs = [Flooder(3) for _ in range(4)]
    m = run_multiport(progs, AdversarySchedule(1, CrashStatic({2: 1}, "none")))
    assert m.crashed == {2: 1}
    assert m.sent_by.get(2, 0) == 0
    assert m.messages_total == 3 * 3 * 2


def test_crash_budget_enforced():
    with pytest.raises(FaultBudgetExceeded):
        run_multiport([Flooder(3) for _ in range(4)], AdversarySchedule(1, CrashStatic({1: 1, 2: 1}, "none")))


def test_uniform_random_zero_rate_never_crashes():
    m = run_multiport([Flooder(4) for _ in range(6)], AdversarySchedule(2, CrashAdaptive(UniformRandom(0))))
    assert m.crashed == {}


def test_target_little_nodes_stays_in_little_range():
    n, t = 50, 9
    m = run_multiport([Flooder(30) for _ in range(n)], AdversarySchedule(t, CrashAdaptive(TargetLittleNodes(), 3)),
                      horizon=30)
    assert m.crashed and all(v < 5 * t for v in m.crashed)


def test_unknown_strategy_names():
    with pytest.raises(UnknownStrategy):
        crash_adversary_strategy("Nope")
    with pytest.raises(UnknownStrategy):
        parse_byzantine("Nope")


def test_silent_byzantine_sends_nothing():
    progs = [Flooder(3) for _ in range(4)]
    m = run_multiport(progs, AdversarySchedule(1, ByzantineAssignment({3: "Silent"})))
    assert m.sent_by.get(3, 0) == 0
    assert m.messages_by_nonfaulty == m.messages_total


def test_forged_token_is_rejected():
    class Forger(NodeProgram):
        def step(self, r, inbox):
            forged = self.ctx.sign(("msg", 1))
            self.result = self.ctx.verify(forged, 0, ("msg", 1))
            return StepResult([], Halted())
    f = Forger()
    m = run_multiport([Script({}, 1), f])
    assert f.result is False and m.forgeries == 0


def test_port_isolator_blocks_victim_partner():
    class Pair(NodeProgram):
        def step(self, r, inbox):
            if inbox:
                return StepResult([], Halted(1))
            if r > 6:
                return StepResult([], Halted(0))
            w = (self.node_id + 1) % 2 if self.node_id < 2 else None
            out = [Envelope(self.node_id, w, "hi")] if w is not None else []
            return StepResult(out, RUNNING, w)
    m = run_singleport([Pair() for _ in range(4)], AdversarySchedule(1, CrashAdaptive(PortIsolator(0))))
    assert 1 in m.crashed and m.decisions[0] == 0


def test_metrics_serialization_is_stable():
    m = run_multiport([Flooder(3) for _ in range(3)])
    d = json.loads(m.to_json())
    assert d["rounds"] == m.rounds_elapsed and d["messages"] == 12
    assert metrics_csv([m]).splitlines()[0] == "rounds,messages,bits,messages_nonfaulty"


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2 ** 32), st.floats(0, 0.3))
def test_same_seed_identical_metrics(n, seed, rate):
    t = max(1, n // 3)

    def once():
        return run_multiport([Flooder(5) for _ in range(n)],
                             AdversarySchedule(t, CrashAdaptive(UniformRandom(rate))), seed=seed).to_json()
    assert once() == once()


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2 ** 32))
def test_crash_budget_never_exceeded(n, seed):
    t = random.Random(seed).randint(1, n - 1)
    m = run_multiport([Flooder(6) for _ in range(n)], AdversarySchedule(t, CrashAdaptive(UniformRandom(0.5))),
                      seed=seed)
    assert len(m.crashed) <= t
