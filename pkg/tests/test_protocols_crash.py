import random

import pytest
from hypothesis import given, settings, strategies as st

from expanderquorum.overlay import complete_graph, from_edges
from expanderquorum.protocols_crash import (
    ConfigError,
    ExtantSet,
    GraphRejected,
    ProtocolConfig,
    Scaled,
    aea_program,
    build_many_overlays,
    build_overlays,
    checkpointing_program,
    few_crashes_consensus,
    gossip_program,
    lg,
    local_probe,
    many_crashes_consensus,
    many_crashes_message_bound,
    many_crashes_round_bound,
    scv_flood_rounds,
    scv_program,
)
from expanderquorum.runs import (
    crash_adversary,
    run_checkpointing,
    run_few_crashes,
    run_gossip,
    run_many_crashes,
    seeded_bits,
)
from expanderquorum.simnet import AdversarySchedule, CrashStatic, run_multiport

from oracles import dense_neighborhood_brute

STRATEGIES = ["UniformRandom", "FrontLoaded", "BackLoaded", "TargetLittleNodes"]


def path(n):
    return from_edges(n, [(i, i + 1) for i in range(n - 1)])


# ---------------------------------------------------------------- helpers

def test_lg_is_ceiling_log2():
    assert [lg(x) for x in (1, 2, 3, 4, 5, 64, 65)] == [0, 1, 2, 2, 3, 6, 7]


def test_many_crashes_round_bound_value():
    assert many_crashes_round_bound(64) == 85


def test_scv_flood_rounds_values():
    # (2n/5) / max(t, n/t), then ceil(log_1.5)
    assert scv_flood_rounds(100, 9) == 4    # 40 / 11.1 = 3.6, log = 3.16
    assert scv_flood_rounds(200, 39) == 2   # 80 / 39 = 2.05, log = 1.77
    assert scv_flood_rounds(10, 1) == 1


def test_config_preconditions():
    with pytest.raises(ConfigError):
        ProtocolConfig(50, 10).require_few()
    with pytest.raises(ConfigError):
        ProtocolConfig(50, 0).require_few()
    with pytest.raises(ConfigError):
        ProtocolConfig(10, 10).require_many()


def test_related_nodes():
    cfg = ProtocolConfig(23, 1)
    assert cfg.related(2) == [7, 12, 17, 22]
    assert cfg.is_little(4) and not cfg.is_little(5)


def test_overly_strict_delta_rejects_graph():
    with pytest.raises((GraphRejected, ConfigError)):
        build_overlays(ProtocolConfig(100, 19, Scaled(degree=6, delta=6)))


# ---------------------------------------------------------------- local probing

def test_probe_complete_graph_all_survive():
    progs, _ = local_probe(complete_graph(7), 3, 6)
    assert all(p.survived for p in progs)


def test_probe_path_matches_dense_neighborhood_oracle():
    g = path(8)
    progs, _ = local_probe(g, 2, 2)
    assert progs[0].paused_at == 1 and progs[7].paused_at == 1
    expected = [dense_neighborhood_brute(g.adjacency, v, 2, 2, range(8)) for v in range(8)]
    assert [p.survived for p in progs] == expected


def test_probe_dead_neighbourhood_pauses():
    g = complete_graph(5)
    adv = AdversarySchedule(4, CrashStatic({1: 1, 2: 1, 3: 1, 4: 1}, "none"))
    progs, _ = local_probe(g, 2, 1, adversary=adv)
    assert progs[0].paused_at == 1 and not progs[0].survived


@settings(max_examples=40, deadline=None)
@given(st.integers(4, 10), st.integers(0, 10 ** 6), st.integers(1, 3), st.integers(1, 3))
def test_dense_neighborhood_implies_survival(n, seed, gamma, delta):
    rng = random.Random(seed)
    g = from_edges(n, [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.5])
    if delta > g.max_degree:
        return
    progs, _ = local_probe(g, gamma, delta)
    for v in range(n):
        if dense_neighborhood_brute(g.adjacency, v, gamma, delta, range(n)):
            assert progs[v].survived


# ---------------------------------------------------------------- AEA and SCV

def _run(progs, adversary=None, seed=0, part=None):
    return run_multiport(progs, adversary, None, seed, part_of_round=part)


@pytest.mark.parametrize("bit", [0, 1])
def test_aea_unanimous(bit):
    cfg = ProtocolConfig(50, 9)
    ov = build_overlays(cfg)
    m = _run([aea_program(cfg, bit, v, ov) for v in range(cfg.n)])
    assert set(m.decisions.values()) == {bit}
    assert len(m.decisions) == cfg.n


def test_aea_three_fifths_under_crashes():
    cfg = ProtocolConfig(50, 9)
    ov = build_overlays(cfg)
    for seed in range(40):
        inputs = seeded_bits(cfg.n, seed)
        progs = [aea_program(cfg, inputs[v], v, ov) for v in range(cfg.n)]
        m = _run(progs, crash_adversary(STRATEGIES[seed % 4], cfg.t, seed), seed)
        decided = {v for v, d in m.decisions.items() if d is not None}
        assert len(decided | set(m.crashed)) >= 3 * cfg.n / 5
        vals = {m.decisions[v] for v in decided}
        assert len(vals) <= 1 and vals <= set(inputs)


def test_scv_everyone_holds_value_sends_no_inquiries():
    cfg = ProtocolConfig(20, 1)
    ov = build_overlays(cfg)
    progs = [scv_program(cfg, 1, v, ov) for v in range(cfg.n)]
    m = _run(progs, part=progs[0].core.layout.part_of)
    assert set(m.decisions.values()) == {1} and len(m.decisions) == cfg.n
    assert m.per_part.get("scv-inquire") is None or m.per_part["scv-inquire"].messages == 0


@pytest.mark.parametrize("n,t,holders", [(100, 9, 60), (200, 39, 120)])
def test_scv_survivors_decide_common_value(n, t, holders):
    cfg = ProtocolConfig(n, t)
    ov = build_overlays(cfg)
    for seed in range(15):
        rng = random.Random(seed)
        hold = set(rng.sample(range(n), holders))
        progs = [scv_program(cfg, 1 if v in hold else None, v, ov) for v in range(n)]
        m = _run(progs, crash_adversary(STRATEGIES[seed % 4], t, seed), seed)
        alive = m.nonfaulty(n)
        assert all(m.decisions.get(v) == 1 for v in alive)
        undecided = sum(1 for v in alive if progs[v].core.undecided_after_flood)
        if t * t > n:
            assert undecided <= max(2 * t, t + n / t)


# ---------------------------------------------------------------- consensus

@pytest.mark.parametrize("bit", [0, 1])
def test_few_crashes_unanimous(bit):
    cfg = ProtocolConfig(100, 19)
    out = run_few_crashes(cfg, [bit] * 100, crash_adversary("FrontLoaded", 19, 1), 1)
    assert out.ok and set(out.metrics.decisions.values()) == {bit}


def test_few_crashes_front_loaded_mixed_inputs():
    cfg = ProtocolConfig(100, 19)
    for seed in range(20):
        out = run_few_crashes(cfg, seeded_bits(100, seed), crash_adversary("FrontLoaded", 19, seed), seed)
        assert out.ok, out.failed()
        assert out.measures["bits"] <= out.measures["bit_budget"]


def test_many_crashes_lone_survivor():
    n = 16
    cfg = ProtocolConfig(n, n - 1)
    ov = build_many_overlays(cfg)
    progs = [many_crashes_consensus(cfg, 0, v, ov) for v in range(n)]
    adv = AdversarySchedule(n - 1, CrashStatic({v: 1 + v % 3 for v in range(1, n)}))
    m = run_multiport(progs, adv)
    assert m.decisions[0] == 0 and m.rounds_elapsed <= many_crashes_round_bound(n)


def test_many_crashes_n64_t32():
    cfg = ProtocolConfig(64, 32)
    for seed in range(30):
        out = run_many_crashes(cfg, seeded_bits(64, seed), crash_adversary(STRATEGIES[seed % 4], 32, seed), seed)
        assert out.ok, out.failed()
        assert out.metrics.rounds_elapsed <= 85


def test_many_crashes_message_count_under_bound():
    cfg = ProtocolConfig(64, 63)
    out = run_many_crashes(cfg, seeded_bits(64, 3), crash_adversary("UniformRandom", 63, 3), 3)
    assert out.ok and out.metrics.messages_total <= many_crashes_message_bound(64, 63)


# ---------------------------------------------------------------- gossip and checkpointing

def test_gossip_no_crashes_complete_sets():
    cfg = ProtocolConfig(16, 1)
    out = run_gossip(cfg, seeded_bits(16, 0))
    assert out.ok
    assert all(s == frozenset(range(16)) for s in out.metrics.decisions.values())


def test_gossip_pre_send_crash_absent():
    cfg = ProtocolConfig(100, 19)
    out = run_gossip(cfg, seeded_bits(100, 1), AdversarySchedule(19, CrashStatic({7: 1}, "none")))
    assert out.ok
    assert all(7 not in s for s in out.metrics.decisions.values())


def test_gossip_random_schedules():
    cfg = ProtocolConfig(100, 19)
    for seed in range(20):
        out = run_gossip(cfg, seeded_bits(100, seed), crash_adversary(STRATEGIES[seed % 4], 19, seed), seed)
        assert out.ok, out.failed()


def test_checkpointing_no_crashes():
    cfg = ProtocolConfig(50, 9)
    out = run_checkpointing(cfg)
    assert out.ok
    assert set(out.metrics.decisions.values()) == {frozenset(range(50))}


def test_checkpointing_crash_at_start_and_halters():
    cfg = ProtocolConfig(50, 9)
    out = run_checkpointing(cfg, AdversarySchedule(9, CrashStatic({3: 1, 40: 30}, "none")))
    assert out.ok, out.failed()
    sets = set(out.metrics.decisions.values())
    assert len(sets) == 1
    s = next(iter(sets))
    assert 3 not in s
    assert all(v in s for v in out.metrics.halt_rounds if v not in out.metrics.crashed)


def test_checkpointing_random_schedules():
    cfg = ProtocolConfig(100, 19)
    for seed in range(10):
        out = run_checkpointing(cfg, crash_adversary(STRATEGIES[seed % 4], 19, seed), seed)
        assert out.ok, out.failed()
        assert out.metrics.rounds_elapsed <= out.measures["round_budget"]


# ---------------------------------------------------------------- extant sets

@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 40), st.integers(0, 1)), max_size=30))
def test_extant_set_monotone(offers):
    truth = {}
    ex = ExtantSet(0, (0,))
    for node, rumor in offers:
        rumor = truth.setdefault(node, rumor)
        before = ex.members()
        ex.merge(1 << node, (rumor << node,))
        assert before <= ex.members()
        assert ex.rumor(node) == rumor


def test_extant_set_conflict_detected():
    ex = ExtantSet(1 << 3, (1 << 3,))
    with pytest.raises(AssertionError):
        ex.merge(1 << 3, (0,))


def test_program_factories_validate_config():
    with pytest.raises(ConfigError):
        gossip_program(ProtocolConfig(10, 2), 0, 0)
    with pytest.raises(ConfigError):
        checkpointing_program(ProtocolConfig(10, 0), 0)
    with pytest.raises(ConfigError):
        few_crashes_consensus(ProtocolConfig(10, 5), 0, 0)
