import copy
import itertools
import pickle

import pytest

from expanderquorum.protocols_auth import (
    NULL,
    AuthCommonSet,
    AuthConfig,
    AuthEntry,
    SignedValue,
    ab_consensus_program,
    ab_message_budget,
    check_chain,
    decide_max,
    dolev_strong_program,
    verify_common_set,
)
from expanderquorum.protocols_crash import ConfigError
from expanderquorum.runs import mixed_byzantine, run_ab_consensus, run_dolev_strong, seeded_bits
from expanderquorum.simnet import (
    RUNNING,
    AdversarySchedule,
    ByzantineAssignment,
    Envelope,
    NodeContext,
    NodeProgram,
    SignatureRegistry,
    StepResult,
    run_multiport,
)


def contexts(n):
    reg = SignatureRegistry()
    return reg, [NodeContext(i, n, reg) for i in range(n)]


# ---------------------------------------------------------------- values

def test_null_is_a_singleton_that_survives_copies():
    assert copy.deepcopy(NULL) is NULL
    assert pickle.loads(pickle.dumps(NULL)) is NULL
    assert repr(NULL) == "Null"


def test_decide_max_orders_null_lowest():
    assert decide_max([NULL, 0, NULL]) == 0
    assert decide_max([NULL, 1, 0]) == 1
    assert decide_max([NULL, NULL]) == 0


# ---------------------------------------------------------------- chains and sets

def test_check_chain_rules():
    reg, ctx = contexts(4)
    d = ("ds", 0, 1)
    good = SignedValue(0, 1, ((0, ctx[0].sign(d)), (2, ctx[2].sign(d))))
    assert check_chain(good, 4, reg.verify) == 2
    no_origin = SignedValue(0, 1, ((2, ctx[2].sign(d)),))
    assert check_chain(no_origin, 4, reg.verify) == -1
    dup = SignedValue(0, 1, ((0, ctx[0].sign(d)), (0, ctx[0].sign(d))))
    assert check_chain(dup, 4, reg.verify) == -1
    forged = SignedValue(0, 1, ((0, ctx[0].sign(d)), (3, ctx[2].sign(d))))
    assert check_chain(forged, 4, reg.verify) == -1
    assert check_chain("junk", 4, reg.verify) == -1


def _endorsed(ctx, values, signers):
    return AuthCommonSet(tuple(
        AuthEntry(v, tuple((s, ctx[s].sign(("out", i, v))) for s in signers)) for i, v in enumerate(values)))


def test_verify_common_set_accepts_threshold_and_rejects_forgeries():
    reg, ctx = contexts(5)
    ok = _endorsed(ctx, [1, 0, NULL, 1, 0], range(4))
    assert verify_common_set(ok, 5, 4, reg.verify)
    assert not verify_common_set(_endorsed(ctx, [1, 0, NULL, 1, 0], range(3)), 5, 4, reg.verify)
    # relabelled value keeps the old signatures, which no longer match
    entries = list(ok.entries)
    entries[1] = AuthEntry(1, entries[1].signatures)
    assert not verify_common_set(AuthCommonSet(tuple(entries)), 5, 4, reg.verify)
    # a signature attributed to the wrong signer
    entries = list(ok.entries)
    sigs = list(entries[0].signatures)
    sigs[0] = (4, sigs[0][1])
    entries[0] = AuthEntry(entries[0].value, tuple(sigs))
    assert not verify_common_set(AuthCommonSet(tuple(entries)), 5, 5, reg.verify)
    assert not verify_common_set(AuthCommonSet(ok.entries[:4]), 5, 4, reg.verify)
    assert not verify_common_set(("set", ok), 5, 4, reg.verify)


# ---------------------------------------------------------------- Dolev-Strong

@pytest.mark.parametrize("t", [1, 2, 3])
def test_ds_honest_source(t):
    n = 3 * t + 1
    out = run_dolev_strong(n, t, 0, 5)
    assert out.ok
    progs_out = set(out.metrics.decisions.values())
    assert progs_out == {5}
    assert out.metrics.rounds_elapsed == t + 1


def test_ds_silent_source_outputs_null():
    out = run_dolev_strong(4, 1, 0, 1, {0: "Silent"})
    assert out.ok
    assert {out.metrics.decisions[v] for v in (1, 2, 3)} == {NULL}


class PatternSource(NodeProgram):
    """Byzantine source: round-1 values per receiver from ``pattern``; optionally relays all later."""

    def __init__(self, pattern, relay, inner):
        self.pattern, self.relay, self.inner = pattern, relay, inner
        self.node_id = inner.node_id

    def attach(self, ctx):
        self.ctx = ctx
        self.inner.attach(ctx)

    def step(self, r, inbox):
        me = self.node_id
        out = []
        if r == 1:
            for w, vals in zip((1, 2, 3), self.pattern):
                items = tuple(SignedValue(me, v, ((me, self.ctx.sign(("ds", me, v))),)) for v in vals)
                if items:
                    out.append(Envelope(me, w, ("ds", items), 8))
        elif r == 2 and self.relay:
            seen = tuple(sv for e in inbox for sv in e.payload[1])
            if seen:
                out.extend(Envelope(me, w, ("ds", seen), 8) for w in (1, 2, 3))
        return StepResult(out, RUNNING)


def _expected_output(pattern):
    # honest nodes relay round-1 values to everyone, so each honest node extracts their union
    union = set().union(*map(set, pattern))
    return next(iter(union)) if len(union) == 1 else NULL


def test_ds_exhaustive_equivocating_source_n4():
    choices = [(), (0,), (1,), (0, 1)]
    for pattern in itertools.product(choices, repeat=3):
        for relay in (False, True):
            progs = [dolev_strong_program(4, 1, 0, 0, v) for v in range(4)]
            m = run_multiport(progs, AdversarySchedule(1, ByzantineAssignment({0: pattern})),
                              byzantine_factory=lambda strat, inner, rng: PatternSource(strat, relay, inner))
            outs = {progs[v].output for v in (1, 2, 3)}
            assert outs == {_expected_output(pattern)}, (pattern, relay)
            assert m.forgeries == 0


@pytest.mark.parametrize("strategy", ["Equivocate", "Silent", "SelectiveSend", "ReplayOldSignatures"])
def test_ds_byzantine_strategies_n7(strategy):
    for seed in range(6):
        out = run_dolev_strong(7, 2, 0, 1, {0: strategy, 3: strategy}, seed)
        assert out.ok, out.failed()


# ---------------------------------------------------------------- AB-Consensus config

def test_auth_config_thresholds():
    assert AuthConfig(40, 4).little_count == 20
    assert AuthConfig(40, 4).threshold == 16
    assert AuthConfig(40, 2).threshold == 8
    assert AuthConfig(11, 5).threshold == 6   # L = 11, capped at L - t
    assert ab_message_budget(4, 40) == 896


def test_auth_config_requires_t_below_half():
    with pytest.raises(ConfigError):
        ab_consensus_program(AuthConfig(10, 5), 0, 0)


@pytest.mark.parametrize("bit", [0, 1])
def test_ab_unanimous_no_faults(bit):
    cfg = AuthConfig(40, 4)
    out = run_ab_consensus(cfg, [bit] * 40)
    assert out.ok and set(out.metrics.decisions.values()) == {bit}


@pytest.mark.parametrize("t", [2, 4])
def test_ab_mixed_byzantine(t):
    cfg = AuthConfig(40, t)
    names = ["Equivocate", "Silent", "ReplayOldSignatures", "FloodInquiries", "SelectiveSend"]
    for seed in range(12):
        strategies = mixed_byzantine(40, t, names, seed, pool=cfg.little_count if seed % 2 else None)
        out = run_ab_consensus(cfg, seeded_bits(40, seed), strategies, seed)
        assert out.ok, (seed, out.failed())


def test_ab_forged_set_dropped():
    cfg = AuthConfig(20, 2)

    class ForgedSet(NodeProgram):
        def __init__(self, inner):
            self.inner = inner
            self.node_id = inner.node_id

        def attach(self, ctx):
            self.ctx = ctx
            self.inner.attach(ctx)

        def step(self, r, inbox):
            bogus = AuthCommonSet(tuple(AuthEntry(1, ((self.node_id, self.ctx.sign(("out", i, 1))),))
                                        for i in range(cfg.little_count)))
            return StepResult([Envelope(self.node_id, w, ("set", bogus)) for w in range(cfg.n)
                               if w != self.node_id], RUNNING)

    progs = [ab_consensus_program(cfg, 0, v) for v in range(cfg.n)]
    m = run_multiport(progs, AdversarySchedule(2, ByzantineAssignment({0: "x", 15: "x"})),
                      byzantine_factory=lambda s, inner, rng: ForgedSet(inner))
    honest = [v for v in range(cfg.n) if v not in (0, 15)]
    assert {m.decisions[v] for v in honest} == {0}
