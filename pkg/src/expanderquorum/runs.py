"""One-call runners for every protocol, with the per-run property checks.

Each runner returns a :class:`RunOutcome` whose ``checks`` hold the hard invariants
(agreement, validity, termination, gossip conditions, audits). Measured quantities that
are targets rather than invariants go into ``measures``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .protocols_auth import (
    AuthConfig,
    AuthLayout,
    ab_consensus_program,
    ab_message_budget,
    build_auth_overlay,
    decide_max,
    dolev_strong_program,
)
from .protocols_crash import (
    ProtocolConfig,
    build_many_overlays,
    build_overlays,
    checkpointing_program,
    few_crashes_consensus,
    gossip_program,
    lg,
    many_crashes_consensus,
    many_crashes_round_bound,
)
from .simnet import (
    AdversarySchedule,
    ByzantineAssignment,
    CrashAdaptive,
    RunMetrics,
    crash_adversary_strategy,
    run_multiport,
    run_singleport,
)
from .singleport import adapted_gossip, run_consensus_singleport


@dataclass
class RunOutcome:
    metrics: RunMetrics
    checks: dict[str, bool]
    measures: dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def failed(self) -> list[str]:
        return [k for k, v in self.checks.items() if not v]


def crash_adversary(strategy: Any, t: int, seed: int = 0) -> AdversarySchedule:
    """Crash adversary from a policy object or a registered name such as ``"FrontLoaded"``."""
    if isinstance(strategy, str):
        strategy = crash_adversary_strategy(strategy)
    return AdversarySchedule(t, CrashAdaptive(strategy, seed))


def consensus_checks(m: RunMetrics, inputs: Sequence[Any], n: int) -> dict[str, bool]:
    """Uniform agreement, validity and termination for crash-model consensus."""
    decided = set(m.decisions.values())
    alive = m.nonfaulty(n)
    return {
        "agreement": len(decided) <= 1,
        "validity": decided <= set(inputs),
        "termination": all(v in m.decisions for v in alive),
    }


# ---------------------------------------------------------------- crash protocols

def run_few_crashes(cfg: ProtocolConfig, inputs: Sequence[int], adversary: AdversarySchedule | None = None,
                    seed: int = 0, mode: str = "multi", max_rounds: int | None = None) -> RunOutcome:
    if mode == "single":
        m = run_consensus_singleport(cfg, inputs, adversary, seed)
    else:
        ov = build_overlays(cfg)
        progs = [few_crashes_consensus(cfg, inputs[v], v, ov) for v in range(cfg.n)]
        core = progs[0].core
        m = run_multiport(progs, adversary, max_rounds, seed, horizon=core.final_round,
                          part_of_round=core.layout.part_of)
    checks = consensus_checks(m, inputs, cfg.n)
    budget = 64 * (cfg.n + cfg.t * lg(cfg.t + 1))
    return RunOutcome(m, checks, {"bits": m.bits_total, "bit_budget": budget,
                                  "round_constant": m.rounds_elapsed / max(1, cfg.t + lg(cfg.n))})


def run_many_crashes(cfg: ProtocolConfig, inputs: Sequence[int], adversary: AdversarySchedule | None = None,
                     seed: int = 0, max_rounds: int | None = None) -> RunOutcome:
    ov = build_many_overlays(cfg)
    progs = [many_crashes_consensus(cfg, inputs[v], v, ov) for v in range(cfg.n)]
    lay = progs[0].layout
    m = run_multiport(progs, adversary, max_rounds, seed, horizon=lay.end, part_of_round=lay.part_of)
    checks = consensus_checks(m, inputs, cfg.n)
    checks["round_bound"] = m.rounds_elapsed <= many_crashes_round_bound(cfg.n)
    return RunOutcome(m, checks, {"round_bound": many_crashes_round_bound(cfg.n)})


def gossip_checks(m: RunMetrics, decided_sets: Mapping[int, frozenset[int]]) -> dict[str, bool]:
    """(1) a node crashed before sending anything is in no decided set;
    (2) a node that halted operational is in every decided set."""
    pre_send = [v for v in m.crashed if m.sent_by.get(v, 0) == 0]
    halters = [v for v in m.halt_rounds if v not in m.crashed]
    sets = list(decided_sets.values())
    return {
        "absent_pre_send": all(v not in s for s in sets for v in pre_send),
        "present_halters": all(v in s for s in sets for v in halters),
    }


def run_gossip(cfg: ProtocolConfig, rumors: Sequence[int], adversary: AdversarySchedule | None = None,
               seed: int = 0, max_rounds: int | None = None, mode: str = "multi") -> RunOutcome:
    if mode == "single":
        factory, end = adapted_gossip(cfg, rumors)
        progs = [factory(v) for v in range(cfg.n)]
        cores = [p.inner.core for p in progs]
        m = run_singleport(progs, adversary, max_rounds or end + 2, seed, horizon=end)
    else:
        ov = build_overlays(cfg)
        progs = [gossip_program(cfg, rumors[v], v, ov) for v in range(cfg.n)]
        cores = [p.core for p in progs]
        m = run_multiport(progs, adversary, max_rounds, seed, horizon=cores[0].end)
    sets = dict(m.decisions)
    checks = gossip_checks(m, sets)
    # Every rumor a node holds for q must be q's own rumor.
    checks["rumors_faithful"] = all(
        cores[v].extant.rumor(q) == rumors[q] for v in sets for q in sets[v])
    checks["termination"] = all(v in m.decisions for v in m.nonfaulty(cfg.n))
    return RunOutcome(m, checks)


def run_checkpointing(cfg: ProtocolConfig, adversary: AdversarySchedule | None = None, seed: int = 0,
                      max_rounds: int | None = None) -> RunOutcome:
    ov = build_overlays(cfg)
    progs = [checkpointing_program(cfg, v, ov) for v in range(cfg.n)]
    m = run_multiport(progs, adversary, max_rounds, seed, horizon=progs[0].final_round)
    checks = gossip_checks(m, m.decisions)
    checks["identical_sets"] = len(set(m.decisions.values())) <= 1
    checks["termination"] = all(v in m.decisions and m.decisions[v] is not None for v in m.nonfaulty(cfg.n))
    bound = 8 * (cfg.t + lg(cfg.n) * lg(cfg.t + 1))
    return RunOutcome(m, checks, {"round_budget": bound,
                                  "round_constant": m.rounds_elapsed / max(1, cfg.t + lg(cfg.n) * lg(cfg.t + 1))})


# ---------------------------------------------------------------- authenticated Byzantine

def run_dolev_strong(n: int, t: int, source: int, value: Any, strategies: Mapping[int, Any] | None = None,
                     seed: int = 0, byzantine_factory=None) -> RunOutcome:
    progs = [dolev_strong_program(n, t, source, value, v) for v in range(n)]
    adversary = AdversarySchedule(t, ByzantineAssignment(dict(strategies or {}))) if strategies else None
    m = run_multiport(progs, adversary, None, seed, byzantine_factory=byzantine_factory)
    honest = [v for v in range(n) if v not in m.byzantine]
    outs = {progs[v].output for v in honest}
    checks = {
        "agreement": len(outs) == 1,
        "validity": source in m.byzantine or outs == {value},
        "termination": all(v in m.halt_rounds for v in honest),
        "no_forgery": m.forgeries == 0,
    }
    return RunOutcome(m, checks)


def run_ab_consensus(cfg: AuthConfig, inputs: Sequence[int], strategies: Mapping[int, Any] | None = None,
                     seed: int = 0, max_rounds: int | None = None) -> RunOutcome:
    h = build_auth_overlay(cfg)
    progs = [ab_consensus_program(cfg, inputs[v], v, h) for v in range(cfg.n)]
    adversary = AdversarySchedule(cfg.t, ByzantineAssignment(dict(strategies or {}))) if strategies else None
    m = run_multiport(progs, adversary, max_rounds, seed, part_of_round=AuthLayout(cfg).part_of)
    honest = [v for v in range(cfg.n) if v not in m.byzantine]
    commons = {progs[v].common.values() for v in honest if progs[v].common is not None}
    decided = {m.decisions.get(v) for v in honest}
    little = [v for v in range(cfg.little_count) if v not in m.byzantine]
    validity = len(commons) == 1 and all(
        next(iter(commons))[i] == inputs[i] for i in little) and decided == {decide_max(next(iter(commons)))}
    checks = {
        "agreement": len(decided) == 1,
        "validity": validity,
        "termination": all(v in m.decisions for v in honest),
        "common_values_agree": len(commons) <= 1,
        "no_forgery": m.forgeries == 0,
    }
    budget = ab_message_budget(cfg.t, cfg.n)
    return RunOutcome(m, checks, {"messages_nonfaulty": m.messages_by_nonfaulty, "message_budget": budget})


def mixed_byzantine(n: int, t: int, names: Sequence[str], seed: int, pool: int | None = None) -> dict[int, str]:
    """Choose t Byzantine nodes among the first ``pool`` ids and cycle through strategy names."""
    rng = random.Random(seed)
    nodes = sorted(rng.sample(range(pool or n), t))
    return {v: names[(i + seed) % len(names)] for i, v in enumerate(nodes)}


def seeded_bits(n: int, seed: int) -> list[int]:
    rng = random.Random(seed)
    return [rng.randint(0, 1) for _ in range(n)]

