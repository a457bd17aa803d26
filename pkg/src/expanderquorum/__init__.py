"""Expander-overlay consensus, gossip and checkpointing on a deterministic synchronous simulator."""

from .overlay import (
    OverlayGraph,
    build_regular_expander,
    complete_graph,
    dense_neighborhood_exists,
    mixing_check,
    survival_subset,
)
from .protocols_auth import NULL, AuthConfig, ab_consensus_program, dolev_strong_program
from .protocols_crash import (
    ConfigError,
    GraphRejected,
    ProtocolConfig,
    checkpointing_program,
    few_crashes_consensus,
    gossip_program,
    many_crashes_consensus,
)
from .runs import (
    RunOutcome,
    crash_adversary,
    run_ab_consensus,
    run_checkpointing,
    run_dolev_strong,
    run_few_crashes,
    run_gossip,
    run_many_crashes,
)
from .simnet import AdversarySchedule, RunMetrics, run_multiport, run_singleport
from .singleport import gossip_lower_bound_experiment, run_consensus_singleport

__all__ = [
    "NULL",
    "AdversarySchedule",
    "AuthConfig",
    "ConfigError",
    "GraphRejected",
    "OverlayGraph",
    "ProtocolConfig",
    "RunMetrics",
    "RunOutcome",
    "ab_consensus_program",
    "build_regular_expander",
    "checkpointing_program",
    "complete_graph",
    "crash_adversary",
    "dense_neighborhood_exists",
    "dolev_strong_program",
    "few_crashes_consensus",
    "gossip_lower_bound_experiment",
    "gossip_program",
    "many_crashes_consensus",
    "mixing_check",
    "run_ab_consensus",
    "run_checkpointing",
    "run_consensus_singleport",
    "run_dolev_strong",
    "run_few_crashes",
    "run_gossip",
    "run_many_crashes",
    "run_multiport",
    "run_singleport",
    "survival_subset",
]
