"""Authenticated Byzantine agreement, then the single-port model and its port-isolating adversary."""

from expanderquorum import AuthConfig, ProtocolConfig, run_ab_consensus, run_dolev_strong
from expanderquorum.protocols_auth import ab_message_budget
from expanderquorum.runs import mixed_byzantine, run_few_crashes, seeded_bits
from expanderquorum.singleport import adapted_gossip, gossip_lower_bound_experiment, round_robin_gossip

BYZ = ["Equivocate", "Silent", "SelectiveSend", "ReplayOldSignatures", "FloodInquiries"]


def dolev_strong():
    print("Dolev-Strong broadcast, n=7, t=2")
    for strategies in ({}, {0: "Equivocate"}, {0: "Silent", 4: "SelectiveSend"}):
        out = run_dolev_strong(7, 2, 0, 1, strategies)
        outputs = {out.metrics.decisions.get(v) for v in range(7) if v not in out.metrics.byzantine}
        print(f"  faulty {strategies or 'none'}: honest outputs {outputs}, rounds {out.metrics.rounds_elapsed}")


def ab_consensus():
    print("\nAB-Consensus, n=40")
    for t in (2, 4):
        cfg = AuthConfig(40, t)
        out = run_ab_consensus(cfg, seeded_bits(40, 7), mixed_byzantine(40, t, BYZ, 7), 7)
        print(f"  t={t}: little group {cfg.little_count}, threshold {cfg.threshold}, "
              f"decided {sorted(set(out.metrics.decisions.values()))}, "
              f"non-faulty messages {out.metrics.messages_by_nonfaulty} vs 16(t^2+n) = {ab_message_budget(t, 40)}")


def single_port():
    print("\nsingle-port consensus vs multi-port, n=50 t=9")
    cfg = ProtocolConfig(50, 9)
    for mode in ("multi", "single"):
        out = run_few_crashes(cfg, seeded_bits(50, 3), None, 3, mode=mode)
        print(f"  {mode:<6} rounds={out.metrics.rounds_elapsed:>5} messages={out.metrics.messages_total:>6} "
              f"decided {sorted(set(out.metrics.decisions.values()))}")
    print("\nport isolation: victim 0, adversary budget t")
    for n, t in ((32, 16), (64, 32)):
        rr = gossip_lower_bound_experiment(n, t, 0, round_robin_gossip(n))
        factory, end = adapted_gossip(ProtocolConfig(n, (n - 1) // 5))
        ad = gossip_lower_bound_experiment(n, t, 0, factory, max_rounds=end + 2)
        print(f"  n={n} t={t}: round-robin victim halts at {rr.halt_round} after {len(rr.metrics.crashed)} crashes; "
              f"adapted gossip victim halts at {ad.halt_round}; floor(t/2) = {t // 2}")


if __name__ == "__main__":
    dolev_strong()
    ab_consensus()
    single_port()
