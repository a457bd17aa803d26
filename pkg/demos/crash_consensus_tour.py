"""Walk through crash-tolerant binary consensus on a few sizes and adversaries.

Prints the overlay parameters, then per-run cost broken down by protocol part.
Run with ``python3 demos/crash_consensus_tour.py``.
"""

from expanderquorum import ProtocolConfig, crash_adversary, run_few_crashes, run_many_crashes
from expanderquorum.protocols_crash import build_overlays, lg, many_crashes_round_bound
from expanderquorum.runs import seeded_bits

STRATEGIES = ["UniformRandom", "FrontLoaded", "BackLoaded", "TargetLittleNodes"]


def describe_overlays(cfg):
    ov = build_overlays(cfg)
    print(f"n={cfg.n} t={cfg.t}: little group of {cfg.little_count} nodes, "
          f"G degree {ov.little.degree} (lambda {ov.little.lambda_:.2f}), "
          f"H degree {ov.flood.degree}, delta={ov.delta:.2f}, gamma={ov.gamma}, ell={ov.ell:.1f}")


def few_crashes(n):
    cfg = ProtocolConfig(n, n // 5 - 1)
    describe_overlays(cfg)
    for seed, name in enumerate(STRATEGIES):
        out = run_few_crashes(cfg, seeded_bits(n, seed), crash_adversary(name, cfg.t, seed), seed)
        m = out.metrics
        parts = ", ".join(f"{p}:{s.messages}" for p, s in m.per_part.items() if s.messages)
        decided = sorted(set(m.decisions.values()))
        print(f"  {name:<18} crashed={len(m.crashed):>2} rounds={m.rounds_elapsed:>3} "
              f"bits={m.bits_total:>6} (budget {out.measures['bit_budget']}) decided={decided} ok={out.ok}")
        print(f"    messages by part: {parts}")


def many_crashes(n):
    print(f"\nmany crashes, n={n}: round bound {many_crashes_round_bound(n)} = n + 3(1 + lg n), lg n = {lg(n)}")
    for t in (n // 2, 3 * n // 4, n - 1):
        out = run_many_crashes(ProtocolConfig(n, t), seeded_bits(n, t), crash_adversary("UniformRandom", t, t), t)
        m = out.metrics
        print(f"  t={t:>3}: crashed={len(m.crashed):>3} rounds={m.rounds_elapsed} "
              f"messages={m.messages_total} survivors decided {sorted(set(m.decisions.values()))} ok={out.ok}")


if __name__ == "__main__":
    for n in (50, 100):
        few_crashes(n)
    many_crashes(64)
