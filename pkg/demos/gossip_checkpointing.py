"""Gossip and checkpointing under crash-at-send faults.

A node that crashes before sending anything must vanish from every output set, while a
node that halts operational must appear in all of them. Checkpointing additionally makes
the sets identical.
"""

import random

from expanderquorum import AdversarySchedule, ProtocolConfig, run_checkpointing, run_gossip
from expanderquorum.runs import seeded_bits
from expanderquorum.simnet import CrashStatic

N, T = 100, 19


def schedule(seed):
    rng = random.Random(seed)
    victims = rng.sample(range(N), T)
    # half crash in round 1, the rest later; odd seeds deliver nothing from the crash round
    rounds = {v: 1 if i < T // 2 else rng.randint(2, 30) for i, v in enumerate(victims)}
    return AdversarySchedule(T, CrashStatic(rounds, "none" if seed % 2 else "random"))


def summarize(label, out):
    m = out.metrics
    sets = list(m.decisions.values())
    pre_send = sorted(v for v in m.crashed if m.sent_by.get(v, 0) == 0)
    sizes = sorted({len(s) for s in sets})
    print(f"{label}: {len(m.crashed)} crashed ({len(pre_send)} before sending), rounds={m.rounds_elapsed}, "
          f"messages={m.messages_total}, output set sizes {sizes}, distinct sets {len(set(sets))}")
    for check, value in out.checks.items():
        print(f"    {check:<18} {value}")


if __name__ == "__main__":
    cfg = ProtocolConfig(N, T)
    for seed in range(2):
        summarize(f"gossip seed {seed}", run_gossip(cfg, seeded_bits(N, seed), schedule(seed), seed))
        summarize(f"checkpointing seed {seed}", run_checkpointing(cfg, schedule(seed), seed))
