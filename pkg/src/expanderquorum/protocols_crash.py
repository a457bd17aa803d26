"""Crash-tolerant protocols as round-driven node programs.

Every protocol follows a fixed global round layout known to all nodes, so part and phase
boundaries need no synchronization messages. Consensus state is kept as bitmasks over
``width`` lock-step instances: plain consensus uses one instance, checkpointing uses n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Iterable, Sequence

from .overlay import (
    MINUS1,
    MINUS2,
    GiGraph,
    ManyCrashesMode,
    OverlayGraph,
    SCVMode,
    build_gi_graph,
    build_regular_expander,
    compactness_check,
    complete_graph,
    graph_params,
)
from .simnet import (
    RUNNING,
    AdversarySchedule,
    Decided,
    Envelope,
    Halted,
    Multicast,
    NodeProgram,
    RunMetrics,
    StepResult,
    run_multiport,
)

FAITHFUL_LITTLE_DEGREE = 5 ** 8
FAITHFUL_H_DEGREE = 64


class ConfigError(ValueError):
    pass


class GraphRejected(ConfigError):
    """A certified overlay failed the compactness check and may not be used."""


def lg(x: float) -> int:
    """ceil(log2 x), with lg of anything at most 1 equal to 0."""
    return 0 if x <= 1 else math.ceil(math.log2(x) - 1e-12)


@dataclass(frozen=True)
class Faithful:
    pass


@dataclass(frozen=True)
class Scaled:
    """Desk-scale overrides for the probing overlay G and the flooding overlay H."""

    degree: int = 8
    h_degree: int = 8
    delta: float | None = None
    gamma: int | None = None
    ell: float | None = None


@dataclass(frozen=True)
class ProtocolConfig:
    n: int
    t: int
    mode: Faithful | Scaled = Scaled()
    kappa: float = 0.6
    delta_variant: str = MINUS1
    graph_seed: int = 0
    slack: float = 0.1
    compactness_trials: int = 100
    rumor_bits: int = 1
    gi_constant: float = 1.0

    @property
    def alpha(self) -> float:
        return self.t / self.n

    @property
    def phase_budget(self) -> float:
        """M = (1 + 3 alpha) n / 4."""
        return (1 + 3 * self.alpha) * self.n / 4

    @property
    def little_count(self) -> int:
        return 5 * self.t

    def is_little(self, v: int) -> bool:
        return v < 5 * self.t

    def related(self, little: int) -> list[int]:
        """Non-little nodes congruent to ``little`` modulo 5t."""
        m = 5 * self.t
        return list(range(little + m, self.n, m))

    def require_few(self) -> None:
        if self.t < 1:
            raise ConfigError("t >= 1 required (t = 0 leaves no little nodes)")
        if 5 * self.t >= self.n:
            raise ConfigError(f"t < n/5 required (n={self.n}, t={self.t})")

    def require_many(self) -> None:
        if not 0 < self.t < self.n:
            raise ConfigError(f"0 < t < n required (n={self.n}, t={self.t})")


# ---------------------------------------------------------------- overlays

@dataclass(frozen=True)
class Overlays:
    little: OverlayGraph          # G on the 5t little nodes
    flood: OverlayGraph           # H on all n nodes
    delta: float
    gamma: int
    ell: float
    gi: tuple[GiGraph, ...]       # SCV-mode G_1, G_2, ... on n nodes

    def gi_graph(self, i: int) -> OverlayGraph:
        return self.gi[i - 1].base

    def __deepcopy__(self, memo: dict) -> "Overlays":
        return self


def _regular(order: int, degree: int, slack: float, seed: int) -> OverlayGraph:
    d = min(degree, order - 1)
    if d < order - 1 and (d * order) % 2:
        d -= 1
    return build_regular_expander(order, max(d, 1), slack, seed, 100)


@lru_cache(maxsize=64)
def build_overlays(cfg: ProtocolConfig) -> Overlays:
    """Graphs for AEA, SCV, Gossip and Checkpointing. Rejects G if compactness fails."""
    cfg.require_few()
    m = cfg.little_count
    gamma = 2 + lg(m)
    if isinstance(cfg.mode, Faithful):
        nominal, h_deg = FAITHFUL_LITTLE_DEGREE, FAITHFUL_H_DEGREE
    else:
        nominal, h_deg = cfg.mode.degree, cfg.mode.h_degree
        gamma = cfg.mode.gamma or gamma
    little = _regular(m, nominal, cfg.slack, cfg.graph_seed)
    flood = _regular(cfg.n, h_deg, cfg.slack, cfg.graph_seed + 1)
    params = graph_params(little, gamma, cfg.delta_variant, scaled=isinstance(cfg.mode, Scaled),
                          nominal_degree=nominal if little.is_complete() else None)
    delta, ell = params.delta, params.ell
    if isinstance(cfg.mode, Scaled):
        if cfg.mode.delta is not None:
            delta = cfg.mode.delta
        ell = cfg.mode.ell if cfg.mode.ell is not None else 0.8 * m
    if delta > little.max_degree:
        raise ConfigError(f"delta {delta} exceeds the degree of G ({little.max_degree})")
    if not compactness_check(little, delta, math.ceil(ell), cfg.compactness_trials, cfg.graph_seed):
        raise GraphRejected(f"G({m},{little.degree}) is not compact for delta={delta}, ell={ell}")
    phases = max(lg(cfg.n), lg(cfg.t + 1), 1)
    gi = tuple(build_gi_graph(cfg.n, i, SCVMode(), cfg.graph_seed + 100 + i) for i in range(1, phases + 1))
    return Overlays(little, flood, delta, gamma, ell, gi)


@dataclass(frozen=True)
class ManyOverlays:
    graph: OverlayGraph
    delta: float
    gamma: int
    ell: float
    gi: tuple[GiGraph, ...]


@lru_cache(maxsize=64)
def build_many_overlays(cfg: ProtocolConfig) -> ManyOverlays:
    cfg.require_many()
    n, alpha = cfg.n, cfg.alpha
    nominal = (4 / (1 - alpha)) ** 8
    gamma = 2 + lg(n)
    if isinstance(cfg.mode, Scaled):
        gamma = cfg.mode.gamma or gamma
    g = complete_graph(n) if nominal >= n - 1 else _regular(n, int(nominal), cfg.slack, cfg.graph_seed)
    params = graph_params(g, gamma, cfg.delta_variant, nominal_degree=nominal)
    delta = params.delta
    if isinstance(cfg.mode, Scaled) and cfg.mode.delta is not None:
        delta = cfg.mode.delta
    if not compactness_check(g, delta, math.ceil(params.ell), cfg.compactness_trials, cfg.graph_seed):
        raise GraphRejected(f"G({n},{g.degree}) is not compact for delta={delta}, ell={params.ell}")
    phases = 1 + lg(cfg.phase_budget)
    gi = tuple(build_gi_graph(n, i, ManyCrashesMode(alpha), cfg.graph_seed + 200 + i, cfg.slack)
               for i in range(1, phases + 1))
    return ManyOverlays(g, delta, gamma, params.ell, gi)


# ---------------------------------------------------------------- helpers

def popcount(x: int) -> int:
    return bin(x).count("1")


def bits_of(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


class Layout:
    """Consecutive named blocks of rounds starting at ``offset + 1``."""

    def __init__(self, blocks: Sequence[tuple[str, int]], offset: int = 0):
        self.blocks = []
        start = offset + 1
        for name, length in blocks:
            self.blocks.append((name, start, length))
            start += length
        self.end = start  # first round after the layout

    def start(self, name: str) -> int:
        for n, s, _ in self.blocks:
            if n == name:
                return s
        raise KeyError(name)

    def part_of(self, r: int) -> str:
        for name, s, length in self.blocks:
            if s <= r < s + length:
                return name
        return self.blocks[-1][0] if r >= self.end else self.blocks[0][0]


def scv_flood_rounds(n: int, t: int) -> int:
    """ceil(log_{3/2}((2n/5) / max{t, n/t})), clamped to at least 1."""
    x = (2 * n / 5) / max(t, n / t)
    return max(1, math.ceil(math.log(x, 1.5) - 1e-12)) if x > 1 else 1


# ---------------------------------------------------------------- consensus core

class ConsensusCore:
    """Few-Crashes-Consensus for one node over ``width`` lock-step instances.

    ``stages`` selects AEA only, SCV only, or both. Payloads are tuples tagged by kind;
    masks select instances and values carry the instance bits.
    """

    def __init__(self, cfg: ProtocolConfig, ov: Overlays, node: int, inputs: int, width: int = 1,
                 offset: int = 0, stages: str = "both", common: int | None = None,
                 single_port: bool = False):
        self.cfg, self.ov, self.node, self.width = cfg, ov, node, width
        self.full = (1 << width) - 1
        self.little = cfg.is_little(node)
        self.cand = inputs & self.full
        self.dec_mask = 0
        self.dec_vals = 0
        self.paused = False
        self.stages = stages
        self.single_port = single_port
        self.header = lg(cfg.n) if width > 1 else 0
        self.flips = 0
        self.undecided_after_flood: bool | None = None
        n, t = cfg.n, cfg.t
        blocks: list[tuple[str, int]] = []
        self.notify_by_flood = single_port and t * t <= n
        if stages in ("both", "aea"):
            blocks += [("aea-flood", 5 * t - 1), ("aea-probe", ov.gamma), ("aea-notify", 1)]
            if self.notify_by_flood:
                blocks += [("aea-notify-flood", lg(n))]
        if stages in ("both", "scv"):
            self.flood_rounds = scv_flood_rounds(n, t)
            blocks += [("scv-flood", 1 + self.flood_rounds)]
            if t * t <= n and not single_port:
                self.inquiry_phases = 0
                blocks += [("scv-inquire", 2)]
            else:
                phases = max(1, lg(t + 1))
                if single_port:
                    phases = 1
                    while phases < len(ov.gi) and ov.gi_graph(phases).max_degree <= 3 * t:
                        phases += 1
                self.inquiry_phases = phases
                blocks += [("scv-inquire", 2 * phases)]
        blocks += [("final", 1)]
        self.layout = Layout(blocks, offset)
        if stages == "scv" and common is not None:
            self.dec_mask, self.dec_vals = self.full, common & self.full
        self._mandatory = self._mandatory_rounds()

    # -- schedule
    def _mandatory_rounds(self) -> list[int]:
        lay = self.layout
        out: list[int] = []
        for name, s, length in lay.blocks:
            if name == "aea-flood" and self.little:
                out.append(s)
            elif name in ("aea-probe", "aea-notify") and self.little:
                out.extend(range(s, s + length))
            elif name == "aea-notify-flood":
                out.append(s)
            elif name == "scv-flood":
                out.append(s)
            elif name == "scv-inquire":
                out.extend(range(s, s + length, 2))
            elif name == "final":
                out.append(s)
        return sorted(set(out))

    def next_wake(self, r: int) -> int:
        for x in self._mandatory:
            if x > r:
                return x
        return r + 1

    @property
    def final_round(self) -> int:
        return self.layout.start("final")

    def links(self, r: int) -> str | tuple[str, int] | None:
        """Which overlay the sends of round r travel over (used by the single-port adapter)."""
        part = self.layout.part_of(r)
        if part in ("aea-flood", "aea-probe"):
            return "G"
        if part == "aea-notify":
            return "related"
        if part in ("aea-notify-flood", "scv-flood"):
            return "H"
        if part == "scv-inquire":
            if not self.inquiry_phases:
                return "little"
            return ("Gi", (r - self.layout.start("scv-inquire")) // 2 + 1)
        return None

    # -- accounting
    def _bits(self, mask: int) -> int:
        return popcount(mask) + self.header if self.width > 1 else 1

    def _decide(self, mask: int, vals: int) -> int:
        new = mask & ~self.dec_mask & self.full
        if new:
            self.dec_mask |= new
            self.dec_vals |= vals & new
        return new

    @property
    def decided_all(self) -> bool:
        return self.dec_mask == self.full

    # -- step
    def step(self, r: int, inbox: Sequence[Envelope]) -> list:
        lay = self.layout
        part = lay.part_of(r)
        me = self.node
        out: list = []
        ov = self.ov

        if part == "aea-flood":
            if not self.little:
                return out
            if r == lay.start("aea-flood"):
                send = self.cand
            else:
                got = 0
                for e in inbox:
                    if e.payload[0] == "r":
                        got |= e.payload[1]
                send = got & ~self.cand
                self.cand |= got
            if send:
                out.append(Multicast(me, ov.little.adjacency[me], ("r", send), self._bits(send)))
            return out

        if part == "aea-probe" or (part == "aea-notify" and self.little):
            if not self.little:
                return out
            first = r == lay.start("aea-probe")
            count = 0
            got = 0
            for e in inbox:
                tag = e.payload[0]
                if tag == "r":
                    got |= e.payload[1]
                elif tag == "p":
                    count += 1
                    got |= e.payload[1]
            if not first and count < ov.delta:
                self.paused = True
            new = got & ~self.cand
            if new and not first and not self.paused:
                self.flips += 1
            self.cand |= got
            if part == "aea-probe":
                if not self.paused:
                    out.append(Multicast(me, ov.little.adjacency[me], ("p", self.cand), self._bits(self.full)))
                return out
            # aea-notify: survivors decide and tell their related nodes
            if not self.paused:
                self._decide(self.full, self.cand)
                targets = tuple(self.cfg.related(me))
                if targets and not self.notify_by_flood:
                    out.append(Multicast(me, targets, ("n", self.cand), self._bits(self.full)))
            return out

        if part == "aea-notify":
            return out

        if part == "aea-notify-flood":
            new = 0
            for e in inbox:
                if e.payload[0] in ("n", "v"):
                    new |= self._decide(e.payload[1], e.payload[2] if len(e.payload) > 2 else e.payload[1])
            if r == lay.start("aea-notify-flood"):
                new = self.dec_mask
            if new:
                out.append(Multicast(me, ov.flood.adjacency[me], ("v", new, self.dec_vals & new), self._bits(new)))
            return out

        if part == "scv-flood":
            start = lay.start("scv-flood")
            new = 0
            for e in inbox:
                tag = e.payload[0]
                if tag == "n":
                    new |= self._decide(self.full, e.payload[1])
                elif tag == "v":
                    new |= self._decide(e.payload[1], e.payload[2])
            if r == start:
                new = self.dec_mask
            if new:
                out.append(Multicast(me, ov.flood.adjacency[me], ("v", new, self.dec_vals & new), self._bits(new)))
            return out

        # scv-inquire and final: absorb values and answers first
        inquiries: list[Envelope] = []
        for e in inbox:
            tag = e.payload[0]
            if tag in ("v", "a"):
                self._decide(e.payload[1], e.payload[2])
            elif tag == "n":
                self._decide(self.full, e.payload[1])
            elif tag == "q":
                inquiries.append(e)
        if part == "final":
            return out
        s0 = lay.start("scv-inquire")
        if r == s0 and self.undecided_after_flood is None:
            self.undecided_after_flood = not self.decided_all
        k = r - s0
        if k % 2 == 0:
            undecided = self.full & ~self.dec_mask
            if undecided:
                if self.inquiry_phases:
                    targets = self.ov.gi_graph(k // 2 + 1).adjacency[me]
                else:
                    targets = tuple(v for v in range(self.cfg.little_count) if v != me)
                if targets:
                    out.append(Multicast(me, targets, ("q", undecided), self._bits(undecided)))
        else:
            for e in inquiries:
                mask = e.payload[1] & self.dec_mask
                if mask:
                    out.append(Envelope(me, e.sender, ("a", mask, self.dec_vals & mask), self._bits(mask)))
        return out


class ConsensusProgram(NodeProgram):
    """Few-Crashes-Consensus (or its AEA / SCV stages) for a single binary instance."""

    def __init__(self, cfg: ProtocolConfig, ov: Overlays, node: int, value: int | None,
                 stages: str = "both", single_port: bool = False):
        self.node_id = node
        inputs = value if (value is not None and stages != "scv") else 0
        common = value if stages == "scv" else None
        self.core = ConsensusCore(cfg, ov, node, inputs or 0, 1, 0, stages, common, single_port)
        self.input = value
        self.reported = False

    def step(self, r: int, inbox: Sequence[Envelope]) -> StepResult:
        core = self.core
        out = core.step(r, inbox)
        if r >= core.final_round:
            return StepResult(out, Halted(core.dec_vals if core.decided_all else None))
        status = RUNNING
        if core.decided_all and not self.reported:
            self.reported = True
            status = Decided(core.dec_vals)
        return StepResult(out, status, wake=core.next_wake(r))


# ---------------------------------------------------------------- AEA coverage for stage "aea"

def aea_program(cfg: ProtocolConfig, input_bit: int, node: int, ov: Overlays | None = None) -> ConsensusProgram:
    cfg.require_few()
    return ConsensusProgram(cfg, ov or build_overlays(cfg), node, input_bit, "aea")


def scv_program(cfg: ProtocolConfig, common_or_null: int | None, node: int,
                ov: Overlays | None = None) -> ConsensusProgram:
    cfg.require_few()
    return ConsensusProgram(cfg, ov or build_overlays(cfg), node, common_or_null, "scv")


def few_crashes_consensus(cfg: ProtocolConfig, input_bit: int, node: int,
                          ov: Overlays | None = None) -> ConsensusProgram:
    cfg.require_few()
    return ConsensusProgram(cfg, ov or build_overlays(cfg), node, input_bit, "both")


# ---------------------------------------------------------------- many crashes

class ManyCrashesProgram(NodeProgram):
    def __init__(self, cfg: ProtocolConfig, ov: ManyOverlays, node: int, input_bit: int):
        self.cfg, self.ov, self.node_id = cfg, ov, node
        self.input = input_bit
        self.cand = input_bit
        self.decision: int | None = None
        self.paused = False
        self.reported = False
        n = cfg.n
        self.phases = len(ov.gi)
        self.layout = Layout([("flood", n - 1), ("probe", ov.gamma), ("inquire", 2 * self.phases),
                              ("final", 1)])
        lay = self.layout
        p0, q0 = lay.start("probe"), lay.start("inquire")
        self._mandatory = [1] + list(range(p0, q0 + 1)) + list(range(q0 + 2, lay.end - 1, 2)) + [lay.start("final")]

    def _wake(self, r: int) -> int:
        for x in self._mandatory:
            if x > r:
                return x
        return r + 1

    def step(self, r: int, inbox: Sequence[Envelope]) -> StepResult:
        lay, me, ov = self.layout, self.node_id, self.ov
        part = lay.part_of(r)
        out: list = []
        adj = ov.graph.adjacency[me]
        if part == "flood":
            if r == 1:
                send = self.cand == 1
            else:
                got = any(e.payload[0] == "r" for e in inbox)
                send = got and self.cand == 0
                if got:
                    self.cand = 1
            if send:
                out.append(Multicast(me, adj, ("r", 1)))
        elif part == "probe" or r == lay.start("inquire"):
            first = r == lay.start("probe")
            count = 0
            for e in inbox:
                if e.payload[0] == "p":
                    count += 1
                if e.payload[1] == 1:
                    self.cand = 1
            if not first and count < ov.delta:
                self.paused = True
            if part == "probe":
                if not self.paused:
                    out.append(Multicast(me, adj, ("p", self.cand)))
            else:
                if not self.paused:
                    self.decision = self.cand
                out.extend(self._inquire(r))
        else:
            inquiries = []
            for e in inbox:
                tag = e.payload[0]
                if tag == "a" and self.decision is None:
                    self.decision = e.payload[1]
                elif tag == "q":
                    inquiries.append(e)
            if part == "inquire":
                k = r - lay.start("inquire")
                if k % 2 == 0:
                    out.extend(self._inquire(r))
                elif self.decision is not None:
                    out.extend(Envelope(me, e.sender, ("a", self.decision)) for e in inquiries)
        if r >= lay.start("final"):
            return StepResult(out, Halted(self.decision))
        status = RUNNING
        if self.decision is not None and not self.reported:
            self.reported = True
            status = Decided(self.decision)
        return StepResult(out, status, wake=self._wake(r))

    def _inquire(self, r: int) -> list:
        if self.decision is not None:
            return []
        i = (r - self.layout.start("inquire")) // 2 + 1
        targets = self.ov.gi[i - 1].base.adjacency[self.node_id]
        return [Multicast(self.node_id, targets, ("q", 1))] if targets else []


def many_crashes_consensus(cfg: ProtocolConfig, input_bit: int, node: int,
                           ov: ManyOverlays | None = None) -> ManyCrashesProgram:
    cfg.require_many()
    return ManyCrashesProgram(cfg, ov or build_many_overlays(cfg), node, input_bit)


def many_crashes_round_bound(n: int) -> int:
    return n + 3 * (1 + lg(n))


def many_crashes_message_bound(n: int, t: int) -> float:
    return (5 / (1 - t / n)) ** 8 * n * lg(n)


# ---------------------------------------------------------------- gossip

class ExtantSet:
    """Presence bitmask plus rumor bit-planes. Entries go only from nil to proper."""

    __slots__ = ("present", "planes")

    def __init__(self, present: int = 0, planes: tuple[int, ...] = (0,)):
        self.present = present
        self.planes = planes

    def snapshot(self) -> tuple[int, tuple[int, ...]]:
        return (self.present, self.planes)

    def merge(self, present: int, planes: tuple[int, ...]) -> int:
        common = present & self.present
        for mine, theirs in zip(self.planes, planes):
            if (mine ^ theirs) & common:
                raise AssertionError("conflicting proper rumors offered for the same node")
        new = present & ~self.present
        if new:
            self.present |= new
            self.planes = tuple(mine | (theirs & new) for mine, theirs in zip(self.planes, planes))
        return new

    def rumor(self, q: int) -> int | None:
        if not (self.present >> q) & 1:
            return None
        return sum(((p >> q) & 1) << k for k, p in enumerate(self.planes))

    def members(self) -> frozenset[int]:
        return frozenset(bits_of(self.present))


def _pair(node: int, rumor: int, rumor_bits: int) -> tuple[int, tuple[int, ...]]:
    return (1 << node, tuple(((rumor >> k) & 1) << node for k in range(rumor_bits)))


class GossipCore:
    """Two parts of ceil(lg n) phases: inquiry, response, then probing among little nodes."""

    def __init__(self, cfg: ProtocolConfig, ov: Overlays, node: int, rumor: int, offset: int = 0):
        self.cfg, self.ov, self.node = cfg, ov, node
        self.little = cfg.is_little(node)
        self.extant = ExtantSet(*_pair(node, rumor, cfg.rumor_bits))
        self.completion = 1 << node
        self.paused = False
        self.survived_prev = True
        self.phases = max(1, lg(cfg.n))
        self.phase_len = 2 + ov.gamma
        blocks = [(f"gossip-extant", self.phases * self.phase_len),
                  (f"gossip-completion", self.phases * self.phase_len)]
        self.layout = Layout(blocks, offset)
        self.end = self.layout.end  # first round after gossip; used for final processing
        self.history: list[int] = []  # present-mask after each step, for monotonicity checks
        n = cfg.n
        self.set_bits = n
        self.rumor_bits = cfg.rumor_bits

    def position(self, r: int) -> tuple[int, int, int]:
        """(part 1|2, phase 1.., round-in-phase 0..) for rounds inside gossip."""
        k = r - (self.layout.blocks[0][1])
        part, rest = divmod(k, self.phases * self.phase_len)
        phase, pos = divmod(rest, self.phase_len)
        return part + 1, phase + 1, pos

    def mandatory(self) -> list[int]:
        out = []
        start = self.layout.blocks[0][1]
        for k in range(2 * self.phases * self.phase_len):
            pos = k % self.phase_len
            if self.little and (pos == 0 or pos >= 2):
                out.append(start + k)
        out.append(self.end)
        return out

    def extant_bits(self) -> int:
        return self.cfg.n + popcount(self.extant.present) * self.rumor_bits

    def _absorb_probe(self, inbox, part: int, counting: bool) -> None:
        count = 0
        for e in inbox:
            tag = e.payload[0]
            if tag == "gp1":
                count += 1
                self.extant.merge(*e.payload[1])
            elif tag == "gp2":
                count += 1
                self.completion |= e.payload[1]
        if counting and count < self.ov.delta:
            self.paused = True

    def step(self, r: int, inbox: Sequence[Envelope]) -> list:
        me, ov, cfg = self.node, self.ov, self.cfg
        out: list = []
        if r >= self.end:
            # closing computation of the last probing round
            self._absorb_probe(inbox, 2, self.little)
            return out
        part, phase, pos = self.position(r)
        if pos == 0:
            # end of the previous phase's probing (or of the previous part)
            if not (part == 1 and phase == 1):
                self._absorb_probe(inbox, part, self.little)
                self.survived_prev = self.little and not self.paused
            for e in inbox:
                if e.payload[0] == "ge":  # cannot happen at pos 0, kept for robustness
                    self.extant.merge(*e.payload[1])
            allowed = self.little and (phase == 1 or self.survived_prev)
            gi = ov.gi_graph(phase).adjacency[me]
            if allowed and part == 1:
                absent = [u for u in gi if not (self.extant.present >> u) & 1]
                if absent:
                    out.append(Multicast(me, tuple(absent), ("gi",), 1))
            elif allowed and part == 2:
                targets = [u for u in gi if not (self.completion >> u) & 1]
                if targets:
                    snap = self.extant.snapshot()
                    out.append(Multicast(me, tuple(targets), ("ge", snap), self.extant_bits()))
                    for u in targets:
                        self.completion |= 1 << u
        elif pos == 1:
            if part == 1:
                inquirers = tuple(e.sender for e in inbox if e.payload[0] == "gi")
                if inquirers:
                    out.append(Multicast(me, inquirers, ("gr", self.extant.rumor(me)), self.rumor_bits))
            else:
                for e in inbox:
                    if e.payload[0] == "ge":
                        self.extant.merge(*e.payload[1])
        else:
            if pos == 2:
                for e in inbox:
                    if e.payload[0] == "gr":
                        self.extant.merge(*_pair(e.sender, e.payload[1], self.rumor_bits))
                self.paused = False
            else:
                self._absorb_probe(inbox, part, self.little)
            if self.little and not self.paused:
                if part == 1:
                    out.append(Multicast(me, ov.little.adjacency[me], ("gp1", self.extant.snapshot()),
                                         self.extant_bits()))
                else:
                    out.append(Multicast(me, ov.little.adjacency[me], ("gp2", self.completion), self.set_bits))
        self.history.append(self.extant.present)
        return out


class GossipProgram(NodeProgram):
    def __init__(self, cfg: ProtocolConfig, ov: Overlays, node: int, rumor: int):
        self.node_id = node
        self.core = GossipCore(cfg, ov, node, rumor)
        self._mandatory = self.core.mandatory()

    def step(self, r: int, inbox: Sequence[Envelope]) -> StepResult:
        out = self.core.step(r, inbox)
        if r >= self.core.end:
            return StepResult(out, Halted(self.core.extant.members()))
        wake = next((x for x in self._mandatory if x > r), r + 1)
        return StepResult(out, RUNNING, wake=wake)

    def links(self, r: int):
        if r >= self.core.end:
            return None
        part, phase, pos = self.core.position(r)
        if pos == 0:
            return ("Gi", phase)
        if pos == 1:
            return ("Gi", phase)
        return "G"


def gossip_program(cfg: ProtocolConfig, rumor: int, node: int, ov: Overlays | None = None) -> GossipProgram:
    cfg.require_few()
    return GossipProgram(cfg, ov or build_overlays(cfg), node, rumor)


# ---------------------------------------------------------------- checkpointing

class CheckpointingProgram(NodeProgram):
    """Gossip with a dummy rumor, then n lock-step consensus instances."""

    def __init__(self, cfg: ProtocolConfig, ov: Overlays, node: int):
        self.node_id = node
        self.cfg = cfg
        self.gossip = GossipCore(cfg, ov, node, 1)
        self.consensus: ConsensusCore | None = None
        self.ov = ov
        offset = self.gossip.end - 1
        # the consensus layout is known up front so that wake-ups can be scheduled
        probe = ConsensusCore(cfg, ov, node, 0, cfg.n, offset)
        self._mandatory = self.gossip.mandatory()[:-1] + probe._mandatory
        self.final_round = probe.final_round

    def step(self, r: int, inbox: Sequence[Envelope]) -> StepResult:
        g = self.gossip
        if r < g.end:
            out = g.step(r, inbox)
        else:
            if self.consensus is None:
                g.step(r, [e for e in inbox if e.payload[0] in ("gp1", "gp2")])
                inputs = g.extant.present
                self.consensus = ConsensusCore(self.cfg, self.ov, self.node_id, inputs, self.cfg.n,
                                               g.end - 1)
                inbox = [e for e in inbox if e.payload[0] not in ("gp1", "gp2")]
            out = self.consensus.step(r, inbox)
            if r >= self.final_round:
                c = self.consensus
                decided = frozenset(bits_of(c.dec_vals)) if c.decided_all else None
                return StepResult(out, Halted(decided))
        wake = next((x for x in self._mandatory if x > r), r + 1)
        return StepResult(out, RUNNING, wake=wake)


def checkpointing_program(cfg: ProtocolConfig, node: int, ov: Overlays | None = None) -> CheckpointingProgram:
    cfg.require_few()
    return CheckpointingProgram(cfg, ov or build_overlays(cfg), node)


# ---------------------------------------------------------------- local probing

class ProbeProgram(NodeProgram):
    """Stand-alone local probing: gamma rounds, pause on fewer than delta messages."""

    def __init__(self, graph: OverlayGraph, node: int, gamma: int, delta: float, payload: Any = None,
                 merge: Callable[[Any, Any], Any] | None = None):
        self.node_id = node
        self.graph, self.gamma, self.delta = graph, gamma, delta
        self.payload = payload
        self.merge = merge
        self.paused = False
        self.paused_at: int | None = None

    @property
    def survived(self) -> bool:
        return not self.paused

    def step(self, r: int, inbox: Sequence[Envelope]) -> StepResult:
        if r > 1:
            if len(inbox) < self.delta and not self.paused:
                self.paused, self.paused_at = True, r - 1
            if self.merge is not None:
                for e in inbox:
                    self.payload = self.merge(self.payload, e.payload)
        if r > self.gamma:
            return StepResult([], Halted())
        out = []
        nbrs = self.graph.adjacency[self.node_id]
        if not self.paused and nbrs:
            out.append(Multicast(self.node_id, nbrs, self.payload))
        return StepResult(out)


def local_probe(graph: OverlayGraph, gamma: int, delta: float, payloads: Sequence[Any] | None = None,
                merge: Callable[[Any, Any], Any] | None = None, adversary: AdversarySchedule | None = None,
                seed: int = 0) -> tuple[list[ProbeProgram], RunMetrics]:
    if gamma < 1:
        raise ConfigError("gamma must be >= 1")
    if delta > graph.max_degree:
        raise ConfigError(f"delta {delta} exceeds graph degree {graph.max_degree}")
    n = graph.node_count
    programs = [ProbeProgram(graph, v, gamma, delta, payloads[v] if payloads else None, merge)
                for v in range(n)]
    metrics = run_multiport(programs, adversary, gamma + 2, seed)
    return programs, metrics
