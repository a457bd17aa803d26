"""Single-port execution of multi-port programs, and the port-isolation experiments.

A multi-port (mp) round whose sends travel over a link graph L is replayed as one
single-port (sp) round per color of a proper edge coloring of L. In the sp-round of
color c, every node matched by c sends its queued mp traffic to its partner and polls
that same partner, so each exchange is a send and a matching poll in the same sp-round.
Misra-Gries coloring uses at most d + 1 colors on a graph of maximum degree d, within
the 2d sp-rounds per mp-round a constant-degree part may take.
Inner programs compute only when a new mp-round begins, i.e. after the last sp-round
of the previous one.
"""

from __future__ import annotations

import bisect
import csv
import hashlib
import io
from dataclasses import dataclass
from typing import Any, Callable, Hashable, Sequence

from .overlay import OverlayGraph
from .protocols_crash import (
    ConsensusProgram,
    Overlays,
    ProtocolConfig,
    build_overlays,
    gossip_program,
)
from .simnet import (
    RUNNING,
    AdversarySchedule,
    CrashAdaptive,
    Decided,
    Envelope,
    Halted,
    Multicast,
    NodeProgram,
    PortIsolator,
    RunMetrics,
    SimError,
    StepResult,
    run_singleport,
)


class ScheduleError(SimError):
    """An mp program tried to send outside the link graph of its round."""


# ---------------------------------------------------------------- edge coloring

@dataclass(frozen=True)
class Coloring:
    """Matchings of a proper edge coloring; ``partner[c][v]`` is -1 if v is unmatched."""

    node_count: int
    partner: tuple[tuple[int, ...], ...]
    max_degree: int

    @property
    def colors(self) -> int:
        return len(self.partner)

    def port_rank(self, v: int, c: int, neighbors: Sequence[int]) -> int:
        return list(neighbors).index(self.partner[c][v])


def greedy_edge_coloring(n: int, adjacency: Sequence[Sequence[int]]) -> Coloring:
    """Color edges in lexicographic order with the least color free at both ends."""
    used: list[set[int]] = [set() for _ in range(n)]
    partner: list[list[int]] = []
    for u in range(n):
        for v in sorted(adjacency[u]):
            if v <= u:
                continue
            c = 0
            while c in used[u] or c in used[v]:
                c += 1
            while len(partner) <= c:
                partner.append([-1] * n)
            partner[c][u], partner[c][v] = v, u
            used[u].add(c)
            used[v].add(c)
    max_deg = max((len(a) for a in adjacency), default=0)
    return Coloring(n, tuple(tuple(p) for p in partner), max_deg)


def misra_gries_edge_coloring(n: int, adjacency: Sequence[Sequence[int]]) -> Coloring:
    """Proper edge coloring with at most max_degree + 1 colors (fan rotation plus cd-path flips)."""
    at: list[dict[int, int]] = [{} for _ in range(n)]   # at[v][color] = neighbor
    color: dict[tuple[int, int], int] = {}

    def key(a: int, b: int) -> tuple[int, int]:
        return (a, b) if a < b else (b, a)

    def paint(a: int, b: int, c: int) -> None:
        color[key(a, b)] = c
        at[a][c] = b
        at[b][c] = a

    def erase(a: int, b: int) -> int:
        c = color.pop(key(a, b))
        del at[a][c]
        del at[b][c]
        return c

    def first_free(v: int) -> int:
        c = 0
        while c in at[v]:
            c += 1
        return c

    nbrs = [sorted(a) for a in adjacency]
    for u in range(n):
        for v in nbrs[u]:
            if v <= u:
                continue
            fan, in_fan = [v], {v}
            grown = True
            while grown:
                grown = False
                last = fan[-1]
                for x in nbrs[u]:
                    if x in in_fan:
                        continue
                    cx = color.get(key(u, x))
                    if cx is not None and cx not in at[last]:
                        fan.append(x)
                        in_fan.add(x)
                        grown = True
                        break
            c, d = first_free(u), first_free(fan[-1])
            if c != d:
                path, x, want = [], u, d
                while want in at[x]:
                    y = at[x][want]
                    path.append((x, y, want))
                    x, want = y, (c if want == d else d)
                for a, b, _ in path:
                    erase(a, b)
                for a, b, cc in path:
                    paint(a, b, c if cc == d else d)
            w = 0
            for i, x in enumerate(fan):
                if i > 0 and color[key(u, x)] in at[fan[i - 1]]:
                    break
                if d not in at[x]:
                    w = i
                    break
            shifted = [color[key(u, fan[j + 1])] for j in range(w)]
            for j in range(1, w + 1):
                erase(u, fan[j])
            for j in range(w):
                paint(u, fan[j], shifted[j])
            paint(u, fan[w], d)
    used = sorted({c for c in color.values()})
    index = {c: i for i, c in enumerate(used)}
    partner = [[-1] * n for _ in used]
    for (a, b), c in color.items():
        partner[index[c]][a], partner[index[c]][b] = b, a
    max_deg = max((len(a) for a in adjacency), default=0)
    return Coloring(n, tuple(tuple(p) for p in partner), max_deg)


# ---------------------------------------------------------------- link graphs and timeline

def link_adjacency(kind: Any, cfg: ProtocolConfig, ov: Overlays) -> list[list[int]]:
    """Adjacency on all n nodes for a link-kind label returned by ``links(r)``."""
    n = cfg.n
    adj: list[set[int]] = [set() for _ in range(n)]

    def add_graph(g: OverlayGraph) -> None:
        for u in range(g.node_count):
            for v in g.neighbors(u):
                adj[u].add(v)

    if kind == "G":
        add_graph(ov.little)
    elif kind == "H":
        add_graph(ov.flood)
    elif kind == "related":
        for i in range(cfg.little_count):
            for j in cfg.related(i):
                adj[i].add(j)
                adj[j].add(i)
    elif kind == "little":
        for w in range(cfg.little_count):
            for v in range(n):
                if v != w:
                    adj[v].add(w)
                    adj[w].add(v)
    elif isinstance(kind, tuple) and kind[0] == "Gi":
        add_graph(ov.gi_graph(kind[1]))
    else:
        raise ScheduleError(f"unknown link kind {kind!r}")
    return [sorted(a) for a in adj]


_COLOR_CACHE: dict[tuple, tuple[list[list[int]], Coloring]] = {}


def _colored_links(cfg: ProtocolConfig, ov: Overlays, kind: Hashable) -> tuple[list[list[int]], Coloring]:
    # Overlays are a pure function of cfg, so (cfg, kind) identifies the link graph.
    key = (cfg, id(ov), kind)
    if key not in _COLOR_CACHE:
        adj = link_adjacency(kind, cfg, ov)
        _COLOR_CACHE[key] = (adj, misra_gries_edge_coloring(cfg.n, adj))
    return _COLOR_CACHE[key]


class SpTimeline:
    """Shared map between mp-rounds and sp-rounds, extended lazily and deterministically.

    ``links(r)`` of a reference program names the link graph of mp-round r; rounds with
    no link graph take a single sp-round.
    """

    def __init__(self, cfg: ProtocolConfig, ov: Overlays, links: Callable[[int], Hashable]):
        self.cfg, self.ov, self.links = cfg, ov, links
        self.starts = [0, 1]           # starts[r] = first sp-round of mp-round r
        self.kinds: list[Hashable] = [None]
        self._colorings: dict[Hashable, Coloring] = {}
        self._adjacency: dict[Hashable, list[list[int]]] = {}

    def __deepcopy__(self, memo: dict) -> "SpTimeline":
        return self

    def coloring(self, kind: Hashable) -> Coloring | None:
        if kind is None:
            return None
        if kind not in self._colorings:
            self._adjacency[kind], self._colorings[kind] = _colored_links(self.cfg, self.ov, kind)
        return self._colorings[kind]

    def adjacency(self, kind: Hashable) -> list[list[int]]:
        self.coloring(kind)
        return self._adjacency[kind]

    def width(self, r: int) -> int:
        self._extend(r)
        return self.starts[r + 1] - self.starts[r]

    def kind(self, r: int) -> Hashable:
        self._extend(r)
        return self.kinds[r]

    def start(self, r: int) -> int:
        self._extend(r)
        return self.starts[r]

    def _extend(self, r: int) -> None:
        while len(self.kinds) <= r:
            q = len(self.kinds)
            kind = self.links(q)
            col = self.coloring(kind)
            self.kinds.append(kind)
            self.starts.append(self.starts[q] + max(1, col.colors if col else 1))

    def mp_round(self, s: int) -> tuple[int, int]:
        """(mp-round, offset) containing sp-round s."""
        while self.starts[-1] <= s:
            self._extend(len(self.kinds))
        r = bisect.bisect_right(self.starts, s) - 1
        return r, s - self.starts[r]

    def sp_end(self, mp_last: int) -> int:
        """Last sp-round of mp-round ``mp_last``."""
        return self.start(mp_last + 1) - 1


# ---------------------------------------------------------------- adapter

class SinglePortAdapter(NodeProgram):
    """Runs an mp program under single-port rules using a shared timeline.

    The node is stepped at the first sp-round of every mp-round, in sp-rounds where it has
    queued traffic for its partner, and after a delivery. Every other matched sp-round is
    covered by the standing poll plan handed to the engine.
    """

    def __init__(self, inner: NodeProgram, timeline: SpTimeline):
        self.inner = inner
        self.node_id = inner.node_id
        self.timeline = timeline
        self.mp_round = 0
        self.cur_start = 0
        self.next_start = 1
        self.slots: list[tuple[int, int]] = []   # (offset, partner) for this mp-round
        self.buffer: list[Envelope] = []
        self.pending: dict[int, list[Envelope]] = {}
        self.inner_wake = 1
        self.halting: Halted | None = None
        self.plan: dict[int, int] = {}

    def attach(self, ctx) -> None:
        self.ctx = ctx
        self.inner.attach(ctx)

    def _absorb(self, inbox: Sequence[Envelope]) -> None:
        for e in inbox:
            p = e.payload
            if isinstance(p, tuple) and len(p) == 2 and p[0] == "sp-bundle":
                self.buffer.extend(p[1])
            elif isinstance(p, Envelope):
                self.buffer.append(p)

    def _begin(self, r: int) -> Any:
        tl, me = self.timeline, self.node_id
        self.cur_start, self.next_start = tl.start(r), tl.start(r + 1)
        kind = tl.kind(r)
        col = tl.coloring(kind)
        self.slots = [] if col is None else [(k, p[me]) for k, p in enumerate(col.partner) if p[me] >= 0]
        inbox, self.buffer = self.buffer, []
        self.pending = {}
        status: Any = RUNNING
        if self.halting is not None or (not inbox and r < self.inner_wake):
            return status
        res = self.inner.step(r, inbox)
        self.inner_wake = r + 1 if res.wake is None else max(res.wake, r + 1)
        allowed = set(tl.adjacency(kind)[me]) if kind is not None else set()
        for e in res.outbox:
            for x in (e.expand() if isinstance(e, Multicast) else (e,)):
                if x.receiver not in allowed:
                    raise ScheduleError(f"node {me} mp-round {r}: {x.receiver} not adjacent over {kind!r}")
                self.pending.setdefault(x.receiver, []).append(x)
        if isinstance(res.status, Halted):
            self.halting = res.status
            if res.status.decision is not None:
                status = Decided(res.status.decision)
        elif isinstance(res.status, Decided):
            status = res.status
        return status

    def step(self, s: int, inbox: Sequence[Envelope]) -> StepResult:
        me = self.node_id
        if inbox:
            self._absorb(inbox)
        status: Any = RUNNING
        while s >= self.next_start:
            self.mp_round += 1
            status = self._begin(self.mp_round)
            self.plan = {self.cur_start + k: partner for k, partner in self.slots}
        out: list[Envelope] = []
        poll = self.plan.get(s)
        if poll is not None:
            batch = self.pending.pop(poll, None)
            if batch:
                if len(batch) == 1:
                    payload, bits = batch[0], batch[0].bit_size
                else:
                    payload, bits = ("sp-bundle", tuple(batch)), sum(x.bit_size for x in batch)
                out.append(Envelope(me, poll, payload, bits, s))
        if self.halting is not None and not self.pending:
            return StepResult(out, self.halting, poll)
        # Wake for the next queued send; polls in between run from the plan.
        wake = self.next_start
        for k, partner in self.slots:
            sr = self.cur_start + k
            if sr > s and partner in self.pending:
                wake = sr
                break
        return StepResult(out, status, poll, wake, self.plan)

    def links(self, r: int):
        return getattr(self.inner, "links", lambda _r: None)(r)


# ---------------------------------------------------------------- consensus and gossip

def consensus_timeline(cfg: ProtocolConfig, ov: Overlays | None = None) -> SpTimeline:
    ov = ov or build_overlays(cfg)
    ref = ConsensusProgram(cfg, ov, 0, 0, "both", single_port=True)
    return SpTimeline(cfg, ov, ref.core.links)


def adapt_consensus_singleport(cfg: ProtocolConfig, input_bit: int, node: int, ov: Overlays | None = None,
                               timeline: SpTimeline | None = None) -> SinglePortAdapter:
    """Few-Crashes-Consensus in its single-port variant, wrapped for single-port rounds."""
    cfg.require_few()
    ov = ov or build_overlays(cfg)
    timeline = timeline or consensus_timeline(cfg, ov)
    inner = ConsensusProgram(cfg, ov, node, input_bit, "both", single_port=True)
    return SinglePortAdapter(inner, timeline)


def consensus_sp_horizon(timeline: SpTimeline, cfg: ProtocolConfig, ov: Overlays) -> int:
    ref = ConsensusProgram(cfg, ov, 0, 0, "both", single_port=True)
    return timeline.sp_end(ref.core.final_round)


def run_consensus_singleport(cfg: ProtocolConfig, inputs: Sequence[int],
                             adversary: AdversarySchedule | None = None, seed: int = 0) -> RunMetrics:
    ov = build_overlays(cfg)
    tl = consensus_timeline(cfg, ov)
    horizon = consensus_sp_horizon(tl, cfg, ov)
    progs = [adapt_consensus_singleport(cfg, inputs[v], v, ov, tl) for v in range(cfg.n)]
    ref = progs[0].inner.core.layout
    return run_singleport(progs, adversary, max_rounds=horizon + 2, seed=seed, horizon=horizon,
                          part_of_round=lambda s: ref.part_of(tl.mp_round(s)[0]))


def adapt_gossip_singleport(cfg: ProtocolConfig, rumor: int, node: int, ov: Overlays | None = None,
                            timeline: SpTimeline | None = None) -> SinglePortAdapter:
    ov = ov or build_overlays(cfg)
    inner = gossip_program(cfg, rumor, node, ov)
    timeline = timeline or SpTimeline(cfg, ov, gossip_program(cfg, 0, 0, ov).links)
    return SinglePortAdapter(inner, timeline)


class RoundRobinGossip(NodeProgram):
    """Direct single-port gossip: a round-robin tournament where each pair meets once.

    In round k node v exchanges its full extant set with its k-th opponent (circle
    method; a bye when n is odd). Halts after the last round of the tournament.
    """

    def __init__(self, n: int, node: int, rumor: int):
        self.n = n
        self.node_id = node
        self.known: dict[int, int] = {node: rumor}
        self.rounds = n - 1 if n % 2 == 0 else n

    def opponent(self, k: int) -> int | None:
        """Circle method: player m-1 is fixed, i meets j when i + j = 2(k-1) mod m-1."""
        m = self.n + self.n % 2
        v, kk = self.node_id, k - 1
        if v == m - 1:
            w = kk
        elif v == kk:
            w = m - 1
        else:
            w = (2 * kk - v) % (m - 1)
        return w if w < self.n else None

    def step(self, r: int, inbox: Sequence[Envelope]) -> StepResult:
        for e in inbox:
            self.known.update(e.payload)
        if r > self.rounds:
            return StepResult([], Halted(frozenset(self.known)))
        w = self.opponent(r)
        out = [] if w is None else [Envelope(self.node_id, w, dict(self.known), max(1, len(self.known)), r)]
        return StepResult(out, RUNNING, w)


@dataclass
class IsolationResult:
    victim: int
    halt_round: int | None
    isolated_rounds: int
    crashes_per_round: dict[int, int]
    metrics: RunMetrics


def gossip_lower_bound_experiment(n: int, t: int, victim: int,
                                  protocol: Callable[[int], NodeProgram], seed: int = 0,
                                  max_rounds: int | None = None,
                                  part_of_round: Callable[[int], str] | None = None) -> IsolationResult:
    """Run the port-isolating adversary against a single-port gossip protocol.

    ``protocol(v)`` builds node v's program. Returns the victim's halt round.
    """
    policy = PortIsolator(victim)
    adversary = AdversarySchedule(t, CrashAdaptive(policy, seed)) if t > 0 else None
    progs = [protocol(v) for v in range(n)]
    m = run_singleport(progs, adversary, max_rounds=max_rounds, seed=seed, part_of_round=part_of_round)
    per_round: dict[int, int] = {}
    for r in m.crashed.values():
        per_round[r] = per_round.get(r, 0) + 1
    return IsolationResult(victim, m.halt_rounds.get(victim), policy.isolated_rounds if t > 0 else 0,
                           per_round, m)


def round_robin_gossip(n: int, rumors: Sequence[int] | None = None) -> Callable[[int], NodeProgram]:
    rumors = rumors or [v % 2 for v in range(n)]
    return lambda v: RoundRobinGossip(n, v, rumors[v])


def adapted_gossip(cfg: ProtocolConfig, rumors: Sequence[int] | None = None) -> tuple[Callable[[int], NodeProgram], int]:
    """Factory for the adapted Gossip protocol plus its last sp-round."""
    ov = build_overlays(cfg)
    ref = gossip_program(cfg, 0, 0, ov)
    tl = SpTimeline(cfg, ov, ref.links)
    rumors = rumors or [v % 2 for v in range(cfg.n)]
    end = tl.sp_end(ref.core.end)
    return (lambda v: adapt_gossip_singleport(cfg, rumors[v], v, ov, tl)), end


# ---------------------------------------------------------------- influence diagnostic

class _Recorder(NodeProgram):
    """Passes through to ``inner`` while hashing everything it receives, round by round."""

    def __init__(self, inner: NodeProgram, trace: list[list[tuple[int, str]]]):
        self.inner = inner
        self.node_id = inner.node_id
        self.trace = trace
        self.digest = hashlib.sha256(repr(getattr(inner, "inner", inner).__dict__.get("input")).encode())

    def attach(self, ctx) -> None:
        self.ctx = ctx
        self.inner.attach(ctx)

    def step(self, r: int, inbox: Sequence[Envelope]) -> StepResult:
        for e in inbox:
            self.digest.update(repr((e.sender, e.payload)).encode())
        while len(self.trace) <= r:
            self.trace.append([])
        self.trace[r].append((self.node_id, self.digest.hexdigest()))
        res = self.inner.step(r, inbox)
        return StepResult(res.outbox, res.status, res.poll, None)


@dataclass
class InfluenceReport:
    divergent: list[int]          # divergent[i] = nodes whose state differs after sp-round i
    bound: list[int]              # 3^i
    consistent: bool


def influence_diagnostic(cfg: ProtocolConfig, inputs: Sequence[int], flipped: int, seed: int = 0) -> InfluenceReport:
    """Run adapted consensus twice, differing only in one node's input, and count divergence.

    In single-port rounds a node talks to at most one sender and one poller, so the set of
    influenced nodes can at most triple per round. This is reported, never asserted.
    """
    ov = build_overlays(cfg)
    traces = []
    for variant in (0, 1):
        vals = list(inputs)
        if variant:
            vals[flipped] ^= 1
        tl = consensus_timeline(cfg, ov)
        horizon = consensus_sp_horizon(tl, cfg, ov)
        trace: list[list] = []
        progs = [_Recorder(adapt_consensus_singleport(cfg, vals[v], v, ov, tl), trace) for v in range(cfg.n)]
        run_singleport(progs, None, max_rounds=horizon + 2, seed=seed)
        traces.append(trace)
    rounds = min(len(traces[0]), len(traces[1]))
    divergent = []
    for r in range(1, rounds):
        a = dict(traces[0][r])
        b = dict(traces[1][r])
        divergent.append(sum(1 for v in set(a) | set(b) if a.get(v) != b.get(v)))
    bound = [3 ** i for i in range(len(divergent))]
    ok = all(d <= bd for d, bd in zip(divergent, bound))
    return InfluenceReport(divergent, bound, ok)


# ---------------------------------------------------------------- audit dumps

def schedule_csv(timeline: SpTimeline, mp_rounds: Sequence[int]) -> str:
    """Per-node action table: node, sp_round, mp_round, offset, action, port rank, counterpart."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node", "sp_round", "mp_round", "offset", "action", "port", "counterpart"])
    n = timeline.cfg.n
    for r in mp_rounds:
        kind = timeline.kind(r)
        start = timeline.start(r)
        col = timeline.coloring(kind)
        width = timeline.width(r)
        adj = timeline.adjacency(kind) if kind is not None else None
        for v in range(n):
            for k in range(width):
                s = start + k
                partner = col.partner[k][v] if col is not None and k < col.colors else -1
                if partner >= 0:
                    rank = adj[v].index(partner)
                    w.writerow([v, s, r, k, "send", rank, partner])
                    w.writerow([v, s, r, k, "poll", rank, partner])
                if k == width - 1:
                    w.writerow([v, s, r, k, "compute", "", ""])
    return buf.getvalue()
