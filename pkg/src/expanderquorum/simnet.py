"""Deterministic synchronous round engine with crash and Byzantine adversaries."""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, NamedTuple, Sequence


class SimError(Exception):
    pass


class RoundLimitExceeded(SimError):
    def __init__(self, message: str, metrics: "RunMetrics"):
        super().__init__(message)
        self.metrics = metrics


class ProtocolViolation(SimError):
    def __init__(self, node: int, round_index: int, detail: str):
        super().__init__(f"node {node} at round {round_index}: {detail}")
        self.node = node
        self.round_index = round_index


class IrrevocabilityViolation(SimError):
    pass


class FaultBudgetExceeded(SimError):
    pass


class UnknownStrategy(SimError):
    pass


class Envelope(NamedTuple):
    sender: int
    receiver: int
    payload: Any
    bit_size: int = 1
    round_sent: int = 0


class Multicast(NamedTuple):
    """One payload sent to several receivers; accounted as one message per receiver."""

    sender: int
    receivers: tuple[int, ...]
    payload: Any
    bit_size: int = 1
    round_sent: int = 0

    def expand(self) -> list[Envelope]:
        return [Envelope(self.sender, w, self.payload, self.bit_size, self.round_sent) for w in self.receivers]


# ---------------------------------------------------------------- statuses

class Running:
    __slots__ = ()

    def __repr__(self) -> str:
        return "Running"


RUNNING = Running()


@dataclass(frozen=True)
class Decided:
    value: Any


@dataclass(frozen=True)
class Halted:
    """Node stops. ``decision`` lets a node decide and halt in the same round."""

    decision: Any = None


Status = Running | Decided | Halted


@dataclass
class StepResult:
    outbox: list[Envelope]
    status: Status = RUNNING
    poll: int | None = None
    # Next round the node must be stepped even with an empty inbox; None means the next round.
    wake: int | None = None
    # Single-port only: {round: port} polled in rounds where the node is not stepped.
    listen: Mapping[int, int] | None = None


class NodeProgram:
    """Per-node state machine. Subclasses implement ``step``."""

    node_id: int = 0
    ctx: "NodeContext | None" = None

    def attach(self, ctx: "NodeContext") -> None:
        self.ctx = ctx

    def step(self, round_index: int, inbox: Sequence[Envelope]) -> StepResult:
        raise NotImplementedError


# ---------------------------------------------------------------- signatures

class Token:
    """Opaque signature token. Valid only as the object minted by the registry."""

    __slots__ = ("_serial",)

    def __init__(self, serial: int):
        self._serial = serial

    def __repr__(self) -> str:
        return f"Token#{self._serial}"

    def __deepcopy__(self, memo: dict) -> "Token":
        return self


class SignatureRegistry:
    def __init__(self) -> None:
        self._minted: dict[tuple[int, Any], Token] = {}
        self._serial = 0
        self.rejected_attempts = 0
        self.accepted: set[tuple[int, Any]] = set()
        self.mint_log: list[tuple[int, Any]] = []

    def _mint(self, signer: int, digest: Any) -> Token:
        key = (signer, digest)
        tok = self._minted.get(key)
        if tok is None:
            self._serial += 1
            tok = Token(self._serial)
            self._minted[key] = tok
            self.mint_log.append(key)
        return tok

    def verify(self, token: Any, signer: int, digest: Any) -> bool:
        ok = self._minted.get((signer, digest)) is token and token is not None
        if ok:
            self.accepted.add((signer, digest))
        else:
            self.rejected_attempts += 1
        return ok

    def audit(self) -> int:
        """Number of accepted (signer, digest) pairs never minted by that signer."""
        return sum(1 for key in self.accepted if key not in self._minted)


class NodeContext:
    """Capabilities handed to a node: signing as itself and verifying anyone."""

    def __init__(self, node_id: int, n: int, registry: SignatureRegistry):
        self.node_id = node_id
        self.n = n
        self._registry = registry

    def sign(self, digest: Any) -> Token:
        return self._registry._mint(self.node_id, digest)

    def verify(self, token: Any, signer: int, digest: Any) -> bool:
        return self._registry.verify(token, signer, digest)

    def __deepcopy__(self, memo: dict) -> "NodeContext":
        return self


# ---------------------------------------------------------------- metrics

@dataclass
class PartStats:
    rounds: int = 0
    messages: int = 0
    bits: int = 0


@dataclass
class RunMetrics:
    rounds_elapsed: int = 0
    messages_total: int = 0
    bits_total: int = 0
    messages_by_nonfaulty: int = 0
    per_part: dict[str, PartStats] = field(default_factory=dict)
    transcript: list[tuple[int, int, str, str]] = field(default_factory=list)
    # Not serialized; convenient views for property checks.
    decisions: dict[int, Any] = field(default_factory=dict)
    decision_rounds: dict[int, int] = field(default_factory=dict)
    halt_rounds: dict[int, int] = field(default_factory=dict)
    crashed: dict[int, int] = field(default_factory=dict)
    byzantine: set[int] = field(default_factory=set)
    sent_by: dict[int, int] = field(default_factory=dict)
    forgeries: int = 0
    violations: list[str] = field(default_factory=list)

    def nonfaulty(self, n: int) -> list[int]:
        return [v for v in range(n) if v not in self.crashed and v not in self.byzantine]

    def to_dict(self) -> dict:
        return {
            "rounds": self.rounds_elapsed,
            "messages": self.messages_total,
            "bits": self.bits_total,
            "messages_nonfaulty": self.messages_by_nonfaulty,
            "parts": [
                {"part": name, "rounds": s.rounds, "messages": s.messages, "bits": s.bits}
                for name, s in self.per_part.items()
            ],
            "transcript": transcript_lines(self.transcript),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def csv_row(self) -> list:
        return [self.rounds_elapsed, self.messages_total, self.bits_total, self.messages_by_nonfaulty]


CSV_FIELDS = ["rounds", "messages", "bits", "messages_nonfaulty"]


def format_value(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, (set, frozenset)):
        return "{" + " ".join(str(x) for x in sorted(value)) + "}"
    if isinstance(value, bool):
        return str(int(value))
    return str(value)


def transcript_lines(records: Iterable[tuple[int, int, str, str]]) -> list[str]:
    return [f"{node},{rnd},{event},{value}" for node, rnd, event, value in records]


def metrics_csv(rows: Iterable[RunMetrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for m in rows:
        w.writerow(m.csv_row())
    return buf.getvalue()


# ---------------------------------------------------------------- adversaries

@dataclass(frozen=True)
class CrashStatic:
    """Node -> crash round; ``deliver`` picks what survives of the final outbox."""

    rounds: Mapping[int, int]
    deliver: str = "random"  # random | none | all


@dataclass(frozen=True)
class CrashAdaptive:
    strategy: Any
    seed: int = 0


@dataclass(frozen=True)
class ByzantineAssignment:
    strategies: Mapping[int, Any]


@dataclass(frozen=True)
class AdversarySchedule:
    bound_t: int
    kind: CrashStatic | CrashAdaptive | ByzantineAssignment | None = None


NO_FAULTS = AdversarySchedule(0, None)


class EngineView:
    """Read-only view of the run that adaptive adversaries may inspect."""

    def __init__(self, engine: "_Engine"):
        self._e = engine

    @property
    def n(self) -> int:
        return self._e.n

    @property
    def horizon(self) -> int:
        return self._e.horizon

    @property
    def single_port(self) -> bool:
        return self._e.single_port

    def alive(self) -> list[int]:
        e = self._e
        return [v for v in range(e.n) if v not in e.crashed and v not in e.byzantine]

    def is_halted(self, v: int) -> bool:
        return v in self._e.halted

    def inbox_of(self, v: int) -> list[Envelope]:
        return list(self._e.inbox.get(v, ()))

    def peek_step(self, v: int, round_index: int) -> StepResult:
        """Run a deep copy of v's program on its pending inbox without side effects."""
        e = self._e
        clone = copy.deepcopy(e.programs[v])
        return clone.step(round_index, list(e.inbox.get(v, ())))


class CrashPolicy:
    """Adaptive crash strategy. Returns {node: 'start' | 'send'} each round."""

    def reset(self, n: int, bound_t: int, rng: random.Random) -> None:
        self.n, self.bound_t, self.rng = n, bound_t, rng

    def crashes(self, round_index: int, view: EngineView, budget: int) -> dict[int, str]:
        return {}

    def deliver(self, node: int, round_index: int, outbox: list[Envelope]) -> list[Envelope]:
        return [e for e in outbox if self.rng.random() < 0.5]


class UniformRandom(CrashPolicy):
    def __init__(self, rate: float = 0.01):
        self.rate = rate

    def crashes(self, round_index, view, budget):
        out: dict[int, str] = {}
        if self.rate <= 0:
            return out
        for v in view.alive():
            if len(out) >= budget:
                break
            if self.rng.random() < self.rate:
                out[v] = "send"
        return out


class _PlannedCrashes(CrashPolicy):
    def _plan(self, view: EngineView) -> dict[int, int]:
        raise NotImplementedError

    def crashes(self, round_index, view, budget):
        if not hasattr(self, "_schedule") or self._schedule is None:
            self._schedule = self._plan(view)
        out = {v: "send" for v, r in self._schedule.items() if r == round_index}
        return dict(list(out.items())[:budget])

    def reset(self, n, bound_t, rng):
        super().reset(n, bound_t, rng)
        self._schedule = None


class FrontLoaded(_PlannedCrashes):
    """All t crashes happen in the first round."""

    def _plan(self, view):
        victims = self.rng.sample(range(self.n), self.bound_t)
        return {v: 1 for v in victims}


class BackLoaded(_PlannedCrashes):
    """Crashes spread over the second half of the nominal schedule."""

    def _plan(self, view):
        victims = self.rng.sample(range(self.n), self.bound_t)
        lo = max(1, view.horizon // 2)
        return {v: self.rng.randint(lo, max(lo, view.horizon)) for v in victims}


class TargetLittleNodes(_PlannedCrashes):
    """Crash little nodes (ids below 5t) at random rounds early in the run."""

    def _plan(self, view):
        little = min(5 * self.bound_t, self.n)
        victims = self.rng.sample(range(little), min(self.bound_t, little))
        hi = max(1, view.horizon // 2)
        return {v: self.rng.randint(1, hi) for v in victims}


class PortIsolator(CrashPolicy):
    """Crash whichever nodes the target would talk to this round, before the round starts."""

    def __init__(self, target: int):
        self.target = target
        self.isolated_rounds = 0

    def crashes(self, round_index, view, budget):
        v = self.target
        if v not in view.alive() or view.is_halted(v):
            return {}
        res = view.peek_step(v, round_index)
        counterparts = {e.receiver for e in res.outbox}
        if res.poll is not None:
            counterparts.add(res.poll)
        counterparts.discard(v)
        alive = set(view.alive())
        counterparts = sorted(c for c in counterparts if c in alive)
        if len(counterparts) > 2 or len(counterparts) > budget:
            return {}
        self.isolated_rounds += 1
        return {c: "start" for c in counterparts}

    def deliver(self, node, round_index, outbox):
        return []


CRASH_STRATEGIES: dict[str, Callable[..., CrashPolicy]] = {
    "UniformRandom": UniformRandom,
    "FrontLoaded": FrontLoaded,
    "BackLoaded": BackLoaded,
    "TargetLittleNodes": TargetLittleNodes,
    "PortIsolator": PortIsolator,
}


def crash_adversary_strategy(name: str, *args: Any, **kwargs: Any) -> CrashPolicy:
    try:
        factory = CRASH_STRATEGIES[name]
    except KeyError:
        raise UnknownStrategy(name) from None
    return factory(*args, **kwargs)


class _StaticPolicy(CrashPolicy):
    def __init__(self, spec: CrashStatic):
        self.spec = spec

    def crashes(self, round_index, view, budget):
        out = {v: "send" for v, r in sorted(self.spec.rounds.items()) if r == round_index}
        return dict(list(out.items())[:budget])

    def deliver(self, node, round_index, outbox):
        if self.spec.deliver == "none":
            return []
        if self.spec.deliver == "all":
            return list(outbox)
        return super().deliver(node, round_index, outbox)


# ---------------------------------------------------------------- engine

def default_max_rounds(n: int) -> int:
    return 4 * (n + 10 * math.ceil(math.log2(n + 1)))


class _Engine:
    def __init__(self, programs, adversary, max_rounds, seed, single_port, part_of_round, horizon,
                 byzantine_factory):
        self.programs: list[NodeProgram] = list(programs)
        self.n = len(self.programs)
        self.adversary = adversary or NO_FAULTS
        self.max_rounds = max_rounds or default_max_rounds(self.n)
        self.horizon = horizon or self.max_rounds
        self.single_port = single_port
        self.part_of_round = part_of_round
        self.rng = random.Random(seed)
        self.registry = SignatureRegistry()
        self.crashed: dict[int, int] = {}
        self.byzantine: set[int] = set()
        self.halted: set[int] = set()
        self.inbox: dict[int, list[Envelope]] = {}
        self.metrics = RunMetrics()
        self.policy: CrashPolicy | None = None
        self.byzantine_factory = byzantine_factory

        if self.adversary.bound_t >= max(self.n, 1) and self.n > 0 and self.adversary.bound_t > 0:
            raise SimError("adversary bound must be below n")
        for i, p in enumerate(self.programs):
            p.node_id = i
            p.attach(NodeContext(i, self.n, self.registry))
        kind = self.adversary.kind
        if isinstance(kind, CrashStatic):
            if len(kind.rounds) > self.adversary.bound_t:
                raise FaultBudgetExceeded(f"{len(kind.rounds)} scheduled crashes exceed bound {self.adversary.bound_t}")
            self.policy = _StaticPolicy(kind)
        elif isinstance(kind, CrashAdaptive):
            strat = kind.strategy
            self.policy = strat if isinstance(strat, CrashPolicy) else crash_adversary_strategy(strat)
        if self.policy is not None:
            salt = kind.seed if isinstance(kind, CrashAdaptive) else 0
            self.policy.reset(self.n, self.adversary.bound_t, random.Random(self.rng.getrandbits(64) ^ salt))
        if isinstance(kind, ByzantineAssignment):
            if len(kind.strategies) > self.adversary.bound_t:
                raise FaultBudgetExceeded("more Byzantine nodes than the bound")
            factory = self.byzantine_factory or byzantine_strategy
            for v, strat in sorted(kind.strategies.items()):
                self.byzantine.add(v)
                wrapped = factory(strat, self.programs[v], random.Random(self.rng.getrandbits(64)))
                wrapped.node_id = v
                wrapped.attach(self.programs[v].ctx)
                self.programs[v] = wrapped
                self.metrics.transcript.append((v, 0, "byz-assign", format_value(strat)))
        self.metrics.byzantine = set(self.byzantine)
        self.wake = [1] * self.n
        self.due: dict[int, set[int]] = {1: set(range(self.n))}
        self.has_mail: set[int] = set()
        self.listen: dict[int, Mapping[int, int] | None] = {}

    def _record_decision(self, v: int, r: int, value: Any) -> None:
        m = self.metrics
        if v in m.decisions:
            if m.decisions[v] != value:
                raise IrrevocabilityViolation(f"node {v} changed decision {m.decisions[v]} -> {value} at round {r}")
            return
        m.decisions[v] = value
        m.decision_rounds[v] = r
        m.transcript.append((v, r, "decide", format_value(value)))

    def _done(self) -> bool:
        return all(v in self.halted or v in self.crashed or v in self.byzantine for v in range(self.n))

    def _part(self, r: int) -> str:
        return self.part_of_round(r) if self.part_of_round else "main"

    def run(self) -> RunMetrics:
        m = self.metrics
        view = EngineView(self)
        n = self.n
        bound = self.adversary.bound_t
        r = 0
        while not self._done():
            r += 1
            if r > self.max_rounds:
                m.rounds_elapsed = r - 1
                self._finish()
                running = [v for v in range(n) if v not in self.halted and v not in self.crashed
                           and v not in self.byzantine]
                raise RoundLimitExceeded(f"nodes {running[:10]} still running after {self.max_rounds} rounds", m)
            part = m.per_part.setdefault(self._part(r), PartStats())
            part.rounds += 1

            crash_now: dict[int, str] = {}
            if self.policy is not None:
                budget = bound - len(self.crashed) - len(self.byzantine)
                if budget > 0:
                    crash_now = self.policy.crashes(r, view, budget)
                for v in list(crash_now):
                    if v in self.crashed or v in self.byzantine or v in self.halted:
                        del crash_now[v]
                if len(self.crashed) + len(self.byzantine) + len(crash_now) > bound:
                    raise FaultBudgetExceeded(f"round {r}: crash budget {bound} exceeded")
            for v, mode in crash_now.items():
                if mode == "start":
                    self.crashed[v] = r
                    m.transcript.append((v, r, "crash", "start"))

            sent_this_round = 0
            new_inbox: dict[int, list[Envelope]] = {}
            polls: dict[int, int | None] = {}
            due = self.due.pop(r, set())
            due.update(self.has_mail)
            due.update(crash_now)
            self.has_mail = set()
            for v in sorted(due):
                if v in self.crashed or v in self.halted:
                    continue
                inbox = self.inbox.get(v, ())
                if not inbox and self.wake[v] > r and v not in crash_now:
                    continue
                res = self.programs[v].step(r, inbox)
                out = res.outbox
                byz = v in self.byzantine
                if self.single_port and not byz and out and (len(out) > 1 or isinstance(out[0], Multicast)):
                    count = sum(len(e.receivers) if isinstance(e, Multicast) else 1 for e in out)
                    if count > 1:
                        raise ProtocolViolation(v, r, f"{count} envelopes in one single-port round")
                if v in crash_now:
                    flat = [x for e in out for x in (e.expand() if isinstance(e, Multicast) else (e,))]
                    out = self.policy.deliver(v, r, flat)
                    self.crashed[v] = r
                    m.transcript.append((v, r, "crash", str(len(out))))
                for e in out:
                    if e.sender != v:
                        if byz:
                            continue  # cannot spoof the sender field
                        raise ProtocolViolation(v, r, f"envelope claims sender {e.sender}")
                    if e.bit_size < 1:
                        raise ProtocolViolation(v, r, "bit_size must be >= 1")
                    if e.round_sent != r:
                        e = e._replace(round_sent=r)
                    if isinstance(e, Multicast):
                        targets = [w for w in e.receivers if 0 <= w < n]
                        k = len(e.receivers)
                    else:
                        targets = [e.receiver] if 0 <= e.receiver < n else []
                        k = 1
                    m.messages_total += k
                    m.bits_total += k * e.bit_size
                    part.messages += k
                    part.bits += k * e.bit_size
                    m.sent_by[v] = m.sent_by.get(v, 0) + k
                    if not byz:
                        m.messages_by_nonfaulty += k
                    sent_this_round += k
                    for w in targets:
                        box = new_inbox.get(w)
                        if box is None:
                            new_inbox[w] = [e]
                        else:
                            box.append(e)
                if self.single_port:
                    polls[v] = res.poll
                    self.listen[v] = res.listen
                if v in self.crashed:
                    continue
                self.wake[v] = r + 1 if res.wake is None else max(res.wake, r + 1)
                self.due.setdefault(self.wake[v], set()).add(v)
                st = res.status
                if isinstance(st, Decided):
                    self._record_decision(v, r, st.value)
                elif isinstance(st, Halted):
                    if st.decision is not None:
                        self._record_decision(v, r, st.decision)
                    self.halted.add(v)
                    m.halt_rounds[v] = r
                    m.transcript.append((v, r, "halt", ""))

            delivered: dict[int, list[Envelope]] = {}
            for w, box in new_inbox.items():
                if w in self.crashed or w in self.halted:
                    continue
                if self.single_port:
                    p = polls[w] if w in polls else (self.listen.get(w) or {}).get(r)
                    box = [e for e in box if e.sender == p] if p is not None else []
                # Senders are visited in ascending id, so each inbox is already sorted by sender.
                if box:
                    delivered[w] = box
                    self.has_mail.add(w)
            self.inbox = delivered
        # A closing step that sends nothing only completes the previous round's computation.
        if r > 1 and sent_this_round == 0:
            m.rounds_elapsed = r - 1
            part.rounds -= 1
            if part.rounds == 0 and part.messages == 0:
                del m.per_part[self._part(r)]
        else:
            m.rounds_elapsed = r
        self._finish()
        return m

    def _finish(self) -> None:
        m = self.metrics
        m.crashed = dict(self.crashed)
        m.forgeries = self.registry.audit()
        byz = len(self.byzantine) + len(self.crashed)
        if byz > self.adversary.bound_t:
            raise FaultBudgetExceeded(f"{byz} faulty nodes exceed bound {self.adversary.bound_t}")


def run_multiport(programs: Sequence[NodeProgram], adversary: AdversarySchedule | None = None,
                  max_rounds: int | None = None, seed: int = 0, *,
                  part_of_round: Callable[[int], str] | None = None, horizon: int | None = None,
                  byzantine_factory: Callable | None = None) -> RunMetrics:
    """Run programs (node i is programs[i]) in lock-step multi-port rounds."""
    return _Engine(programs, adversary, max_rounds, seed, False, part_of_round, horizon,
                   byzantine_factory).run()


def run_singleport(programs: Sequence[NodeProgram], adversary: AdversarySchedule | None = None,
                   max_rounds: int | None = None, seed: int = 0, *,
                   part_of_round: Callable[[int], str] | None = None, horizon: int | None = None,
                   byzantine_factory: Callable | None = None) -> RunMetrics:
    """Single-port rounds: one send and one polled in-port per node per round."""
    return _Engine(programs, adversary, max_rounds, seed, True, part_of_round, horizon,
                   byzantine_factory).run()


# ---------------------------------------------------------------- Byzantine behaviors

@dataclass(frozen=True)
class RandomNoise:
    seed: int = 0

    def __str__(self) -> str:
        return f"RandomNoise({self.seed})"


BYZANTINE_STRATEGIES = ("Silent", "Equivocate", "SelectiveSend", "ReplayOldSignatures", "FloodInquiries")


class ByzantineProgram(NodeProgram):
    """Wraps an honest program and distorts what it sends.

    Honest programs may offer two hooks used here:
    ``equivocate(envelope, rng)`` returning an alternative validly signed payload, and
    ``inquiry_payload(round_index)`` returning a payload suitable for flooding.
    Signing always goes through the node's own context, so forging is impossible.
    """

    def __init__(self, strategy: Any, inner: NodeProgram, rng: random.Random):
        self.strategy = strategy
        self.inner = inner
        self.rng = rng
        self.seen: list[Envelope] = []
        self.node_id = inner.node_id

    def attach(self, ctx: NodeContext) -> None:
        self.ctx = ctx
        self.inner.attach(ctx)

    def step(self, round_index: int, inbox: Sequence[Envelope]) -> StepResult:
        self.seen.extend(inbox)
        name = self.strategy if isinstance(self.strategy, str) else "RandomNoise"
        if name == "Silent":
            return StepResult([], RUNNING)
        res = self.inner.step(round_index, inbox)
        out = [x for e in res.outbox for x in (e.expand() if isinstance(e, Multicast) else (e,))]
        n = self.ctx.n if self.ctx else 0
        me = self.node_id
        if name == "Equivocate":
            hook = getattr(self.inner, "equivocate", None)
            if hook is not None:
                out = [e._replace(payload=hook(e, self.rng)) if e.receiver % 2 else e for e in out]
        elif name == "SelectiveSend":
            out = [e for e in out if self.rng.random() < 0.5]
        elif name == "ReplayOldSignatures":
            if self.seen:
                for w in range(n):
                    if w != me:
                        old = self.rng.choice(self.seen)
                        out.append(Envelope(me, w, old.payload, old.bit_size, round_index))
        elif name == "FloodInquiries":
            hook = getattr(self.inner, "inquiry_payload", None)
            if hook is not None:
                payload = hook(round_index)
                out.extend(Envelope(me, w, payload, 1, round_index) for w in range(n) if w != me)
        elif name == "RandomNoise":
            k = self.rng.randint(0, 3)
            for _ in range(k):
                w = self.rng.randrange(n) if n else me
                junk = (self.rng.choice(["rumor", "inquiry", "response", "sv", "set"]),
                        self.rng.getrandbits(8))
                out.append(Envelope(me, w, junk, 8, round_index))
        return StepResult(out, RUNNING, res.poll, None)


def byzantine_strategy(strategy: Any, inner: NodeProgram, rng: random.Random | None = None) -> ByzantineProgram:
    name = strategy if isinstance(strategy, str) else None
    if isinstance(strategy, RandomNoise):
        rng = random.Random(strategy.seed)
    elif name not in BYZANTINE_STRATEGIES:
        raise UnknownStrategy(str(strategy))
    return ByzantineProgram(strategy, inner, rng or random.Random(0))


def parse_byzantine(name: str) -> Any:
    if name.startswith("RandomNoise"):
        inner = name[len("RandomNoise"):].strip("()")
        return RandomNoise(int(inner) if inner else 0)
    if name not in BYZANTINE_STRATEGIES:
        raise UnknownStrategy(name)
    return name
