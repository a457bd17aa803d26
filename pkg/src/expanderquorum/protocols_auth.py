"""Authenticated Byzantine protocols: Dolev-Strong broadcast and AB-Consensus.

Signatures are registry tokens bound to a (signer, digest) pair; they cannot be forged,
only copied. Digests used here:

* ``("ds", instance, value)``: a broadcast chain link for ``value`` in ``instance``;
* ``("out", instance, value)``: a little node's endorsement of its broadcast output;
* ``("inq", node)``: an authenticated inquiry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable, Iterable, Sequence

from .overlay import OverlayGraph
from .protocols_crash import ConfigError, _regular, lg, scv_flood_rounds
from .simnet import (
    RUNNING,
    Envelope,
    Halted,
    Multicast,
    NodeProgram,
    StepResult,
)


class _Null:
    """The empty broadcast outcome. Orders below every real value."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "Null"

    def __reduce__(self):
        return (_Null, ())

    def __deepcopy__(self, memo):
        return self


NULL = _Null()


def _rank(value: Any) -> tuple:
    return (0, 0) if value is NULL else (1, value)


def decide_max(values: Iterable[Any]) -> Any:
    """Maximum with Null lowest. An all-Null collection falls back to 0."""
    best = max(values, key=_rank, default=NULL)
    return 0 if best is NULL else best


class _Verifier:
    """Per-node memo around ``ctx.verify`` so relayed chains are checked once."""

    def __init__(self, ctx):
        self.ctx = ctx
        self.memo: dict[tuple[int, Any], Any] = {}

    def __call__(self, token: Any, signer: int, digest: Any) -> bool:
        key = (signer, digest)
        if key in self.memo and self.memo[key] is token:
            return True
        try:
            ok = self.ctx.verify(token, signer, digest)
        except TypeError:  # unhashable junk
            return False
        if ok:
            self.memo[key] = token
        return ok


# ---------------------------------------------------------------- Dolev-Strong

@dataclass(frozen=True)
class SignedValue:
    origin: int
    value: Any
    chain: tuple[tuple[int, Any], ...]   # (signer, token), signers distinct

    def signers(self) -> list[int]:
        return [s for s, _ in self.chain]


def _valid_value(value: Any) -> bool:
    return value is NULL or (isinstance(value, int) and not isinstance(value, bool))


def check_chain(sv: Any, group: int, verify: Callable[[Any, int, Any], bool]) -> int:
    """Number of distinct valid group signatures on ``sv``, or -1 if anything is off.

    A chain must carry the origin's signature; an invalid token spoils the whole chain.
    """
    if not isinstance(sv, SignedValue) or not isinstance(sv.chain, tuple):
        return -1
    if not (isinstance(sv.origin, int) and 0 <= sv.origin < group) or not _valid_value(sv.value):
        return -1
    seen = set()
    digest = ("ds", sv.origin, sv.value)
    for link in sv.chain:
        if not (isinstance(link, tuple) and len(link) == 2):
            return -1
        s, tok = link
        if not (isinstance(s, int) and 0 <= s < group) or s in seen:
            return -1
        if not verify(tok, s, digest):
            return -1
        seen.add(s)
    return len(seen) if sv.origin in seen else -1


class BroadcastCore:
    """Parallel Dolev-Strong instances run by one member of a group of ``group`` nodes.

    Messages from all instances to the same receiver are combined into one envelope.
    Round k sends carry chains of length k; a chain received from round k is accepted
    with at least k valid signatures, and each node relays at most two values per instance.
    """

    def __init__(self, me: int, group: int, t: int, instances: Sequence[int], own_value: Any,
                 verify: Callable[[Any, int, Any], bool], sign: Callable[[Any], Any]):
        self.me = me
        self.group = group
        self.t = t
        self.instances = set(instances)
        self.own_value = own_value
        self.verify = verify
        self.sign = sign
        self.accepted: dict[int, dict[Any, SignedValue]] = {i: {} for i in instances}
        self.outputs: dict[int, Any] | None = None

    @property
    def last_round(self) -> int:
        return self.t + 1

    def _extend(self, sv: SignedValue) -> SignedValue:
        if self.me in sv.signers():
            return sv
        tok = self.sign(("ds", sv.origin, sv.value))
        return SignedValue(sv.origin, sv.value, sv.chain + ((self.me, tok),))

    def _route(self, fresh: list[SignedValue]) -> dict[int, list[SignedValue]]:
        per: dict[int, list[SignedValue]] = {}
        for sv in fresh:
            holders = set(sv.signers())
            for w in range(self.group):
                if w not in holders:
                    per.setdefault(w, []).append(sv)
        return per

    def step(self, k: int, items: Iterable[Any]) -> dict[int, list[SignedValue]]:
        """Absorb chains sent in round k-1 and return this round's sends by receiver."""
        fresh: list[SignedValue] = []
        if k == 1 and self.me in self.instances and self.own_value is not None:
            sv = self._extend(SignedValue(self.me, self.own_value, ()))
            self.accepted[self.me][sv.value] = sv
            fresh.append(sv)
        need = k - 1
        for sv in items:
            if not isinstance(sv, SignedValue) or sv.origin not in self.instances:
                continue
            bucket = self.accepted[sv.origin]
            if sv.value in bucket or len(bucket) >= 2:
                continue
            if 1 <= need and check_chain(sv, self.group, self.verify) >= need:
                ext = self._extend(sv) if k <= self.last_round else sv
                bucket[sv.value] = ext
                fresh.append(ext)
        if k > self.last_round:
            self.outputs = {i: (next(iter(b)) if len(b) == 1 else NULL) for i, b in self.accepted.items()}
            return {}
        return self._route(fresh)


def _ds_bits(items: Sequence[SignedValue], group: int, value_bits: int) -> int:
    id_bits = max(1, lg(group))
    return sum(id_bits + value_bits + id_bits * len(sv.chain) for sv in items)


class DolevStrongProgram(NodeProgram):
    """One Dolev-Strong broadcast over ``n_participants`` nodes, source ``source``.

    Halts after round t+1 with the unique accepted value, or Null.
    """

    def __init__(self, n_participants: int, t: int, source: int, value: Any, node: int,
                 value_bits: int = 8):
        if not 0 <= source < n_participants:
            raise ConfigError("source must be a participant")
        if t >= n_participants:
            raise ConfigError("t must be below the number of participants")
        self.node_id = node
        self.n_participants = n_participants
        self.t = t
        self.source = source
        self.value = value if node == source else None
        self.value_bits = value_bits
        self.core: BroadcastCore | None = None
        self.output: Any = None

    def attach(self, ctx) -> None:
        super().attach(ctx)
        self.core = BroadcastCore(self.node_id, self.n_participants, self.t, [self.source], self.value,
                                  _Verifier(ctx), ctx.sign)

    def step(self, r: int, inbox: Sequence[Envelope]) -> StepResult:
        items = [sv for e in inbox if _is_kind(e.payload, "ds") for sv in e.payload[1]]
        sends = self.core.step(r, items)
        if self.core.outputs is not None:
            self.output = self.core.outputs[self.source]
            return StepResult([], Halted(self.output))
        out = [Envelope(self.node_id, w, ("ds", tuple(lst)), _ds_bits(lst, self.n_participants, self.value_bits))
               for w, lst in sorted(sends.items())]
        return StepResult(out, RUNNING)

    def equivocate(self, envelope: Envelope, rng) -> Any:
        return _equivocate_ds(self.ctx, self.node_id, envelope.payload)


def dolev_strong_program(n_participants: int, t: int, source: int, input: Any, node: int,
                         value_bits: int = 8) -> DolevStrongProgram:
    return DolevStrongProgram(n_participants, t, source, input, node, value_bits)


def _is_kind(payload: Any, kind: str) -> bool:
    return isinstance(payload, tuple) and len(payload) >= 2 and payload[0] == kind \
        and isinstance(payload[1], tuple)


def _same_value(a: Any, b: Any) -> bool:
    if a is NULL or b is NULL:
        return a is b
    return _valid_value(a) and a == b


def _flip(value: Any) -> Any:
    return 1 if value is NULL else value ^ 1


def _equivocate_ds(ctx, me: int, payload: Any) -> Any:
    """Replace this node's own-origin chains by a freshly signed conflicting value."""
    if not _is_kind(payload, "ds"):
        return payload
    items = []
    for sv in payload[1]:
        if sv.origin == me and sv.signers() == [me]:
            alt = _flip(sv.value)
            sv = SignedValue(me, alt, ((me, ctx.sign(("ds", me, alt))),))
        items.append(sv)
    return ("ds", tuple(items))


# ---------------------------------------------------------------- authenticated common sets

@dataclass(frozen=True)
class AuthEntry:
    value: Any
    signatures: tuple[tuple[int, Any], ...]


@dataclass(frozen=True)
class AuthCommonSet:
    """One endorsed broadcast outcome per little node."""

    entries: tuple[AuthEntry, ...]

    def values(self) -> tuple[Any, ...]:
        return tuple(e.value for e in self.entries)

    def bit_size(self, value_bits: int) -> int:
        id_bits = max(1, lg(len(self.entries)))
        return sum(value_bits + id_bits * len(e.signatures) for e in self.entries)


def verify_common_set(candidate: Any, group: int, threshold: int,
                      verify: Callable[[Any, int, Any], bool]) -> bool:
    """Pure predicate: one entry per little node, each endorsed by ``threshold`` distinct members."""
    if not isinstance(candidate, AuthCommonSet) or not isinstance(candidate.entries, tuple):
        return False
    if len(candidate.entries) != group:
        return False
    for i, entry in enumerate(candidate.entries):
        if not isinstance(entry, AuthEntry) or not _valid_value(entry.value):
            return False
        if not isinstance(entry.signatures, tuple):
            return False
        digest = ("out", i, entry.value)
        good = set()
        for link in entry.signatures:
            if not (isinstance(link, tuple) and len(link) == 2):
                return False
            s, tok = link
            if isinstance(s, int) and 0 <= s < group and s not in good and verify(tok, s, digest):
                good.add(s)
        if len(good) < threshold:
            return False
    return True


# ---------------------------------------------------------------- AB-Consensus

@dataclass(frozen=True)
class AuthConfig:
    n: int
    t: int
    group_size: int | None = None
    h_degree: int = 8
    graph_seed: int = 0
    slack: float = 0.1
    value_bits: int = 8

    @property
    def little_count(self) -> int:
        if self.group_size is not None:
            return self.group_size
        return max(1, min(5 * self.t, self.n))

    @property
    def threshold(self) -> int:
        """ceil(4L/5), capped at the guaranteed number of honest little nodes."""
        m = self.little_count
        return max(1, min(math.ceil(4 * m / 5), m - self.t))

    def is_little(self, v: int) -> bool:
        return v < self.little_count

    def related(self, little: int) -> list[int]:
        m = self.little_count
        return list(range(little + m, self.n, m))

    def home(self, v: int) -> int:
        return v % self.little_count

    def require(self) -> None:
        if self.t < 0 or 2 * self.t >= self.n:
            raise ConfigError(f"t < n/2 required (n={self.n}, t={self.t})")
        if not self.t < self.little_count <= self.n:
            raise ConfigError(f"little group size {self.little_count} must lie in (t, n]")


@lru_cache(maxsize=64)
def build_auth_overlay(cfg: AuthConfig) -> OverlayGraph:
    return _regular(cfg.n, cfg.h_degree, cfg.slack, cfg.graph_seed + 1)


class AuthLayout:
    """Global round numbers of each AB-Consensus part."""

    def __init__(self, cfg: AuthConfig):
        t = cfg.t
        self.ds_last = t + 1            # rounds 1..t+1 carry broadcast chains
        self.endorse = t + 2            # outputs are endorsed to the whole group
        self.notify = t + 3             # little nodes tell their related nodes
        self.flood_start = t + 4        # holders send along H
        self.flood_rounds = scv_flood_rounds(cfg.n, max(t, 1))
        self.inquire = self.flood_start + self.flood_rounds + 1
        self.respond = self.inquire + 1
        self.final = self.inquire + 2

    def part_of(self, r: int) -> str:
        if r <= self.endorse:
            return "part1"
        if r == self.notify:
            return "part2"
        if r < self.inquire:
            return "part3"
        return "part4"


class ABConsensusProgram(NodeProgram):
    def __init__(self, cfg: AuthConfig, value: int, node: int, h: OverlayGraph):
        self.cfg = cfg
        self.node_id = node
        self.input = value
        self.h = h
        self.layout = AuthLayout(cfg)
        self.little = cfg.is_little(node)
        self.common: AuthCommonSet | None = None
        self.decision: Any = None
        self.answered: set[int] = set()
        self.inquired = False

    def attach(self, ctx) -> None:
        super().attach(ctx)
        self.verify = _Verifier(ctx)
        m = self.cfg.little_count
        if self.little:
            self.ds = BroadcastCore(self.node_id, m, self.cfg.t, range(m), self.input, self.verify, ctx.sign)

    # -- helpers

    def _valid(self, s: Any) -> bool:
        return verify_common_set(s, self.cfg.little_count, self.cfg.threshold, self.verify)

    def _adopt_from(self, inbox: Sequence[Envelope], kind: str, sender: int | None = None) -> bool:
        """Adopt the first valid set of ``kind`` in inbox order."""
        for e in inbox:
            p = e.payload
            if sender is not None and e.sender != sender:
                continue
            if isinstance(p, tuple) and len(p) == 2 and p[0] == kind and self._valid(p[1]):
                self.common = p[1]
                return True
        return False

    def _set_to(self, receivers: Sequence[int], r: int) -> list:
        if not receivers:
            return []
        return [Multicast(self.node_id, tuple(receivers), ("set", self.common),
                          self.common.bit_size(self.cfg.value_bits), r)]

    def _decide(self) -> Any:
        if self.common is None:
            return None
        self.decision = decide_max(self.common.values())
        return self.decision

    def _wake(self, r: int) -> int | None:
        lay = self.layout
        if self.little:
            if r < lay.notify:
                return None
            return lay.flood_start if r < lay.flood_start else (
                None if r < lay.inquire else lay.respond)
        if r < lay.notify:
            return lay.flood_start
        if r < lay.flood_start + lay.flood_rounds:
            return None
        return lay.inquire if r < lay.inquire else lay.final

    def step(self, r: int, inbox: Sequence[Envelope]) -> StepResult:
        cfg, lay, me = self.cfg, self.layout, self.node_id
        m = cfg.little_count
        out: list = []

        if self.little and r <= lay.ds_last + 1:
            items = [sv for e in inbox if _is_kind(e.payload, "ds") and e.sender < m for sv in e.payload[1]]
            sends = self.ds.step(r, items)
            for w, lst in sorted(sends.items()):
                out.append(Envelope(me, w, ("ds", tuple(lst)), _ds_bits(lst, m, cfg.value_bits), r))
            if r == lay.endorse:
                outs = self.ds.outputs
                endorsement = tuple((i, outs[i], self.ctx.sign(("out", i, outs[i]))) for i in range(m))
                self._endorsement = endorsement
                others = tuple(w for w in range(m) if w != me)
                if others:
                    out.append(Multicast(me, others, ("endorse", endorsement),
                                         m * (cfg.value_bits + max(1, lg(m))), r))
            return StepResult(out, RUNNING, wake=self._wake(r))

        if self.little and r == lay.notify:
            outs = self.ds.outputs
            sigs: dict[int, list] = {i: [(me, self._endorsement[i][2])] for i in range(m)}
            for e in inbox:
                if not _is_kind(e.payload, "endorse") or not 0 <= e.sender < m or e.sender == me:
                    continue
                for item in e.payload[1]:
                    if not (isinstance(item, tuple) and len(item) == 3):
                        continue
                    i, val, tok = item
                    if not (isinstance(i, int) and 0 <= i < m and _same_value(val, outs[i])):
                        continue
                    if all(s != e.sender for s, _ in sigs[i]) and self.verify(tok, e.sender, ("out", i, val)):
                        sigs[i].append((e.sender, tok))
            candidate = AuthCommonSet(tuple(AuthEntry(outs[i], tuple(sigs[i])) for i in range(m)))
            if self._valid(candidate):
                self.common = candidate
                out += self._set_to(cfg.related(me), r)
            return StepResult(out, RUNNING, wake=self._wake(r))

        if lay.flood_start <= r <= lay.inquire:
            if r == lay.flood_start and not self.little and self.common is None:
                self._adopt_from(inbox, "set", sender=cfg.home(me))
                if self.common is not None:
                    out += self._set_to(self.h.neighbors(me), r)
                    return StepResult(out, RUNNING, wake=self._wake(r))
            if r == lay.flood_start and self.common is not None:
                out += self._set_to(self.h.neighbors(me), r)
            elif self.common is None and r > lay.flood_start and self._adopt_from(inbox, "set"):
                if r <= lay.flood_start + lay.flood_rounds:
                    out += self._set_to(self.h.neighbors(me), r)
            if r == lay.inquire:
                if self.common is None:
                    self.inquired = True
                    tok = self.ctx.sign(("inq", me))
                    little = tuple(w for w in range(m) if w != me)
                    out.append(Multicast(me, little, ("inq", (me, tok)), max(1, lg(cfg.n)), r))
                elif not self.little:
                    return StepResult(out, Halted(self._decide()))
            return StepResult(out, RUNNING, wake=self._wake(r))

        if r == lay.respond:
            if self.little and self.common is not None:
                targets = []
                for e in inbox:
                    p = e.payload
                    if not _is_kind(p, "inq") or len(p[1]) != 2:
                        continue
                    who, tok = p[1]
                    if isinstance(who, int) and 0 <= who < cfg.n and who not in self.answered \
                            and who != me and self.verify(tok, who, ("inq", who)):
                        self.answered.add(who)
                        targets.append(who)
                if targets:
                    out.append(Multicast(me, tuple(targets), ("resp", self.common),
                                         self.common.bit_size(cfg.value_bits), r))
            if self.common is not None:
                return StepResult(out, Halted(self._decide()))
            return StepResult(out, RUNNING, wake=self._wake(r))

        if r >= lay.final:
            if self.common is None:
                self._adopt_from(inbox, "resp")
            return StepResult(out, Halted(self._decide()))
        return StepResult(out, RUNNING, wake=self._wake(r))

    # -- Byzantine hooks

    def equivocate(self, envelope: Envelope, rng) -> Any:
        p = envelope.payload
        if _is_kind(p, "ds"):
            return _equivocate_ds(self.ctx, self.node_id, p)
        if _is_kind(p, "endorse"):
            items = []
            for i, val, _ in p[1]:
                alt = _flip(val) if rng.random() < 0.5 else val
                items.append((i, alt, self.ctx.sign(("out", i, alt))))
            return ("endorse", tuple(items))
        if isinstance(p, tuple) and len(p) == 2 and p[0] in ("set", "resp") and isinstance(p[1], AuthCommonSet):
            # Claim a different value for one entry while keeping its real signatures.
            entries = list(p[1].entries)
            if entries:
                i = rng.randrange(len(entries))
                entries[i] = AuthEntry(_flip(entries[i].value), entries[i].signatures)
            return (p[0], AuthCommonSet(tuple(entries)))
        return p

    def inquiry_payload(self, round_index: int) -> Any:
        return ("inq", (self.node_id, self.ctx.sign(("inq", self.node_id))))


def ab_consensus_program(cfg: AuthConfig, input: int, node: int,
                         overlay: OverlayGraph | None = None) -> ABConsensusProgram:
    cfg.require()
    return ABConsensusProgram(cfg, input, node, overlay or build_auth_overlay(cfg))


def ab_message_budget(t: int, n: int, constant: int = 16) -> int:
    return constant * (t * t + n)
