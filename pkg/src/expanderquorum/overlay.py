"""Overlay graphs: construction, spectral certification and combinatorial checks."""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import networkx as nx
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import eigsh

DENSE_EIGEN_LIMIT = 2048
ITERATIVE_TOLERANCE = 1e-6
EXHAUSTIVE_LIMIT = 20


class OverlayError(Exception):
    pass


class ParityError(OverlayError):
    pass


class CertificationFailed(OverlayError):
    pass


class OverlapError(OverlayError):
    pass


class SizeError(OverlayError):
    pass


@dataclass(frozen=True)
class CertifiedRamanujan:
    slack: float

    def token(self) -> str:
        return f"ramanujan:{self.slack!r}"


@dataclass(frozen=True)
class CompleteFallback:
    def token(self) -> str:
        return "complete"


@dataclass(frozen=True)
class UncertifiedRandom:
    def token(self) -> str:
        return "uncertified"


Certificate = CertifiedRamanujan | CompleteFallback | UncertifiedRandom


def parse_certificate(token: str) -> Certificate:
    if token == "complete":
        return CompleteFallback()
    if token == "uncertified":
        return UncertifiedRandom()
    if token.startswith("ramanujan:"):
        return CertifiedRamanujan(float(token.split(":", 1)[1]))
    raise ValueError(f"unknown certificate {token!r}")


def ramanujan_bound(degree: int, slack: float = 0.0) -> float:
    return 2.0 * math.sqrt(max(degree - 1, 0)) * (1.0 + slack)


@dataclass(frozen=True)
class OverlayGraph:
    """Undirected simple graph on vertices 0..node_count-1.

    ``lambda_`` is max(|lambda_2|, |lambda_n|) of the adjacency matrix.
    ``degree`` is the regular degree, or the maximum degree for irregular graphs.
    """

    node_count: int
    degree: int
    adjacency: tuple[tuple[int, ...], ...]
    lambda_: float
    certificate: Certificate
    _sets: tuple[frozenset[int], ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self._sets:
            object.__setattr__(self, "_sets", tuple(frozenset(a) for a in self.adjacency))

    def __deepcopy__(self, memo: dict) -> "OverlayGraph":
        return self  # immutable

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self.adjacency[v]

    def neighbor_set(self, v: int) -> frozenset[int]:
        return self._sets[v]

    def has_edge(self, u: int, v: int) -> bool:
        return v in self._sets[u]

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u in range(self.node_count) for v in self.adjacency[u] if u < v]

    @property
    def min_degree(self) -> int:
        return min((len(a) for a in self.adjacency), default=0)

    @property
    def max_degree(self) -> int:
        return max((len(a) for a in self.adjacency), default=0)

    def is_complete(self) -> bool:
        return all(len(a) == self.node_count - 1 for a in self.adjacency)

    def to_text(self) -> str:
        lines = [f"{self.node_count} {self.degree} {self.lambda_!r} {self.certificate.token()}"]
        lines.extend(" ".join(str(u) for u in nbrs) for nbrs in self.adjacency)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "OverlayGraph":
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines:
            raise ValueError("empty graph file")
        head = lines[0].split()
        if len(head) != 4:
            raise ValueError("header must be 'n d lambda certificate'")
        n, d, lam, cert = int(head[0]), int(head[1]), float(head[2]), parse_certificate(head[3])
        if len(lines) - 1 != n:
            raise ValueError(f"expected {n} adjacency lines, found {len(lines) - 1}")
        adjacency = tuple(tuple(int(x) for x in line.split()) for line in lines[1:])
        g = cls(n, d, adjacency, lam, cert)
        check_structure(g)
        return g


def check_structure(g: OverlayGraph) -> None:
    """Raise ValueError unless adjacency is sorted, symmetric and simple."""
    for u, nbrs in enumerate(g.adjacency):
        if list(nbrs) != sorted(set(nbrs)):
            raise ValueError(f"vertex {u}: neighbors not sorted or duplicated")
        for v in nbrs:
            if v == u:
                raise ValueError(f"self-loop at {u}")
            if not 0 <= v < g.node_count:
                raise ValueError(f"vertex {u}: neighbor {v} out of range")
            if u not in g.neighbor_set(v):
                raise ValueError(f"edge {u}-{v} is not symmetric")


def verify_certificate(g: OverlayGraph) -> list[str]:
    """Return a list of violated invariants (empty when the graph is sound)."""
    problems = []
    try:
        check_structure(g)
    except ValueError as exc:
        problems.append(str(exc))
        return problems
    lam = eigen_lambda(g)
    if abs(lam - g.lambda_) > 1e-6 * max(1.0, lam):
        problems.append(f"stored lambda {g.lambda_} differs from computed {lam}")
    cert = g.certificate
    if isinstance(cert, CertifiedRamanujan):
        if any(len(a) != g.degree for a in g.adjacency):
            problems.append("certified graph is not regular")
        if lam > ramanujan_bound(g.degree, cert.slack) + 1e-9:
            problems.append(f"lambda {lam} exceeds bound {ramanujan_bound(g.degree, cert.slack)}")
    elif isinstance(cert, CompleteFallback) and not g.is_complete():
        problems.append("complete-fallback graph is not complete")
    return problems


def from_edges(node_count: int, edges: Iterable[tuple[int, int]], certificate: Certificate | None = None,
               degree: int | None = None) -> OverlayGraph:
    nbrs: list[set[int]] = [set() for _ in range(node_count)]
    for u, v in edges:
        if u == v:
            continue
        nbrs[u].add(v)
        nbrs[v].add(u)
    adjacency = tuple(tuple(sorted(s)) for s in nbrs)
    deg = degree if degree is not None else max((len(s) for s in nbrs), default=0)
    g = OverlayGraph(node_count, deg, adjacency, 0.0, certificate or UncertifiedRandom())
    return OverlayGraph(node_count, deg, adjacency, eigen_lambda(g), g.certificate)


def complete_graph(node_count: int) -> OverlayGraph:
    adjacency = tuple(tuple(v for v in range(node_count) if v != u) for u in range(node_count))
    lam = 1.0 if node_count > 1 else 0.0
    return OverlayGraph(node_count, node_count - 1, adjacency, lam, CompleteFallback())


def _adjacency_matrix(g: OverlayGraph) -> np.ndarray:
    a = np.zeros((g.node_count, g.node_count))
    for u, nbrs in enumerate(g.adjacency):
        a[u, list(nbrs)] = 1.0
    return a


def eigen_lambda(g: OverlayGraph) -> float:
    """max |eigenvalue| over the spectrum with one copy of the largest eigenvalue removed."""
    n = g.node_count
    if n <= 1:
        return 0.0
    if n <= DENSE_EIGEN_LIMIT:
        vals = np.linalg.eigvalsh(_adjacency_matrix(g))
        rest = vals[:-1]
        return float(np.max(np.abs(rest)))
    rows = [u for u, nbrs in enumerate(g.adjacency) for _ in nbrs]
    cols = [v for nbrs in g.adjacency for v in nbrs]
    a = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    # Lanczos on the extreme eigenvalues at both ends of the spectrum.
    top = eigsh(a, k=2, which="LA", tol=ITERATIVE_TOLERANCE, return_eigenvectors=False)
    bottom = eigsh(a, k=1, which="SA", tol=ITERATIVE_TOLERANCE, return_eigenvectors=False)
    top = np.sort(top)
    return float(max(abs(top[0]), abs(bottom[0])))


def _child_seed(seed: int, index: int) -> int:
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, index])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def build_regular_expander(node_count: int, degree: int, slack: float = 0.1, seed: int = 0,
                           max_retries: int = 100) -> OverlayGraph:
    """Sample random d-regular graphs until one satisfies lambda <= 2 sqrt(d-1) (1+slack)."""
    if node_count < 1 or degree < 1:
        raise ValueError("node_count and degree must be positive")
    if slack < 0:
        raise ValueError("slack must be nonnegative")
    if degree >= node_count - 1:
        return complete_graph(node_count)
    if (node_count * degree) % 2:
        raise ParityError(f"node_count*degree = {node_count * degree} is odd")
    bound = ramanujan_bound(degree, slack)
    best = math.inf
    for attempt in range(max_retries):
        nxg = nx.random_regular_graph(degree, node_count, seed=_child_seed(seed, attempt))
        adjacency = tuple(tuple(sorted(nxg.adj[u])) for u in range(node_count))
        g = OverlayGraph(node_count, degree, adjacency, 0.0, CertifiedRamanujan(slack))
        lam = eigen_lambda(g)
        if lam <= bound:
            return OverlayGraph(node_count, degree, adjacency, lam, CertifiedRamanujan(slack))
        best = min(best, lam)
    raise CertificationFailed(
        f"no ({node_count},{degree}) graph met lambda <= {bound:.4f} in {max_retries} tries (best {best:.4f})"
    )


def edge_count_between(g: OverlayGraph, a: Iterable[int], b: Iterable[int]) -> int:
    bset = set(b)
    return sum(1 for u in a for v in g.adjacency[u] if v in bset)


def mixing_check(g: OverlayGraph, a: Iterable[int], b: Iterable[int]) -> bool:
    a, b = set(a), set(b)
    if not a or not b:
        raise ValueError("sets must be nonempty")
    if a & b:
        raise OverlapError(f"sets overlap on {sorted(a & b)}")
    e = edge_count_between(g, a, b)
    expected = g.degree * len(a) * len(b) / g.node_count
    return abs(e - expected) <= g.lambda_ * math.sqrt(len(a) * len(b)) + 1e-9


def survival_subset(g: OverlayGraph, b: Iterable[int], delta: float) -> set[int]:
    """Largest subset of ``b`` whose members each have at least ``delta`` neighbors inside it.

    Iterates Y -> Y + {v in B - Y : v has < delta neighbors in B - Y} from the empty set,
    sweeping vertices in ascending order, and returns B minus the fixed point.
    """
    remaining = set(b)
    while True:
        dropped = [v for v in sorted(remaining)
                   if sum(1 for u in g.adjacency[v] if u in remaining) < delta]
        if not dropped:
            return remaining
        remaining.difference_update(dropped)


def ball(g: OverlayGraph, v: int, radius: int, alive: Iterable[int] | None = None) -> dict[int, int]:
    """Distances from v up to ``radius`` in the subgraph induced by ``alive``."""
    allowed = None if alive is None else set(alive)
    dist = {v: 0}
    queue = deque([v])
    while queue:
        u = queue.popleft()
        if dist[u] == radius:
            continue
        for w in g.adjacency[u]:
            if w not in dist and (allowed is None or w in allowed):
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def dense_neighborhood_exists(g: OverlayGraph, v: int, gamma: int, delta: float,
                              alive: Iterable[int]) -> bool:
    """Whether some S containing v, within distance gamma of v in the alive subgraph, has every
    member at distance <= gamma-1 adjacent to at least delta members of S."""
    alive = set(alive)
    if v not in alive:
        raise ValueError(f"vertex {v} is not alive")
    dist = ball(g, v, gamma, alive)
    candidate = set(dist)
    changed = True
    while changed and v in candidate:
        changed = False
        for u in sorted(candidate):
            if dist[u] <= gamma - 1 and sum(1 for w in g.adjacency[u] if w in candidate) < delta:
                candidate.discard(u)
                changed = True
    return v in candidate


def check_expansion(g: OverlayGraph, ell: int, trials: int = 100, seed: int = 0) -> bool:
    """Check that disjoint vertex sets of size ``ell`` are always joined by an edge."""
    n = g.node_count
    if 2 * ell > n:
        raise SizeError(f"2*ell = {2 * ell} exceeds node_count {n}")
    if ell <= 0:
        return True
    if n <= EXHAUSTIVE_LIMIT:
        # A has an unjoined partner iff at least ell vertices lie outside A and N(A).
        for a in itertools.combinations(range(n), ell):
            closed = set(a).union(*(g.neighbor_set(u) for u in a))
            if n - len(closed) >= ell:
                return False
        return True
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        perm = rng.permutation(n)
        if edge_count_between(g, perm[:ell].tolist(), perm[ell:2 * ell].tolist()) == 0:
            return False
    return True


def external_neighbors(g: OverlayGraph, s: Iterable[int]) -> set[int]:
    s = set(s)
    out: set[int] = set()
    for u in s:
        out.update(g.adjacency[u])
    return out - s


@dataclass(frozen=True)
class SCVMode:
    pass


@dataclass(frozen=True)
class ManyCrashesMode:
    alpha: float


GiMode = SCVMode | ManyCrashesMode


@dataclass(frozen=True)
class GiGraph:
    base: OverlayGraph
    phase_index: int
    bernoulli_numerator: int


def scv_numerator(phase_index: int) -> int:
    return 10 * 2 ** phase_index


def many_crashes_degree(phase_index: int, alpha: float) -> int:
    return math.ceil(64 / (3 * (1 - alpha) * (1 + 3 * alpha))) * 2 ** phase_index


def build_gi_graph(node_count: int, phase_index: int, mode: GiMode, seed: int = 0,
                   slack: float = 0.1, max_retries: int = 100) -> GiGraph:
    if phase_index < 1:
        raise ValueError("phase_index must be >= 1")
    if isinstance(mode, ManyCrashesMode):
        if not 0 <= mode.alpha < 1:
            raise ValueError("alpha must lie in [0, 1)")
        d = min(many_crashes_degree(phase_index, mode.alpha), node_count - 1)
        if (d * node_count) % 2:
            d += 1
        base = build_regular_expander(node_count, d, slack, seed, max_retries)
        return GiGraph(base, phase_index, d)
    b = scv_numerator(phase_index)
    if b >= node_count:
        return GiGraph(complete_graph(node_count), phase_index, b)
    rng = np.random.default_rng(seed)
    chooses = rng.random((node_count, node_count)) < b / node_count
    np.fill_diagonal(chooses, False)
    sym = chooses | chooses.T
    us, vs = np.nonzero(np.triu(sym, 1))
    base = from_edges(node_count, zip(us.tolist(), vs.tolist()))
    return GiGraph(base, phase_index, b)


def spot_check_set_size(t: int, phase_index: int, constant: float = 1.0) -> int:
    """Size C (t+1) / 2^i of the sets whose external neighborhoods are spot-checked."""
    return max(1, math.ceil(constant * (t + 1) / 2 ** phase_index))


def check_external_neighbors(g: GiGraph | OverlayGraph, set_size: int, required: int,
                             trials: int = 100, seed: int = 0) -> bool:
    base = g.base if isinstance(g, GiGraph) else g
    n = base.node_count
    if set_size > n:
        raise SizeError(f"set_size {set_size} exceeds node_count {n}")
    if n <= EXHAUSTIVE_LIMIT:
        return all(len(external_neighbors(base, s)) >= required
                   for s in itertools.combinations(range(n), set_size))
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        s = rng.choice(n, size=set_size, replace=False).tolist()
        if len(external_neighbors(base, s)) < required:
            return False
    return True


MINUS1 = "Minus1"
MINUS2 = "Minus2"


def delta_of(degree: float, variant: str = MINUS1) -> float:
    if variant == MINUS1:
        return 0.5 * (degree ** 0.875 - degree ** 0.625)
    if variant == MINUS2:
        return 0.5 * (degree ** 0.875 - 2 * degree ** 0.625)
    raise ValueError(f"unknown delta variant {variant!r}")


def ell_of(node_count: int, degree: float) -> float:
    return 4 * node_count * degree ** -0.125


@dataclass(frozen=True)
class GraphParams:
    ell: float
    delta: float
    gamma: int
    delta_formula_variant: str = MINUS1


def graph_params(g: OverlayGraph, gamma: int, variant: str = MINUS1, scaled: bool = False,
                 nominal_degree: float | None = None) -> GraphParams:
    """Probing parameters for ``g``.

    ``nominal_degree`` is the degree the construction asked for; it differs from ``g.degree``
    when the request exceeded the order and the complete graph was substituted. On such a
    graph delta is capped at ceil(3/4 ell) - 1, the largest threshold for which a survival
    subset of size 3/4 ell can exist, and at order - 2.
    """
    d = nominal_degree if nominal_degree is not None else g.degree
    m = g.node_count
    ell = ell_of(m, d)
    delta = delta_of(d, variant)
    if g.is_complete():
        cap = math.ceil(0.75 * min(ell, m)) - 1
        delta = max(0.0, min(delta, m - 2, cap))
    elif scaled:
        delta = min(delta, g.min_degree)
    return GraphParams(ell, delta, gamma, variant)


def compactness_check(g: OverlayGraph, delta: float, set_size: int, trials: int = 100,
                      seed: int = 0, ratio: float = 0.75) -> bool:
    """Random sets of ``set_size`` vertices keep a survival subset of at least ratio*|B|."""
    n = g.node_count
    size = min(set_size, n)
    need = math.ceil(ratio * size)
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        b = rng.choice(n, size=size, replace=False).tolist()
        if len(survival_subset(g, b, delta)) < need:
            return False
    return True
