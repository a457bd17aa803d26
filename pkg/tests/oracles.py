"""Independent reference implementations used to cross-check the library.

Nothing here imports the algorithms it checks; only plain adjacency lists go in.
"""

from __future__ import annotations

import itertools
import math
from collections import deque


def peel(adjacency, members, delta):
    """Queue-driven peeling: repeatedly delete any vertex with fewer than delta in-set neighbours."""
    alive = set(members)
    inside = {v: sum(1 for u in adjacency[v] if u in alive) for v in alive}
    queue = deque(v for v in alive if inside[v] < delta)
    gone = set()
    while queue:
        v = queue.popleft()
        if v in gone:
            continue
        gone.add(v)
        for u in adjacency[v]:
            if u in alive and u not in gone:
                inside[u] -= 1
                if inside[u] < delta:
                    queue.append(u)
    return alive - gone


def bfs_distances(adjacency, source, allowed):
    dist = {source: 0}
    frontier = [source]
    while frontier:
        nxt = []
        for u in frontier:
            for w in adjacency[u]:
                if w in allowed and w not in dist:
                    dist[w] = dist[u] + 1
                    nxt.append(w)
        frontier = nxt
    return dist


def dense_neighborhood_brute(adjacency, v, gamma, delta, alive):
    """Try every subset S of the radius-gamma ball around v that contains v."""
    allowed = set(alive)
    dist = {u: d for u, d in bfs_distances(adjacency, v, allowed).items() if d <= gamma}
    others = [u for u in dist if u != v]
    for k in range(len(others), -1, -1):
        for extra in itertools.combinations(others, k):
            s = {v, *extra}
            if all(sum(1 for w in adjacency[u] if w in s) >= delta
                   for u in s if dist[u] <= gamma - 1):
                return True
    return False


def cycle_lambda(n):
    """max |2 cos(2 pi k / n)| over k = 1..n-1."""
    return max(abs(2 * math.cos(2 * math.pi * k / n)) for k in range(1, n))


def complete_lambda(m):
    return 1.0 if m > 1 else 0.0


def round_robin_pairs(n):
    """Circle-method schedule: list of rounds, each a dict node -> partner (n even) or bye."""
    players = list(range(n)) + ([None] if n % 2 else [])
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        pairing = {}
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a is not None and b is not None:
                pairing[a], pairing[b] = b, a
        rounds.append(pairing)
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def is_proper_edge_coloring(adjacency, color_of):
    """color_of maps frozenset({u, v}) -> color; every edge colored, colors distinct at each vertex."""
    for u, nbrs in enumerate(adjacency):
        seen = set()
        for v in nbrs:
            c = color_of.get(frozenset((u, v)))
            if c is None or c in seen:
                return False
            seen.add(c)
    return True
