"""Undirected agent networks: seeded connected generator, Laplacian, BFS."""

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .rng import XorShift64Star


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    n: int
    edges: tuple  # sorted tuple of (i, j) with i < j
    adjacency: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise GraphError("graph needs at least one agent")
        normalized = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise GraphError(f"self-loop at agent {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"edge ({i}, {j}) out of range for n={self.n}")
            e = (min(i, j), max(i, j))
            if e in normalized:
                raise GraphError(f"duplicate edge {e}")
            normalized.add(e)
        edges = tuple(sorted(normalized))
        nbrs = [[] for _ in range(self.n)]
        for i, j in edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "adjacency", tuple(tuple(sorted(a)) for a in nbrs))

    @property
    def m(self):
        return len(self.edges)

    def degree(self, i):
        return len(self.adjacency[i])

    def degrees(self):
        return np.array([len(a) for a in self.adjacency])

    def neighbors(self, i):
        return self.adjacency[i]

    def has_edge(self, i, j):
        return i != j and j in self.adjacency[i]

    def to_edge_list(self):
        lines = [f"{self.n} {self.m}"] + [f"{i} {j}" for i, j in self.edges]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_edge_list(cls, text):
        rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if not rows or len(rows[0]) != 2:
            raise GraphError("edge list must start with a 'n m' header")
        n, m = int(rows[0][0]), int(rows[0][1])
        edges = [(int(a), int(b)) for a, b in rows[1:]]
        if len(edges) != m:
            raise GraphError(f"header declares {m} edges, found {len(edges)}")
        return cls(n, tuple(edges))


def path_graph(n):
    return Graph(n, tuple((i, i + 1) for i in range(n - 1)))


def complete_graph(n):
    return Graph(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))


def edge_budget(n, r):
    """Edge count ``round_half_up(r * n(n-1)/2)``."""
    total = n * (n - 1) // 2
    # exact half-up on the rational r*total; avoids float ties like 22.4999...
    return int(Fraction(r).limit_denominator(10**12) * total + Fraction(1, 2))


def random_connected(n, r, seed):
    """Connected random graph with exactly ``round_half_up(r n(n-1)/2)`` edges.

    A uniform spanning tree is drawn with the Aldous-Broder random walk on the
    complete graph, then non-edges (enumerated in lexicographic order) are added
    by a partial Fisher-Yates shuffle until the edge budget is met.
    """
    if n < 2:
        raise GraphError("random_connected needs n >= 2")
    if not 0.0 < r <= 1.0:
        raise GraphError(f"connectivity ratio must lie in (0, 1], got {r}")
    m = edge_budget(n, r)
    if m < n - 1:
        raise GraphError(f"ratio too small for connectivity: {m} edges < n-1 = {n - 1}")

    rng = XorShift64Star(seed)
    visited = [False] * n
    current = 0
    visited[0] = True
    remaining = n - 1
    edges = set()
    while remaining:
        nxt = rng.randbelow(n - 1)
        if nxt >= current:
            nxt += 1
        if not visited[nxt]:
            visited[nxt] = True
            remaining -= 1
            edges.add((min(current, nxt), max(current, nxt)))
        current = nxt

    pool = [(i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in edges]
    for t in range(m - (n - 1)):
        k = t + rng.randbelow(len(pool) - t)
        pool[t], pool[k] = pool[k], pool[t]
        edges.add(pool[t])
    return Graph(n, tuple(edges))


def laplacian(g):
    lap = np.zeros((g.n, g.n))
    for i, j in g.edges:
        lap[i, j] = lap[j, i] = -1.0
    lap[np.diag_indices(g.n)] = g.degrees()
    return lap


def is_connected(g):
    seen = [False] * g.n
    seen[0] = True
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in g.adjacency[i]:
            if not seen[j]:
                seen[j] = True
                queue.append(j)
    return all(seen)
