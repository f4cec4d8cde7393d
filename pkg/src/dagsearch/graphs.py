"""Directed graphs, DAG enumeration, CPDAG conversion and structural metrics.

Graphs are stored as per-source-node bitmask rows (bit ``j`` of ``rows[i]``
set means the edge ``i -> j`` is present), which keeps parent-set keys,
hashing and exhaustive enumeration cheap for the small graphs this package
sweeps over exhaustively.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator, Sequence

import numpy as np

ENUMERATION_LIMIT = 5


class CycleError(ValueError):
    """Raised when an operation requiring a DAG receives a cyclic graph."""


@dataclass(frozen=True)
class DirectedGraph:
    """Binary adjacency structure over ``d`` labeled nodes.

    Parameters
    ----------
    d:
        Node count, positive.
    rows:
        Tuple of ``d`` bitmasks; bit ``j`` of ``rows[i]`` encodes the edge
        ``i -> j``. Self-loops are rejected at construction.
    """

    d: int
    rows: tuple[int, ...]

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"node count must be positive, got {self.d}")
        if len(self.rows) != self.d:
            raise ValueError(f"expected {self.d} adjacency rows, got {len(self.rows)}")
        full = (1 << self.d) - 1
        for i, row in enumerate(self.rows):
            if row & ~full:
                raise ValueError(f"row {i} references nodes outside 0..{self.d - 1}")
            if row >> i & 1:
                raise ValueError(f"self-loop at node {i}")

    @classmethod
    def empty(cls, d: int) -> "DirectedGraph":
        return cls(d, (0,) * d)

    @classmethod
    def from_edges(cls, d: int, edges: Iterable[tuple[int, int]]) -> "DirectedGraph":
        rows = [0] * d
        for i, j in edges:
            if not (0 <= i < d and 0 <= j < d):
                raise ValueError(f"edge ({i}, {j}) out of range for d={d}")
            rows[i] |= 1 << j
        return cls(d, tuple(rows))

    @classmethod
    def from_matrix(cls, m) -> "DirectedGraph":
        m = np.asarray(m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"adjacency matrix must be square, got shape {m.shape}")
        d = m.shape[0]
        rows = tuple(int(sum(1 << j for j in range(d) if m[i, j])) for i in range(d))
        return cls(d, rows)

    def has_edge(self, i: int, j: int) -> bool:
        return bool(self.rows[i] >> j & 1)

    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.d) for j in range(self.d) if self.rows[i] >> j & 1]

    @property
    def n_edges(self) -> int:
        return sum(row.bit_count() for row in self.rows)

    def parent_mask(self, j: int) -> int:
        """Bitmask over ``i`` with an edge ``i -> j``."""
        mask = 0
        for i in range(self.d):
            if self.rows[i] >> j & 1:
                mask |= 1 << i
        return mask

    def parents_of(self, j: int) -> tuple[int, ...]:
        return tuple(i for i in range(self.d) if self.rows[i] >> j & 1)

    def to_matrix(self) -> np.ndarray:
        m = np.zeros((self.d, self.d), dtype=np.int8)
        for i, j in self.edges():
            m[i, j] = 1
        return m


@dataclass(frozen=True)
class ParentSet:
    """A child variable with its sorted parent set."""

    child: int
    parents: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(sorted(self.parents)))
        if self.child in self.parents:
            raise ValueError(f"child {self.child} cannot be its own parent")
        if len(set(self.parents)) != len(self.parents):
            raise ValueError(f"duplicate parents in {self.parents}")

    @property
    def mask(self) -> int:
        m = 0
        for p in self.parents:
            m |= 1 << p
        return m


@dataclass(frozen=True)
class Cpdag:
    """Partially directed graph with disjoint directed and undirected parts.

    ``directed`` follows the same row-bitmask convention as `DirectedGraph`;
    ``undirected`` must be symmetric, and no pair may appear in both.
    """

    d: int
    directed: tuple[int, ...]
    undirected: tuple[int, ...]

    def __post_init__(self):
        if len(self.directed) != self.d or len(self.undirected) != self.d:
            raise ValueError("row count does not match d")
        for i in range(self.d):
            if self.directed[i] >> i & 1 or self.undirected[i] >> i & 1:
                raise ValueError(f"self-loop at node {i}")
            for j in range(self.d):
                u_ij = self.undirected[i] >> j & 1
                u_ji = self.undirected[j] >> i & 1
                if u_ij != u_ji:
                    raise ValueError(f"undirected part not symmetric at ({i}, {j})")
                if u_ij and (self.directed[i] >> j & 1 or self.directed[j] >> i & 1):
                    raise ValueError(f"pair ({i}, {j}) is both directed and undirected")

    def directed_edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.d) for j in range(self.d) if self.directed[i] >> j & 1]

    def undirected_pairs(self) -> list[tuple[int, int]]:
        return [
            (i, j)
            for i in range(self.d)
            for j in range(i + 1, self.d)
            if self.undirected[i] >> j & 1
        ]


def topological_order(g: DirectedGraph) -> list[int] | None:
    """Kahn's algorithm; returns an order or None when ``g`` has a cycle."""
    indeg = [0] * g.d
    for i in range(g.d):
        row = g.rows[i]
        while row:
            j = (row & -row).bit_length() - 1
            indeg[j] += 1
            row &= row - 1
    stack = [i for i in range(g.d) if indeg[i] == 0]
    order: list[int] = []
    while stack:
        u = stack.pop()
        order.append(u)
        row = g.rows[u]
        while row:
            j = (row & -row).bit_length() - 1
            indeg[j] -= 1
            if indeg[j] == 0:
                stack.append(j)
            row &= row - 1
    return order if len(order) == g.d else None


def is_acyclic(g: DirectedGraph) -> bool:
    return topological_order(g) is not None


def _require_dag(g: DirectedGraph) -> None:
    if not is_acyclic(g):
        raise CycleError("graph contains a cycle")


@lru_cache(maxsize=8)
def _all_dags_cached(d: int) -> tuple[DirectedGraph, ...]:
    # Every DAG arises from at least one (ordering, order-respecting edge set)
    # pair; deduplicate by the packed adjacency integer.
    positions = [(a, b) for a in range(d) for b in range(a + 1, d)]
    seen: set[int] = set()
    out: list[DirectedGraph] = []
    for perm in itertools.permutations(range(d)):
        for bits in range(1 << len(positions)):
            key = 0
            for k, (a, b) in enumerate(positions):
                if bits >> k & 1:
                    key |= 1 << (perm[a] * d + perm[b])
            if key in seen:
                continue
            seen.add(key)
            rows = tuple((key >> (i * d)) & ((1 << d) - 1) for i in range(d))
            out.append(DirectedGraph(d, rows))
    return tuple(out)


def enumerate_all_dags(d: int, limit: int = ENUMERATION_LIMIT) -> tuple[DirectedGraph, ...]:
    """All labeled DAGs on ``d`` nodes, each exactly once.

    Guarded by ``limit`` (default 5): the count grows super-exponentially
    (29281 DAGs at d=5, ~3.8M at d=6).
    """
    if d < 1:
        raise ValueError(f"node count must be positive, got {d}")
    if d > limit:
        raise ValueError(f"exhaustive enumeration refused for d={d} > limit={limit}")
    return _all_dags_cached(d)


def _skeleton_and_vstructures(g: DirectedGraph) -> tuple[list[int], list[int]]:
    """Skeleton as symmetric bitmask rows plus compelled v-structure arrows."""
    d = g.d
    adj = [0] * d  # symmetric adjacency of the skeleton
    for i, j in g.edges():
        adj[i] |= 1 << j
        adj[j] |= 1 << i
    directed = [0] * d
    for b in range(d):
        parents = g.parents_of(b)
        for a, c in itertools.combinations(parents, 2):
            if not (adj[a] >> c & 1):  # unshielded collider a -> b <- c
                directed[a] |= 1 << b
                directed[c] |= 1 << b
    return adj, directed


def _meek_closure(adj: list[int], directed: list[int]) -> list[int]:
    """Orient undirected skeleton edges by Meek rules 1-4 until fixpoint."""
    d = len(adj)

    def und(i: int, j: int) -> bool:
        return bool(adj[i] >> j & 1) and not (directed[i] >> j & 1) and not (directed[j] >> i & 1)

    changed = True
    while changed:
        changed = False
        for a in range(d):
            for b in range(d):
                if a == b or not und(a, b):
                    continue
                orient = False
                # R1: c -> a, c not adjacent to b  =>  a -> b
                for c in range(d):
                    if directed[c] >> a & 1 and not (adj[c] >> b & 1):
                        orient = True
                        break
                # R2: a -> c -> b  =>  a -> b
                if not orient:
                    for c in range(d):
                        if directed[a] >> c & 1 and directed[c] >> b & 1:
                            orient = True
                            break
                # R3: a - c, a - e, c -> b, e -> b, c and e not adjacent  =>  a -> b
                if not orient:
                    cands = [c for c in range(d) if und(a, c) and directed[c] >> b & 1]
                    for c, e in itertools.combinations(cands, 2):
                        if not (adj[c] >> e & 1):
                            orient = True
                            break
                # R4: a - e, e -> c, c -> b  =>  a -> b (a adjacent to c or e)
                if not orient:
                    for e in range(d):
                        if not und(a, e):
                            continue
                        for c in range(d):
                            if directed[e] >> c & 1 and directed[c] >> b & 1:
                                orient = True
                                break
                        if orient:
                            break
                if orient:
                    directed[a] |= 1 << b
                    changed = True
    return directed


def dag_to_cpdag(g: DirectedGraph) -> Cpdag:
    """CPDAG of ``g``'s Markov equivalence class.

    Skeleton plus v-structures, then Meek rules to closure; every remaining
    skeleton edge is reversible and becomes undirected.
    """
    _require_dag(g)
    adj, directed = _skeleton_and_vstructures(g)
    directed = _meek_closure(adj, directed)
    undirected = [0] * g.d
    for i in range(g.d):
        for j in range(g.d):
            if adj[i] >> j & 1 and not (directed[i] >> j & 1) and not (directed[j] >> i & 1):
                undirected[i] |= 1 << j
    return Cpdag(g.d, tuple(directed), tuple(undirected))


def _pair_status(c: Cpdag, i: int, j: int) -> int:
    """0 absent, 1 i->j, 2 j->i, 3 undirected."""
    if c.directed[i] >> j & 1:
        return 1
    if c.directed[j] >> i & 1:
        return 2
    if c.undirected[i] >> j & 1:
        return 3
    return 0


def shd_cpdag(a: Cpdag, b: Cpdag) -> int:
    """Structural Hamming distance between CPDAGs.

    One unit per node pair whose edge status (absent / ``i -> j`` /
    ``j -> i`` / undirected) differs; no finer weighting.
    """
    if a.d != b.d:
        raise ValueError(f"dimension mismatch: {a.d} vs {b.d}")
    return sum(
        1
        for i in range(a.d)
        for j in range(i + 1, a.d)
        if _pair_status(a, i, j) != _pair_status(b, i, j)
    )


def mec_of(g: DirectedGraph, all_dags: Sequence[DirectedGraph]) -> list[DirectedGraph]:
    """Members of ``g``'s Markov equivalence class among ``all_dags``."""
    target = dag_to_cpdag(g)
    return [h for h in all_dags if dag_to_cpdag(h) == target]


# -- text serialization -------------------------------------------------------
#
# Graphs: header "d=<n>", then one "i j" pair per line.
# CPDAGs: directed edges as "i > j", undirected pairs as "i - j".


def graph_to_text(g: DirectedGraph) -> str:
    lines = [f"d={g.d}"]
    lines += [f"{i} {j}" for i, j in g.edges()]
    return "\n".join(lines) + "\n"


def _parse_header(line: str) -> int:
    if not line.startswith("d="):
        raise ValueError(f"expected 'd=<n>' header, got {line!r}")
    return int(line[2:])


def graph_from_text(text: str) -> DirectedGraph:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty graph text")
    d = _parse_header(lines[0])
    edges = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise ValueError(f"bad edge line: {ln!r}")
        edges.append((int(parts[0]), int(parts[1])))
    return DirectedGraph.from_edges(d, edges)


def cpdag_to_text(c: Cpdag) -> str:
    lines = [f"d={c.d}"]
    lines += [f"{i} > {j}" for i, j in c.directed_edges()]
    lines += [f"{i} - {j}" for i, j in c.undirected_pairs()]
    return "\n".join(lines) + "\n"


def cpdag_from_text(text: str) -> Cpdag:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty CPDAG text")
    d = _parse_header(lines[0])
    directed = [0] * d
    undirected = [0] * d
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 3 or parts[1] not in (">", "-"):
            raise ValueError(f"bad CPDAG line: {ln!r}")
        i, j = int(parts[0]), int(parts[2])
        if parts[1] == ">":
            directed[i] |= 1 << j
        else:
            undirected[i] |= 1 << j
            undirected[j] |= 1 << i
    return Cpdag(d, tuple(directed), tuple(undirected))
