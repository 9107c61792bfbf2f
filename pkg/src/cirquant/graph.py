"""Incidence structure of a circuit and the null vectors of its capacitive part."""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .netlist import Element, Kind, Netlist


def natural_key(s: str):
    """Sort key that orders ``e2`` before ``e10``."""
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", s)]


@dataclass(frozen=True)
class Branch:
    id: str
    kind: Kind
    tail: str
    head: str
    element: Element

    @property
    def capacitive(self) -> bool:
        return self.kind.capacitive


@dataclass(frozen=True)
class CircuitGraph:
    nodes: tuple[str, ...]
    branches: tuple[Branch, ...]
    capacitive: tuple[int, ...]
    inductive: tuple[int, ...]
    A: np.ndarray          # (K, k) integer incidence matrix
    biases: tuple[Element, ...] = ()

    @property
    def Omega(self) -> np.ndarray:
        return self.A[list(self.capacitive), :] if self.capacitive else np.zeros((0, len(self.nodes)), dtype=int)

    @property
    def cap_branches(self) -> list[Branch]:
        return [self.branches[i] for i in self.capacitive]

    @property
    def ind_branches(self) -> list[Branch]:
        return [self.branches[i] for i in self.inductive]

    def node_index(self, v: str) -> int:
        return self.nodes.index(v)

    def branch(self, bid: str) -> Branch:
        for b in self.branches:
            if b.id == bid:
                return b
        raise KeyError(bid)


def build_graph(n: Netlist) -> CircuitGraph:
    nodes = tuple(n.nodes)
    idx = {v: i for i, v in enumerate(nodes)}
    branches = []
    biases = []
    for el in n.elements:
        if el.kind is Kind.INDUCTIVE_BIAS:
            biases.append(el)
            continue
        branches.append(Branch(el.id, el.kind, el.tail, el.head, el))
    A = np.zeros((len(branches), len(nodes)), dtype=int)
    for r, b in enumerate(branches):
        A[r, idx[b.head]] += 1
        A[r, idx[b.tail]] -= 1
    cap = tuple(i for i, b in enumerate(branches) if b.capacitive)
    ind = tuple(i for i, b in enumerate(branches) if not b.capacitive)
    return CircuitGraph(nodes, tuple(branches), cap, ind, A, tuple(biases))


class _DSU:
    def __init__(self, items: Iterable[str]):
        self.parent = {v: v for v in items}

    def find(self, v):
        p = self.parent
        while p[v] != v:
            p[v] = p[p[v]]
            v = p[v]
        return v

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def components(nodes: Sequence[str], edges: Iterable[tuple[str, str]]) -> list[tuple[str, ...]]:
    """Connected components, each in node order, listed by first node."""
    dsu = _DSU(nodes)
    for a, b in edges:
        dsu.union(a, b)
    groups: dict[str, list[str]] = {}
    for v in nodes:
        groups.setdefault(dsu.find(v), []).append(v)
    return [tuple(g) for g in groups.values()]


def greedy_forest(nodes: Sequence[str], edges: Sequence[Branch]) -> list[Branch]:
    """Kruskal-style forest taking edges in the given order."""
    dsu = _DSU(nodes)
    return [b for b in edges if dsu.union(b.tail, b.head)]


def tree_path(tree: Sequence[Branch], start: str, end: str) -> list[tuple[Branch, int]]:
    """Signed tree path from ``start`` to ``end``: +1 when an edge is walked tail to head."""
    adj: dict[str, list[tuple[str, Branch, int]]] = {}
    for b in tree:
        adj.setdefault(b.tail, []).append((b.head, b, 1))
        adj.setdefault(b.head, []).append((b.tail, b, -1))
    prev: dict[str, tuple[str, Branch, int] | None] = {start: None}
    stack = [start]
    while stack:
        v = stack.pop()
        if v == end:
            break
        for w, b, s in adj.get(v, []):
            if w not in prev:
                prev[w] = (v, b, s)
                stack.append(w)
    if end not in prev:
        raise ValueError(f"no tree path from {start} to {end}")
    path = []
    v = end
    while prev[v] is not None:
        u, b, s = prev[v]
        path.append((b, s))
        v = u
    return path[::-1]


@dataclass(frozen=True)
class Loop:
    edge: str                                 # the non-tree edge this loop belongs to
    members: tuple[tuple[str, int], ...]      # (branch id, sign) in traversal order

    def vector(self, cap_ids: Sequence[str]) -> list[int]:
        d = dict(self.members)
        return [d.get(e, 0) for e in cap_ids]


@dataclass(frozen=True)
class NullStructure:
    cap_loops: tuple[Loop, ...]
    ind_islands: tuple[tuple[str, ...], ...]
    cap_islands: tuple[tuple[str, ...], ...]
    left_null: tuple[tuple[int, ...], ...]
    right_null: tuple[tuple[int, ...], ...]
    forest: tuple[str, ...]


def default_tree_order(g: CircuitGraph) -> list[Branch]:
    """Flux batteries first, then ordinary capacitive edges, sources last; ids in natural order."""
    rank = {Kind.FLUX_BATTERY: 0, Kind.VOLTAGE_SOURCE: 2}
    return sorted(g.cap_branches, key=lambda b: (rank.get(b.kind, 1), natural_key(b.id)))


def fundamental_loops(g: CircuitGraph, tree: Sequence[Branch]) -> list[Loop]:
    in_tree = {b.id for b in tree}
    loops = []
    for b in g.cap_branches:
        if b.id in in_tree:
            continue
        # walking the non-tree edge tail->head, then back along the tree head->tail
        back = tree_path(tree, b.head, b.tail)
        loops.append(Loop(b.id, ((b.id, 1),) + tuple((t.id, s) for t, s in back)))
    return loops


def null_structure(g: CircuitGraph, tree: Sequence[Branch] | None = None) -> NullStructure:
    if tree is None:
        tree = greedy_forest(g.nodes, default_tree_order(g))
    cap = g.cap_branches
    cap_ids = [b.id for b in cap]
    loops = fundamental_loops(g, tree)
    ind_islands = components(g.nodes, [(b.tail, b.head) for b in cap])
    cap_islands = components(g.nodes, [(b.tail, b.head) for b in g.ind_branches])
    left = tuple(tuple(lp.vector(cap_ids)) for lp in loops)
    right = tuple(tuple(int(v in isl) for v in g.nodes) for isl in ind_islands)
    ns = NullStructure(tuple(loops), tuple(ind_islands), tuple(cap_islands), left, right,
                       tuple(b.id for b in tree))
    _check_null(g, ns)
    return ns


def exact_rank(M) -> int:
    """Rank by fraction-exact Gaussian elimination."""
    rows = [[Fraction(int(x)) for x in r] for r in np.asarray(M, dtype=object).tolist()]
    if not rows:
        return 0
    ncol = len(rows[0])
    rank = 0
    for c in range(ncol):
        piv = next((r for r in range(rank, len(rows)) if rows[r][c] != 0), None)
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        p = rows[rank][c]
        for r in range(len(rows)):
            if r != rank and rows[r][c] != 0:
                f = rows[r][c] / p
                rows[r] = [x - f * y for x, y in zip(rows[r], rows[rank])]
        rank += 1
        if rank == len(rows):
            break
    return rank


def _check_null(g: CircuitGraph, ns: NullStructure) -> None:
    Om = g.Omega.astype(object)
    for l in ns.left_null:
        assert not any(np.dot(np.array(l, dtype=object), Om)), "loop vector does not annihilate Omega"
    for r in ns.right_null:
        assert not any(Om.dot(np.array(r, dtype=object))), "island vector does not annihilate Omega"
    rank = exact_rank(Om)
    assert rank == len(g.nodes) - len(ns.ind_islands) == len(g.capacitive) - len(ns.cap_loops), "rank identity"


def genus_check(g: CircuitGraph, ns: NullStructure) -> bool:
    """|C| - |V| + 1 - 1 == |loops| - |inductive islands|."""
    return (len(g.capacitive) - len(g.nodes) + 1) - 1 == len(ns.cap_loops) - len(ns.ind_islands)


def to_json(g: CircuitGraph, ns: NullStructure) -> dict:
    return {
        "nodes": list(g.nodes),
        "capacitive": [g.branches[i].id for i in g.capacitive],
        "inductive": [g.branches[i].id for i in g.inductive],
        "Omega": g.Omega.tolist(),
        "tree": list(ns.forest),
        "cap_loops": [[[e, s] for e, s in lp.members] for lp in ns.cap_loops],
        "ind_islands": [list(x) for x in ns.ind_islands],
        "cap_islands": [list(x) for x in ns.cap_islands],
        "left_null": [list(x) for x in ns.left_null],
        "right_null": [list(x) for x in ns.right_null],
        "genus_ok": genus_check(g, ns),
    }


def to_dot(g: CircuitGraph, ns: NullStructure | None = None) -> str:
    """Graphviz rendering: capacitive edges red, inductive blue, tree edges bold."""
    tree = set(ns.forest) if ns else set()
    lines = ["digraph circuit {", "  rankdir=LR;"]
    for v in g.nodes:
        lines.append(f'  "{v}";')
    for b in g.branches:
        color = "red" if b.capacitive else "blue"
        style = ', penwidth=3' if b.id in tree else ""
        lines.append(f'  "{b.tail}" -> "{b.head}" [label="{b.id} ({b.kind.value})", color={color}{style}];')
    for el in g.biases:
        lines.append(f'  "{el.tail}" -> "{el.head}" [label="{el.id} (IB)", style=dashed, color=gray];')
    lines.append("}")
    return "\n".join(lines) + "\n"
