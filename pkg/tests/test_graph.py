from pathlib import Path

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from cirquant import graph as G
from cirquant.netlist import load, parse

from circuitgen import random_capacitive_circuit, random_circuit

CIRCUITS = Path(__file__).resolve().parent.parent / "circuits"


def graph_of(name):
    return G.build_graph(load(CIRCUITS / name))


def test_dualmon_omega():
    g = graph_of("dualmon.cq")
    assert g.Omega.tolist() == [[-1, 1]]


def test_transmon_gate_omega():
    g = graph_of("transmon_gate.cq")
    assert g.Omega.tolist() == [[-1, 1, 0], [0, -1, 1], [1, 0, -1]]


def test_no_capacitive_branches():
    g = G.build_graph(parse("L l1 1 2 L=1nH\nL l2 2 3 L=1nH"))
    assert g.Omega.shape == (0, 3)
    ns = G.null_structure(g)
    assert ns.cap_loops == ()
    assert len(ns.ind_islands) == 3


def test_incidence_sign_convention():
    g = G.build_graph(parse("C c 7 3 C=1fF\nL l 3 7 L=1nH"))
    # A_ev = +1 at the head, -1 at the tail
    assert g.nodes == ("7", "3")
    assert g.A.tolist() == [[-1, 1], [1, -1]]


def test_fig4_null_structure():
    g = graph_of("fig4_null_vectors.cq")
    ns = G.null_structure(g)
    assert sorted(map(sorted, ns.ind_islands)) == [["1", "2", "3"], ["4", "5"], ["6"]]
    assert len(ns.cap_loops) == 1
    assert {e for e, _ in ns.cap_loops[0].members} == {"c3", "c4"}
    assert G.genus_check(g, ns)


def test_transmon_gate_null_structure():
    g = graph_of("transmon_gate.cq")
    ns = G.null_structure(g)
    (loop,) = ns.cap_loops
    assert sorted(loop.vector([b.id for b in g.cap_branches])) in ([1, 1, 1], [-1, -1, -1])
    assert [sorted(i) for i in ns.ind_islands] == [["1", "2", "3"]]


def test_capacitive_tree_has_no_loops():
    g = G.build_graph(parse("C a 1 2 C=1fF\nC b 2 3 C=1fF\nC c 2 4 C=1fF"))
    ns = G.null_structure(g)
    assert ns.cap_loops == () and len(ns.ind_islands) == 1


def test_parallel_edges_form_a_loop():
    g = G.build_graph(parse("C a 1 2 C=1fF\nC b 1 2 C=2fF"))
    (loop,) = G.null_structure(g).cap_loops
    assert sorted(loop.vector(["a", "b"])) == [-1, 1]


def test_exact_rank():
    assert G.exact_rank(np.array([[1, 2], [2, 4]])) == 1
    assert G.exact_rank(np.array([[1, 0, 1], [0, 1, 1], [1, 1, 2]])) == 2
    assert G.exact_rank(np.zeros((0, 4), dtype=int)) == 0


def _sympy_kernels(g):
    Om = sp.Matrix(g.Omega.tolist()) if len(g.capacitive) else sp.zeros(0, len(g.nodes))
    if Om.rows == 0:
        return 0, len(g.nodes), Om
    return len(Om.T.nullspace()), len(Om.nullspace()), Om


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_null_vectors_match_rational_kernel(seed):
    g = G.build_graph(random_circuit(np.random.default_rng(seed)))
    ns = G.null_structure(g)
    n_left, n_right, Om = _sympy_kernels(g)
    assert len(ns.left_null) == n_left
    assert len(ns.right_null) == n_right
    for l in ns.left_null:
        assert set(l) <= {-1, 0, 1}
        assert not any(np.array(l) @ g.Omega)
    for r in ns.right_null:
        assert set(r) <= {0, 1}
        if Om.rows:
            assert not any(g.Omega @ np.array(r))
    if ns.left_null:
        assert sp.Matrix(ns.left_null).rank() == n_left
    assert sp.Matrix(ns.right_null).rank() == n_right
    # rank(Omega) = |V| - |islands| = |C| - |loops|
    assert Om.rank() == len(g.nodes) - len(ns.ind_islands) == len(g.capacitive) - len(ns.cap_loops)
    assert G.genus_check(g, ns)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_capacitive_graph_rank_oracle(seed):
    rng = np.random.default_rng(seed)
    n = random_capacitive_circuit(rng, nv=int(rng.integers(2, 8)), extra_caps=int(rng.integers(0, 6)), inductive=1)
    g = G.build_graph(n)
    assert G.exact_rank(g.Omega) == sp.Matrix(g.Omega.tolist()).rank() == len(g.nodes) - 1


def test_json_and_dot():
    g = graph_of("transmon_gate.cq")
    ns = G.null_structure(g)
    d = G.to_json(g, ns)
    assert d["nodes"] == ["1", "2", "3"]
    dot = G.to_dot(g, ns)
    assert dot.startswith("digraph") and '"1" -> "2"' in dot
