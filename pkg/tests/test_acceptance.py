"""Acceptance criteria 1-10. Each test prints one PASS/FAIL line."""

from __future__ import annotations

import math
import time
from pathlib import Path

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from cirquant import checks as CK
from cirquant import constants as K
from cirquant import graph as G
from cirquant import ham as H
from cirquant import quantize as Qz
from cirquant import reduce as R
from cirquant.energies import symbol
from cirquant.netlist import load, parse

from circuitgen import random_capacitive_circuit, random_circuit

CIRCUITS = Path(__file__).resolve().parent.parent / "circuits"


def report(num: int, title: str, ok: bool, detail: str = "") -> None:
    print(f"\nACCEPTANCE {num:>2} {'PASS' if ok else 'FAIL'}: {title}" + (f" ({detail})" if detail else ""))
    assert ok, f"criterion {num} failed: {detail}"


def reduced(name: str, **kw):
    n = load(CIRCUITS / name)
    rs = R.reduce_circuit(n, **kw)
    return n, rs, H.build_hamiltonian(n, rs)


def terms_of(h, cls):
    return [t for t in h.terms if isinstance(t, cls)]


def rel(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300))


# ---------------------------------------------------------------- 1, 2

def test_01_series_inductors():
    t0 = time.perf_counter()
    _, _, h = reduced("series_inductors.cq")
    elapsed = time.perf_counter() - t0
    L1, L2 = symbol("L1"), symbol("L2")
    quad = terms_of(h, H.Quadratic)
    ok = (len(quad) == 1 and quad[0].a == quad[0].b == "Phi_q"
          and sp.simplify(quad[0].coeff - 1 / (2 * (L1 + L2))) == 0 and elapsed < 1.0)
    report(1, "series inductors combine as 1/(2(L1+L2))", ok, f"coeff {quad[0].coeff if quad else None}, {elapsed:.2f}s")


def test_02_series_capacitors():
    t0 = time.perf_counter()
    _, rs, h = reduced("series_capacitors.cq")
    elapsed = time.perf_counter() - t0
    C1, C2 = symbol("C1"), symbol("C2")
    quad = [t for t in terms_of(h, H.Quadratic) if t.a.startswith("Q_")]
    ok = (len(quad) == 1 and len(h.modes) == 1 and len(rs.noether) == 1
          and sp.simplify(quad[0].coeff - sp.Rational(1, 2) * (1 / C1 + 1 / C2)) == 0 and elapsed < 1.0)
    report(2, "series capacitors after Noether reduction give (1/C1+1/C2)/2", ok,
           f"coeff {quad[0].coeff if quad else None}, {elapsed:.2f}s")


# ---------------------------------------------------------------- 3

def _transmon_values(n):
    vals = {el.id: el.params for el in n.elements}
    C = sp.Rational(80, 10 ** 15)
    Cc = sp.Rational(5, 10 ** 15)
    return vals, C, Cc


def test_03_transmon_gate_structure_and_periodicity():
    n, rs, h = reduced("transmon_gate.cq")
    _, C, Cc = _transmon_values(n)
    Vg = symbol("Vg")
    EJ = sp.Rational(15 * 10 ** 9) * K.h_s
    expected = (sp.Symbol("Q_c", real=True) - Cc * Vg) ** 2 / (2 * (C + Cc)) \
        - EJ * sp.cos(2 * sp.pi * sp.Symbol("Phi_c", real=True) / K.phi0_s)
    diff = sp.expand(h.sympy() - expected)
    structural = diff == 0 and len(terms_of(h, H.Cosine)) == 1 and h.compact == (True,)

    period = float(K.two_e_s / Cc)
    worst = 0.0
    rng = np.random.default_rng(3)
    for vg in rng.uniform(-2 * period, 2 * period, 5):
        a = Qz.solve(h, {"Vg": vg}, levels=5).eigenvalues
        b = Qz.solve(h, {"Vg": vg + period}, levels=5).eigenvalues
        worst = max(worst, rel(a, b))
    report(3, "transmon with gate: Hamiltonian term-for-term, spectrum periodic in Vg with period 2e/Cc",
           structural and worst <= 1e-8, f"structural={structural}, periodicity rel diff {worst:.1e}")


# ---------------------------------------------------------------- 4

_fluxonium = {}


def _fluxonium_levels(phi: float) -> np.ndarray:
    if "h" not in _fluxonium:
        _fluxonium["h"] = reduced("fluxonium.cq")[2]
    return Qz.solve(_fluxonium["h"], {"phi_ext": phi * K.phi0}, levels=4, sizes={"c": 80}).eigenvalues


def test_04_fluxonium():
    _, _, h = reduced("fluxonium.cq")
    C = sp.Rational(5, 10 ** 15)
    L = sp.Rational(300, 10 ** 9)
    EJ = sp.Rational(4 * 10 ** 9) * K.h_s
    Q, Phi, phi = sp.Symbol("Q_c", real=True), sp.Symbol("Phi_c", real=True), symbol("phi_ext")
    expected = Q ** 2 / (2 * C) - EJ * sp.cos(2 * sp.pi * Phi / K.phi0_s) + (Phi - phi) ** 2 / (2 * L)
    structural = sp.expand(h.sympy() - expected) == 0

    worst = [0.0, 0.0]

    @settings(max_examples=8, deadline=None, derandomize=True)
    @given(st.floats(min_value=0.0, max_value=1.0))
    def periodic_and_symmetric(f):
        base = _fluxonium_levels(f)
        d1 = rel(base, _fluxonium_levels(f + 1.0))
        d2 = rel(base, _fluxonium_levels(1.0 - f))
        worst[0], worst[1] = max(worst[0], d1), max(worst[1], d2)
        assert d1 <= 1e-8 and d2 <= 1e-8

    try:
        periodic_and_symmetric()
        prop = True
    except AssertionError:
        prop = False
    report(4, "fluxonium Hamiltonian matches, spectrum periodic in phi_ext and symmetric about phi0/2",
           structural and prop, f"structural={structural}, periodic {worst[0]:.1e}, mirror {worst[1]:.1e}")


# ---------------------------------------------------------------- 5

def _dualmon(ej, eq):
    n = parse(f"JJ j 1 2 EJ={ej}GHz\nQPS q 1 2 EQ={eq}GHz")
    rs = R.reduce_circuit(n)
    return H.build_hamiltonian(n, rs)


def test_05_dualmon():
    t0 = time.perf_counter()
    ej, eq = 3, 2
    h = _dualmon(ej, eq)
    cos_terms = terms_of(h, H.Cosine)
    structural = (len(h.terms) == 2 and len(cos_terms) == 2
                  and {t.charge_type for t in cos_terms} == {True, False} and h.compact == (False,))
    flux = Qz.solve(h, levels=5)
    swapped = Qz.solve(_dualmon(eq, ej), levels=5, overrides={"q": "chargegrid"})
    swap_diff = rel(flux.eigenvalues, swapped.eigenvalues)
    # grid of L sites per residue class: E(L) = E_inf + a/(L+1)^2 + ...
    Ls, Es = [], []
    for size in (256, 512, 1024):
        r = Qz.solve(h, levels=1, sizes={"q": size})
        Ls.append(r.bases[0]["size"] // r.bases[0]["m"])
        Es.append(r.eigenvalues[0])
    x = 1.0 / (np.array(Ls) + 1.0) ** 2
    e_inf = np.polyfit(x, Es, 2)[-1]
    target = -(ej + eq)
    gs_err = abs(e_inf - target) / abs(target)
    elapsed = time.perf_counter() - t0
    ok = structural and swap_diff <= 1e-6 and gs_err <= 1e-3 and elapsed < 30
    report(5, "dualmon: two cosines, E_J/E_Q swap with basis exchange, ground energy -> -(E_J+E_Q)", ok,
           f"swap {swap_diff:.1e}, extrapolated ground {e_inf:.6f} (rel {gs_err:.1e}), {elapsed:.1f}s")


# ---------------------------------------------------------------- 6

def test_06_flux_transmon_gauges():
    _, _, h1 = reduced("flux_transmon_alpha1.cq")
    _, _, h2 = reduced("flux_transmon_half.cq")
    _, _, h3 = reduced("flux_transmon_half.cq", gauge="irrotational")
    worst = 0.0
    for f in (0.0, 0.3, 0.5):
        s = {"phi_ext": f * K.phi0}
        a = Qz.solve(h1, s, levels=5).eigenvalues
        b = Qz.solve(h2, s, levels=5).eigenvalues
        c = Qz.solve(h3, s, levels=5).eigenvalues
        worst = max(worst, rel(a, b), rel(a, c))
    report(6, "flux-tunable transmon: (1,0) and (1/2,1/2) battery placements agree", worst <= 1e-9,
           f"max rel diff {worst:.1e}")


# ---------------------------------------------------------------- 7

# Deep-well, single-valued regime. Energies as n^2 / theta^2 coefficients in GHz.
SING_U, SING_EQ, SING_V = 100.0, 3.0, 1e-9
SING_VB = (1.6e-8, 1.6e-7, 1.6e-6)       # regulator inductive energy: L_S over two decades


def _singular_netlists(vb):
    C = K.two_e ** 2 / (2 * K.GHz * SING_U)
    L = (K.phi0 / (2 * math.pi)) ** 2 / (2 * K.GHz * SING_V)
    a = f"C c 1 2 C={C!r}\nQPS q 2 1 EQ={SING_EQ}GHz\nL l 1 2 L={L!r}"
    b = f"C c 1 2 C={C!r}\nQPS q 3 1 EQ={SING_EQ}GHz\nL l 1 2 L={L!r}\nL ls 2 3 L={L * SING_V / vb!r}"
    return parse(a), parse(b)


def test_07_singular_circuit_regularization():
    a, _ = _singular_netlists(SING_VB[0])
    rs = R.reduce_circuit(a)
    ha = H.build_hamiltonian(a, rs)
    ea = Qz.solve(ha, levels=5).eigenvalues
    ta = ea[1:] - ea[0]
    gaps = []
    for vb in SING_VB:
        _, b = _singular_netlists(vb)
        rs2 = R.canonical_transform(R.reduce_circuit(b), [[1, 0], [-1, 1]], ["A", "B"])
        hb = H.build_hamiltonian(b, rs2)
        eb = Qz.solve(hb, levels=5, overrides={"B": "chargegrid"}, sizes={"A": 20}).eigenvalues
        tb = eb[1:] - eb[0]
        gaps.append(float(np.max(np.abs(tb - ta) / np.abs(ta))))
    monotone = all(g2 < g1 for g1, g2 in zip(gaps, gaps[1:]))
    ok = monotone and gaps[-1] < 1e-3
    report(7, "regularized singular circuit converges to the constraint-solved spectrum as L_S decreases", ok,
           "transition-energy gaps " + ", ".join(f"{g:.1e}" for g in gaps))


# ---------------------------------------------------------------- 8

def _kernel_ok(g: G.CircuitGraph, ns: G.NullStructure) -> bool:
    cap = g.cap_branches
    Om = sp.Matrix(g.Omega.tolist()) if cap else sp.zeros(0, len(g.nodes))
    left = Om.T.nullspace() if cap else []
    right = Om.nullspace() if cap else [sp.eye(len(g.nodes))[:, i] for i in range(len(g.nodes))]
    ok = True
    if ns.cap_loops:
        Lm = sp.Matrix([[dict(lp.members).get(b.id, 0) for b in cap] for lp in ns.cap_loops])
        ok &= (Lm * Om).is_zero_matrix and Lm.rank() == len(left) == len(ns.cap_loops)
    else:
        ok &= len(left) == 0
    Rm = sp.Matrix([[int(v in isl) for v in g.nodes] for isl in ns.ind_islands]).T
    ok &= (cap == [] or (Om * Rm).is_zero_matrix) and Rm.rank() == len(right) == len(ns.ind_islands)
    return bool(ok)


def test_08_appendix_property_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    bad_kernel = bad_genus = bad_pairs = 0
    for _ in range(200):
        n = random_circuit(rng, max_nodes=8, max_edges=14)
        g = G.build_graph(n)
        tree = R.spanning_tree(g)
        ns = G.null_structure(g, tree)
        bad_kernel += not _kernel_ok(g, ns)
        genus = len(g.capacitive) - len(g.nodes) + 1
        bad_genus += genus - 1 != len(ns.cap_loops) - len(ns.ind_islands)
        rs = R.canonical_coordinates(g, ns, tree, n)
        bad_pairs += len(rs.pairs) != len(g.capacitive) - len(ns.cap_loops)
    elapsed = time.perf_counter() - t0
    ok = bad_kernel == bad_genus == bad_pairs == 0 and elapsed < 10
    report(8, "null vectors, genus identity and pair count on 200 random circuits", ok,
           f"failures kernel={bad_kernel} genus={bad_genus} pairs={bad_pairs}, {elapsed:.1f}s")


# ---------------------------------------------------------------- 9

def _nontrivial_sigma(n, tree) -> bool:
    """True unless Sigma merely permutes (and re-signs) the coordinates."""
    S = R.tree_transform(R.reduce_circuit(n, noether=False), R.reduce_circuit(n, tree=tree, noether=False))
    return any(sum(1 for x in S.row(i) if x != 0) > 1 for i in range(S.rows))


def test_09_spanning_tree_invariance():
    rng = np.random.default_rng(99)
    worst, count, attempts = 0.0, 0, 0
    while count < 20 and attempts < 2000:
        attempts += 1
        n = random_capacitive_circuit(rng, nv=int(rng.integers(3, 5)), extra_caps=int(rng.integers(1, 3)),
                                      inductive=int(rng.integers(1, 4)), inductive_kinds=("JJ",))
        rs = R.reduce_circuit(n)
        if not rs.pairs or len(rs.pairs) > 2 or not all(p.compact for p in rs.pairs):
            continue
        trees = [t for t in CK.alternative_trees(R.reduce_circuit(n, noether=False), rng, limit=6)
                 if _nontrivial_sigma(n, t)]
        if not trees:
            continue
        h = H.build_hamiltonian(n, rs)
        rs2 = R.reduce_circuit(n, tree=trees[0])
        h2 = H.build_hamiltonian(n, rs2)
        a = Qz.solve(h, levels=4, sizes={m: 16 for m in h.modes}).eigenvalues
        b = Qz.solve(h2, levels=4, sizes={m: 16 for m in h2.modes}).eigenvalues
        worst = max(worst, rel(a, b))
        count += 1
    report(9, "spectra agree across spanning trees on 20 random circuits", count == 20 and worst <= 1e-9,
           f"{count} circuits, max rel diff {worst:.1e}")


# ---------------------------------------------------------------- 10

def test_10_legacy_capacitance_matrix():
    rng = np.random.default_rng(7)
    worst = 0.0
    results = []
    for i in range(20):
        n = random_capacitive_circuit(rng, nv=int(rng.integers(2, 6)), extra_caps=int(rng.integers(0, 3)),
                                      inductive=int(rng.integers(1, 5)))
        r = CK.check_legacy_eom(n, seed=i, points=3, tol=1e-9)
        results.append(r)
        worst = max(worst, float(r.detail.split()[-1]))
    ok = all(r.passed and r.applicable for r in results)
    report(10, "equations of motion match the capacitance-matrix Lagrangian on 20 random circuits", ok,
           f"max rel diff {worst:.1e}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
