import json
import math
from pathlib import Path

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from cirquant import checks as CK
from cirquant import constants as K
from cirquant import ham as H
from cirquant import reduce as R
from cirquant.energies import symbol
from cirquant.netlist import load, parse

from circuitgen import random_capacitive_circuit

CIRCUITS = Path(__file__).resolve().parent.parent / "circuits"
S = lambda n: sp.Symbol(n, real=True)  # noqa: E731


def hamiltonian(n, **kw):
    if isinstance(n, str):
        n = load(CIRCUITS / n)
    return H.build_hamiltonian(n, R.reduce_circuit(n, **kw))


def test_series_inductors_qps():
    h = hamiltonian("series_inductors.cq")
    EQ = 2 * 10**9 * K.h_s
    expected = -EQ * sp.cos(2 * sp.pi * S("Q_q") / K.two_e_s) + S("Phi_q") ** 2 / (2 * (symbol("L1") + symbol("L2")))
    assert sp.simplify(h.sympy() - expected) == 0


def test_transmon_gate_symbolic():
    n = parse("PARAM C\nPARAM Cg\nPARAM Vg\nC c 1 2 C=C\nJJ j 1 2 EJ=15GHz\nC cc 2 3 C=Cg\nV vg 3 1 V=Vg")
    h = hamiltonian(n)
    C, Cg, Vg = symbol("C"), symbol("Cg"), symbol("Vg")
    EJ = 15 * 10**9 * K.h_s
    expected = (S("Q_c") - Cg * Vg) ** 2 / (2 * (C + Cg)) - EJ * sp.cos(2 * sp.pi * S("Phi_c") / K.phi0_s)
    assert sp.simplify(h.sympy() - expected) == 0
    # the completion constant is kept and the remaining constant is recorded
    assert sp.simplify(h.offset - Cg**2 * Vg**2 / (2 * (C + Cg))) == 0
    assert h.dropped_constant != 0


def test_fluxonium_terms():
    h = hamiltonian("fluxonium.cq")
    C, L = sp.Rational(5, 10**15), sp.Rational(300, 10**9)
    EJ = 4 * 10**9 * K.h_s
    expected = S("Q_c") ** 2 / (2 * C) - EJ * sp.cos(2 * sp.pi * S("Phi_c") / K.phi0_s) \
        + (S("Phi_c") - symbol("phi_ext")) ** 2 / (2 * L)
    assert sp.expand(h.sympy() - expected) == 0


def test_dualmon_at_origin():
    h = hamiltonian("dualmon.cq")
    e = H.eval_classical(h, {"Q_q": 0.0, "Phi_q": 0.0})
    assert e == pytest.approx(-(3 + 2) * 1e9 * K.h, rel=1e-14)


@pytest.mark.parametrize("f", [0.0, 0.17, 0.5, 0.9])
def test_fluxonium_at_external_flux(f):
    h = hamiltonian("fluxonium.cq")
    phi = f * K.phi0
    e = H.eval_classical(h, {"Q_c": 0.0, "Phi_c": phi}, {"phi_ext": phi})
    assert e == pytest.approx(-4e9 * K.h * math.cos(2 * math.pi * f), rel=1e-12, abs=1e-12 * 4e9 * K.h)


def test_singular_energy_against_brute_minimisation():
    n = load(CIRCUITS / "singular_qps.cq")
    h = hamiltonian(n)
    C = 2e-15
    EQ = 1e9 * K.h
    for Q in (0.0, 0.3 * K.two_e, -0.45 * K.two_e, 1.2 * K.two_e):
        # the hidden loop charge minimises the loop energy
        f = lambda x: (Q + x) ** 2 / (2 * C) - EQ * math.cos(2 * math.pi * x / K.two_e)  # noqa: E731
        xs = np.linspace(-3 * K.two_e, 3 * K.two_e, 6001)
        x0 = xs[np.argmin([f(x) for x in xs])]
        best = minimize_scalar(f, bracket=(x0 - K.two_e / 500, x0, x0 + K.two_e / 500), tol=1e-14).fun
        e = H.eval_classical(h, {"Q_c": Q, "Phi_c": 0.0})
        assert e == pytest.approx(best, rel=1e-9)   # Phi = 0, so the inductor adds nothing


def test_export_latex_transmon():
    n = parse("PARAM C\nPARAM Cg\nPARAM Vg\nC c 1 2 C=C\nJJ j 1 2 EJ=15GHz\nC cc 2 3 C=Cg\nV vg 3 1 V=Vg")
    tex = H.export(hamiltonian(n), "latex")
    assert "\\cos" in tex
    assert "C + Cg" in tex
    assert "\\phi_{0}" in tex


def test_export_empty_circuit():
    n = parse("")
    assert H.export(H.build_hamiltonian(n, R.reduce_circuit(n))) == "0"


def test_export_text_is_readable():
    text = H.export(hamiltonian("transmon_gate.cq"))
    assert "cos(2*pi*Phi_c/phi_0)" in text
    assert len(text) < 200
    with pytest.raises(ValueError):
        H.export(hamiltonian("transmon_gate.cq"), "yaml")


def test_dualmon_json():
    d = H.to_json(hamiltonian("dualmon.cq"))
    json.dumps(d)
    assert d["schema_version"] == 1
    assert [t["type"] for t in d["terms"]] == ["cosine", "cosine"]
    assert sorted(t["period"] for t in d["terms"]) == ["2e", "phi0"]


def test_capacitance_matrix():
    C = symbol("C")
    assert H.capacitance_matrix(parse("C c 1 2 C=C\nL l 1 2 L=1nH")) == sp.Matrix([[C, -C], [-C, C]])
    M = H.capacitance_matrix(parse("C c 1 2 C=80fF\nJJ j 1 2 EJ=1GHz"))
    c = sp.Rational(80, 10**15)
    assert M == sp.Matrix([[c, -c], [-c, c]])
    with pytest.raises(H.HamiltonianError):
        H.capacitance_matrix(load(CIRCUITS / "dualmon.cq"))


def test_bind_and_symbols():
    h = hamiltonian("transmon_gate.cq")
    assert h.symbols == ["Vg"]
    hb = h.bind({"Vg": 0})
    assert hb.symbols == [] and hb.offset == 0


def test_charge_quadratic_is_psd_on_corpus():
    for f in sorted(CIRCUITS.glob("*.cq")):
        h = hamiltonian(f.name)
        vals = {s: 1e-9 for s in h.symbols}
        assert H.check_quadratic_psd(h, vals), f.name


@pytest.mark.parametrize("path", sorted(CIRCUITS.glob("*.cq")), ids=lambda p: p.stem)
def test_gradient_and_bookkeeping_on_corpus(path):
    n = load(path)
    defaults = {s: 1e-13 for s, v in n.symbols if v is None}
    for check in (CK.check_gradient, CK.check_energy_bookkeeping):
        r = check(n, defaults, points=5)
        assert r.passed, f"{r.name}: {r.detail}"


LINEAR_CAP = [
    "floating_oscillator.cq",
    "fluxonium.cq",
    "C c 1 2 C=80fF\nJJ j 1 2 EJ=15GHz\nC cc 2 3 C=5fF\nC cg 3 1 C=1fF\nL l 1 3 L=20nH",
    "C a 1 2 C=30fF\nC b 2 3 C=40fF\nC c 3 4 C=50fF\nC d 4 1 C=60fF\nC e 1 3 C=70fF\n"
    "JJ j 1 2 EJ=6GHz\nL l 2 4 L=30nH\nJJ k 3 1 EJ=9GHz",
]


@pytest.mark.parametrize("src", LINEAR_CAP, ids=range(len(LINEAR_CAP)))
def test_hamilton_equations_match_capacitance_matrix(src):
    n = load(CIRCUITS / src) if src.endswith(".cq") else parse(src)
    r = CK.check_legacy_eom(n, {"Vg": 0.3e-3, "phi_ext": 0.2 * K.phi0}, points=20)
    assert r.applicable and r.passed, r.detail


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_circuits_bookkeeping_and_gradient(seed):
    rng = np.random.default_rng(seed)
    n = random_capacitive_circuit(rng, nv=int(rng.integers(2, 5)), extra_caps=int(rng.integers(0, 3)),
                                  inductive=int(rng.integers(1, 4)))
    for check in (CK.check_gradient, CK.check_energy_bookkeeping, CK.check_legacy_eom):
        r = check(n, seed=seed % 997)
        assert r.passed, f"{r.name}: {r.detail}"


def test_lift_reconstructs_tree_fluxes():
    n = load(CIRCUITS / "fig4_null_vectors.cq")
    rs = R.reduce_circuit(n)
    h = H.build_hamiltonian(n, rs)
    pt = {v: 0.1 * (i + 1) * K.phi0 for i, v in enumerate(h.fluxes)}
    pt.update({v: 0.0 for v in h.charges})
    _, phi = H.lift(rs, h, pt)
    for p in rs.pairs:
        val = float(p.flux_def.xreplace({S("phi_" + v): x for v, x in phi.items()}))
        assert val == pytest.approx(pt["Phi_" + p.name], rel=1e-12)
