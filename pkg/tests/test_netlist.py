from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cirquant import constants as K
from cirquant.netlist import (Kind, NetlistError, SymbolRef, dumps, format_number, load, parse,
                              parse_quantity, validate)

from circuitgen import random_circuit

CIRCUITS = Path(__file__).resolve().parent.parent / "circuits"


def test_jj_frequency_units_become_joules():
    n = parse("JJ j1 1 2 EJ=5GHz")
    (el,) = n.elements
    assert el.kind is Kind.JOSEPHSON
    assert (el.tail, el.head) == ("1", "2")
    assert el.param("EJ") == 5 * 10**9 * K.PLANCK


def test_series_inductor_netlist():
    n = parse("L l1 1 2 L=1uH\nL l2 2 3 L=2uH\nQPS q1 3 1 EQ=1GHz")
    assert [e.kind for e in n.elements] == [Kind.INDUCTOR, Kind.INDUCTOR, Kind.PHASE_SLIP]
    assert n.elements[1].param("L") == Fraction(2, 10**6)
    assert n.nodes == ("1", "2", "3")
    assert validate(n).ok


def test_self_loop_is_a_validation_error_not_a_parse_error():
    n = parse("C c1 1 1 C=1pF")
    rep = validate(n)
    assert not rep.ok
    assert any("self-loop" in e for e in rep.errors)


@pytest.mark.parametrize("text, fragment", [
    ("XYZ a 1 2 C=1pF", "unknown element kind"),
    ("C c1 1 2", "missing parameter"),
    ("C c1 1", "expected"),
    ("C c1 1 2 L=1nH", "unknown parameter"),
    ("C c1 1 2 C=1pF C=2pF", "duplicate parameter"),
    ("C c1 1 2 C=1pF\nC c1 2 3 C=1pF", "duplicate element id"),
    ("C c1 1 2 C=1qF", "unknown unit"),
    ("JJ j 1 2 EJ=1nH", "inductance"),
])
def test_parse_errors(text, fragment):
    with pytest.raises(NetlistError, match=fragment):
        parse(text)


def test_parse_error_carries_line_and_column():
    with pytest.raises(NetlistError) as info:
        parse("C c1 1 2 C=1pF\nC c2 2 3 X=1")
    assert info.value.line == 2
    assert info.value.column == 10


def test_current_and_voltage_forms():
    n = parse("JJ j 1 2 IC=10nA\nQPS q 2 1 VQ=1uV")
    ej = float(n.elements[0].param("EJ"))
    eq = float(n.elements[1].param("EQ"))
    assert ej == pytest.approx(K.phi0 * 10e-9 / (2 * np.pi), rel=1e-12)
    assert eq == pytest.approx(K.two_e * 1e-6 / (2 * np.pi), rel=1e-12)


def test_symbol_references():
    n = parse("PARAM phi_ext=0.5phi0\nFB b 1 2 phi=1/2*phi_ext\nJJ j 2 1 EJ=1GHz\nC c 1 2 C=1fF")
    assert dict(n.symbols)["phi_ext"] == K.PHI0 / 2
    assert n.element("b").param("phi") == SymbolRef("phi_ext", Fraction(1, 2))
    # undeclared references are recorded without a default
    m = parse("V v 1 2 V=Vg\nC c 1 2 C=1fF")
    assert dict(m.symbols) == {"Vg": None}


def test_quantities():
    assert parse_quantity("2.5fF") == (Fraction(25, 10**16), "capacitance")
    assert parse_quantity("3") == (Fraction(3), None)
    assert parse_quantity("1/3GHz")[0] == K.PLANCK * 10**9 / 3
    assert parse_quantity("1e-3")[0] == Fraction(1, 1000)


def test_disconnected_is_an_error():
    rep = validate(parse("C c1 1 2 C=1pF\nL l1 1 2 L=1nH\nC c2 3 4 C=1pF\nL l2 3 4 L=1nH"))
    assert any("disconnected" in e for e in rep.errors)


def test_connected_lc_loop_gives_empty_report():
    rep = validate(parse("C c 1 2 C=1pF\nL l 1 2 L=1nH"))
    assert rep.ok and not rep.warnings


def test_singular_circuit_warning():
    rep = validate(load(CIRCUITS / "singular_qps.cq"))
    assert rep.ok
    assert any("capacitive loop containing QPS" in w for w in rep.warnings)


def test_jj_without_parallel_capacitor_warns():
    rep = validate(parse("JJ j 1 2 EJ=1GHz\nL l 2 3 L=1nH\nC c 3 1 C=1fF"))
    assert any("JJ j without parallel capacitor" in w for w in rep.warnings)


def test_nonpositive_values():
    rep = validate(parse("C c 1 2 C=-1fF\nL l 1 2 L=0"))
    assert sum("nonpositive" in e for e in rep.errors) == 2


@pytest.mark.parametrize("name", ["Q_a", "Phi_x", "phi_1", "r_2", "dot_phi"])
def test_reserved_symbol_names(name):
    rep = validate(parse(f"PARAM {name}\nC c 1 2 C=1fF\nL l 1 2 L=1nH"))
    assert any("collides" in e for e in rep.errors)


def test_corpus_round_trips_and_validates():
    files = sorted(CIRCUITS.glob("*.cq"))
    assert len(files) >= 10
    for f in files:
        n = load(f)
        assert parse(dumps(n)) == n, f.name
        assert validate(n).ok, f.name


def test_format_number_is_exact():
    for x in [Fraction(1, 3), Fraction(25, 10**16), Fraction(-7, 8), Fraction(10**20), Fraction(0)]:
        assert parse_quantity(format_number(x))[0] == x


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_print_parse_identity_on_random_circuits(seed):
    n = random_circuit(np.random.default_rng(seed))
    assert parse(dumps(n)) == n
    assert dumps(parse(dumps(n))) == dumps(n)
