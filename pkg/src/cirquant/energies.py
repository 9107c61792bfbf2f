"""Element energy functions as symbolic objects over an affine argument."""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

import sympy as sp

from . import constants as K
from .netlist import Element, Kind, SymbolRef, Value

_SYMBOLS: dict[str, sp.Symbol] = {}


def symbol(name: str) -> sp.Symbol:
    """Shared real symbol for an external parameter."""
    if name not in _SYMBOLS:
        _SYMBOLS[name] = sp.Symbol(name, real=True)
    return _SYMBOLS[name]


def dot_symbol(name: str) -> sp.Symbol:
    return symbol("dot_" + name)


def rational(x: Fraction) -> sp.Rational:
    return sp.Rational(x.numerator, x.denominator)


def value_expr(v: Value) -> sp.Expr:
    if isinstance(v, SymbolRef):
        return rational(v.coef) * symbol(v.name)
    return rational(v)


# energy forms
QUAD = "quad"   # param * arg**2 / 2  (param is 1/C or 1/L)
COS = "cos"     # -param * cos(2*pi*arg/period)
LIN = "lin"     # param * arg


@dataclass(frozen=True)
class ElementEnergy:
    """Energy of one element evaluated on an affine argument.

    ``arg`` is a branch charge for capacitive elements and a flux
    difference for inductive ones, written in whatever variables the
    current stage of the reduction uses.
    """

    id: str
    form: str
    param: sp.Expr
    arg: sp.Expr
    charge_type: bool

    @property
    def period(self) -> sp.Expr:
        return K.two_e_s if self.charge_type else K.phi0_s

    def expr(self, arg: sp.Expr | None = None) -> sp.Expr:
        a = self.arg if arg is None else arg
        if self.form == QUAD:
            return self.param * a**2 / 2
        if self.form == COS:
            return -self.param * sp.cos(2 * sp.pi * a / self.period)
        return self.param * a

    def derivative(self, arg: sp.Expr | None = None) -> sp.Expr:
        a = self.arg if arg is None else arg
        if self.form == QUAD:
            return self.param * a
        if self.form == COS:
            return self.param * 2 * sp.pi / self.period * sp.sin(2 * sp.pi * a / self.period)
        return self.param

    def subs(self, mapping) -> "ElementEnergy":
        return replace(self, arg=sp.expand(self.arg.xreplace(mapping)))

    def with_arg(self, arg: sp.Expr) -> "ElementEnergy":
        return replace(self, arg=arg)


def element_energy(el: Element, arg: sp.Expr) -> ElementEnergy:
    k = el.kind
    if k is Kind.CAPACITOR:
        return ElementEnergy(el.id, QUAD, 1 / value_expr(el.param("C")), arg, True)
    if k is Kind.INDUCTOR:
        return ElementEnergy(el.id, QUAD, 1 / value_expr(el.param("L")), arg, False)
    if k is Kind.JOSEPHSON:
        return ElementEnergy(el.id, COS, value_expr(el.param("EJ")), arg, False)
    if k is Kind.PHASE_SLIP:
        return ElementEnergy(el.id, COS, value_expr(el.param("EQ")), arg, True)
    if k is Kind.VOLTAGE_SOURCE:
        return ElementEnergy(el.id, LIN, value_expr(el.param("V")), arg, True)
    if k is Kind.FLUX_BATTERY:
        return ElementEnergy(el.id, LIN, battery_voltage(el), arg, True)
    if k is Kind.INDUCTIVE_BIAS:
        return ElementEnergy(el.id, LIN, value_expr(el.param("MI")), arg, False)
    raise ValueError(f"no energy for kind {k}")


def battery_voltage(el: Element) -> sp.Expr:
    """A battery holding alpha*phi_ext drives alpha*d(phi_ext)/dt."""
    v = el.param("phi")
    if isinstance(v, SymbolRef):
        return rational(v.coef) * dot_symbol(v.name)
    return sp.Integer(0)
