"""Structured Hamiltonian over canonical pairs.

Terms are kept in SI variables: charges in coulombs, fluxes in webers,
energies in joules. Coefficients are exact sympy expressions that may
contain external symbols (gate voltages, external fluxes, their rates).
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence, Union

import numpy as np
import sympy as sp

from . import constants as K
from .energies import COS, LIN, QUAD, ElementEnergy, symbol
from .netlist import Kind, Netlist
from .reduce import ImplicitGroup, ReducedSystem

SCHEMA_VERSION = 1


class HamiltonianError(ValueError):
    pass


@dataclass(frozen=True)
class Quadratic:
    a: str
    b: str
    coeff: sp.Expr          # value coeff * a * b


@dataclass(frozen=True)
class Linear:
    var: str
    coeff: sp.Expr


@dataclass(frozen=True)
class Cosine:
    amplitude: sp.Expr                      # value amplitude * cos(2 pi (sum c x + offset) / period)
    combo: tuple[tuple[str, sp.Rational], ...]
    charge_type: bool
    offset: sp.Expr = sp.Integer(0)
    source: str = ""

    @property
    def period(self) -> sp.Expr:
        return K.two_e_s if self.charge_type else K.phi0_s

    @property
    def period_name(self) -> str:
        return "2e" if self.charge_type else "phi0"


@dataclass(frozen=True)
class Implicit:
    """Energy of a nonanalytic capacitive loop, minimised over its hidden charge.

    ``parts`` lists, per element, (energy, coefficient of the hidden charge,
    remaining affine argument in canonical charges).
    """

    group: ImplicitGroup
    parts: tuple[tuple[ElementEnergy, sp.Expr, sp.Expr], ...]

    @property
    def variables(self) -> list[str]:
        out = set()
        for _, _, rest in self.parts:
            out |= {s.name for s in rest.free_symbols if s.name.startswith("Q_")}
        return sorted(out)


Term = Union[Quadratic, Linear, Cosine, Implicit]


@dataclass(frozen=True)
class EnergyExpr:
    modes: tuple[str, ...]
    terms: tuple[Term, ...]
    dropped_constant: sp.Expr = sp.Integer(0)
    compact: tuple[bool, ...] = ()
    # constant that completes the polynomial part to squares, e.g. the
    # C_c^2 V_g^2 / 2C term of (Q - C_c V_g)^2 / 2C; kept in the spectrum
    offset: sp.Expr = sp.Integer(0)

    @property
    def charges(self) -> list[str]:
        return ["Q_" + m for m in self.modes]

    @property
    def fluxes(self) -> list[str]:
        return ["Phi_" + m for m in self.modes]

    @property
    def symbols(self) -> list[str]:
        out = set()
        for t in self.terms:
            for e in _term_exprs(t):
                out |= {s.name for s in e.free_symbols}
        out |= {s.name for s in self.dropped_constant.free_symbols}
        out |= {s.name for s in self.offset.free_symbols}
        return sorted(out - set(self.charges) - set(self.fluxes))

    def sympy(self, include_constant: bool = False) -> sp.Expr:
        """Explicit terms as one expression; Implicit terms appear as functions."""
        out = self.offset
        for t in self.terms:
            out += _term_sympy(t)
        if include_constant:
            out += self.dropped_constant
        return out

    def bind(self, values: Mapping[str, object] | None = None) -> "EnergyExpr":
        """Substitute external symbols; flux and charge rates default to zero."""
        values = dict(values or {})
        sub = {}
        for name in self.symbols:
            if name in values:
                sub[symbol(name)] = sp.sympify(values[name])
            elif name.startswith("dot_"):
                sub[symbol(name)] = sp.Integer(0)
        return _subs_expr(self, sub)


def _term_exprs(t: Term) -> list[sp.Expr]:
    if isinstance(t, Quadratic):
        return [t.coeff]
    if isinstance(t, Linear):
        return [t.coeff]
    if isinstance(t, Cosine):
        return [t.amplitude, t.offset]
    out = []
    for en, c, rest in t.parts:
        out += [en.param, c, rest - sum(rest.coeff(s) * s for s in rest.free_symbols if s.name.startswith("Q_"))]
    return out


def _term_sympy(t: Term) -> sp.Expr:
    S = lambda n: sp.Symbol(n, real=True)  # noqa: E731
    if isinstance(t, Quadratic):
        return t.coeff * S(t.a) * S(t.b)
    if isinstance(t, Linear):
        return t.coeff * S(t.var)
    if isinstance(t, Cosine):
        arg = sum((c * S(v) for v, c in t.combo), sp.Integer(0)) + t.offset
        return t.amplitude * sp.cos(2 * sp.pi * arg / t.period)
    return sp.Function("E_implicit_" + t.group.unknown.name[2:])(*[S(v) for v in t.variables])


def _subs_expr(h: EnergyExpr, sub) -> EnergyExpr:
    terms = []
    for t in h.terms:
        if isinstance(t, Quadratic):
            terms.append(Quadratic(t.a, t.b, sp.simplify(t.coeff.xreplace(sub))))
        elif isinstance(t, Linear):
            terms.append(Linear(t.var, sp.simplify(t.coeff.xreplace(sub))))
        elif isinstance(t, Cosine):
            terms.append(Cosine(t.amplitude.xreplace(sub), t.combo, t.charge_type,
                                sp.expand(t.offset.xreplace(sub)), t.source))
        else:
            parts = tuple((replace(en, param=en.param.xreplace(sub), arg=en.arg.xreplace(sub)),
                           c.xreplace(sub), sp.expand(rest.xreplace(sub))) for en, c, rest in t.parts)
            terms.append(Implicit(t.group, parts))
    terms = [t for t in terms if not (isinstance(t, (Quadratic, Linear)) and t.coeff == 0)]
    return EnergyExpr(h.modes, tuple(terms), sp.expand(h.dropped_constant.xreplace(sub)), h.compact,
                      sp.expand(h.offset.xreplace(sub)))


# ---------------------------------------------------------------- build

def build_hamiltonian(n: Netlist | None, rs: ReducedSystem) -> EnergyExpr:
    """Collect the reduced element energies into structured terms."""
    modes = [p.name for p in rs.pairs]
    charges = [p.charge for p in rs.pairs]
    fluxes = [p.flux for p in rs.pairs]
    variables = charges + fluxes
    varset = set(variables)
    poly = sp.Integer(0)
    terms: list[Term] = []
    constant = sp.Integer(0)
    user = {name for name, _ in rs.netlist.symbols}
    for en in rs.energies:
        extra = {s for s in en.arg.free_symbols
                 if s.name.startswith(("q_", "r_", "Psi_", "P_", "phi_")) and s.name not in user}
        if extra:
            raise HamiltonianError(f"energy of {en.id} still depends on {sorted(s.name for s in extra)}")
        if en.form == COS:
            arg = sp.expand(en.arg)
            combo = []
            for v in variables:
                c = arg.coeff(v)
                if c != 0:
                    if (v in charges) != en.charge_type:
                        raise HamiltonianError(f"element {en.id} mixes charge and flux variables")
                    combo.append((v.name, sp.nsimplify(c)))
            offset = sp.expand(arg - sum((c * sp.Symbol(v, real=True) for v, c in combo), sp.Integer(0)))
            if not combo:
                constant += en.expr()
                continue
            terms.append(Cosine(-en.param, tuple(combo), en.charge_type, offset, en.id))
        else:
            poly += en.expr()
    poly = sp.expand(poly)
    if poly != 0:
        P = sp.Poly(poly, *variables)
        quad: dict[tuple[int, int], sp.Expr] = {}
        for monom, coeff in P.terms():
            deg = sum(monom)
            idx = [i for i, k in enumerate(monom) for _ in range(k)]
            if deg == 0:
                constant += coeff
            elif deg == 1:
                terms.append(Linear(variables[idx[0]].name, sp.simplify(coeff)))
            elif deg == 2:
                i, j = idx
                if (i < len(charges)) != (j < len(charges)):
                    raise HamiltonianError("mixed charge-flux product in the Hamiltonian")
                quad[(i, j)] = quad.get((i, j), 0) + coeff
            else:
                raise HamiltonianError("element energy of degree above two")
        lin = [t for t in terms if isinstance(t, Linear)]
        terms = [t for t in terms if not isinstance(t, Linear)]
        for (i, j), c in sorted(quad.items()):
            terms.append(Quadratic(variables[i].name, variables[j].name, sp.simplify(c)))
        lin.sort(key=lambda t: [v.name for v in variables].index(t.var))
        terms += lin
    for ig in rs.implicit:
        parts = []
        for en in ig.energies:
            c = sp.expand(en.arg).coeff(ig.unknown)
            rest = sp.expand(en.arg - c * ig.unknown)
            if rest.free_symbols & (set(fluxes)):
                raise HamiltonianError("nonanalytic loop depends on a flux")
            parts.append((en, c, rest))
        terms.append(Implicit(ig, tuple(parts)))
    order = {Quadratic: 0, Linear: 1, Cosine: 2, Implicit: 3}
    terms.sort(key=lambda t: order[type(t)])
    offset = sum((_square_completion(terms, block) for block in (charges, fluxes)), sp.Integer(0))
    offset = sp.simplify(offset)
    return EnergyExpr(tuple(modes), tuple(terms), sp.expand(constant - offset),
                      tuple(p.compact for p in rs.pairs), offset)


def _square_completion(terms: Sequence[Term], block: Sequence[sp.Symbol]) -> sp.Expr:
    """Constant c with x^T M x / 2 + a^T x + c a sum of squares, or 0 if a is not in range(M)."""
    names = [v.name for v in block]
    a = sp.Matrix([sum((t.coeff for t in terms if isinstance(t, Linear) and t.var == v), sp.Integer(0))
                   for v in names])
    if a.is_zero_matrix:
        return sp.Integer(0)
    M = sp.zeros(len(names), len(names))
    for t in terms:
        if isinstance(t, Quadratic) and t.a in names:
            i, j = names.index(t.a), names.index(t.b)
            M[i, j] += t.coeff if i != j else 2 * t.coeff
            if i != j:
                M[j, i] += t.coeff
    live = [i for i in range(len(names)) if not M.row(i).is_zero_matrix]
    if any(a[i] != 0 for i in range(len(names)) if i not in live):
        return sp.Integer(0)
    Ml, al = M.extract(live, live), a.extract(live, [0])
    if sp.simplify(Ml.det()) == 0:
        return sp.Integer(0)
    return sp.Rational(1, 2) * (al.T * Ml.LUsolve(al))[0, 0]


# ---------------------------------------------------------------- numeric evaluation

def _float(x: sp.Expr) -> float:
    try:
        return float(x)
    except TypeError as exc:
        raise HamiltonianError(f"unbound symbol(s) in {x}: {sorted(s.name for s in x.free_symbols)}") from exc


class ImplicitSolver:
    """Hidden charge of a nonanalytic loop in units of 2e, energies in GHz.

    Thread safe; solutions are memoised on the rounded loop arguments.
    """

    def __init__(self, term: Implicit, multivalued: bool = False):
        self.term = term
        self.multivalued = multivalued or term.group.multivalued
        self.variables = term.variables
        self.kind = []
        self.coef = []
        self.c = []
        self.A = []      # rest_e = A_e . n_vars + b_e   (charges in units of 2e)
        self.b = []
        twoe = K.two_e_s
        for en, c, rest in term.parts:
            p = _float(en.param)
            if en.form == QUAD:
                self.coef.append(p * K.two_e ** 2 / K.GHz)
            elif en.form == COS:
                self.coef.append(p / K.GHz)
            else:
                self.coef.append(p * K.two_e / K.GHz)
            self.kind.append(en.form)
            self.c.append(_float(c))
            self.A.append([_float(rest.coeff(sp.Symbol(v, real=True))) for v in self.variables])
            const = rest.subs({sp.Symbol(v, real=True): 0 for v in self.variables})
            self.b.append(_float(const / twoe))
        self.A = np.array(self.A, dtype=float).reshape(len(self.c), len(self.variables))
        self.b = np.array(self.b)
        self.c = np.array(self.c)
        self.coef = np.array(self.coef)
        self.kind = np.array(self.kind)
        self._memo: dict = {}
        self._lock = threading.Lock()
        q = self.kind == QUAD
        k2 = float(np.sum(self.coef[q] * self.c[q] ** 2))
        a2 = float(np.sum(np.abs(self.coef[self.kind == COS]) * (2 * np.pi) ** 2 * self.c[self.kind == COS] ** 2))
        if k2 <= 0:
            raise HamiltonianError("nonanalytic loop without a capacitor has no bounded solution")
        self.k2 = k2
        if a2 >= k2 and not self.multivalued:
            raise HamiltonianError("nonanalytic constraint is multivalued at these parameters")

    # per-part energy and derivatives in x = rest + c*y
    def _parts(self, x):
        E = np.where(self.kind == QUAD, 0.5 * self.coef * x ** 2,
                     np.where(self.kind == COS, -self.coef * np.cos(2 * np.pi * x), self.coef * x))
        d1 = np.where(self.kind == QUAD, self.coef * x,
                      np.where(self.kind == COS, 2 * np.pi * self.coef * np.sin(2 * np.pi * x), self.coef))
        d2 = np.where(self.kind == QUAD, self.coef,
                      np.where(self.kind == COS, (2 * np.pi) ** 2 * self.coef * np.cos(2 * np.pi * x), 0.0))
        return E, d1, d2

    def solve_rest(self, rest: np.ndarray) -> tuple[float, float, np.ndarray]:
        """Return (y*, energy GHz, dE/drest_e) for per-part remaining arguments."""
        key = tuple(np.round(rest, 13))
        with self._lock:
            hit = self._memo.get(key)
        if hit is not None:
            return hit
        c = self.c

        def r(y):
            _, d1, d2 = self._parts(rest + c * y)
            return float(np.dot(c, d1)), float(np.dot(c * c, d2)), float(np.sum(np.abs(c * d1)))

        q = self.kind == QUAD
        lin = self.kind == LIN
        # root of the analytic part, then the bounded cosine force limits the bracket
        y0 = -(np.dot(c[q] * self.coef[q], rest[q]) + np.dot(c[lin], self.coef[lin])) / self.k2
        spread = np.sum(np.abs(self.coef[self.kind == COS] * c[self.kind == COS])) * 2 * np.pi / self.k2
        lo, hi = y0 - spread - 1e-9, y0 + spread + 1e-9
        if self.multivalued:
            ys = np.linspace(lo, hi, max(64, int(64 * (hi - lo)) + 1))
            Es = [float(np.sum(self._parts(rest + c * y)[0])) for y in ys]
            i = int(np.argmin(Es))
            lo, hi = ys[max(i - 1, 0)], ys[min(i + 1, len(ys) - 1)]
        y = self._safeguarded_root(r, lo, hi)
        E, d1, _ = self._parts(rest + c * y)
        out = (y, float(np.sum(E)), d1)
        with self._lock:
            self._memo[key] = out
        return out

    @staticmethod
    def _safeguarded_root(r, lo, hi, tol=1e-12, maxiter=200):
        flo, _, _ = r(lo)
        fhi, _, _ = r(hi)
        if flo > 0 or fhi < 0:
            # bracket should hold by construction; fall back to its better end
            return lo if abs(flo) < abs(fhi) else hi
        y = 0.5 * (lo + hi)
        for _ in range(maxiter):
            f, df, scale = r(y)
            if abs(f) <= tol * max(scale, 1e-300):
                return y
            if f > 0:
                hi = y
            else:
                lo = y
            step = y - f / df if df > 0 else None
            y = step if step is not None and lo < step < hi else 0.5 * (lo + hi)
            if hi - lo <= 8 * np.finfo(float).eps * max(1.0, abs(y)):
                return y
        raise HamiltonianError("implicit constraint root finder did not converge")

    def energy(self, nvals: Sequence[float]) -> float:
        rest = self.A @ np.asarray(nvals, dtype=float) + self.b
        return self.solve_rest(rest)[1]

    def gradient(self, nvals: Sequence[float]) -> np.ndarray:
        """dE/dn_var (GHz per unit 2e charge), by the envelope theorem."""
        rest = self.A @ np.asarray(nvals, dtype=float) + self.b
        _, _, d1 = self.solve_rest(rest)
        return d1 @ self.A

    def hidden_charge(self, nvals: Sequence[float]) -> float:
        rest = self.A @ np.asarray(nvals, dtype=float) + self.b
        return self.solve_rest(rest)[0]


def _point_value(point: Mapping[str, float], name: str) -> float:
    if name not in point:
        raise HamiltonianError(f"no value for variable {name}")
    return float(point[name])


def eval_classical(h: EnergyExpr, point: Mapping[str, float], symbols: Mapping[str, object] | None = None,
                   multivalued: bool = False) -> float:
    """Classical energy in joules at a phase-space point given in SI units."""
    hb = h.bind(symbols)
    total = _float(hb.offset)
    for t in hb.terms:
        if isinstance(t, Quadratic):
            total += _float(t.coeff) * _point_value(point, t.a) * _point_value(point, t.b)
        elif isinstance(t, Linear):
            total += _float(t.coeff) * _point_value(point, t.var)
        elif isinstance(t, Cosine):
            arg = sum(float(c) * _point_value(point, v) for v, c in t.combo) + _float(t.offset)
            total += _float(t.amplitude) * math.cos(2 * math.pi * arg / _float(t.period))
        else:
            solver = ImplicitSolver(t, multivalued)
            n = [_point_value(point, v) / K.two_e for v in solver.variables]
            total += solver.energy(n) * K.GHz
    return total


def gradient(h: EnergyExpr, point: Mapping[str, float], symbols: Mapping[str, object] | None = None,
             multivalued: bool = False) -> dict[str, float]:
    """Analytic dH/dx for every canonical variable (SI units)."""
    hb = h.bind(symbols)
    g = {v: 0.0 for v in h.charges + h.fluxes}
    for t in hb.terms:
        if isinstance(t, Quadratic):
            c = _float(t.coeff)
            g[t.a] += c * _point_value(point, t.b)
            g[t.b] += c * _point_value(point, t.a)
        elif isinstance(t, Linear):
            g[t.var] += _float(t.coeff)
        elif isinstance(t, Cosine):
            P = _float(t.period)
            arg = sum(float(c) * _point_value(point, v) for v, c in t.combo) + _float(t.offset)
            s = -_float(t.amplitude) * math.sin(2 * math.pi * arg / P) * 2 * math.pi / P
            for v, c in t.combo:
                g[v] += s * float(c)
        else:
            solver = ImplicitSolver(t, multivalued)
            n = [_point_value(point, v) / K.two_e for v in solver.variables]
            gr = solver.gradient(n) * K.GHz / K.two_e
            for v, x in zip(solver.variables, gr):
                g[v] += float(x)
    return g


def hamilton_rates(h: EnergyExpr, point, symbols=None) -> dict[str, float]:
    """dPhi/dt = dH/dQ and dQ/dt = -dH/dPhi."""
    g = gradient(h, point, symbols)
    out = {}
    for m in h.modes:
        out["Phi_" + m] = g["Q_" + m]
        out["Q_" + m] = -g["Phi_" + m]
    return out


# ---------------------------------------------------------------- lifts and bookkeeping

def lift(rs: ReducedSystem, h: EnergyExpr, point: Mapping[str, float], symbols=None,
         multivalued: bool = False) -> tuple[dict[str, float], dict[str, float]]:
    """Branch charges q_e and node fluxes phi_v at a canonical point (SI)."""
    values = {sp.Symbol(k, real=True): v for k, v in point.items()}
    sym = dict(symbols or {})
    for s in _all_symbols(rs):
        if s.name in sym:
            values[s] = float(sp.sympify(sym[s.name]))
        elif s.name.startswith("dot_"):
            values[s] = 0.0
    hidden = {}
    hb = h.bind(symbols)
    for t in hb.terms:
        if isinstance(t, Implicit):
            solver = ImplicitSolver(t, multivalued)
            n = [point[v] / K.two_e for v in solver.variables]
            hidden[t.group.unknown] = solver.hidden_charge(n) * K.two_e
    values.update(hidden)
    q = {e: _float(x.xreplace(values)) for e, x in rs.charge_map.items()}
    phi = {v: _float(x.xreplace(values)) for v, x in rs.flux_map.items()}
    return q, phi


def _all_symbols(rs: ReducedSystem) -> set:
    out = set()
    for x in list(rs.charge_map.values()) + list(rs.flux_map.values()):
        out |= x.free_symbols
    for en in rs.energies:
        out |= en.param.free_symbols
    return out


def element_energy_total(rs: ReducedSystem, q: Mapping[str, float], phi: Mapping[str, float],
                         symbols=None) -> float:
    """Direct sum of element energies from branch charges and node fluxes (joules)."""
    from .energies import element_energy
    sym = {symbol(k): sp.sympify(v) for k, v in (symbols or {}).items()}
    total = 0.0
    for el in rs.netlist.elements:
        if el.kind.capacitive:
            if el.kind is Kind.FLUX_BATTERY and el.id in rs.batteries:
                qe = 0.0
            else:
                qe = q[el.id]
            en = element_energy(el, sp.Float(qe))
        else:
            en = element_energy(el, sp.Float(phi[el.head] - phi[el.tail]))
        val = en.expr().xreplace(sym)
        val = val.xreplace({s: 0 for s in val.free_symbols if s.name.startswith("dot_")})
        total += _float(val)
    return total


def capacitance_matrix(n: Netlist, g=None) -> sp.Matrix:
    """C_uv = sum_e C_e Omega_eu Omega_ev over all nodes (exact)."""
    from .energies import value_expr
    from .graph import build_graph
    g = g or build_graph(n)
    idx = {v: i for i, v in enumerate(g.nodes)}
    C = sp.zeros(len(g.nodes), len(g.nodes))
    for b in g.cap_branches:
        if b.kind is not Kind.CAPACITOR:
            raise HamiltonianError(f"capacitance matrix needs linear capacitors only; {b.id} is {b.kind.name}")
        c = value_expr(b.element.param("C"))
        u, v = idx[b.tail], idx[b.head]
        C[u, u] += c
        C[v, v] += c
        C[u, v] -= c
        C[v, u] -= c
    return C


def check_quadratic_psd(h: EnergyExpr, symbols=None) -> bool:
    """Charge part positive semidefinite (numeric symbols required)."""
    hb = h.bind(symbols)
    idx = {v: i for i, v in enumerate(h.charges)}
    M = np.zeros((len(idx), len(idx)))
    for t in hb.terms:
        if isinstance(t, Quadratic) and t.a in idx:
            c = _float(t.coeff)
            i, j = idx[t.a], idx[t.b]
            if i == j:
                M[i, i] += c
            else:
                M[i, j] += c / 2
                M[j, i] += c / 2
    return bool(len(M) == 0 or np.linalg.eigvalsh(M).min() >= -1e-12 * max(1.0, np.abs(M).max()))


# ---------------------------------------------------------------- export

def _tex_var(name: str) -> str:
    kind, _, sub = name.partition("_")
    return ("\\Phi" if kind == "Phi" else kind) + "_{" + sub.replace("_", "\\_") + "}"


_PERIOD_SYMBOLS = {"phi0": sp.Symbol("phi_0", positive=True), "2e": sp.Symbol("2e", positive=True)}


def _readable(x: sp.Expr) -> sp.Expr:
    """Rationals with long numerators or denominators become 10-digit floats."""
    big = {r: sp.Float(r, 10) for r in x.atoms(sp.Rational)
           if abs(r.p) > 10 ** 6 or r.q > 10 ** 6}
    return x.xreplace(big)


def _display_expr(h: EnergyExpr) -> sp.Expr:
    """Like ``sympy()`` but with cosine periods kept as the symbols phi_0 and 2e."""
    S = lambda n: sp.Symbol(n, real=True)  # noqa: E731
    out = _readable(h.offset)
    for t in h.terms:
        if isinstance(t, Cosine):
            arg = sum((c * S(v) for v, c in t.combo), sp.Integer(0)) + _readable(t.offset)
            out += _readable(t.amplitude) * sp.cos(2 * sp.pi * arg / _PERIOD_SYMBOLS[t.period_name])
        else:
            out += _readable(_term_sympy(t))
    return out


def export(h: EnergyExpr, fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps(to_json(h), sort_keys=True, indent=2)
    if not h.terms:
        return "0"
    expr = _display_expr(h)
    if fmt == "text":
        return sp.sstr(expr, order="lex")
    if fmt == "latex":
        names = {sp.Symbol(v, real=True): sp.Symbol(_tex_var(v), real=True) for v in h.charges + h.fluxes}
        return sp.latex(expr.xreplace(names), order="lex")
    raise ValueError(f"unknown export format {fmt!r}")


def _num(x: sp.Expr):
    try:
        return float(x)
    except TypeError:
        return None


def to_json(h: EnergyExpr) -> dict:
    s = sp.sstr
    terms = []
    for t in h.terms:
        if isinstance(t, Quadratic):
            terms.append({"type": "quadratic", "vars": sorted([t.a, t.b]), "coeff": s(t.coeff),
                          "value": _num(t.coeff)})
        elif isinstance(t, Linear):
            terms.append({"type": "linear", "vars": [t.var], "coeff": s(t.coeff), "value": _num(t.coeff)})
        elif isinstance(t, Cosine):
            terms.append({"type": "cosine", "amplitude": s(t.amplitude), "value": _num(t.amplitude),
                          "combo": [[v, s(c)] for v, c in sorted(t.combo)], "period": t.period_name,
                          "offset": s(t.offset), "element": t.source})
        else:
            terms.append({"type": "implicit", "unknown": t.group.unknown.name, "vars": t.variables,
                          "elements": [en.id for en, _, _ in t.parts], "multivalued": t.group.multivalued})
    return {
        "schema_version": SCHEMA_VERSION,
        "modes": list(h.modes),
        "compact": list(h.compact),
        "terms": terms,
        "dropped_constant": s(h.dropped_constant),
        "offset": s(h.offset),
        "symbols": h.symbols,
    }
