"""Invariant suite run by ``cirquant check`` and reused by the tests.

Every check takes a netlist (plus symbol bindings) and returns a
``CheckResult``. Checks that do not apply to a circuit report
``applicable=False`` instead of passing vacuously.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
import sympy as sp

from . import constants as K
from . import graph as G
from . import ham as H
from . import quantize as Qz
from . import reduce as R
from .netlist import Kind, Netlist


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    applicable: bool = True

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "applicable": self.applicable, "detail": self.detail}


def _skip(name: str, why: str) -> CheckResult:
    return CheckResult(name, True, why, applicable=False)


class MissingValues(ValueError):
    """Unset symbols default to 0, which left a non-finite coefficient."""


def _static(symbols: Mapping[str, object] | None, h: H.EnergyExpr) -> dict:
    vals = {s: 0 for s in h.symbols if not s.startswith("dot_")}
    vals.update(symbols or {})
    hb = h.bind(vals)
    exprs = [hb.offset] + [e for t in hb.terms for e in H._term_exprs(t)]
    if any(e.has(sp.zoo, sp.oo, -sp.oo, sp.nan) for e in exprs):
        unset = sorted(set(h.symbols) - set(symbols or {}) - {s for s in h.symbols if s.startswith("dot_")})
        raise MissingValues(f"numeric checks need values for {', '.join(unset)}")
    return vals


def random_point(h: H.EnergyExpr, rng: np.random.Generator, scale: float = 1.0) -> dict[str, float]:
    """Random canonical point in SI units, O(1) in units of 2e and phi0."""
    pt = {v: float(rng.uniform(-scale, scale)) * K.two_e for v in h.charges}
    pt.update({v: float(rng.uniform(-scale, scale)) * K.phi0 for v in h.fluxes})
    return pt


# ---------------------------------------------------------------- graph level

def check_null_structure(n: Netlist) -> CheckResult:
    g = G.build_graph(n)
    try:
        ns = G.null_structure(g)
    except AssertionError as exc:
        return CheckResult("null_vectors", False, str(exc))
    return CheckResult("null_vectors", True,
                       f"{len(ns.cap_loops)} capacitive loops, {len(ns.ind_islands)} inductive islands")


def check_genus(n: Netlist) -> CheckResult:
    g = G.build_graph(n)
    ns = G.null_structure(g)
    ok = G.genus_check(g, ns)
    return CheckResult("genus", ok, f"|loops|={len(ns.cap_loops)} |islands|={len(ns.ind_islands)}")


def check_symplectic(n: Netlist) -> CheckResult:
    """Omega = M B exactly, so sum q Omega phidot = sum Q Phidot."""
    rs = R.reduce_circuit(n, noether=False)
    g = rs.graph
    Bt = np.array([g.A[[b.id for b in g.branches].index(f)] for f in rs.tree], dtype=int).reshape(len(rs.tree), -1)
    lhs = g.Omega
    rhs = rs.M @ Bt if len(rs.tree) else np.zeros_like(lhs)
    ok = bool(np.array_equal(lhs, rhs))
    return CheckResult("symplectic_identity", ok, "" if ok else "Omega != M B")


# ---------------------------------------------------------------- reduction level

def check_noether(n: Netlist, symbols=None) -> CheckResult:
    """Each island charge Poisson-commutes with H: the island flux shift is a symmetry."""
    rs = R.reduce_circuit(n, noether=False)
    islands = [isl for isl in R.symmetry_islands(rs) if rs.graph.nodes[0] not in isl]
    if not islands or not rs.pairs:
        return _skip("noether_brackets", "no conserved island charge")
    h = H.build_hamiltonian(n, rs)
    expr = h.sympy()
    g = rs.graph
    for isl in islands:
        J = set(isl)
        bracket = sp.Integer(0)
        for p in rs.pairs:
            b = int(g.branch(p.name).head in J) - int(g.branch(p.name).tail in J)
            if b:
                bracket += b * sp.diff(expr, p.flux)
        if sp.simplify(bracket) != 0:
            return CheckResult("noether_brackets", False, f"island {list(isl)}: bracket {bracket}")
    return CheckResult("noether_brackets", True, f"{len(islands)} island charge(s) conserved")


def alternative_trees(rs: R.ReducedSystem, rng: np.random.Generator, limit: int = 4) -> list[list[str]]:
    """Distinct admissible spanning trees (batteries kept first, sources last)."""
    g = rs.graph
    cap = g.cap_branches
    fb = [b for b in cap if b.kind is Kind.FLUX_BATTERY]
    vs = [b for b in cap if b.kind is Kind.VOLTAGE_SOURCE]
    mid = [b for b in cap if b not in fb and b not in vs]
    seen = {tuple(sorted(rs.tree))}
    out = []
    for _ in range(20 * limit):
        order = fb + [mid[i] for i in rng.permutation(len(mid))] + vs
        t = G.greedy_forest(g.nodes, order)
        if any(b.kind is Kind.VOLTAGE_SOURCE for b in t):
            continue
        key = tuple(sorted(b.id for b in t))
        if key not in seen:
            seen.add(key)
            out.append([b.id for b in t])
        if len(out) >= limit:
            break
    return out


def _tree_pair_values(rs: R.ReducedSystem, rs2: R.ReducedSystem, Sigma: sp.Matrix, point: Mapping[str, float],
                      symbols) -> dict[str, float]:
    """Map a point of rs to rs2 with Phi' = Sigma^-1 Phi and Q' = Q Sigma (static batteries)."""
    S = np.array(Sigma.tolist(), dtype=float)
    Phi, Q = [], []
    for f in rs.tree:
        if f in rs.batteries:
            Phi.append(float(sp.sympify(rs.batteries[f]).subs({sp.Symbol(k, real=True): sp.sympify(v)
                                                               for k, v in (symbols or {}).items()})))
            Q.append(0.0)
        else:
            Phi.append(point["Phi_" + f])
            Q.append(point["Q_" + f])
    Phi2 = np.linalg.solve(S, np.array(Phi))
    Q2 = np.array(Q) @ S
    out = {}
    for j, f in enumerate(rs2.tree):
        if f not in rs2.batteries:
            out["Phi_" + f] = float(Phi2[j])
            out["Q_" + f] = float(Q2[j])
    return out


def check_tree_invariance(n: Netlist, symbols=None, seed: int = 0, points: int = 3, tol: float = 1e-9) -> CheckResult:
    rs = R.reduce_circuit(n, noether=False)
    rng = np.random.default_rng(seed)
    alts = alternative_trees(rs, rng)
    if not alts:
        return _skip("tree_invariance", "only one admissible spanning tree")
    h = H.build_hamiltonian(n, rs)
    sym = _static(symbols, h)
    worst = 0.0
    for t in alts:
        rs2 = R.reduce_circuit(n, tree=t, noether=False)
        h2 = H.build_hamiltonian(n, rs2)
        Sigma = R.tree_transform(rs, rs2)
        for _ in range(points):
            pt = random_point(h, rng)
            pt2 = _tree_pair_values(rs, rs2, Sigma, pt, sym)
            e1 = H.eval_classical(h, pt, sym) + float(h.bind(sym).dropped_constant)
            e2 = H.eval_classical(h2, pt2, sym) + float(h2.bind(sym).dropped_constant)
            scale = max(abs(e1), abs(e2), 1e-30)
            worst = max(worst, abs(e1 - e2) / scale)
    ok = worst <= tol
    return CheckResult("tree_invariance", ok, f"{len(alts)} alternative tree(s), max rel diff {worst:.2e}")


# ---------------------------------------------------------------- Hamiltonian level

def check_gradient(n: Netlist, symbols=None, seed: int = 0, points: int = 3, tol: float = 1e-6) -> CheckResult:
    rs = R.reduce_circuit(n)
    h = H.build_hamiltonian(n, rs)
    if not h.modes:
        return _skip("gradient_fd", "no dynamical modes")
    sym = _static(symbols, h)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(points):
        pt = random_point(h, rng)
        g = H.gradient(h, pt, sym)
        for v in h.charges + h.fluxes:
            step = (K.two_e if v.startswith("Q_") else K.phi0) * 1e-6
            up, dn = dict(pt), dict(pt)
            up[v] += step
            dn[v] -= step
            fd = (H.eval_classical(h, up, sym) - H.eval_classical(h, dn, sym)) / (2 * step)
            scale = max(abs(gg) for gg in g.values()) or 1.0
            worst = max(worst, abs(fd - g[v]) / scale)
    return CheckResult("gradient_fd", worst <= tol, f"max rel diff {worst:.2e}")


def check_energy_bookkeeping(n: Netlist, symbols=None, seed: int = 0, points: int = 3,
                             tol: float = 1e-9) -> CheckResult:
    """H at a canonical point equals the direct sum of element energies on the lifted state."""
    rs = R.reduce_circuit(n)
    h = H.build_hamiltonian(n, rs)
    sym = _static(symbols, h)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(points):
        pt = random_point(h, rng)
        e_h = H.eval_classical(h, pt, sym) + float(h.bind(sym).dropped_constant)
        q, phi = H.lift(rs, h, pt, sym)
        e_el = H.element_energy_total(rs, q, phi, sym)
        scale = max(abs(e_h), abs(e_el), 1e-30)
        worst = max(worst, abs(e_h - e_el) / scale)
    return CheckResult("energy_bookkeeping", worst <= tol, f"max rel diff {worst:.2e}")


def _legacy_forces(n: Netlist, phi: Mapping[str, float], symbols) -> dict[str, float]:
    """-dU/dphi_v for the node-flux potential energy."""
    from .energies import value_expr
    sub = {sp.Symbol(k, real=True): sp.sympify(v) for k, v in (symbols or {}).items()}
    F = {v: 0.0 for v in phi}
    for el in n.elements:
        if el.kind is Kind.INDUCTOR:
            i = (phi[el.head] - phi[el.tail]) / float(value_expr(el.param("L")).xreplace(sub))
        elif el.kind is Kind.JOSEPHSON:
            ej = float(value_expr(el.param("EJ")).xreplace(sub))
            i = ej * 2 * math.pi / K.phi0 * math.sin(2 * math.pi * (phi[el.head] - phi[el.tail]) / K.phi0)
        elif el.kind is Kind.INDUCTIVE_BIAS:
            i = float(value_expr(el.param("MI")).xreplace(sub))
        else:
            continue
        F[el.head] -= i
        F[el.tail] += i
    return F


def check_legacy_eom(n: Netlist, symbols=None, seed: int = 0, points: int = 3, tol: float = 1e-9) -> CheckResult:
    """Compare the canonical equations with the capacitance-matrix Lagrangian.

    Node voltages: C phidot = p with p = B^T Q. Forces: pdot = B^T Qdot
    against -dU/dphi evaluated on the lifted node fluxes.
    """
    name = "legacy_eom"
    g = G.build_graph(n)
    if any(b.kind is not Kind.CAPACITOR for b in g.cap_branches):
        return _skip(name, "capacitive branches are not all linear capacitors")
    if len(G.components(g.nodes, [(b.tail, b.head) for b in g.cap_branches])) != 1:
        return _skip(name, "capacitive subgraph does not span the nodes")
    rs = R.reduce_circuit(n, noether=False)
    h = H.build_hamiltonian(n, rs)
    sym = _static(symbols, h)
    C = np.array(H.capacitance_matrix(n, g).xreplace({sp.Symbol(k, real=True): sp.sympify(v)
                                                      for k, v in sym.items()}).tolist(), dtype=float)
    ids = [b.id for b in g.branches]
    B = np.array([g.A[ids.index(f)] for f in rs.tree], dtype=float)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(points):
        pt = random_point(h, rng)
        rates = H.hamilton_rates(h, pt, sym)
        Qv = np.array([pt["Q_" + f] for f in rs.tree])
        Qdot = np.array([rates["Q_" + f] for f in rs.tree])
        Phidot = {sp.Symbol("Phi_" + f, real=True): rates["Phi_" + f] for f in rs.tree}
        # node velocities from the flux map (linear in Phi)
        phidot = np.array([float(sum(sp.diff(rs.flux_map[v], s) * r for s, r in Phidot.items()))
                           for v in g.nodes])
        p = B.T @ Qv
        v_leg = np.linalg.lstsq(C, p, rcond=None)[0]
        # velocities are defined up to a common shift (C has the uniform null vector)
        d = (phidot - v_leg) - np.mean(phidot - v_leg)
        vscale = max(np.max(np.abs(phidot - np.mean(phidot))), 1e-300)
        _, phi = H.lift(rs, h, pt, sym)
        F = _legacy_forces(n, phi, sym)
        f_leg = np.array([F[v] for v in g.nodes])
        f_ir = B.T @ Qdot
        fscale = max(np.max(np.abs(f_leg)), np.max(np.abs(f_ir)), 1e-300)
        worst = max(worst, float(np.max(np.abs(d))) / vscale, float(np.max(np.abs(f_ir - f_leg))) / fscale)
    return CheckResult(name, bool(worst <= tol), f"max rel diff {worst:.2e}")


# ---------------------------------------------------------------- quantum level

def _small_bases(h, symbols):
    nh = Qz.numeric_hamiltonian(h, symbols)
    small = {Qz.CHARGE: 10, Qz.OSCILLATOR: 16, Qz.FLUXGRID: 128, Qz.CHARGEGRID: 128}
    bases = Qz.select_bases(nh)
    budget = max(1, int(round(2000 ** (1 / max(1, len(bases))))))
    from dataclasses import replace
    return nh, [replace(b, size=min(small[b.kind], budget)) for b in bases]


def check_hermiticity(n: Netlist, symbols=None) -> CheckResult:
    rs = R.reduce_circuit(n)
    h = H.build_hamiltonian(n, rs)
    if not h.modes:
        return _skip("hermiticity", "no dynamical modes")
    sym = _static(symbols, h)
    nh, bases = _small_bases(h, sym)
    op = Qz.assemble(nh, bases, auto_size=False)
    try:
        Qz.check_hermitian(op.matrix)
    except AssertionError as exc:
        return CheckResult("hermiticity", False, str(exc))
    return CheckResult("hermiticity", True, f"dim {op.dim}")


def check_variational(n: Netlist, symbols=None) -> CheckResult:
    """Ground energy is non-increasing as oscillator truncations grow."""
    rs = R.reduce_circuit(n)
    h = H.build_hamiltonian(n, rs)
    if not h.modes:
        return _skip("variational_monotonicity", "no dynamical modes")
    sym = _static(symbols, h)
    nh, bases = _small_bases(h, sym)
    if not any(b.kind == Qz.OSCILLATOR for b in bases):
        return _skip("variational_monotonicity", "no oscillator basis")
    from dataclasses import replace
    bases = Qz.resolve_bases(nh, bases, auto_size=False)
    prev = None
    for extra in (0, 4, 8):
        bb = [replace(b, size=b.size + extra) if b.kind == Qz.OSCILLATOR else b for b in bases]
        e0 = Qz.eigvals(Qz.assemble(nh, bb, auto_size=False).matrix, 1)[0]
        if prev is not None and e0 > prev + 1e-9 * max(1.0, abs(prev)):
            return CheckResult("variational_monotonicity", False, f"ground rose from {prev} to {e0}")
        prev = e0
    return CheckResult("variational_monotonicity", True, f"ground {prev:.9g} GHz")


# ---------------------------------------------------------------- suite

SUITE: dict[str, Callable[..., CheckResult]] = {
    "null_vectors": lambda n, s: check_null_structure(n),
    "genus": lambda n, s: check_genus(n),
    "symplectic_identity": lambda n, s: check_symplectic(n),
    "noether_brackets": check_noether,
    "tree_invariance": check_tree_invariance,
    "gradient_fd": check_gradient,
    "energy_bookkeeping": check_energy_bookkeeping,
    "legacy_eom": check_legacy_eom,
    "hermiticity": check_hermiticity,
    "variational_monotonicity": check_variational,
}


def run_all(n: Netlist, symbols: Mapping[str, object] | None = None,
            only: list[str] | None = None) -> list[CheckResult]:
    out = []
    for name, fn in SUITE.items():
        if only and name not in only:
            continue
        try:
            out.append(fn(n, symbols))
        except MissingValues as exc:
            out.append(_skip(name, str(exc)))
        except (R.ReductionError, H.HamiltonianError, Qz.BasisError) as exc:
            out.append(CheckResult(name, False, f"{type(exc).__name__}: {exc}"))
    return out
