"""Canonical coordinates from a spanning tree, constraint elimination and Noether reduction.

The stages run in this order (see :func:`reduce_circuit`):

1. ``canonical_coordinates``: tree branch fluxes and the charges conjugate to them.
2. ``fold_batteries``: flux batteries fix their tree flux; their pair is dropped.
3. ``solve_island_constraints``: node fluxes of inductively shunted islands.
4. ``solve_loop_constraints``: non-tree charges of capacitive loops.
5. ``noether_reduce``: conserved island charges and their conjugate shift modes.
6. ``apply_gauge`` and ``mark_compact``.

Every stage returns a new immutable :class:`ReducedSystem`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
import sympy as sp

from . import constants as K
from .energies import COS, LIN, QUAD, ElementEnergy, dot_symbol, element_energy, symbol, value_expr
from .graph import (
    Branch,
    CircuitGraph,
    NullStructure,
    _DSU,
    build_graph,
    components,
    default_tree_order,
    exact_rank,
    fundamental_loops,
    greedy_forest,
    natural_key,
    null_structure,
    tree_path,
)
from .netlist import Kind, Netlist

log = logging.getLogger(__name__)


class ReductionError(ValueError):
    pass


class MultivaluedConstraintError(ReductionError):
    pass


def Q_(name: str) -> sp.Symbol:
    return sp.Symbol("Q_" + name, real=True)


def Phi_(name: str) -> sp.Symbol:
    return sp.Symbol("Phi_" + name, real=True)


def q_(name: str) -> sp.Symbol:
    return sp.Symbol("q_" + name, real=True)


def phi_(node: str) -> sp.Symbol:
    return sp.Symbol("phi_" + node, real=True)


@dataclass(frozen=True)
class Pair:
    name: str
    flux: sp.Symbol
    charge: sp.Symbol
    flux_def: sp.Expr        # in node fluxes phi_v
    charge_def: sp.Expr      # in branch charges q_e
    compact: bool = False


@dataclass(frozen=True)
class Constraint:
    edge: str
    kind: str                # "linear" or "nonanalytic"
    residual: sp.Expr
    solution: sp.Expr | None = None


@dataclass(frozen=True)
class ImplicitGroup:
    """Capacitive loop whose constraint has no closed-form solution.

    The non-tree charge ``unknown`` is fixed at evaluation time as the
    stationary point of the summed energies (the global minimiser when
    the constraint is multivalued).
    """

    unknown: sp.Symbol
    energies: tuple[ElementEnergy, ...]
    multivalued: bool = False

    @property
    def variables(self) -> list[sp.Symbol]:
        out = set()
        for en in self.energies:
            out |= en.arg.free_symbols
        out.discard(self.unknown)
        return sorted(out, key=lambda s: s.name)


@dataclass(frozen=True)
class NoetherCharge:
    island: tuple[str, ...]
    expr: sp.Expr            # in branch charges q_e
    value: sp.Expr
    pivot: str


@dataclass(frozen=True)
class ReducedSystem:
    graph: CircuitGraph
    netlist: Netlist
    tree: tuple[str, ...]
    K: Mapping[str, Mapping[str, int]]
    pairs: tuple[Pair, ...]
    energies: tuple[ElementEnergy, ...]
    charge_map: Mapping[str, sp.Expr]
    flux_map: Mapping[str, sp.Expr]
    constraints: tuple[Constraint, ...] = ()
    implicit: tuple[ImplicitGroup, ...] = ()
    noether: tuple[NoetherCharge, ...] = ()
    batteries: Mapping[str, sp.Expr] = field(default_factory=dict)
    roots: Mapping[str, sp.Expr] = field(default_factory=dict)
    gauge: str = "as-placed"
    stages: tuple[str, ...] = ()

    @property
    def charges(self) -> list[sp.Symbol]:
        return [p.charge for p in self.pairs]

    @property
    def fluxes(self) -> list[sp.Symbol]:
        return [p.flux for p in self.pairs]

    @property
    def M(self) -> np.ndarray:
        """Branch charge to tree charge map: Q = M^T q (rows: capacitive edges)."""
        cap = [b.id for b in self.graph.cap_branches]
        M = np.zeros((len(cap), len(self.tree)), dtype=int)
        for i, e in enumerate(cap):
            if e in self.tree:
                M[i, self.tree.index(e)] = 1
            else:
                for f, k in self.K[e].items():
                    M[i, self.tree.index(f)] = k
        return M

    def pair(self, name: str) -> Pair:
        for p in self.pairs:
            if p.name == name:
                return p
        raise KeyError(name)

    def _subs(self, mapping: Mapping, **changes) -> "ReducedSystem":
        mapping = dict(mapping)
        energies = tuple(en.subs(mapping) for en in self.energies)
        implicit = tuple(
            replace(g, energies=tuple(en.subs(mapping) for en in g.energies)) for g in self.implicit
        )
        cm = {e: sp.expand(x.xreplace(mapping)) for e, x in self.charge_map.items()}
        fm = {v: sp.expand(x.xreplace(mapping)) for v, x in self.flux_map.items()}
        return replace(self, energies=energies, implicit=implicit, charge_map=cm, flux_map=fm, **changes)


# ---------------------------------------------------------------- tree

def spanning_tree(g: CircuitGraph, forced: Sequence[str] | None = None) -> list[Branch]:
    """Spanning forest of the capacitive subgraph.

    Without ``forced`` the choice is greedy in natural id order with flux
    batteries preferred and voltage sources taken last.
    """
    cap = g.cap_branches
    if forced is None:
        return greedy_forest(g.nodes, default_tree_order(g))
    by_id = {b.id: b for b in cap}
    tree = []
    dsu = _DSU(g.nodes)
    for eid in forced:
        if eid not in by_id:
            raise ReductionError(f"tree edge {eid!r} is not a capacitive branch")
        b = by_id[eid]
        if not dsu.union(b.tail, b.head):
            raise ReductionError(f"forced tree contains a cycle through {eid}")
        tree.append(b)
    full = _DSU(g.nodes)
    for b in cap:
        full.union(b.tail, b.head)
    for v in g.nodes:
        for w in g.nodes:
            if full.find(v) == full.find(w) and dsu.find(v) != dsu.find(w):
                raise ReductionError(f"forced tree misses node {w} reachable from {v} through capacitive edges")
    return tree


def _sorted_tree(tree: Sequence[Branch]) -> list[Branch]:
    return sorted(tree, key=lambda b: natural_key(b.id))


# ---------------------------------------------------------------- stage 1

def canonical_coordinates(g: CircuitGraph, ns: NullStructure | None, tree: Sequence[Branch],
                          netlist: Netlist | None = None) -> ReducedSystem:
    tree = _sorted_tree(tree)
    tids = [b.id for b in tree]
    loops = fundamental_loops(g, tree)
    Kmat: dict[str, dict[str, int]] = {}
    for lp in loops:
        Kmat[lp.edge] = {e: -s for e, s in lp.members[1:]}

    # exact check Omega = M B
    cap = g.cap_branches
    idx = {v: i for i, v in enumerate(g.nodes)}
    B = np.zeros((len(tree), len(g.nodes)), dtype=int)
    for i, b in enumerate(tree):
        B[i, idx[b.head]] += 1
        B[i, idx[b.tail]] -= 1
    M = np.zeros((len(cap), len(tree)), dtype=int)
    for i, b in enumerate(cap):
        if b.id in tids:
            M[i, tids.index(b.id)] = 1
        else:
            for f, k in Kmat[b.id].items():
                M[i, tids.index(f)] = k
    if not np.array_equal(M @ B, g.Omega):
        raise AssertionError("symplectic identity Omega = M B failed")

    pairs = []
    for b in tree:
        qdef = q_(b.id) + sum((k_ * q_(a) for a, row in Kmat.items() for f, k_ in row.items() if f == b.id),
                              sp.Integer(0))
        pairs.append(Pair(b.id, Phi_(b.id), Q_(b.id), phi_(b.head) - phi_(b.tail), qdef))

    charge_map: dict[str, sp.Expr] = {}
    for b in cap:
        if b.id in tids:
            charge_map[b.id] = Q_(b.id) - sum((row[b.id] * q_(a) for a, row in Kmat.items() if b.id in row),
                                              sp.Integer(0))
        else:
            charge_map[b.id] = q_(b.id)

    # node fluxes: island root plus the tree path from the root node
    islands = components(g.nodes, [(b.tail, b.head) for b in cap])
    flux_map: dict[str, sp.Expr] = {}
    roots = {}
    for k_, isl in enumerate(islands):
        root = sp.Integer(0) if k_ == 0 else sp.Symbol("r_" + isl[0], real=True)
        roots[isl[0]] = root
        for v in isl:
            path = tree_path(tree, isl[0], v) if v != isl[0] else []
            flux_map[v] = root + sum((s * Phi_(b.id) for b, s in path), sp.Integer(0))

    energies = []
    for b in g.branches:
        if b.capacitive:
            energies.append(element_energy(b.element, charge_map[b.id]))
        else:
            energies.append(element_energy(b.element, flux_map[b.head] - flux_map[b.tail]))
    for el in g.biases:
        energies.append(element_energy(el, flux_map[el.head] - flux_map[el.tail]))

    if netlist is None:
        netlist = Netlist(tuple(b.element for b in g.branches) + g.biases, g.nodes)
    return ReducedSystem(
        graph=g, netlist=netlist, tree=tuple(tids), K=Kmat, pairs=tuple(pairs),
        energies=tuple(energies), charge_map=charge_map, flux_map=flux_map,
        roots={k: v for k, v in roots.items()}, stages=("canonical",),
    )


# ---------------------------------------------------------------- stage 2

def fold_batteries(rs: ReducedSystem) -> ReducedSystem:
    g = rs.graph
    mapping = {}
    fixed = {}
    keep = []
    for b in g.cap_branches:
        if b.kind is Kind.VOLTAGE_SOURCE and b.id in rs.tree:
            raise ReductionError(
                f"voltage source {b.id} is needed in the spanning tree: its node would have a "
                "driven flux; add a capacitor in series or parallel"
            )
        if b.kind is Kind.FLUX_BATTERY and b.id not in rs.tree:
            raise ReductionError(f"flux battery {b.id} closes a loop of batteries; cannot place it in the tree")
    for p in rs.pairs:
        b = g.branch(p.name)
        if b.kind is Kind.FLUX_BATTERY:
            phi = value_expr(b.element.param("phi"))
            fixed[p.name] = phi
            mapping[p.flux] = phi
            # the pair's only dynamics is dPhi_b/dt = alpha*dphi_ext/dt; Q_b enters H as Q_b*V_b only
            mapping[p.charge] = sp.Integer(0)
        else:
            keep.append(p)
    if not fixed:
        return replace(rs, stages=rs.stages + ("batteries",))
    return rs._subs(mapping, pairs=tuple(keep), batteries=fixed, stages=rs.stages + ("batteries",))


# ---------------------------------------------------------------- stage 3

def solve_island_constraints(rs: ReducedSystem) -> ReducedSystem:
    """Eliminate the free node-flux offsets of inductively shunted islands."""
    roots = [r for r in rs.roots.values() if isinstance(r, sp.Symbol)]
    if not roots:
        return replace(rs, stages=rs.stages + ("islands",))
    rootset = set(roots)
    E = sp.Integer(0)
    for en in rs.energies:
        if en.charge_type or not (en.arg.free_symbols & rootset):
            continue
        if en.form == COS:
            raise ReductionError(
                f"junction {en.id} couples inductively shunted islands; the resulting flux constraint "
                "is nonlinear (add a capacitor across it)"
            )
        E += en.expr()
    eqs = [sp.diff(E, r) for r in roots]
    sol = sp.linsolve(eqs, roots)
    if not sol or len(sol) != 1:
        raise ReductionError("island flux constraints have no unique solution")
    values = next(iter(sol))
    if any(v.free_symbols & rootset for v in values):
        raise ReductionError("island flux constraints are underdetermined (island attached only through biases?)")
    mapping = {r: sp.simplify(v) for r, v in zip(roots, values)}
    new_roots = {k: (mapping.get(v, v)) for k, v in rs.roots.items()}
    return rs._subs(mapping, roots=new_roots, stages=rs.stages + ("islands",))


# ---------------------------------------------------------------- stage 4

def _loop_groups(rs: ReducedSystem) -> list[list[str]]:
    nontree = list(rs.K)
    if not nontree:
        return []
    dsu = _DSU(nontree)
    owner: dict[str, str] = {}
    for a in nontree:
        for e in [a, *rs.K[a]]:
            if e in owner:
                dsu.union(owner[e], a)
            else:
                owner[e] = a
    groups: dict[str, list[str]] = {}
    for a in nontree:
        groups.setdefault(dsu.find(a), []).append(a)
    return list(groups.values())


def _numeric(x: sp.Expr) -> float | None:
    try:
        return float(x)
    except (TypeError, ValueError):
        return None


def solve_loop_constraints(rs: ReducedSystem, allow_multivalued: bool = False) -> ReducedSystem:
    """Solve the voltage constraint of each capacitive loop for its non-tree charge."""
    constraints = []
    mapping: dict[sp.Symbol, sp.Expr] = {}
    implicit_groups = []
    implicit_ids: set[str] = set()
    for group in _loop_groups(rs):
        unknowns = [q_(a) for a in group]
        uset = set(unknowns)
        involved = [en for en in rs.energies if en.charge_type and en.arg.free_symbols & uset]
        E = sum((en.expr() for en in involved), sp.Integer(0))
        residuals = {a: sp.diff(E, q_(a)) for a in group}
        if any(en.form == COS for en in involved):
            if len(group) > 1:
                raise ReductionError(
                    "phase-slip element in a set of coupled capacitive loops "
                    f"({', '.join(group)}); only single nonanalytic loops are supported"
                )
            a = group[0]
            quad = sum((en.param * en.arg.diff(q_(a)) ** 2 for en in involved if en.form == QUAD), sp.Integer(0))
            cosc = sum((en.param * (2 * sp.pi / en.period) ** 2 * en.arg.diff(q_(a)) ** 2
                        for en in involved if en.form == COS), sp.Integer(0))
            qn, cn = _numeric(quad), _numeric(cosc)
            multivalued = qn is not None and cn is not None and cn >= qn
            if multivalued and not allow_multivalued:
                raise MultivaluedConstraintError(
                    f"capacitive loop through {a} has a multivalued nonanalytic constraint "
                    f"(phase-slip stiffness {cn:.4g} >= inverse capacitance {qn:.4g}); "
                    "pass allow_multivalued to take the global-minimum branch"
                )
            implicit_groups.append(ImplicitGroup(q_(a), tuple(involved), multivalued))
            implicit_ids |= {en.id for en in involved}
            constraints.append(Constraint(a, "nonanalytic", residuals[a]))
            continue
        sol = sp.linsolve(list(residuals.values()), unknowns)
        if not sol or len(sol) != 1:
            raise ReductionError(f"capacitive loop constraint through {', '.join(group)} has no solution "
                                 "(loop made only of sources?)")
        values = next(iter(sol))
        if any(v.free_symbols & uset for v in values):
            raise ReductionError(f"capacitive loop constraint through {', '.join(group)} is degenerate")
        for a, u, v in zip(group, unknowns, values):
            v = sp.expand(v)
            mapping[u] = v
            constraints.append(Constraint(a, "linear", residuals[a], v))

    constraints.sort(key=lambda c: natural_key(c.edge))
    out = rs._subs(mapping)
    if implicit_groups:
        explicit = tuple(en for en in out.energies if en.id not in implicit_ids)
        implicit_groups = [
            replace(ig, energies=tuple(en.subs(mapping) for en in ig.energies)) for ig in implicit_groups
        ]
        out = replace(out, energies=explicit)
    return replace(out, constraints=tuple(constraints), implicit=tuple(implicit_groups),
                   stages=rs.stages + ("loops",))


# ---------------------------------------------------------------- stage 5

def symmetry_islands(rs: ReducedSystem) -> list[tuple[str, ...]]:
    """Node sets whose common flux shift leaves the energy unchanged.

    Capacitively shunted islands, merged across inductive biases and flux
    batteries, whose energies depend on absolute island fluxes.
    """
    g = rs.graph
    edges = [(b.tail, b.head) for b in g.ind_branches]
    edges += [(el.tail, el.head) for el in g.biases]
    edges += [(b.tail, b.head) for b in g.cap_branches if b.kind is Kind.FLUX_BATTERY]
    return components(g.nodes, edges)


def noether_reduce(rs: ReducedSystem, offsets: Mapping[str, object] | None = None) -> ReducedSystem:
    """Fix each conserved island charge and drop its conjugate shift mode.

    ``offsets`` maps a node name to the trapped charge (coulombs) of the
    island containing it; the default is zero.
    """
    offsets = dict(offsets or {})
    g = rs.graph
    islands = symmetry_islands(rs)
    if len(islands) <= 1 or not rs.pairs:
        if offsets:
            raise ReductionError("offset charge given but the circuit has no conserved island charge")
        return replace(rs, stages=rs.stages + ("noether",))
    reduced_islands = [isl for isl in islands if g.nodes[0] not in isl]
    names = [p.name for p in rs.pairs]
    bvecs = []
    for isl in reduced_islands:
        J = set(isl)
        b = [int(g.branch(f).head in J) - int(g.branch(f).tail in J) for f in names]
        if not any(b):
            raise AssertionError(f"island {isl} has no tree edge crossing it")
        bvecs.append(b)
    island_of_offset = {}
    for node, val in offsets.items():
        hit = [isl for isl in reduced_islands if node in isl]
        if not hit:
            if any(node in isl for isl in islands):
                raise ReductionError(f"node {node} lies in the reference island; its charge is not independent")
            raise ReductionError(f"unknown node {node!r} in offset charge")
        island_of_offset[hit[0]] = val

    # pivot columns with a nonsingular (hence unimodular) island block
    Bm = np.array(bvecs, dtype=int)
    pivots: list[int] = []
    for j in range(len(names)):
        if exact_rank(Bm[:, pivots + [j]]) == len(pivots) + 1:
            pivots.append(j)
        if len(pivots) == len(bvecs):
            break
    if len(pivots) < len(bvecs):
        raise AssertionError("island charge vectors are dependent")
    # assign pivots to islands through the block inverse; each island takes one column
    n = len(names)
    S = sp.eye(n)
    for k, j in enumerate(pivots):
        for i in range(n):
            S[i, j] = bvecs[k][i]
    det = S.det()
    if det not in (1, -1):
        raise AssertionError(f"Noether transform not unimodular (det {det})")
    Sinv = S.inv()

    Psi = [sp.Symbol("Psi_" + f, real=True) for f in names]
    P = [sp.Symbol("P_" + f, real=True) for f in names]
    mapping = {}
    for i, p in enumerate(rs.pairs):
        mapping[p.flux] = sum((S[i, j] * Psi[j] for j in range(n)), sp.Integer(0))
        mapping[p.charge] = sum((P[j] * Sinv[j, i] for j in range(n)), sp.Integer(0))
    charges = []
    for k, j in enumerate(pivots):
        isl = reduced_islands[k]
        val = island_of_offset.get(isl, 0)
        val = sp.sympify(val)
        mapping_val = {P[j]: val}
        mapping.update({s: e.xreplace(mapping_val) for s, e in mapping.items()})
        qexpr = sp.expand(sum((bvecs[k][i] * rs.pairs[i].charge_def for i in range(n)), sp.Integer(0)))
        charges.append(NoetherCharge(isl, qexpr, val, names[j]))
    out = rs._subs(mapping)
    dropped_psi = {Psi[j] for j in pivots}
    for en in out.energies + tuple(e for ig in out.implicit for e in ig.energies):
        if en.arg.free_symbols & dropped_psi:
            raise AssertionError(f"energy of {en.id} depends on a Noether shift mode")
    rename = {}
    new_pairs = []
    Sm = S
    for i, f in enumerate(names):
        if i in pivots:
            rename[Psi[i]] = sp.Integer(0)
            continue
        old = rs.pairs[i]
        rename[Psi[i]] = old.flux
        rename[P[i]] = old.charge
        fdef = sp.expand(sum((Sinv[i, k] * rs.pairs[k].flux_def for k in range(n)), sp.Integer(0)))
        qdef = sp.expand(sum((rs.pairs[k].charge_def * Sm[k, i] for k in range(n)), sp.Integer(0)))
        new_pairs.append(replace(old, flux_def=fdef, charge_def=qdef))
    out = out._subs(rename)
    return replace(out, pairs=tuple(new_pairs), noether=tuple(charges), stages=rs.stages + ("noether",))


# ---------------------------------------------------------------- tree change

def tree_transform(rs: ReducedSystem, rs2: ReducedSystem) -> sp.Matrix:
    """Integer matrix Sigma with Phi = Sigma Phi' and Q' = Q Sigma.

    Both systems must be canonical coordinates of the same graph. Sigma is
    also rebuilt as a product of single edge-exchange factors, each of the
    form D(I + N), and the two constructions are asserted equal.
    """
    g = rs.graph
    if g is not rs2.graph and (g.nodes != rs2.graph.nodes or
                               [b.id for b in g.branches] != [b.id for b in rs2.graph.branches]):
        raise ReductionError("tree_transform needs two systems built from the same graph")
    Sigma = _sigma(g, list(rs.tree), list(rs2.tree))
    # exchange path: swap one edge at a time
    cur = list(rs.tree)
    prod = sp.eye(len(cur))
    target = list(rs2.tree)
    while set(cur) != set(target):
        g_in = next(e for e in target if e not in cur)
        trial_tree = [g.branch(e) for e in cur]
        path = tree_path(trial_tree, g.branch(g_in).tail, g.branch(g_in).head)
        f_out = next(b.id for b, _ in path if b.id not in target)
        nxt = [g_in if e == f_out else e for e in cur]
        step = _sigma(g, cur, nxt)
        _assert_exchange_factor(step)
        prod = prod * step
        cur = nxt
    # reorder columns from the walked order to rs2's order
    perm = sp.zeros(len(cur), len(cur))
    for j, e in enumerate(target):
        perm[cur.index(e), j] = 1
    if prod * perm != Sigma:
        raise AssertionError("exchange-path product disagrees with direct tree transform")
    return Sigma


def _sigma(g: CircuitGraph, t1: Sequence[str], t2: Sequence[str]) -> sp.Matrix:
    """Sigma[f, h] = coefficient of Phi'_h (tree t2) in Phi_f (tree t1)."""
    tree2 = [g.branch(e) for e in t2]
    S = sp.zeros(len(t1), len(t2))
    for i, f in enumerate(t1):
        b = g.branch(f)
        for e, s in tree_path(tree2, b.tail, b.head):
            S[i, list(t2).index(e.id)] += s
    return S


def _assert_exchange_factor(step: sp.Matrix) -> None:
    # identity except the row of the outgoing edge, whose diagonal entry is +-1:
    # D (I + N) with N supported on that row off the diagonal
    n = step.shape[0]
    rows = [i for i in range(n) if step[i, :] != sp.eye(n)[i, :]]
    if len(rows) > 1:
        raise AssertionError("tree exchange factor changes more than one row")
    if rows and step[rows[0], rows[0]] not in (1, -1):
        raise AssertionError("tree exchange factor is not unimodular")


# ---------------------------------------------------------------- gauge

def apply_gauge(rs: ReducedSystem, gauge: str = "as-placed") -> ReducedSystem:
    """``irrotational`` shifts fluxes by multiples of the external flux so that
    no term linear in a charge times the flux rate survives."""
    if gauge == "as-placed":
        return replace(rs, gauge=gauge)
    if gauge != "irrotational":
        raise ReductionError(f"unknown gauge {gauge!r}")
    H = sum((en.expr() for en in rs.energies if en.form != COS), sp.Integer(0))
    H = sp.expand(H)
    dots = sorted((s for s in H.free_symbols if s.name.startswith("dot_")), key=lambda s: s.name)
    for ig in rs.implicit:
        for en in ig.energies:
            if any(s.name.startswith("dot_") for s in en.param.free_symbols | en.arg.free_symbols):
                log.warning("flux rate inside a nonanalytic loop is left in the as-placed gauge")
    mapping = {}
    extra = []
    for sd in dots:
        base = symbol(sd.name[4:])
        for p in rs.pairs:
            w = sp.diff(H, p.charge, sd)
            if w == 0:
                continue
            mapping[p.flux] = mapping.get(p.flux, p.flux) + w * base
            extra.append(ElementEnergy(f"gauge_{base.name}_{p.name}", LIN, -w * sd, p.charge, True))
    out = rs._subs(mapping)
    return replace(out, energies=out.energies + tuple(extra), gauge=gauge)


# ---------------------------------------------------------------- compactness

def _flux_usage(rs: ReducedSystem, p: Pair) -> tuple[bool, bool, bool]:
    """(appears in a flux cosine, appears polynomially, all cosine coefficients integer)."""
    in_cos = poly = False
    integer = True
    for en in rs.energies:
        if en.charge_type or p.flux not in en.arg.free_symbols:
            continue
        if en.form == COS:
            in_cos = True
            c = en.arg.coeff(p.flux)
            if not (c.is_Integer):
                integer = False
        else:
            poly = True
    return in_cos, poly, integer


def _charge_nonlinear(rs: ReducedSystem, p: Pair) -> bool:
    for en in rs.energies:
        if en.charge_type and en.form == COS and p.charge in en.arg.free_symbols:
            return True
    return any(p.charge in ig.variables for ig in rs.implicit)


def mark_compact(rs: ReducedSystem, policy: str = "auto", flags: Mapping[str, bool] | None = None) -> ReducedSystem:
    flags = dict(flags or {})
    unknown = set(flags) - {p.name for p in rs.pairs}
    if unknown:
        raise ReductionError(f"compact flag for unknown mode(s): {', '.join(sorted(unknown))}")
    new = []
    for p in rs.pairs:
        in_cos, poly, integer = _flux_usage(rs, p)
        auto = in_cos and not poly and integer and not _charge_nonlinear(rs, p)
        if policy == "auto":
            flag = flags.get(p.name, auto)
        elif policy == "manual":
            flag = flags.get(p.name, False)
        else:
            raise ReductionError(f"unknown compactness policy {policy!r}")
        if flag and poly:
            raise ReductionError(f"mode {p.name} cannot be compact: its flux enters polynomially")
        if flag and not integer:
            raise ReductionError(f"mode {p.name} cannot be compact: flux cosine with non-integer winding")
        new.append(replace(p, compact=bool(flag)))
    return replace(rs, pairs=tuple(new))


# ---------------------------------------------------------------- pipeline

def reduce_circuit(netlist: Netlist, tree: Sequence[str] | None = None, *, noether: bool = True,
                   offsets: Mapping[str, object] | None = None, gauge: str = "as-placed",
                   allow_multivalued: bool = False, compact: Mapping[str, bool] | None = None,
                   compact_policy: str = "auto") -> ReducedSystem:
    g = build_graph(netlist)
    t = spanning_tree(g, tree)
    ns = null_structure(g, t)
    rs = canonical_coordinates(g, ns, t, netlist)
    rs = fold_batteries(rs)
    rs = solve_island_constraints(rs)
    rs = solve_loop_constraints(rs, allow_multivalued=allow_multivalued)
    if noether:
        rs = noether_reduce(rs, offsets)
    elif offsets:
        raise ReductionError("offset charges need Noether reduction")
    rs = apply_gauge(rs, gauge)
    return mark_compact(rs, compact_policy, compact)


def to_json(rs: ReducedSystem) -> dict:
    s = sp.sstr
    return {
        "tree": list(rs.tree),
        "K": {a: dict(sorted(row.items())) for a, row in sorted(rs.K.items())},
        "M": rs.M.tolist(),
        "pairs": [
            {"name": p.name, "flux": p.flux.name, "charge": p.charge.name,
             "flux_def": s(p.flux_def), "charge_def": s(p.charge_def), "compact": p.compact}
            for p in rs.pairs
        ],
        "constraints": [
            {"edge": c.edge, "kind": c.kind, "residual": s(c.residual),
             "solution": None if c.solution is None else s(c.solution)}
            for c in rs.constraints
        ],
        "noether": [
            {"island": list(n.island), "charge": s(n.expr), "value": s(n.value), "pivot": n.pivot}
            for n in rs.noether
        ],
        "batteries": {k: s(v) for k, v in sorted(rs.batteries.items())},
        "gauge": rs.gauge,
    }


def canonical_transform(rs: ReducedSystem, S, names: Sequence[str] | None = None) -> ReducedSystem:
    """Integer unimodular change of pairs: Phi = S Phi', Q' = Q S.

    ``names`` labels the new pairs (default: the old names in order).
    """
    S = sp.Matrix(S)
    n = len(rs.pairs)
    if S.shape != (n, n) or S.det() not in (1, -1) or any(not x.is_Integer for x in S):
        raise ReductionError("canonical transform must be an integer unimodular matrix")
    names = list(names or [p.name for p in rs.pairs])
    Sinv = S.inv()
    newF = [Phi_(m) for m in names]
    newQ = [Q_(m) for m in names]
    tmpF = [sp.Symbol("Psi_" + m, real=True) for m in names]
    tmpQ = [sp.Symbol("P_" + m, real=True) for m in names]
    mapping = {}
    for i, p in enumerate(rs.pairs):
        mapping[p.flux] = sum((S[i, j] * tmpF[j] for j in range(n)), sp.Integer(0))
        mapping[p.charge] = sum((tmpQ[j] * Sinv[j, i] for j in range(n)), sp.Integer(0))
    out = rs._subs(mapping)
    out = out._subs({**dict(zip(tmpF, newF)), **dict(zip(tmpQ, newQ))})
    pairs = []
    for j, m in enumerate(names):
        fdef = sp.expand(sum((Sinv[j, k] * rs.pairs[k].flux_def for k in range(n)), sp.Integer(0)))
        qdef = sp.expand(sum((rs.pairs[k].charge_def * S[k, j] for k in range(n)), sp.Integer(0)))
        pairs.append(Pair(m, newF[j], newQ[j], fdef, qdef))
    return mark_compact(replace(out, pairs=tuple(pairs), stages=out.stages + ("transform",)))
