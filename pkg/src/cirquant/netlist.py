"""Line-based circuit description: parsing, printing and validation.

Format, one element per line::

    # comment
    PARAM phi_ext=0.5phi0
    PARAM Vg
    JJ  j1 1 2 EJ=5GHz
    C   c1 1 2 C=50fF
    V   vg 3 1 V=Vg
    FB  b1 3 4 phi=0.5*phi_ext
    IB  bias 1 2 MI=-1e6*phi_ext

Values are numbers with an optional SI prefix and unit, or a reference
``[coef*]name`` to a declared symbol.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Union

from . import constants as K


class NetlistError(ValueError):
    """Raised for malformed netlist text."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)


class Kind(str, Enum):
    CAPACITOR = "C"
    INDUCTOR = "L"
    JOSEPHSON = "JJ"
    PHASE_SLIP = "QPS"
    VOLTAGE_SOURCE = "V"
    FLUX_BATTERY = "FB"
    INDUCTIVE_BIAS = "IB"

    @property
    def capacitive(self) -> bool:
        return self in _CAPACITIVE

    @property
    def inductive(self) -> bool:
        return self in (Kind.INDUCTOR, Kind.JOSEPHSON)


_CAPACITIVE = (Kind.CAPACITOR, Kind.PHASE_SLIP, Kind.VOLTAGE_SOURCE, Kind.FLUX_BATTERY)


@dataclass(frozen=True)
class SymbolRef:
    """A parameter bound to ``coef * name`` of an external symbol."""

    name: str
    coef: Fraction = Fraction(1)

    def __str__(self) -> str:
        if self.coef == 1:
            return self.name
        if self.coef == -1:
            return "-" + self.name
        return f"{format_number(self.coef)}*{self.name}"


Value = Union[Fraction, SymbolRef]


@dataclass(frozen=True)
class Element:
    id: str
    kind: Kind
    tail: str
    head: str
    params: tuple[tuple[str, Value], ...]

    def param(self, key: str) -> Value:
        return dict(self.params)[key]


@dataclass(frozen=True)
class Netlist:
    elements: tuple[Element, ...]
    nodes: tuple[str, ...]
    symbols: tuple[tuple[str, Fraction | None], ...] = ()

    @property
    def symbol_defaults(self) -> dict[str, Fraction | None]:
        return dict(self.symbols)

    def element(self, eid: str) -> Element:
        for el in self.elements:
            if el.id == eid:
                return el
        raise KeyError(eid)


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self) -> bool:
        return bool(self.errors or self.warnings)


# ---------------------------------------------------------------- units

_PREFIXES = {
    "f": Fraction(1, 10**15),
    "p": Fraction(1, 10**12),
    "n": Fraction(1, 10**9),
    "u": Fraction(1, 10**6),
    "µ": Fraction(1, 10**6),
    "m": Fraction(1, 10**3),
    "k": Fraction(10**3),
    "M": Fraction(10**6),
    "G": Fraction(10**9),
    "T": Fraction(10**12),
}

# unit -> (dimension, factor to SI)
_UNITS: dict[str, tuple[str, Fraction]] = {
    "F": ("capacitance", Fraction(1)),
    "H": ("inductance", Fraction(1)),
    "J": ("energy", Fraction(1)),
    "Hz": ("energy", K.PLANCK),
    "A": ("current", Fraction(1)),
    "V": ("voltage", Fraction(1)),
    "Wb": ("flux", Fraction(1)),
    "phi0": ("flux", K.PHI0),
    "C": ("charge", Fraction(1)),
    "e": ("charge", K.E_CHARGE),
    "2e": ("charge", K.CHARGE_2E),
}

_NUMBER = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?(?:/\d+)?")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")
_SYMREF = re.compile(r"(?:(?P<coef>[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?(?:/\d+)?)\*|(?P<neg>-))?(?P<name>[A-Za-z_][A-Za-z0-9_]*)$")


def parse_quantity(text: str) -> tuple[Fraction, str | None]:
    """Parse ``<number>[prefix][unit]`` into an SI value and its dimension.

    The dimension is None when no unit is given.
    """
    m = _NUMBER.match(text)
    if not m:
        raise ValueError(f"not a number: {text!r}")
    number = Fraction(m.group(0))
    suffix = text[m.end():]
    if not suffix:
        return number, None
    if suffix in _UNITS:
        dim, factor = _UNITS[suffix]
        return number * factor, dim
    if suffix[0] in _PREFIXES:
        rest = suffix[1:]
        if rest == "":
            return number * _PREFIXES[suffix[0]], None
        if rest in _UNITS:
            dim, factor = _UNITS[rest]
            return number * _PREFIXES[suffix[0]] * factor, dim
    raise ValueError(f"unknown unit suffix {suffix!r} in {text!r}")


def format_number(x: Fraction) -> str:
    """Exact text for a Fraction: a decimal when it terminates, else p/q."""
    x = Fraction(x)
    if x.denominator == 1:
        return str(x.numerator)
    d = x.denominator
    twos = fives = 0
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    if d != 1:
        return f"{x.numerator}/{x.denominator}"
    digits = max(twos, fives)
    scaled = abs(x) * 10**digits
    assert scaled.denominator == 1
    s = str(scaled.numerator).rjust(digits + 1, "0")
    s = s[:-digits] + "." + s[-digits:]
    s = s.rstrip("0").rstrip(".")
    # scientific form keeps tiny SI values readable
    mant, exp = _sci(scaled.numerator, digits)
    sci = f"{mant}e{exp}"
    out = sci if len(sci) < len(s) else s
    return ("-" if x < 0 else "") + out


def _sci(n: int, digits: int) -> tuple[str, int]:
    s = str(n)
    exp = len(s) - 1 - digits
    mant = s[0] + ("." + s[1:].rstrip("0") if s[1:].rstrip("0") else "")
    return mant, exp


# ------------------------------------------------------------- element specs

# kind -> {accepted key: (canonical key, allowed dimensions, converter)}
def _ej_from_ic(ic: Fraction) -> Fraction:
    return Fraction(float(K.PHI0 * ic) / (2 * math.pi))


def _eq_from_vq(vq: Fraction) -> Fraction:
    return Fraction(float(K.CHARGE_2E * vq) / (2 * math.pi))


_SPECS: dict[Kind, dict[str, tuple[str, tuple[str | None, ...], object]]] = {
    Kind.CAPACITOR: {"C": ("C", ("capacitance", None), None)},
    Kind.INDUCTOR: {"L": ("L", ("inductance", None), None)},
    Kind.JOSEPHSON: {
        "EJ": ("EJ", ("energy", None), None),
        "IC": ("EJ", ("current",), _ej_from_ic),
    },
    Kind.PHASE_SLIP: {
        "EQ": ("EQ", ("energy", None), None),
        "VQ": ("EQ", ("voltage",), _eq_from_vq),
    },
    Kind.VOLTAGE_SOURCE: {"V": ("V", ("voltage", None), None)},
    Kind.FLUX_BATTERY: {"phi": ("phi", ("flux", None), None)},
    Kind.INDUCTIVE_BIAS: {"MI": ("MI", ("flux", None), None)},
}

_REQUIRED = {kind: sorted({v[0] for v in spec.values()}) for kind, spec in _SPECS.items()}

_KIND_ALIASES = {k.value: k for k in Kind}


def _parse_value(token: str, dims: tuple[str | None, ...], converter, lineno: int, col: int) -> Value:
    m = _SYMREF.match(token)
    if m:
        coef = Fraction(1)
        if m.group("coef"):
            coef = Fraction(m.group("coef"))
        elif m.group("neg"):
            coef = Fraction(-1)
        if converter is not None:
            raise NetlistError(f"symbolic value {token!r} not allowed for a converted parameter", lineno, col)
        return SymbolRef(m.group("name"), coef)
    try:
        value, dim = parse_quantity(token)
    except ValueError as exc:
        raise NetlistError(str(exc), lineno, col) from None
    if dim not in dims:
        raise NetlistError(f"value {token!r} has dimension {dim}, expected {dims[0]}", lineno, col)
    if converter is not None:
        value = converter(value)
    return value


def parse(text: str) -> Netlist:
    """Parse netlist text. Element order is preserved."""
    elements: list[Element] = []
    nodes: list[str] = []
    symbols: dict[str, Fraction | None] = {}
    seen_ids: set[str] = set()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        tokens = [(m.group(0), m.start() + 1) for m in re.finditer(r"\S+", line)]
        head, col0 = tokens[0]
        if head.upper() == "PARAM":
            if len(tokens) != 2:
                raise NetlistError("PARAM expects exactly one name[=value]", lineno, col0)
            tok, col = tokens[1]
            name, _, val = tok.partition("=")
            if not _IDENT.match(name):
                raise NetlistError(f"invalid symbol name {name!r}", lineno, col)
            if name in symbols:
                raise NetlistError(f"duplicate PARAM {name!r}", lineno, col)
            default = None
            if val:
                try:
                    default, _ = parse_quantity(val)
                except ValueError as exc:
                    raise NetlistError(str(exc), lineno, col + len(name) + 1) from None
            symbols[name] = default
            continue

        kind = _KIND_ALIASES.get(head.upper() if head.upper() != "QPS" else "QPS")
        if kind is None:
            kind = _KIND_ALIASES.get(head)
        if kind is None:
            raise NetlistError(f"unknown element kind {head!r}", lineno, col0)
        if len(tokens) < 4:
            raise NetlistError("expected '<KIND> <id> <tail> <head> <param>=<value> ...'", lineno, col0)
        (eid, ecol), (tail, _), (hd, _) = tokens[1:4]
        if not re.fullmatch(r"[A-Za-z0-9_]+", eid):
            raise NetlistError(f"invalid element id {eid!r}", lineno, ecol)
        if eid in seen_ids:
            raise NetlistError(f"duplicate element id {eid!r}", lineno, ecol)
        seen_ids.add(eid)

        spec = _SPECS[kind]
        params: dict[str, Value] = {}
        for tok, col in tokens[4:]:
            key, eq, val = tok.partition("=")
            if not eq or not val:
                raise NetlistError(f"expected <param>=<value>, got {tok!r}", lineno, col)
            if key not in spec:
                raise NetlistError(f"unknown parameter {key!r} for {kind.value}", lineno, col)
            canon, dims, conv = spec[key]
            if canon in params:
                raise NetlistError(f"duplicate parameter {canon!r}", lineno, col)
            params[canon] = _parse_value(val, dims, conv, lineno, col + len(key) + 1)
        missing = [k for k in _REQUIRED[kind] if k not in params]
        if missing:
            raise NetlistError(f"missing parameter {missing[0]!r} for {kind.value} {eid}", lineno, col0)

        for node in (tail, hd):
            if node not in nodes:
                nodes.append(node)
        for v in params.values():
            if isinstance(v, SymbolRef) and v.name not in symbols:
                symbols[v.name] = None
        elements.append(Element(eid, kind, tail, hd, tuple(sorted(params.items()))))

    return Netlist(tuple(elements), tuple(nodes), tuple(symbols.items()))


def dumps(netlist: Netlist) -> str:
    """Canonical text form; ``parse(dumps(n)) == n``."""
    lines = []
    for name, default in netlist.symbols:
        lines.append(f"PARAM {name}" + ("" if default is None else f"={format_number(default)}"))
    for el in netlist.elements:
        params = " ".join(f"{k}={_fmt_value(v)}" for k, v in el.params)
        lines.append(f"{el.kind.value} {el.id} {el.tail} {el.head} {params}")
    return "\n".join(lines) + "\n"


def _fmt_value(v: Value) -> str:
    return str(v) if isinstance(v, SymbolRef) else format_number(v)


def load(path) -> Netlist:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


# ------------------------------------------------------------- validation

def _components(nodes: Iterable[str], edges: Iterable[tuple[str, str]]) -> list[set[str]]:
    parent = {v: v for v in nodes}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra
    groups: dict[str, set[str]] = {}
    for v in parent:
        groups.setdefault(find(v), set()).add(v)
    return list(groups.values())


# names the reduction uses for its own variables
RESERVED_PREFIXES = ("Q_", "Phi_", "q_", "P_", "Psi_", "dot_")


def validate(netlist: Netlist) -> ValidationReport:
    report = ValidationReport()
    branches = [el for el in netlist.elements]
    for el in branches:
        if el.tail == el.head:
            report.errors.append(f"self-loop: element {el.id} connects node {el.tail} to itself")
        for key in ("C", "L"):
            if key in dict(el.params):
                v = el.param(key)
                if isinstance(v, Fraction) and v <= 0:
                    report.errors.append(f"nonpositive {key} on element {el.id}")

    if netlist.nodes and len(_components(netlist.nodes, [(e.tail, e.head) for e in branches])) > 1:
        report.errors.append("disconnected: circuit graph has more than one connected component")

    cap = [e for e in branches if e.kind.capacitive and e.tail != e.head]
    cap_islands = _components(netlist.nodes, [(e.tail, e.head) for e in cap])
    island_of = {v: i for i, isl in enumerate(cap_islands) for v in isl}

    # capacitive edges on a cycle of capacitive edges
    for el in cap:
        if el.kind is not Kind.PHASE_SLIP:
            continue
        others = [(e.tail, e.head) for e in cap if e is not el]
        comps = _components(netlist.nodes, others)
        if any(el.tail in c and el.head in c for c in comps):
            report.warnings.append(
                f"capacitive loop containing QPS {el.id}: nonanalytic constraint "
                "(no series inductor; singular circuit)"
            )
    for el in branches:
        if el.kind is Kind.JOSEPHSON and island_of.get(el.tail) != island_of.get(el.head):
            report.warnings.append(f"JJ {el.id} without parallel capacitor")

    reserved = {f"phi_{v}" for v in netlist.nodes} | {f"r_{v}" for v in netlist.nodes}
    for name, _ in netlist.symbols:
        if name in reserved or name.startswith(RESERVED_PREFIXES):
            report.errors.append(f"symbol {name!r} collides with an internal variable name")

    coef_sums: Counter = Counter()
    for el in branches:
        if el.kind is Kind.FLUX_BATTERY:
            v = el.param("phi")
            if isinstance(v, SymbolRef):
                coef_sums[v.name] += v.coef
    for name, total in coef_sums.items():
        if abs(total) != 1:
            report.warnings.append(
                f"flux batteries for {name} carry fractions summing to {format_number(total)}, not 1"
            )
    return report
