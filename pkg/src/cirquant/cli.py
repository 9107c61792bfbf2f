"""Command line entry point: ``cirquant analyze|hamiltonian|spectrum|check``.

Exit status: 0 on success, 1 for input or validation errors, 2 when a
numerical solve does not converge. Results go to stdout, diagnostics to
stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import __version__
from . import checks as CK
from . import graph as G
from . import ham as H
from . import quantize as Qz
from . import reduce as R
from .netlist import NetlistError, Netlist, load, parse, parse_quantity, validate

SCHEMA_VERSION = 1
log = logging.getLogger("cirquant")


class UsageError(ValueError):
    """Bad flag value; the message names the flag."""


# ---------------------------------------------------------------- argument parsing

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("netlist", help="netlist file, or - for standard input")
    p.add_argument("--format", choices=("text", "json"), default="text", help="output format")
    p.add_argument("--set", action="append", default=[], metavar="NAME=VALUE",
                   help="bind a symbol, e.g. phi_ext=0.5phi0 (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _reduction(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tree", help="comma-separated capacitive edges forming the spanning tree")
    p.add_argument("--gauge", choices=("as-placed", "irrotational"), default="as-placed")
    p.add_argument("--offset-charge", action="append", default=[], metavar="island=NODE:VALUE",
                   help="trapped charge of the island containing NODE (e.g. island=3:0.25e)")
    p.add_argument("--no-noether", action="store_true", help="keep island charge modes")
    p.add_argument("--allow-multivalued", action="store_true",
                   help="accept multivalued nonanalytic constraints (global-minimum branch)")
    p.add_argument("--compact", action="append", default=[], metavar="MODE=yes|no",
                   help="override the compactness of a mode")
    p.add_argument("--compact-policy", choices=("auto", "manual"), default="auto")
    p.add_argument("--dump-reduction", action="store_true", help="include the reduction record in the output")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cirquant", description="Circuit netlist to Hamiltonian and spectrum.")
    ap.add_argument("--version", action="version", version=f"cirquant {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="graph structure: loops, islands, genus")
    _common(a)
    a.add_argument("--tree", help="comma-separated capacitive edges forming the spanning tree")
    a.add_argument("--dot", action="store_true", help="print a Graphviz rendering instead")

    h = sub.add_parser("hamiltonian", help="reduced classical Hamiltonian")
    _common(h)
    _reduction(h)
    h.add_argument("--export", choices=("text", "latex", "json"), default=None,
                   help="expression format (default follows --format)")

    s = sub.add_parser("spectrum", help="lowest eigenvalues")
    _common(s)
    _reduction(s)
    s.add_argument("--levels", type=int, default=6)
    s.add_argument("--basis", action="append", default=[], metavar="MODE=KIND",
                   help=f"basis per mode, KIND in {', '.join(Qz.KINDS)}")
    s.add_argument("--size", action="append", default=[], metavar="MODE=N", help="truncation per mode")
    s.add_argument("--grid-points", type=int, default=16, help="grid points per period for grid bases")
    s.add_argument("--boundary", choices=("open", "periodic"), default="open")
    s.add_argument("--fd-order", type=int, default=16)
    s.add_argument("--check-convergence", action="store_true", help="re-solve at doubled truncation")
    s.add_argument("--convergence-tol", type=float, default=None,
                   help="exit 2 if the doubled-truncation change exceeds this (GHz)")
    s.add_argument("--sweep", metavar="NAME=START:STOP:NUM", help="sweep one symbol")
    s.add_argument("--workers", type=int, default=1)

    c = sub.add_parser("check", help="run the invariant suite")
    _common(c)
    c.add_argument("--only", action="append", default=[], choices=sorted(CK.SUITE), help="run a subset")
    return ap


# ---------------------------------------------------------------- helpers

def _read(path: str) -> Netlist:
    if path == "-":
        return parse(sys.stdin.read())
    return load(path)


def parse_binding(text: str, flag: str = "--set") -> tuple[str, Fraction]:
    name, eq, value = text.partition("=")
    if not eq or not name:
        raise UsageError(f"{flag} {text!r}: expected NAME=VALUE")
    try:
        val, _ = parse_quantity(value.strip())
    except ValueError as exc:
        raise UsageError(f"{flag} {text!r}: {exc}") from None
    return name.strip(), val


def _symbols(args, n: Netlist) -> dict[str, Fraction]:
    out = {name: default for name, default in n.symbols if default is not None}
    for item in args.set:
        name, val = parse_binding(item)
        if name not in dict(n.symbols) and not name.startswith("dot_"):
            raise UsageError(f"--set {item!r}: unknown symbol {name!r}; declared: {sorted(dict(n.symbols))}")
        out[name] = val
    return out


def _offsets(args) -> dict[str, Fraction]:
    out = {}
    for item in args.offset_charge:
        body = item[len("island="):] if item.startswith("island=") else item
        node, sep, value = body.partition(":")
        if not sep:
            node, sep, value = body.partition("=")
        if not sep or not node:
            raise UsageError(f"--offset-charge {item!r}: expected island=NODE:VALUE")
        try:
            out[node] = parse_quantity(value)[0]
        except ValueError as exc:
            raise UsageError(f"--offset-charge {item!r}: {exc}") from None
    return out


def _pairs(items: Sequence[str], flag: str) -> dict[str, str]:
    out = {}
    for item in items:
        k, eq, v = item.partition("=")
        if not eq or not k or not v:
            raise UsageError(f"{flag} {item!r}: expected MODE=VALUE")
        out[k] = v
    return out


def _compact_flags(args) -> dict[str, bool]:
    out = {}
    for k, v in _pairs(args.compact, "--compact").items():
        if v.lower() not in ("yes", "no", "true", "false", "1", "0"):
            raise UsageError(f"--compact {k}={v}: expected yes or no")
        out[k] = v.lower() in ("yes", "true", "1")
    return out


def _check_valid(n: Netlist) -> None:
    rep = validate(n)
    for w in rep.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if rep.errors:
        raise NetlistError("; ".join(rep.errors))


def _reduce(args, n: Netlist) -> R.ReducedSystem:
    tree = [t.strip() for t in args.tree.split(",")] if args.tree else None
    return R.reduce_circuit(
        n, tree, noether=not args.no_noether, offsets=_offsets(args) or None, gauge=args.gauge,
        allow_multivalued=args.allow_multivalued, compact=_compact_flags(args) or None,
        compact_policy=args.compact_policy,
    )


def _emit(args, payload: dict, text: str) -> None:
    if args.format == "json":
        payload = {"schema_version": SCHEMA_VERSION, **payload}
        sys.stdout.write(json.dumps(payload, sort_keys=True, indent=2, default=_jsonable) + "\n")
    else:
        sys.stdout.write(text.rstrip("\n") + "\n")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Fraction):
        return str(x)
    return str(x)


# ---------------------------------------------------------------- commands

def cmd_analyze(args) -> int:
    n = _read(args.netlist)
    _check_valid(n)
    g = G.build_graph(n)
    tree = None
    if args.tree:
        tree = R.spanning_tree(g, [t.strip() for t in args.tree.split(",")])
    ns = G.null_structure(g, tree)
    if args.dot:
        sys.stdout.write(G.to_dot(g, ns) + "\n")
        return 0
    data = G.to_json(g, ns)
    data["genus_identity"] = G.genus_check(g, ns)
    lines = [
        f"nodes: {len(g.nodes)}  capacitive edges: {len(g.capacitive)}  inductive edges: {len(g.inductive)}",
        f"spanning tree: {', '.join(ns.forest)}",
        f"capacitive loops ({len(ns.cap_loops)}):",
        *[f"  {lp.edge}: " + " ".join(f"{'+' if s > 0 else '-'}{e}" for e, s in lp.members) for lp in ns.cap_loops],
        f"inductively shunted islands ({len(ns.ind_islands)}): " + "; ".join("{" + ", ".join(i) + "}"
                                                                             for i in ns.ind_islands),
        f"capacitively shunted islands ({len(ns.cap_islands)}): " + "; ".join("{" + ", ".join(i) + "}"
                                                                              for i in ns.cap_islands),
        f"genus identity: {'holds' if data['genus_identity'] else 'FAILS'}",
    ]
    _emit(args, {"command": "analyze", "graph": data}, "\n".join(lines))
    return 0


def _metadata(args, extra: dict | None = None) -> dict:
    meta = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    meta.update(extra or {})
    return meta


def cmd_hamiltonian(args) -> int:
    n = _read(args.netlist)
    _check_valid(n)
    syms = _symbols(args, n)
    rs = _reduce(args, n)
    h = H.build_hamiltonian(n, rs)
    if syms:
        h = h.bind(syms)
    fmt = args.export or ("json" if args.format == "json" else "text")
    payload = {"command": "hamiltonian", "hamiltonian": H.to_json(h), "metadata": _metadata(args)}
    payload["expression"] = H.export(h, "text")
    if fmt == "latex":
        payload["latex"] = H.export(h, "latex")
    if args.dump_reduction:
        payload["reduction"] = R.to_json(rs)
    text = H.export(h, "latex" if fmt == "latex" else "text")
    if fmt == "json" and args.format == "text":
        text = H.export(h, "json")
    if args.dump_reduction and args.format == "text":
        text += "\n" + json.dumps(R.to_json(rs), sort_keys=True, indent=2)
    _emit(args, payload, text)
    return 0


def _parse_sweep(spec: str) -> tuple[str, np.ndarray]:
    name, eq, rng = spec.partition("=")
    parts = rng.split(":")
    if not eq or len(parts) != 3:
        raise UsageError(f"--sweep {spec!r}: expected NAME=START:STOP:NUM")
    try:
        a = float(parse_quantity(parts[0])[0])
        b = float(parse_quantity(parts[1])[0])
        num = int(parts[2])
    except ValueError as exc:
        raise UsageError(f"--sweep {spec!r}: {exc}") from None
    if num < 0:
        raise UsageError(f"--sweep {spec!r}: negative point count")
    return name, np.linspace(a, b, num)


def cmd_spectrum(args) -> int:
    n = _read(args.netlist)
    _check_valid(n)
    syms = _symbols(args, n)
    rs = _reduce(args, n)
    h = H.build_hamiltonian(n, rs)
    overrides = _pairs(args.basis, "--basis")
    sizes = {}
    for k, v in _pairs(args.size, "--size").items():
        try:
            sizes[k] = int(v)
        except ValueError:
            raise UsageError(f"--size {k}={v}: expected an integer") from None
    if args.levels < 1:
        raise UsageError("--levels must be positive")
    opts = dict(m=args.grid_points, boundary=args.boundary, fd_order=args.fd_order)
    nh0 = Qz.numeric_hamiltonian(h, {**Qz._numeric_defaults(h, None), **syms}, args.allow_multivalued)
    bases = Qz.select_bases(nh0, overrides=overrides, sizes=sizes, **opts)
    results = []
    if args.sweep:
        name, values = _parse_sweep(args.sweep)
        if name not in h.symbols:
            raise UsageError(f"--sweep: unknown symbol {name!r}; the Hamiltonian depends on {h.symbols}")
        base = {k: v for k, v in syms.items() if k != name}
        res = Qz.sweep(h, bases, name, values, args.levels, base, workers=args.workers,
                       check_convergence=args.check_convergence, multivalued=args.allow_multivalued)
        results = [(float(v), r) for v, r in zip(values, res)]
    else:
        r = Qz.solve(h, syms, args.levels, bases=bases, check_convergence=args.check_convergence,
                     multivalued=args.allow_multivalued)
        results = [(None, r)]
    status = 0
    if args.convergence_tol is not None:
        for _, r in results:
            if r.convergence is None:
                raise UsageError("--convergence-tol needs --check-convergence")
            if r.convergence > args.convergence_tol:
                print(f"error: not converged: doubled truncation changed levels by {r.convergence:.3g} GHz "
                      f"(> --convergence-tol {args.convergence_tol:g})", file=sys.stderr)
                status = 2
    for _, r in results:
        for cv in r.caveats:
            print(f"warning: {cv}", file=sys.stderr)
    meta = _metadata(args, {"defaults": {"sizes": dict(Qz.DEFAULT_SIZE), "dense_limit": Qz.DENSE_LIMIT}})
    payload = {"command": "spectrum", "metadata": meta, "modes": list(h.modes)}
    if args.sweep:
        payload["sweep"] = {"symbol": args.sweep.partition("=")[0],
                            "points": [{"value": v, **r.to_json()} for v, r in results]}
    else:
        payload.update(results[0][1].to_json())
    if args.dump_reduction:
        payload["reduction"] = R.to_json(rs)
    lines = []
    for v, r in results:
        head = "" if v is None else f"{payload['sweep']['symbol']} = {v:.10g}: "
        lines.append(head + " ".join(f"{x:.10f}" for x in r.eigenvalues) + "  GHz")
        if r.convergence is not None:
            lines.append(f"  convergence (doubled truncation): {r.convergence:.3g} GHz")
    if not results:
        lines.append("(no sweep points)")
    _emit(args, payload, "\n".join(lines))
    return status


def cmd_check(args) -> int:
    n = _read(args.netlist)
    _check_valid(n)
    syms = _symbols(args, n)
    res = CK.run_all(n, syms, args.only or None)
    ok = all(r.passed for r in res)
    lines = [f"{'PASS' if r.passed else 'FAIL'}  {r.name}{'' if r.applicable else ' (not applicable)'}"
             + (f"  {r.detail}" if r.detail else "") for r in res]
    _emit(args, {"command": "check", "passed": ok, "checks": [r.to_json() for r in res]}, "\n".join(lines))
    return 0 if ok else 1


COMMANDS = {"analyze": cmd_analyze, "hamiltonian": cmd_hamiltonian, "spectrum": cmd_spectrum, "check": cmd_check}


def run(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (Qz.ConvergenceError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: cannot read {args.netlist}: {exc.strerror or exc}", file=sys.stderr)
        return 1
    except (NetlistError, UsageError, R.ReductionError, H.HamiltonianError, Qz.BasisError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
