"""Truncated operator representations and spectra.

Internally each mode uses the phase ``theta = 2 pi Phi / phi0`` and the
number ``n = Q / 2e`` with [theta, n] = i, and energies are in GHz.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from . import constants as K
from .energies import COS
from .ham import Cosine, EnergyExpr, HamiltonianError, Implicit, ImplicitSolver, Linear, Quadratic, _float

CHARGE, OSCILLATOR, FLUXGRID, CHARGEGRID = "charge", "oscillator", "fluxgrid", "chargegrid"
KINDS = (CHARGE, OSCILLATOR, FLUXGRID, CHARGEGRID)
DEFAULT_SIZE = {CHARGE: 40, OSCILLATOR: 60, FLUXGRID: 512, CHARGEGRID: 512}
DENSE_LIMIT = 4096


class BasisError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


# ---------------------------------------------------------------- numeric Hamiltonian

@dataclass
class NumericHamiltonian:
    """Hamiltonian in (theta, n) with GHz coefficients."""

    modes: list[str]
    compact: list[bool]
    Un: np.ndarray                  # sum U_ij n_i n_j (symmetric)
    Vt: np.ndarray                  # sum V_ij theta_i theta_j (symmetric)
    an: np.ndarray                  # linear in n
    bt: np.ndarray                  # linear in theta
    cosines: list                   # (amplitude, [(mode, 'n'|'t', k)], phase)
    implicit: list                  # (ImplicitSolver, [mode indices])
    e0: float = 0.0                 # constant offset

    @property
    def dim(self) -> int:
        return len(self.modes)

    def uses(self, i: int) -> dict:
        return {
            "n2": abs(self.Un[i, i]) > 0,
            "t2": abs(self.Vt[i, i]) > 0,
            "ncos": any(any(m == i and t == "n" for m, t, _ in c[1]) for c in self.cosines),
            "tcos": any(any(m == i and t == "t" for m, t, _ in c[1]) for c in self.cosines),
            "implicit": any(i in idx for _, idx in self.implicit),
            "tpoly": abs(self.Vt[i]).any() or self.bt[i] != 0,
        }


def numeric_hamiltonian(h: EnergyExpr, symbols: Mapping[str, object] | None = None,
                        multivalued: bool = False) -> NumericHamiltonian:
    hb = h.bind(symbols)
    modes = list(h.modes)
    d = len(modes)
    ci = {"Q_" + m: i for i, m in enumerate(modes)}
    fi = {"Phi_" + m: i for i, m in enumerate(modes)}
    Un, Vt = np.zeros((d, d)), np.zeros((d, d))
    an, bt = np.zeros(d), np.zeros(d)
    nq = K.two_e ** 2 / K.GHz
    nf = (K.phi0 / (2 * math.pi)) ** 2 / K.GHz
    cosines, implicit = [], []
    for t in hb.terms:
        if isinstance(t, Quadratic):
            c = _float(t.coeff)
            if t.a in ci:
                i, j, s, M = ci[t.a], ci[t.b], nq, Un
            else:
                i, j, s, M = fi[t.a], fi[t.b], nf, Vt
            if i == j:
                M[i, i] += c * s
            else:
                M[i, j] += c * s / 2
                M[j, i] += c * s / 2
        elif isinstance(t, Linear):
            c = _float(t.coeff)
            if t.var in ci:
                an[ci[t.var]] += c * K.two_e / K.GHz
            else:
                bt[fi[t.var]] += c * K.phi0 / (2 * math.pi) / K.GHz
        elif isinstance(t, Cosine):
            amp = _float(t.amplitude) / K.GHz
            phase = 2 * math.pi * _float(t.offset / t.period)
            parts = []
            for v, c in t.combo:
                if t.charge_type:
                    parts.append((ci[v], "n", 2 * math.pi * float(c)))
                else:
                    parts.append((fi[v], "t", float(c)))
            cosines.append((amp, parts, phase))
        elif isinstance(t, Implicit):
            solver = ImplicitSolver(t, multivalued)
            implicit.append((solver, [ci[v] for v in solver.variables]))
    return NumericHamiltonian(modes, list(h.compact) or [False] * d, Un, Vt, an, bt, cosines, implicit,
                              _float(hb.offset) / K.GHz)


# ---------------------------------------------------------------- bases

@dataclass(frozen=True)
class ModeBasis:
    mode: str
    kind: str
    size: int
    m: int = 16                      # grid points per period (grids only)
    center: float | None = None      # theta (flux grid, oscillator) or n (charge grid)
    center_n: float | None = None    # oscillator charge centre
    zpf: float | None = None         # oscillator theta zero-point width
    boundary: str = "open"
    fd_order: int = 16

    def doubled(self) -> "ModeBasis":
        return replace(self, size=2 * self.size if self.kind != CHARGE else 2 * self.size)

    @property
    def dim(self) -> int:
        if self.kind == CHARGE:
            return 2 * self.size + 1
        return self.size

    def describe(self) -> dict:
        d = {"mode": self.mode, "kind": self.kind, "size": self.size, "dim": self.dim}
        if self.kind == CHARGE and self.center:
            d.update(center=self.center)
        if self.kind in (FLUXGRID, CHARGEGRID):
            d.update(m=self.m, boundary=self.boundary, fd_order=self.fd_order,
                     center=_plain(self.center))
        if self.kind == OSCILLATOR:
            d.update(center=_plain(self.center), center_n=_plain(self.center_n), zpf=_plain(self.zpf))
        return d


def _plain(x):
    return None if x is None else float(x) + 0.0


def select_bases(h: EnergyExpr | NumericHamiltonian, rs=None, overrides: Mapping[str, str] | None = None,
                 sizes: Mapping[str, int] | None = None, symbols=None, **opts) -> list[ModeBasis]:
    """One basis per mode: compact -> charge; charge cosine -> flux grid;
    implicit charge term -> charge grid; quadratic in both -> oscillator."""
    nh = h if isinstance(h, NumericHamiltonian) else numeric_hamiltonian(h, _numeric_defaults(h, symbols))
    overrides = dict(overrides or {})
    sizes = dict(sizes or {})
    unknown = (set(overrides) | set(sizes)) - set(nh.modes)
    if unknown:
        raise BasisError(f"basis option for unknown mode(s): {', '.join(sorted(unknown))}")
    bases = []
    for i, mode in enumerate(nh.modes):
        u = nh.uses(i)
        compact = nh.compact[i]
        if compact:
            kind = CHARGE
        elif u["implicit"]:
            kind = CHARGEGRID
        elif u["ncos"]:
            kind = FLUXGRID
        elif u["n2"] and u["t2"]:
            kind = OSCILLATOR
        else:
            kind = FLUXGRID
        want = overrides.get(mode)
        if want is not None:
            if want not in KINDS:
                raise BasisError(f"unknown basis {want!r}")
            if want == CHARGE and not compact:
                raise BasisError(f"charge basis needs a compact mode; {mode} is not compact")
            if compact and want != CHARGE:
                raise BasisError(f"mode {mode} is compact; only the charge basis represents it")
            if u["implicit"] and want not in (CHARGE, CHARGEGRID):
                raise BasisError(f"mode {mode} carries an implicit charge term; it needs a charge grid "
                                 "(its charge must be diagonal)")
            if want == CHARGE and u["tpoly"]:
                raise BasisError(f"mode {mode} has polynomial flux terms; the charge basis cannot hold them")
            kind = want
        size = sizes.get(mode, DEFAULT_SIZE[kind])
        bases.append(ModeBasis(mode, kind, int(size), **{k: v for k, v in opts.items() if k in ("m", "boundary", "fd_order")}))
    return bases


def _numeric_defaults(h: EnergyExpr, symbols):
    vals = dict(symbols or {})
    for s in h.symbols:
        if s not in vals and not s.startswith("dot_"):
            vals[s] = 0
    return vals


def _centres(nh: NumericHamiltonian) -> tuple[np.ndarray, np.ndarray]:
    """Stationary point of the polynomial part (least squares where singular)."""
    d = nh.dim
    n0 = np.zeros(d)
    t0 = np.zeros(d)
    if d:
        if np.any(nh.Un) or np.any(nh.an):
            n0 = -0.5 * np.linalg.lstsq(nh.Un, nh.an, rcond=1e-12)[0]
        if np.any(nh.Vt) or np.any(nh.bt):
            t0 = -0.5 * np.linalg.lstsq(nh.Vt, nh.bt, rcond=1e-12)[0]
    return n0, t0


def _implicit_curvature(nh: NumericHamiltonian, i: int, n0: np.ndarray) -> float:
    """Half the second charge derivative of the implicit energies at the centre."""
    total = 0.0
    for sv, idx in nh.implicit:
        if i not in idx:
            continue
        base = np.array([n0[j] for j in idx])
        k = idx.index(i)
        step = 1e-4
        e = []
        for d in (-step, 0.0, step):
            p = base.copy()
            p[k] += d
            e.append(sv.energy(p))
        total += 0.5 * (e[0] - 2 * e[1] + e[2]) / step ** 2
    return max(total, 0.0)


def resolve_bases(nh: NumericHamiltonian, bases: Sequence[ModeBasis], auto_size: bool = True) -> list[ModeBasis]:
    """Fill centres, widths and grid sizes that depend on parameter values."""
    n0, t0 = _centres(nh)
    out = []
    for i, b in enumerate(bases):
        U, V = nh.Un[i, i], nh.Vt[i, i]
        if b.kind == OSCILLATOR:
            if V <= 0:
                # no inductive curvature: use the cosine curvature about the centre
                V = sum(abs(a) * k * k / 2 for a, parts, _ in nh.cosines for m, t, k in parts if m == i and t == "t")
            if U <= 0 or V <= 0:
                raise BasisError(f"oscillator basis for {b.mode} needs curvature in both charge and flux")
            zpf = b.zpf if b.zpf is not None else math.sqrt(0.5 * math.sqrt(U / V))
            out.append(replace(b, center=t0[i] if b.center is None else b.center,
                               center_n=n0[i] if b.center_n is None else b.center_n, zpf=zpf))
        elif b.kind == FLUXGRID:
            m, size = b.m, b.size
            c = t0[i] if b.center is None else b.center
            h = 2 * math.pi / m
            c = round(c / h) * h
            if auto_size and U > 0 and V > 0 and b.center is None:
                width = math.sqrt(0.5 * math.sqrt(U / V))
                while width < 4 * (2 * math.pi / m):
                    m *= 2
                wells = sum(abs(a) for a, parts, _ in nh.cosines if any(mm == i for mm, _, _ in parts))
                half = 12 * width + math.sqrt(2 * wells / V) + abs(t0[i] - c)
                size = max(size, 2 * int(math.ceil(half / (2 * math.pi / m))) + 1)
                c = round(t0[i] / (2 * math.pi / m)) * (2 * math.pi / m)
            out.append(replace(b, m=m, size=size | 1, center=c))
        elif b.kind == CHARGEGRID:
            m, size = b.m, b.size
            c = n0[i] if b.center is None else b.center
            c = round(c * m) / m
            if U <= 0:
                U = _implicit_curvature(nh, i, n0)
            if auto_size and U > 0 and V > 0 and b.center is None:
                width = math.sqrt(0.5 * math.sqrt(V / U))
                while width < 4 / m:
                    m *= 2
                wells = sum(abs(a) for a, parts, _ in nh.cosines if any(mm == i for mm, _, _ in parts))
                wells += sum(abs(sv.coef[sv.kind == COS]).sum() for sv, idx in nh.implicit if i in idx)
                half = 12 * width + math.sqrt(2 * wells / U) + abs(n0[i] - c)
                size = max(size, 2 * int(math.ceil(half * m)) + 1)
                c = round(n0[i] * m) / m
            out.append(replace(b, m=m, size=size | 1, center=c))
        elif b.kind == CHARGE:
            # integer centre nearest the gate charge; the basis stays a window of Cooper pair numbers
            out.append(replace(b, center=int(round(n0[i])) if b.center is None else int(b.center)))
        else:
            out.append(b)
    return out


# ---------------------------------------------------------------- per-mode operators

def fd_weights(p: int) -> tuple[np.ndarray, np.ndarray]:
    """Central difference weights of order 2p for d/dx and d2/dx2 at offsets 1..p."""
    k = np.arange(1, p + 1)
    lf = [math.lgamma(p + 1) * 2 - math.lgamma(p - j + 1) - math.lgamma(p + j + 1) for j in k]
    r = np.exp(lf)
    sign = (-1.0) ** (k + 1)
    d1 = sign * r / k
    d2 = 2 * sign * r / k ** 2
    return d1, d2


def _banded(n: int, offsets_vals: dict[int, float], periodic: bool) -> sps.csr_matrix:
    rows, cols, vals = [], [], []
    for off, v in offsets_vals.items():
        for i in range(n):
            j = i + off
            if periodic:
                j %= n
            elif not 0 <= j < n:
                continue
            rows.append(i)
            cols.append(j)
            vals.append(v)
    return sps.csr_matrix((vals, (rows, cols)), shape=(n, n))


class ModeOps:
    """Matrices of n, n^2, theta, theta^2 and the exponentials for one basis."""

    def __init__(self, b: ModeBasis):
        self.b = b
        self.dim = b.dim
        if b.kind == OSCILLATOR:
            self._init_osc()
        elif b.kind in (FLUXGRID, CHARGEGRID):
            self._init_grid()

    # -- grids: x is the diagonal variable (theta or n); the other is a derivative
    def _init_grid(self):
        b = self.b
        N = b.size
        k = np.arange(N) - N // 2
        if b.kind == FLUXGRID:
            self.h = 2 * math.pi / b.m
        else:
            self.h = 1.0 / b.m
        self.x = b.center + k * self.h
        p = max(1, b.fd_order // 2)
        w1, w2 = fd_weights(p)
        per = b.boundary == "periodic"
        D1 = _banded(N, {**{j: w1[j - 1] for j in range(1, p + 1)}, **{-j: -w1[j - 1] for j in range(1, p + 1)}}, per)
        d2c = -2 * float(np.sum(w2))
        D2 = _banded(N, {0: d2c, **{j: w2[j - 1] for j in range(1, p + 1)}, **{-j: w2[j - 1] for j in range(1, p + 1)}}, per)
        self.D1 = D1 / self.h
        self.D2 = D2 / self.h ** 2

    def _init_osc(self):
        b = self.b
        self.buf = b.size + 8
        self.tz = b.zpf
        self.nz = 0.5 / b.zpf

    def _osc_big(self, extra: int):
        n = self.b.size + extra
        a = np.diag(np.sqrt(np.arange(1, n)), 1)
        return a

    def op(self, what: str):
        b = self.b
        N = self.dim
        if b.kind == CHARGE:
            nvals = self.charges()
            if what == "n":
                return sps.diags(nvals)
            if what == "n2":
                return sps.diags(nvals ** 2)
            raise BasisError(f"charge basis of {b.mode} cannot represent {what}")
        if b.kind in (FLUXGRID, CHARGEGRID):
            diag_var = "t" if b.kind == FLUXGRID else "n"
            if what == diag_var:
                return sps.diags(self.x)
            if what == diag_var + "2":
                return sps.diags(self.x ** 2)
            if what in ("n", "t"):
                # flux grid: n = -i d/dtheta; charge grid: theta = +i d/dn
                return (-1j if b.kind == FLUXGRID else 1j) * self.D1
            if what in ("n2", "t2"):
                return -self.D2
        if b.kind == OSCILLATOR:
            n = N + 4
            a = self._osc_big(4)
            ad = a.T
            x = self.tz * (a + ad)
            pmat = 1j * self.nz * (ad - a)
            I = np.eye(n)
            mats = {
                "t": x + b.center * I,
                "n": pmat + b.center_n * I,
            }
            mats["t2"] = mats["t"] @ mats["t"]
            mats["n2"] = mats["n"] @ mats["n"]
            return sps.csr_matrix(mats[what][:N, :N])
        raise BasisError(f"no operator {what} in basis {b.kind}")

    def charges(self) -> np.ndarray:
        c = 0 if self.b.center is None else int(self.b.center)
        return c + np.arange(-self.b.size, self.b.size + 1, dtype=float)

    def exp(self, what: str, k: float):
        """exp(i k n) or exp(i k theta)."""
        b = self.b
        N = self.dim
        if b.kind == CHARGE:
            if what == "n":
                return sps.diags(np.exp(1j * k * self.charges()))
            s = round(k)
            if abs(s - k) > 1e-9:
                raise BasisError(f"compact mode {b.mode}: flux cosine with non-integer winding {k}")
            # e^{i s theta}|n> = |n+s>
            return _banded(N, {-s: 1.0}, False)
        if b.kind in (FLUXGRID, CHARGEGRID):
            diag_var = "t" if b.kind == FLUXGRID else "n"
            if what == diag_var:
                return sps.diags(np.exp(1j * k * self.x))
            # flux grid: e^{ikn} psi(theta) = psi(theta + k); charge grid: e^{ik theta} psi(n) = psi(n - k)
            shift = k / self.h if b.kind == FLUXGRID else -k / self.h
            s = round(shift)
            if abs(s - shift) > 1e-6:
                raise BasisError(
                    f"grid spacing of {b.mode} does not divide the cosine period (shift {shift:.6g} sites); "
                    "choose m so that the shift is an integer"
                )
            return _banded(N, {s: 1.0}, b.boundary == "periodic")
        if b.kind == OSCILLATOR:
            # exact displacement operator in a larger space, then projected
            zpf = self.tz if what == "t" else self.nz
            alpha = abs(k) * zpf
            extra = max(40, int(6 * alpha * alpha) + 40)
            n = N + extra
            a = self._osc_big(extra)
            ad = a.T
            if what == "t":
                gen = 1j * k * self.tz * (a + ad)
                phase = np.exp(1j * k * b.center)
            else:
                gen = -k * self.nz * (ad - a)
                phase = np.exp(1j * k * b.center_n)
            E = sla.expm(gen)[:N, :N] * phase
            return sps.csr_matrix(E)
        raise BasisError(f"basis {b.kind} has no exponential of {what}")

    def values(self) -> np.ndarray:
        """Diagonal n values (charge-diagonal bases only)."""
        b = self.b
        if b.kind == CHARGE:
            return self.charges()
        if b.kind == CHARGEGRID:
            return self.x
        raise BasisError(f"mode {b.mode}: charge is not diagonal in the {b.kind} basis")


# ---------------------------------------------------------------- assembly

@dataclass
class Operator:
    matrix: sps.csr_matrix
    bases: list[ModeBasis]

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _kron_all(mats: list) -> sps.csr_matrix:
    out = mats[0]
    for m in mats[1:]:
        out = sps.kron(out, m, format="csr")
    return sps.csr_matrix(out)


def assemble(h: EnergyExpr | NumericHamiltonian, bases: Sequence[ModeBasis], symbols=None,
             multivalued: bool = False, auto_size: bool = True) -> Operator:
    nh = h if isinstance(h, NumericHamiltonian) else numeric_hamiltonian(h, symbols, multivalued)
    if len(bases) != nh.dim:
        raise BasisError("one basis per mode is required")
    bases = resolve_bases(nh, bases, auto_size)
    ops = [ModeOps(b) for b in bases]
    dims = [o.dim for o in ops]
    D = int(np.prod(dims)) if dims else 1
    if nh.dim == 0:
        return Operator(sps.csr_matrix([[nh.e0]], dtype=complex), bases)
    eye = [sps.identity(d, format="csr") for d in dims]
    H = nh.e0 * sps.identity(D, dtype=complex, format="csr")

    def place(factors: dict[int, object]):
        return _kron_all([factors.get(i, eye[i]) for i in range(len(dims))])

    for M, kind in ((nh.Un, "n"), (nh.Vt, "t")):
        for i in range(nh.dim):
            for j in range(i, nh.dim):
                c = M[i, j] if i == j else 2 * M[i, j]
                if c == 0:
                    continue
                if i == j:
                    H = H + c * place({i: ops[i].op(kind + "2")})
                else:
                    H = H + c * place({i: ops[i].op(kind), j: ops[j].op(kind)})
    for vec, kind in ((nh.an, "n"), (nh.bt, "t")):
        for i, c in enumerate(vec):
            if c:
                H = H + c * place({i: ops[i].op(kind)})
    for amp, parts, phase in nh.cosines:
        E = place({m: ops[m].exp(t, k) for m, t, k in parts})
        H = H + (amp / 2) * (np.exp(1j * phase) * E + np.exp(-1j * phase) * E.conj().T)
    for solver, idx in nh.implicit:
        grids = [ops[i].values() for i in idx]
        mesh = np.meshgrid(*grids, indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=1)
        vals = np.array([solver.energy(p) for p in pts]).reshape([len(g) for g in grids])
        # spread the diagonal over the modes not involved
        full = vals
        shape = []
        for i, d in enumerate(dims):
            shape.append(d if i in idx else 1)
        order = sorted(range(len(idx)), key=lambda k: idx[k])
        full = np.transpose(vals, order).reshape(shape)
        full = np.broadcast_to(full, dims).ravel()
        H = H + sps.diags(full)
    H = sps.csr_matrix(H)
    return Operator(H, bases)


# ---------------------------------------------------------------- spectra

@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray               # GHz, ascending
    levels: int
    bases: list[dict]
    dim: int
    convergence: float | None = None
    parameters: dict = field(default_factory=dict)
    caveats: list[str] = field(default_factory=list)

    @property
    def joules(self) -> np.ndarray:
        return self.eigenvalues * K.GHz

    def to_json(self) -> dict:
        return {
            "eigenvalues_GHz": [float(x) for x in self.eigenvalues],
            "eigenvalues_J": [float(x) for x in self.joules],
            "levels": self.levels,
            "bases": self.bases,
            "dim": self.dim,
            "convergence_GHz": self.convergence,
            "parameters": self.parameters,
            "caveats": self.caveats,
        }


def check_hermitian(H: sps.spmatrix, tol: float = 1e-10) -> None:
    diff = sps.linalg.norm(H - H.conj().T) if H.nnz else 0.0
    scale = sps.linalg.norm(H) if H.nnz else 0.0
    if diff > tol * max(scale, 1e-300):
        raise AssertionError(f"assembled operator is not Hermitian ({diff:.3g} vs {scale:.3g})")


def eigvals(H: sps.spmatrix, k: int) -> np.ndarray:
    check_hermitian(H)
    D = H.shape[0]
    k = min(k, D)
    real = not np.any(H.imag.data) if np.iscomplexobj(H.data) else True
    A = H.real if real else H
    if D <= DENSE_LIMIT or k >= D - 1:
        dense = A.toarray()
        return np.linalg.eigvalsh(dense)[:k]
    A = sps.csc_matrix(A)
    # shift-invert just below the Gershgorin bound: the lowest levels become the largest in magnitude
    absrow = np.asarray(abs(A).sum(axis=1)).ravel()
    diag = A.diagonal().real
    lower = float(np.min(diag - (absrow - np.abs(diag))))
    sigma = lower - 1e-3 * max(1.0, abs(lower))
    try:
        vals = spla.eigsh(A, k=k, sigma=sigma, which="LM", tol=1e-13, maxiter=20 * D)[0]
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError("iterative eigensolver did not converge") from exc
    return np.sort(vals)


def spectrum(op: Operator, k: int = 6, parameters: dict | None = None) -> SpectrumResult:
    vals = eigvals(op.matrix, k)
    caveats = []
    return SpectrumResult(vals, k, [b.describe() for b in op.bases], op.dim,
                          parameters=dict(parameters or {}), caveats=caveats)


def _caveats(nh: NumericHamiltonian, bases: Sequence[ModeBasis]) -> list[str]:
    out = []
    for i, b in enumerate(bases):
        u = nh.uses(i)
        if b.kind in (FLUXGRID, CHARGEGRID) and u["ncos"] and u["tcos"] and not u["n2"] and not u["t2"]:
            out.append(f"mode {b.mode}: commuting charge and flux cosines; the exact spectrum is a continuous "
                       "band and grid eigenvalues sample it")
        if b.kind in (FLUXGRID, CHARGEGRID) and not u["n2"] and not u["t2"] and not (u["ncos"] and u["tcos"]):
            out.append(f"mode {b.mode}: no confining term; the spectrum is continuous")
    return out


def solve(h: EnergyExpr, symbols: Mapping[str, object] | None = None, levels: int = 6,
          overrides: Mapping[str, str] | None = None, sizes: Mapping[str, int] | None = None,
          check_convergence: bool = False, multivalued: bool = False, bases: Sequence[ModeBasis] | None = None,
          **opts) -> SpectrumResult:
    """Bind, pick bases, assemble and diagonalise."""
    nh = numeric_hamiltonian(h, symbols, multivalued)
    if bases is None:
        bases = select_bases(nh, overrides=overrides, sizes=sizes, **opts)
    op = assemble(nh, bases)
    res = spectrum(op, levels, {k: str(v) for k, v in sorted((symbols or {}).items())})
    res.caveats = _caveats(nh, op.bases)
    if check_convergence:
        op2 = assemble(nh, [b.doubled() for b in op.bases], auto_size=False)
        res2 = eigvals(op2.matrix, levels)
        n = min(len(res2), len(res.eigenvalues))
        res.convergence = float(np.max(np.abs(res.eigenvalues[:n] - res2[:n]))) if n else 0.0
    return res


def sweep(h: EnergyExpr, bases: Sequence[ModeBasis] | None, symbol: str, values: Sequence, k: int = 6,
          symbols: Mapping[str, object] | None = None, workers: int = 1, **kw) -> list[SpectrumResult]:
    if symbol not in h.symbols:
        raise BasisError(f"unknown symbol {symbol!r}; the Hamiltonian depends on {h.symbols}")
    base = dict(symbols or {})

    def one(v):
        s = dict(base)
        s[symbol] = v
        return solve(h, s, k, bases=bases, **kw)

    values = list(values)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(one, values))
    return [one(v) for v in values]
