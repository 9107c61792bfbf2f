"""Netlist to Hamiltonian compiler and spectrum calculator for superconducting circuits."""

__version__ = "0.1.0"

from .netlist import Netlist, NetlistError, load, parse, validate  # noqa: E402
from .reduce import ReducedSystem, ReductionError, reduce_circuit  # noqa: E402
from .ham import EnergyExpr, HamiltonianError, build_hamiltonian, export  # noqa: E402
from .quantize import SpectrumResult, select_bases, solve, sweep  # noqa: E402

__all__ = [
    "Netlist", "NetlistError", "load", "parse", "validate",
    "ReducedSystem", "ReductionError", "reduce_circuit",
    "EnergyExpr", "HamiltonianError", "build_hamiltonian", "export",
    "SpectrumResult", "select_bases", "solve", "sweep",
]
