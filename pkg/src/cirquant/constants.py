"""Physical constants (exact SI 2019 values) in rational and float form."""

import math
from fractions import Fraction

import sympy as sp

E_CHARGE = Fraction("1.602176634e-19")
PLANCK = Fraction("6.62607015e-34")
CHARGE_2E = 2 * E_CHARGE
PHI0 = PLANCK / CHARGE_2E

# sympy versions, used when composing energies symbolically
e_s = sp.Rational(E_CHARGE.numerator, E_CHARGE.denominator)
h_s = sp.Rational(PLANCK.numerator, PLANCK.denominator)
two_e_s = 2 * e_s
phi0_s = h_s / two_e_s

e = float(E_CHARGE)
h = float(PLANCK)
hbar = h / (2 * math.pi)
two_e = float(CHARGE_2E)
phi0 = float(PHI0)
GHz = h * 1e9  # joules per GHz of energy
