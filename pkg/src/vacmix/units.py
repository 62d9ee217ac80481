"""Unit conventions and conversion factors.

Everything inside the package is in Hartree atomic units
(hbar = e = a0 = m_e = 1). Energies and angular frequencies share the same
number, dipoles are in e*a0, and spectral densities J are in
Hartree / (e*a0)**2. Conversion happens only at the I/O boundary.
"""

from scipy import constants as _c

HARTREE_EV = _c.physical_constants["Hartree energy in eV"][0]
HARTREE_J = _c.physical_constants["Hartree energy"][0]
BOHR_M = _c.physical_constants["Bohr radius"][0]
ATOMIC_TIME_S = _c.physical_constants["atomic unit of time"][0]
ATOMIC_TIME_FS = ATOMIC_TIME_S * 1e15
FINE_STRUCTURE = _c.fine_structure

# hbar / eV expressed in atomic time units
HBAR_PER_EV = HARTREE_EV


def ev_to_hartree(x):
    return x / HARTREE_EV


def hartree_to_ev(x):
    return x * HARTREE_EV


def fs_to_atomic(t):
    return t / ATOMIC_TIME_FS


def atomic_to_fs(t):
    return t * ATOMIC_TIME_FS


def hbar_per_ev_to_atomic(t):
    """Convert a time given in units of hbar/eV to atomic time units."""
    return t * HBAR_PER_EV
