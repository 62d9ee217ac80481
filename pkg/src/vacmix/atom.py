"""Hydrogen fine-structure basis with its energies and spherical dipole matrices.

States are labelled |n l j m_j> with Condon-Shortley phases and real radial
functions (positive near the origin), so every spherical dipole element
<a| d^q |b> is real. Here d^{+1} = -(x + i y)/sqrt(2), d^{-1} = (x - i y)/sqrt(2)
and d^0 = z, and d^q connects m_j(b) to m_j(a) = m_j(b) + q.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import factorial, sqrt

import numpy as np
from scipy.integrate import quad
from scipy.special import eval_genlaguerre
from sympy import Rational
from sympy.physics.wigner import clebsch_gordan, wigner_3j

from .units import FINE_STRUCTURE

HALF = Fraction(1, 2)
POLARIZATIONS = (1, -1, 0)


def _half_integer(x) -> Fraction:
    f = Fraction(x).limit_denominator(2)
    if f.denominator not in (1, 2) or abs(float(f) - float(x)) > 1e-12:
        raise ValueError(f"{x!r} is not a half-integer")
    return f


def fine_structure_energy(n: int, j, alpha: float = FINE_STRUCTURE) -> float:
    """Hydrogen energy of level (n, j) including the fine-structure term, in Hartree.

    Parameters
    ----------
    n : int
        Principal quantum number, ``n >= 1``.
    j : half-integer
        Total electronic angular momentum; must equal ``l +- 1/2`` for some
        ``0 <= l < n``, i.e. ``1/2 <= j <= n - 1/2``.
    alpha : float
        Fine-structure constant. ``alpha=0`` switches the fine structure off.
    """
    j = _half_integer(j)
    if n < 1 or j.denominator != 2 or not (HALF <= j <= n - HALF):
        raise ValueError(f"invalid hydrogen level n={n}, j={j}")
    return -1.0 / (2 * n**2) - alpha**2 / (2 * n**3) * (1.0 / float(j + HALF) - 3.0 / (4 * n))


@dataclass(frozen=True)
class QuantumState:
    n: int
    l: int
    j: Fraction
    m_j: Fraction
    energy: float = field(default=float("nan"), compare=False)

    def __post_init__(self):
        j = _half_integer(self.j)
        m = _half_integer(self.m_j)
        object.__setattr__(self, "j", j)
        object.__setattr__(self, "m_j", m)
        if not (0 <= self.l < self.n):
            raise ValueError(f"l={self.l} not allowed for n={self.n}")
        if j not in (self.l - HALF, self.l + HALF) or j <= 0:
            raise ValueError(f"j={j} not allowed for l={self.l}")
        if m.denominator != 2 or abs(m) > j:
            raise ValueError(f"m_j={m} not allowed for j={j}")

    @property
    def parity(self) -> int:
        """+1 for even l, -1 for odd l."""
        return 1 if self.l % 2 == 0 else -1

    @property
    def label(self) -> str:
        sign = "+" if self.m_j > 0 else "-"
        return f"{self.n}{'spdfghiklmnoqrtuv'[self.l]}{self.j}(m={sign}{abs(self.m_j)})"

    def key(self) -> tuple:
        return (self.n, self.l, self.j, self.m_j)


@dataclass(frozen=True)
class Basis:
    """Ordered fine-structure basis: sorted by n, then l, then j, then m_j."""

    states: tuple[QuantumState, ...]
    n_max: int
    alpha: float = FINE_STRUCTURE

    def __len__(self):
        return len(self.states)

    def __getitem__(self, i):
        return self.states[i]

    def __iter__(self):
        return iter(self.states)

    @property
    def energies(self) -> np.ndarray:
        return np.array([s.energy for s in self.states])

    @property
    def levels(self) -> np.ndarray:
        return np.array([s.n for s in self.states])

    @property
    def m_j(self) -> np.ndarray:
        return np.array([float(s.m_j) for s in self.states])

    @property
    def l(self) -> np.ndarray:
        return np.array([s.l for s in self.states])

    def index(self, n, l, j, m_j) -> int:
        key = (n, l, _half_integer(j), _half_integer(m_j))
        for i, s in enumerate(self.states):
            if s.key() == key:
                return i
        raise KeyError(f"state {key} not in basis")

    def select(self, n=None, m_j=None, parity=None) -> np.ndarray:
        """Indices of states matching the given quantum numbers."""
        mask = np.ones(len(self.states), dtype=bool)
        if n is not None:
            mask &= self.levels == n
        if m_j is not None:
            mask &= np.isclose(self.m_j, float(m_j))
        if parity is not None:
            mask &= np.array([s.parity == parity for s in self.states])
        return np.flatnonzero(mask)


def enumerate_basis(n_max: int, alpha: float = FINE_STRUCTURE) -> Basis:
    """All hydrogen states |n l j m_j> with n <= n_max (2 n**2 per level)."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    states = []
    for n in range(1, n_max + 1):
        for l in range(n):
            for j in (l - HALF, l + HALF):
                if j <= 0:
                    continue
                e = fine_structure_energy(n, j, alpha)
                m = -j
                while m <= j:
                    states.append(QuantumState(n, l, j, m, e))
                    m += 1
    return Basis(tuple(states), n_max, alpha)


def _gordon_hypergeometric(a: int, b: int, c: int) -> list[Fraction]:
    # coefficients of the terminating 2F1(a, b; c; z)
    coeffs = [Fraction(1)]
    k = 0
    while (a + k) * (b + k) != 0:
        coeffs.append(coeffs[-1] * Fraction((a + k) * (b + k), (c + k) * (k + 1)))
        k += 1
    return coeffs


@lru_cache(maxsize=None)
def radial_integral(n: int, l: int, n2: int, l2: int) -> float:
    """Radial dipole integral <n l| r |n2 l2> in Bohr radii.

    Uses Gordon's closed form (exact rational arithmetic) for n != n2 and
    ``-(3/2) n sqrt(n**2 - l**2)`` within a Bohr level.

    Raises
    ------
    ValueError
        If ``|l - l2| != 1`` or either state does not exist.
    """
    if not (0 <= l < n and 0 <= l2 < n2):
        raise ValueError(f"invalid hydrogen states ({n},{l}), ({n2},{l2})")
    if abs(l - l2) != 1:
        raise ValueError(f"radial dipole integral needs |l - l'| = 1, got {l}, {l2}")
    if l2 == l + 1:
        return radial_integral(n2, l2, n, l)
    if n == n2:
        return -1.5 * n * sqrt(n * n - l * l)

    nr, n2r = n - l - 1, n2 - l
    dn, s = n - n2, n + n2

    def series(coeffs, extra):
        total = Fraction(0)
        for k, c in enumerate(coeffs):
            total += c * Fraction(-4 * n * n2) ** k * Fraction(dn) ** (s - 2 * l - 2 - 2 * k + extra)
        return total

    bracket = series(_gordon_hypergeometric(-nr, -n2r, 2 * l), 0)
    bracket -= series(_gordon_hypergeometric(-nr - 2, -n2r, 2 * l), 2) / Fraction(s) ** 2
    rational = Fraction((4 * n * n2) ** (l + 1), s**s * 4 * factorial(2 * l - 1)) * bracket
    norm = sqrt(factorial(n + l) * factorial(n2 + l - 1) / (factorial(n - l - 1) * factorial(n2 - l)))
    return (-1) ** (n2 - l) * float(rational) * norm


def _rat(x: Fraction) -> Rational:
    return Rational(x.numerator, x.denominator)


@lru_cache(maxsize=None)
def angular_factor(l: int, j: Fraction, m: Fraction, l2: int, j2: Fraction, m2: Fraction, q: int) -> float:
    """<l 1/2 j m| C^1_q |l2 1/2 j2 m2>, built in the uncoupled |l m_l> |m_s> basis."""
    if m != m2 + q or abs(l - l2) != 1:
        return 0.0
    reduced = sqrt((2 * l + 1) * (2 * l2 + 1)) * float(wigner_3j(l, 1, l2, 0, 0, 0))
    total = 0.0
    for ms in (-HALF, HALF):
        ml, ml2 = m - ms, m2 - ms
        if abs(ml) > l or abs(ml2) > l2:
            continue
        cg = float(clebsch_gordan(l, Rational(1, 2), _rat(j), int(ml), _rat(ms), _rat(m)))
        cg2 = float(clebsch_gordan(l2, Rational(1, 2), _rat(j2), int(ml2), _rat(ms), _rat(m2)))
        if cg == 0.0 or cg2 == 0.0:
            continue
        w = float(wigner_3j(l, 1, l2, -int(ml), q, int(ml2)))
        total += cg * cg2 * (-1) ** int(ml) * w
    return total * reduced


@dataclass(frozen=True)
class DipoleTable:
    """Spherical dipole matrices ``d[q][a, b] = <a| d^q |b>`` in e*a0 (real)."""

    basis: Basis
    components: dict

    def matrix(self, q: int) -> np.ndarray:
        return self.components[q]

    def nonzero(self, q: int):
        """Iterate ``(a, b, value)`` over stored elements of d^q."""
        d = self.components[q]
        for a, b in zip(*np.nonzero(d)):
            yield int(a), int(b), float(d[a, b])

    def cartesian(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(d_x, d_y, d_z) reconstructed from the spherical components."""
        dp, dm, d0 = (self.components[q] for q in POLARIZATIONS)
        dx = (dm - dp) / np.sqrt(2)
        dy = 1j * (dp + dm) / np.sqrt(2)
        return dx.astype(complex), dy, d0.astype(complex)


def build_dipole_table(basis: Basis) -> DipoleTable:
    if len(basis) == 0:
        raise ValueError("empty basis")
    size = len(basis)
    comps = {q: np.zeros((size, size)) for q in POLARIZATIONS}
    for a, sa in enumerate(basis):
        for b, sb in enumerate(basis):
            if abs(sa.l - sb.l) != 1:
                continue
            q = sa.m_j - sb.m_j
            if q not in (-1, 0, 1):
                continue
            ang = angular_factor(sa.l, sa.j, sa.m_j, sb.l, sb.j, sb.m_j, int(q))
            if ang != 0.0:
                comps[int(q)][a, b] = radial_integral(sa.n, sa.l, sb.n, sb.l) * ang
    for d in comps.values():
        d.setflags(write=False)
    return DipoleTable(basis, comps)


_LABEL = re.compile(r"^\s*(\d+)([spdfghiklmnoqrtuv])(\d+)/2\s*\(m=([+-]?\d+)/2\)\s*$")


def parse_state_label(label: str) -> tuple:
    """Inverse of :attr:`QuantumState.label`: ``"3s1/2(m=+1/2)"`` -> ``(3, 0, 1/2, 1/2)``."""
    match = _LABEL.match(label)
    if not match:
        raise ValueError(f"cannot parse state label {label!r}")
    n, letter, j2, m2 = match.groups()
    state = QuantumState(int(n), "spdfghiklmnoqrtuv".index(letter), Fraction(int(j2), 2), Fraction(int(m2), 2))
    return state.key()


def radial_wavefunction(n: int, l: int, r):
    """Hydrogen radial function R_nl(r) (positive near the origin), atomic units."""
    r = np.asarray(r, dtype=float)
    rho = 2 * r / n
    norm = sqrt((2 / n) ** 3 * factorial(n - l - 1) / (2 * n * factorial(n + l)))
    return norm * np.exp(-rho / 2) * rho**l * eval_genlaguerre(n - l - 1, 2 * l + 1, rho)


def radial_integral_quadrature(n: int, l: int, n2: int, l2: int) -> float:
    """<n l| r |n2 l2> by adaptive quadrature; an independent check of :func:`radial_integral`."""
    if abs(l - l2) != 1:
        raise ValueError(f"radial dipole integral needs |l - l'| = 1, got {l}, {l2}")
    f = lambda r: radial_wavefunction(n, l, r) * radial_wavefunction(n2, l2, r) * r**3  # noqa: E731
    # split at the outermost nodes so quad sees smooth pieces
    edges = np.concatenate([[0.0], np.linspace(1.0, 4.0 * max(n, n2) ** 2, 24), [np.inf]])
    return float(sum(quad(f, a, b, epsabs=0, epsrel=1e-11, limit=400)[0] for a, b in zip(edges[:-1], edges[1:])))
