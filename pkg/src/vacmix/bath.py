"""Spectral densities of the electromagnetic environment and their kernels.

For a cylindrically symmetric, diagonal Green tensor the spectral density has
two independent components, J_xx (= J_yy) and J_zz. In the spherical basis
the polarizations q = +1 and q = -1 see J_xx while q = 0 sees J_zz.

The decay kernel is ``gamma(w) = 2 pi J(w)`` and the shift kernel is the
principal-value integral ``lambda(w) = P int J(w') / (w - w') dw'``.
All quantities are in Hartree atomic units (J in Hartree / (e a0)**2).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import constants as _c

from .units import BOHR_M, HARTREE_EV, HARTREE_J, ev_to_hartree


def _component(q: int) -> str:
    if q in (1, -1):
        return "xx"
    if q == 0:
        return "zz"
    raise ValueError(f"polarization must be +1, -1 or 0, got {q!r}")


class SpectralModel:
    """Common kernel interface; subclasses provide ``density`` and ``_shift``."""

    physical: bool = True

    def density(self, q: int, omega):
        raise NotImplementedError

    def gamma(self, q: int, omega):
        """Decay kernel 2 pi J_qq(omega)."""
        return 2 * np.pi * self.density(q, omega)

    def lambda_shift(self, q: int, omega):
        """Principal-value shift kernel for polarization ``q``."""
        raise NotImplementedError

    def scaled(self, factor: float) -> "SpectralModel":
        raise NotImplementedError


@dataclass(frozen=True)
class LorentzianModel(SpectralModel):
    """Lorentzian spectral density, nonzero at all real frequencies.

    ``J(w) = (g**2 / pi) (kappa/2) / ((w - omega_m)**2 + (kappa/2)**2)``, one
    coupling per component. Since J does not vanish for ``w <= 0`` the model
    must be created with ``allow_unphysical=True``.
    """

    g_xx: float
    g_zz: float
    kappa: float
    omega_m: float
    allow_unphysical: bool = False
    physical = False

    def __post_init__(self):
        if not self.allow_unphysical:
            raise ValueError(
                "a Lorentzian spectral density is nonzero for omega <= 0; "
                "pass allow_unphysical=True to use it"
            )
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")

    @classmethod
    def isotropic(cls, g, kappa, omega_m, **kw):
        return cls(g, g, kappa, omega_m, **kw)

    @classmethod
    def axial(cls, g, kappa, omega_m, **kw):
        """Couples only to the z component (J_xx = J_yy = 0)."""
        return cls(0.0, g, kappa, omega_m, **kw)

    @classmethod
    def from_ev(cls, g_xx, g_zz, kappa, omega_m, **kw):
        """Build from g in eV/(e a0) and kappa, omega_m in eV."""
        return cls(ev_to_hartree(g_xx), ev_to_hartree(g_zz), ev_to_hartree(kappa), ev_to_hartree(omega_m), **kw)

    def _g(self, q):
        return self.g_xx if _component(q) == "xx" else self.g_zz

    def density(self, q, omega):
        half = self.kappa / 2
        detuning = np.asarray(omega, dtype=float) - self.omega_m
        return self._g(q) ** 2 / np.pi * half / (detuning**2 + half**2)

    def lambda_shift(self, q, omega):
        detuning = np.asarray(omega, dtype=float) - self.omega_m
        return self._g(q) ** 2 * detuning / (detuning**2 + (self.kappa / 2) ** 2)

    def scaled(self, factor):
        s = np.sqrt(factor)
        return LorentzianModel(self.g_xx * s, self.g_zz * s, self.kappa, self.omega_m, True)


@dataclass(frozen=True)
class FlatModel(SpectralModel):
    """Frequency-independent decay and shift kernels.

    Not a Kramers-Kronig pair; used to check the algebra of the master
    equations where only constant kernels make two constructions identical.
    """

    gamma_xx: float
    gamma_zz: float
    lambda_xx: float = 0.0
    lambda_zz: float = 0.0
    physical = False

    def density(self, q, omega):
        g = self.gamma_xx if _component(q) == "xx" else self.gamma_zz
        return np.full(np.shape(omega), g / (2 * np.pi))

    def lambda_shift(self, q, omega):
        lam = self.lambda_xx if _component(q) == "xx" else self.lambda_zz
        return np.full(np.shape(omega), float(lam))

    def scaled(self, factor):
        return FlatModel(*(factor * x for x in (self.gamma_xx, self.gamma_zz, self.lambda_xx, self.lambda_zz)))


def _segments(x, y, order):
    """Local polynomial coefficients (c0, c1, c2) of each grid segment.

    On segment i the interpolant is ``c0 + c1 t + c2 t**2`` with
    ``t = w - x[i]``. ``order=2`` fits quadratics through consecutive node
    triples (the last segment of an odd count reuses the previous triple).
    """
    h = np.diff(x)
    slope = np.diff(y) / h
    if order == 1 or len(x) < 3:
        return y[:-1].copy(), slope, np.zeros_like(slope)
    if order != 2:
        raise ValueError("interpolation order must be 1 or 2")
    m = len(h)
    first = np.minimum(2 * (np.arange(m) // 2), len(x) - 3)
    x0, x1, x2 = x[first], x[first + 1], x[first + 2]
    y0 = y[first]
    f01 = (y[first + 1] - y0) / (x1 - x0)
    f12 = (y[first + 2] - y[first + 1]) / (x2 - x1)
    f012 = (f12 - f01) / (x2 - x0)
    alpha = x[:-1] - x0
    beta = x[:-1] - x1
    c0 = y0 + f01 * alpha + f012 * alpha * beta
    c1 = f01 + f012 * (alpha + beta)
    return c0, c1, f012


def _evaluate_segments(x, coeffs, w):
    c0, c1, c2 = coeffs
    i = np.clip(np.searchsorted(x, w, side="right") - 1, 0, len(x) - 2)
    t = w - x[i]
    inside = (w >= x[0]) & (w <= x[-1])
    return np.where(inside, c0[i] + c1[i] * t + c2[i] * t * t, 0.0)


def principal_value_integral(x, y, omega, order: int = 1) -> np.ndarray:
    """``P int f(x') / (omega - x') dx'`` for the piecewise-polynomial interpolant f of (x, y).

    ``order=1`` is linear interpolation, ``order=2`` piecewise quadratic. The
    interpolant is zero outside ``[x[0], x[-1]]``. Each segment is integrated
    in closed form and the logarithmic terms of adjacent segments are
    combined per node, where their coefficient vanishes as omega approaches
    the node, so grid points need no special handling. The result diverges
    only at an end point where ``y`` is nonzero.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    c0, c1, c2 = _segments(x, y, order)
    h = np.diff(x)

    t = w[:, None] - x[None, :-1]  # omega relative to each segment start
    p = c0 + c1 * t + c2 * t * t  # each segment polynomial continued to omega
    result = -np.sum((c1 + c2 * t) * h + c2 * h * h / 2, axis=1)

    u = w[:, None] - x[None, :]
    coef = np.empty_like(u)
    coef[:, 0] = p[:, 0]
    coef[:, 1:-1] = p[:, 1:] - p[:, :-1]
    coef[:, -1] = -p[:, -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = coef * np.log(np.abs(u))
    at_node = u == 0
    interior = np.zeros_like(at_node)
    interior[:, 1:-1] = True
    # interior coefficients vanish exactly at their node; so do end points with y == 0
    zero_ends = np.zeros_like(at_node)
    zero_ends[:, 0] = y[0] == 0
    zero_ends[:, -1] = y[-1] == 0
    terms = np.where(at_node & (interior | zero_ends), 0.0, terms)
    result = result + terms.sum(axis=1)
    return result.reshape(np.shape(omega))


def principal_value_linear(x, y, omega) -> np.ndarray:
    """Principal-value integral of the piecewise-linear interpolant of (x, y)."""
    return principal_value_integral(x, y, omega, order=1)


@dataclass(frozen=True)
class TabulatedModel(SpectralModel):
    """Tabulated J_xx (= J_yy) and J_zz on a positive, increasing frequency grid.

    Between grid points J is a piecewise quadratic through consecutive node
    triples (``interpolation="quadratic"``, clipped at zero) or linear
    (``"linear"``); the shift kernel is the exact principal value of the same
    interpolant. Outside the grid J is zero (``out_of_grid="zero"``) or an
    error is raised (``"error"``).
    """

    omega: np.ndarray
    j_xx: np.ndarray
    j_zz: np.ndarray
    out_of_grid: str = "zero"
    interpolation: str = "quadratic"
    physical = True

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        jxx = np.asarray(self.j_xx, dtype=float)
        jzz = np.asarray(self.j_zz, dtype=float)
        if omega.ndim != 1 or len(omega) < 2:
            raise ValueError("frequency grid needs at least two points")
        if jxx.shape != omega.shape or jzz.shape != omega.shape:
            raise ValueError("J columns must match the frequency grid")
        if np.any(np.diff(omega) <= 0):
            raise ValueError("frequency grid must be strictly increasing")
        if omega[0] <= 0:
            raise ValueError("frequency grid must be positive")
        if np.any(jxx < 0) or np.any(jzz < 0):
            raise ValueError("spectral density must be non-negative")
        if self.out_of_grid not in ("zero", "error"):
            raise ValueError("out_of_grid must be 'zero' or 'error'")
        if self.interpolation not in ("linear", "quadratic"):
            raise ValueError("interpolation must be 'linear' or 'quadratic'")
        for name, arr in (("omega", omega), ("j_xx", jxx), ("j_zz", jzz)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def _column(self, q):
        return self.j_xx if _component(q) == "xx" else self.j_zz

    @property
    def _order(self):
        return 1 if self.interpolation == "linear" else 2

    def density(self, q, omega):
        w = np.asarray(omega, dtype=float)
        if self.out_of_grid == "error":
            positive = w[w > 0]
            if np.any((positive < self.omega[0]) | (positive > self.omega[-1])):
                raise ValueError("frequency outside the tabulated grid")
        coeffs = _segments(self.omega, self._column(q), self._order)
        values = _evaluate_segments(self.omega, coeffs, w.ravel()).reshape(w.shape)
        return np.maximum(values, 0.0)

    def lambda_shift(self, q, omega):
        return principal_value_integral(self.omega, self._column(q), omega, self._order)

    def scaled(self, factor):
        return TabulatedModel(
            self.omega, self.j_xx * factor, self.j_zz * factor, self.out_of_grid, self.interpolation
        )


def gamma(model: SpectralModel, q: int, omega):
    """Decay-rate density 2 pi J_qq(omega) per unit dipole squared."""
    return model.gamma(q, omega)


def lambda_shift(model: SpectralModel, q: int, omega):
    """Shift density P int J_qq(w') / (omega - w') dw' per unit dipole squared."""
    return model.lambda_shift(q, omega)


def green_to_density(omega_ev, im_green) -> np.ndarray:
    """Convert Im G (SI, 1/m) at photon energies ``omega_ev`` into J in atomic units."""
    omega_si = np.asarray(omega_ev, dtype=float) * _c.e / _c.hbar
    j_si = omega_si**2 * np.asarray(im_green, dtype=float) / (_c.hbar * np.pi * _c.epsilon_0 * _c.c**2)
    # J_si is a rate per (C m)**2; express as Hartree per (e a0)**2
    return j_si * _c.hbar * (_c.e * BOHR_M) ** 2 / HARTREE_J


def spectral_density_from_green(omega_ev, im_g_xx, im_g_zz, out_of_grid="zero") -> TabulatedModel:
    """Tabulated model from the scattering Green tensor diagonal at the emitter.

    Parameters
    ----------
    omega_ev : array
        Positive, strictly increasing photon energies in eV.
    im_g_xx, im_g_zz : array
        Im G^scatt_xx (= Im G^scatt_yy) and Im G^scatt_zz in 1/m.
    """
    im_g_xx = np.asarray(im_g_xx, dtype=float)
    im_g_zz = np.asarray(im_g_zz, dtype=float)
    if np.any(im_g_xx < 0) or np.any(im_g_zz < 0):
        raise ValueError("negative Im G: the environment must be passive")
    omega_ev = np.asarray(omega_ev, dtype=float)
    if np.any(np.diff(omega_ev) <= 0):
        raise ValueError("frequency grid must be strictly increasing")
    return TabulatedModel(
        ev_to_hartree(omega_ev),
        green_to_density(omega_ev, im_g_xx),
        green_to_density(omega_ev, im_g_zz),
        out_of_grid,
    )


def read_spectral_file(path, out_of_grid="zero", interpolation="quadratic") -> TabulatedModel:
    """Read a tabulated spectral file.

    Rows are ``omega_eV  Jxx  Jzz`` with J in eV/(e a0)**2. A header line
    ``#format: imgreen`` switches the columns to Im G_xx and Im G_zz in 1/m.
    """
    path = Path(path)
    fmt = "density"
    rows = []
    for line in path.read_text(encoding="utf-8").splitlines():
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped[1:].strip()
            if body.lower().startswith("format:"):
                fmt = body.split(":", 1)[1].strip().lower()
            continue
        values = stripped.split()
        if len(values) != 3:
            raise ValueError(f"{path}: expected three columns, got {line!r}")
        rows.append([float(v) for v in values])
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.array(rows)
    if fmt == "imgreen":
        model = spectral_density_from_green(data[:, 0], data[:, 1], data[:, 2], out_of_grid)
        return TabulatedModel(model.omega, model.j_xx, model.j_zz, out_of_grid, interpolation)
    if fmt != "density":
        raise ValueError(f"{path}: unknown format {fmt!r}")
    return TabulatedModel(
        ev_to_hartree(data[:, 0]), data[:, 1] / HARTREE_EV, data[:, 2] / HARTREE_EV, out_of_grid, interpolation
    )


def write_spectral_file(path, model: TabulatedModel, header: str = "") -> None:
    """Write ``model`` in the density format read by :func:`read_spectral_file`."""
    lines = [f"# {h}" for h in header.splitlines()] if header else []
    lines.append("# omega_eV  Jxx[eV/(e a0)^2]  Jzz[eV/(e a0)^2]")
    for w, jx, jz in zip(model.omega, model.j_xx, model.j_zz):
        lines.append(f"{w * HARTREE_EV:.17g} {jx * HARTREE_EV:.17g} {jz * HARTREE_EV:.17g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def oscillator_density(omega_ev, omega0_ev: float, width_ev: float, amplitude: float) -> np.ndarray:
    """Damped-oscillator profile in eV/(e a0)**2, zero at zero frequency.

    ``amplitude * w * width / ((w**2 - w0**2)**2 + (w * width)**2)`` with all
    energies in eV; a smooth, physical shape for synthetic environments.
    """
    w = np.asarray(omega_ev, dtype=float)
    return amplitude * w * width_ev / ((w**2 - omega0_ev**2) ** 2 + (w * width_ev) ** 2)


def power_law_family(omega_ev, j_xx_ev, j_zz_ev, distances_nm, reference_nm: float = 100.0, exponent: float = 3.0):
    """Tabulated models whose amplitude scales as ``(reference / d)**exponent``.

    Mimics how the scattered field of a small particle grows as the emitter
    approaches it; the spectral shape is the same at every distance.
    """
    base = TabulatedModel(ev_to_hartree(np.asarray(omega_ev, dtype=float)), np.asarray(j_xx_ev) / HARTREE_EV,
                          np.asarray(j_zz_ev) / HARTREE_EV)
    return [base.scaled((reference_nm / d) ** exponent) for d in distances_nm]
