"""Bloch-Redfield generator and its Lindblad reductions.

The Bloch-Redfield coefficients factor through the spherical dipole matrices,

    Gamma_{ca,db}(w) = sum_q conj(d^q_ca) gamma_qq(w) d^q_db,

so a tensor is stored as three matrices per polarization: the bare dipole
``A = d^q``, ``A * lambda(w_col -> row)`` and ``A * gamma(w_col -> row)``,
where the frequency of element ``[x, y]`` is ``E_y - E_x`` (positive for a
downward transition y -> x). Every entry of the four-index tensor can be
read back from these, and the equation of motion is applied in operator form.

Conventions: hbar = 1, Hartree units, density matrices are dense
``(N, N)`` complex arrays. Superoperators act on row-major ``rho.ravel()``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .atom import POLARIZATIONS, Basis, DipoleTable
from .bath import SpectralModel

log = logging.getLogger(__name__)

DEGENERACY_TOL = 1e-12  # Hartree


class SignConditionError(ValueError):
    """Shift kernels of a retained tuple have opposite signs."""


# ---------------------------------------------------------------- superoperators


def spre(a):
    return np.kron(a, np.eye(a.shape[0]))


def spost(b):
    return np.kron(np.eye(b.shape[0]), b.T)


def sprepost(a, b):
    """Superoperator of ``rho -> a @ rho @ b`` on row-major vectors."""
    return np.kron(a, b.T)


def hamiltonian_superoperator(h):
    return -1j * (spre(h) - spost(h))


def dissipator_superoperator(op):
    ada = op.conj().T @ op
    return sprepost(op, op.conj().T) - 0.5 * (spre(ada) + spost(ada))


def lindblad_superoperator(h, jump_ops):
    out = hamiltonian_superoperator(h)
    for op in jump_ops:
        out = out + dissipator_superoperator(op)
    return out


def lindblad_apply(h, jump_ops, rho):
    """-i[h, rho] + sum_k (L rho L^+ - 1/2 {L^+ L, rho})."""
    out = -1j * (h @ rho - rho @ h)
    for op in jump_ops:
        opd = op.conj().T
        ada = opd @ op
        out += op @ rho @ opd - 0.5 * (ada @ rho + rho @ ada)
    return out


# ---------------------------------------------------------------- kernels


def transition_frequencies(energies: np.ndarray) -> np.ndarray:
    """``w[x, y] = E_y - E_x``: frequency released by the transition y -> x."""
    return energies[None, :] - energies[:, None]


def _kernel_matrix(kernel, q, mask, freqs):
    out = np.zeros(freqs.shape)
    if mask.any():
        values, inverse = np.unique(freqs[mask], return_inverse=True)
        out[mask] = np.asarray(kernel(q, values), dtype=float)[inverse]
    return out


# ---------------------------------------------------------------- Bloch-Redfield


@dataclass(frozen=True)
class BRTensor:
    """Bloch-Redfield tensor in factored form.

    ``dipole[q]``, ``shift[q]`` and ``decay[q]`` are ``d^q``, ``d^q * lambda``
    and ``d^q * gamma`` with the kernels taken at each element's transition
    frequency. ``secular`` is ``"none"`` or ``"partial"`` (tuples whose
    states a and b lie in different Bohr levels are dropped).
    """

    basis: Basis
    dipole: dict
    shift: dict
    decay: dict
    counter_rotating: bool
    secular: str = "none"

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def polarizations(self):
        return tuple(self.dipole)

    def gamma_entry(self, c, a, d, b, at="bd"):
        """Gamma_{ca,db} evaluated at w_bd (``at="bd"``) or w_ac (``at="ac"``)."""
        return self._entry(self.decay, c, a, d, b, at)

    def lambda_entry(self, c, a, d, b, at="bd"):
        """Lambda_{ca,db} evaluated at w_bd (``at="bd"``) or w_ac (``at="ac"``)."""
        return self._entry(self.shift, c, a, d, b, at)

    def _entry(self, weighted, c, a, d, b, at):
        if self.secular == "partial" and self.basis[a].n != self.basis[b].n:
            return 0.0
        total = 0.0
        for q, dip in self.dipole.items():
            if at == "bd":
                total += np.conj(dip[c, a]) * weighted[q][d, b]
            elif at == "ac":
                total += np.conj(weighted[q][c, a]) * dip[d, b]
            else:
                raise ValueError("at must be 'bd' or 'ac'")
        return float(np.real(total))

    def level_blocks(self):
        if self.secular == "partial":
            levels = self.basis.levels
            return [np.flatnonzero(levels == n) for n in np.unique(levels)]
        return [np.arange(self.dim)]

    def _same_level_mask(self):
        if self.secular == "partial":
            levels = self.basis.levels
            return levels[:, None] == levels[None, :]
        return np.ones((self.dim, self.dim), dtype=bool)

    def _left_right(self):
        # sum_q A^+ (A lambda) etc; the (a, b) pairs are filtered by secularization
        mask = self._same_level_mask()
        k_shift = np.zeros((self.dim, self.dim), dtype=complex)
        k_decay = np.zeros((self.dim, self.dim), dtype=complex)
        for q, a in self.dipole.items():
            ad = a.conj().T
            k_shift += ad @ self.shift[q]
            k_decay += ad @ self.decay[q]
        return k_shift * mask, k_decay * mask

    def _sandwich(self, x, y, rho):
        # sum over (b, a) in the same block of x[:, b] rho[b, a] conj(y[:, a])
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for idx in self.level_blocks():
            out += x[:, idx] @ rho[np.ix_(idx, idx)] @ y[:, idx].conj().T
        return out

    def rhs(self, rho, h_at=None):
        """Bloch-Redfield time derivative of ``rho`` (atomic Hamiltonian included)."""
        rho = np.asarray(rho)
        if rho.shape != (self.dim, self.dim):
            raise ValueError(f"density matrix shape {rho.shape} does not match dimension {self.dim}")
        h = np.diag(self.basis.energies) if h_at is None else h_at
        k_shift, k_decay = self._left_right()
        out = -1j * (h @ rho - rho @ h)
        out += -1j * (k_shift @ rho - rho @ k_shift.conj().T)
        out += -0.5 * (k_decay @ rho + rho @ k_decay.conj().T)
        for q, a in self.dipole.items():
            out += 1j * (self._sandwich(self.shift[q], a, rho) - self._sandwich(a, self.shift[q], rho))
            out += 0.5 * (self._sandwich(self.decay[q], a, rho) + self._sandwich(a, self.decay[q], rho))
        return out

    def superoperator(self, h_at=None):
        """Dense ``N**2 x N**2`` generator (no positivity guarantee)."""
        h = np.diag(self.basis.energies) if h_at is None else h_at
        k_shift, k_decay = self._left_right()
        out = hamiltonian_superoperator(h)
        out += -1j * (spre(k_shift) - spost(k_shift.conj().T))
        out += -0.5 * (spre(k_decay) + spost(k_decay.conj().T))
        for idx in self.level_blocks():
            proj = np.zeros((self.dim, self.dim))
            proj[idx, idx] = 1.0
            for q, a in self.dipole.items():
                ap, lp, gp = a @ proj, self.shift[q] @ proj, self.decay[q] @ proj
                out += 1j * (sprepost(lp, ap.conj().T) - sprepost(ap, lp.conj().T))
                out += 0.5 * (sprepost(gp, ap.conj().T) + sprepost(ap, gp.conj().T))
        return out

    def restrict(self, idx) -> "BRTensor":
        idx = np.asarray(idx)
        sub = Basis(tuple(self.basis[i] for i in idx), self.basis.n_max, self.basis.alpha)
        take = lambda m: {q: v[np.ix_(idx, idx)] for q, v in m.items()}  # noqa: E731
        return BRTensor(sub, take(self.dipole), take(self.shift), take(self.decay), self.counter_rotating, self.secular)

    def coupling_pattern(self):
        out = np.zeros((self.dim, self.dim), dtype=bool)
        for q, a in self.dipole.items():
            out |= (self.shift[q] != 0) | (self.decay[q] != 0)
        return out


def build_br_tensor(
    basis: Basis, dipoles: DipoleTable, model: SpectralModel, counter_rotating: bool = True
) -> BRTensor:
    """Bloch-Redfield tensor of ``basis`` coupled to ``model``.

    With ``counter_rotating=False`` kernels are kept only at non-negative
    transition frequencies (rotating-wave coupling).
    """
    freqs = transition_frequencies(basis.energies)
    allowed = np.ones(freqs.shape, dtype=bool) if counter_rotating else freqs >= 0
    dip, shift, decay = {}, {}, {}
    for q in POLARIZATIONS:
        a = dipoles.matrix(q)
        mask = (a != 0) & allowed
        dip[q] = a
        shift[q] = a * _kernel_matrix(model.lambda_shift, q, mask, freqs)
        decay[q] = a * _kernel_matrix(model.gamma, q, mask, freqs)
    return BRTensor(basis, dip, shift, decay, counter_rotating)


def partial_secularize(t: BRTensor, basis: Basis | None = None) -> BRTensor:
    """Drop every tuple whose states a and b belong to different Bohr levels."""
    if basis is not None and basis is not t.basis and tuple(basis) != tuple(t.basis):
        raise ValueError("basis does not match the tensor")
    return BRTensor(t.basis, t.dipole, t.shift, t.decay, t.counter_rotating, "partial")


def kossakowski_matrix(t: BRTensor, geometric_mean: bool = False) -> np.ndarray:
    """Decay coefficients as an ``N**2 x N**2`` matrix over operator pairs.

    Entry ``[(d, b), (c, a)]`` multiplies ``|d><b| rho |a><c|``. The raw
    Bloch-Redfield value is ``(Gamma(w_bd) + Gamma(w_ac)) / 2``; with
    ``geometric_mean=True`` it is ``sqrt(Gamma(w_bd)) sqrt(Gamma(w_ac))``,
    evaluated tuple by tuple.
    """
    n = t.dim
    keep = t._same_level_mask()  # indexed [a, b]
    total = np.zeros((n, n, n, n), dtype=complex)  # [d, b, c, a]
    for q, a_mat in t.dipole.items():
        dd = np.einsum("db,ca->dbca", a_mat, a_mat.conj())
        with np.errstate(invalid="ignore", divide="ignore"):
            g_db = np.where(a_mat != 0, t.decay[q] / np.where(a_mat != 0, a_mat, 1), 0.0)
        g_bd = g_db[:, :, None, None]
        g_ac = g_db[None, None, :, :]
        if geometric_mean:
            total += dd * np.sqrt(g_bd * g_ac)
        else:
            total += dd * 0.5 * (g_bd + g_ac)
    total *= keep.T[None, :, None, :]
    return total.reshape(n * n, n * n)


# ---------------------------------------------------------------- Lindblad forms


@dataclass(frozen=True)
class GeneratorSet:
    """Operators of a Lindblad master equation for the atom.

    ``decay_ops`` and ``shift_ops`` are keyed by ``(q, n)`` (one per
    polarization and Bohr level) in the geometric-mean form; after full
    secularization ``decay_ops`` is keyed by ``(q, omega)``. ``shift_ops``
    holds the real matrices ``d * sqrt(|lambda|)`` and ``shift_signs`` the
    sign of lambda for each element, so that
    ``H_CP = sum D^T (signs * D)``; for non-negative kernels this is
    ``sum D^+ D``.
    """

    basis: Basis
    h_at: np.ndarray
    h_cp: np.ndarray
    decay_ops: dict
    shift_ops: dict = field(default_factory=dict)
    shift_signs: dict = field(default_factory=dict)
    secularization: str = "partial+geometric-mean"
    counter_rotating: bool = True

    @property
    def dim(self):
        return len(self.basis)

    @property
    def hamiltonian(self):
        return self.h_at + self.h_cp

    @property
    def jump_operators(self):
        return [op for op in self.decay_ops.values() if np.any(op)]

    def rhs(self, rho):
        return lindblad_rhs(self, rho)

    def superoperator(self):
        return lindblad_superoperator(self.hamiltonian, self.jump_operators)

    def coupling_pattern(self):
        out = self.hamiltonian != 0
        for op in self.jump_operators:
            out |= op != 0
        return out


def lindblad_rhs(g: GeneratorSet, rho) -> np.ndarray:
    """-i[H_at + H_CP, rho] + sum over decay operators of L_Sigma[rho]."""
    rho = np.asarray(rho)
    if rho.shape != (g.dim, g.dim):
        raise ValueError(f"density matrix shape {rho.shape} does not match dimension {g.dim}")
    return lindblad_apply(g.hamiltonian, g.jump_operators, rho)


def _signed_sqrt_parts(shift_col, q, n, basis, cols):
    """|.|-sqrt and sign of the shift kernel; checks the common-sign condition."""
    lam = shift_col
    sign = np.sign(lam)
    # every row (intermediate state c) must see one sign across the level's columns
    pos = (sign > 0).any(axis=1)
    neg = (sign < 0).any(axis=1)
    bad = np.flatnonzero(pos & neg)
    if bad.size:
        c = int(bad[0])
        a = int(cols[np.flatnonzero(sign[c] > 0)[0]])
        b = int(cols[np.flatnonzero(sign[c] < 0)[0]])
        raise SignConditionError(
            f"shift kernel changes sign for q={q}, level n={n}: states a={basis[a].label}, "
            f"b={basis[b].label} via intermediate c={basis[c].label}; the geometric mean "
            "would give a non-Hermitian Casimir-Polder Hamiltonian"
        )
    row_sign = np.where(pos, 1.0, np.where(neg, -1.0, 0.0))
    return np.sqrt(np.abs(lam)), row_sign


def geometric_mean_lindblad(t: BRTensor) -> GeneratorSet:
    """Lindblad generator from a partially secularized tensor via geometric means.

    Builds ``Sigma_q^(n)[d, b] = d^q_db sqrt(gamma(w_bd))`` and
    ``D_q^(n)[d, b] = d^q_db sqrt(|lambda(w_bd)|)`` for b in level n and
    ``H_CP = sum_{q,n} D^T (sign * D)``.

    Raises
    ------
    SignConditionError
        If for some retained tuple lambda(w_bd) and lambda(w_ac) differ in sign.
    """
    if t.secular != "partial":
        raise ValueError("geometric mean requires a partially secularized tensor")
    basis = t.basis
    size = t.dim
    levels = basis.levels
    decay_ops, shift_ops, shift_signs = {}, {}, {}
    h_cp = np.zeros((size, size))
    for q, a in t.dipole.items():
        with np.errstate(invalid="ignore", divide="ignore"):
            nz = a != 0
            lam = np.where(nz, t.shift[q] / np.where(nz, a, 1), 0.0)
            gam = np.where(nz, t.decay[q] / np.where(nz, a, 1), 0.0)
        if np.any(gam < 0):
            raise ValueError("negative decay kernel")
        for n in np.unique(levels):
            cols = np.flatnonzero(levels == n)
            root, row_sign = _signed_sqrt_parts(lam[:, cols], q, int(n), basis, cols)
            d_op = np.zeros((size, size))
            d_op[:, cols] = a[:, cols] * root
            sigma = np.zeros((size, size))
            sigma[:, cols] = a[:, cols] * np.sqrt(gam[:, cols])
            signs = np.zeros((size, size))
            signs[:, cols] = row_sign[:, None]
            decay_ops[(q, int(n))] = sigma
            shift_ops[(q, int(n))] = d_op
            shift_signs[(q, int(n))] = signs
            h_cp += d_op.T @ (signs * d_op)
    h_cp = 0.5 * (h_cp + h_cp.T)  # removes only roundoff; exact symmetry holds by the sign check
    return GeneratorSet(
        basis,
        np.diag(basis.energies),
        h_cp,
        decay_ops,
        shift_ops,
        shift_signs,
        "partial+geometric-mean",
        t.counter_rotating,
    )


def _group_frequencies(values, tol=DEGENERACY_TOL):
    order = np.argsort(values)
    groups = np.empty(len(values), dtype=int)
    label = -1
    last = None
    for i in order:
        if last is None or values[i] - last > tol:
            label += 1
        groups[i] = label
        last = values[i]
    return groups


def full_secularize(t: BRTensor) -> GeneratorSet:
    """Fully secular Lindblad generator: keep only terms with w_ac = w_bd.

    Degeneracy is decided with an absolute tolerance of 1e-12 Hartree. The
    decay part becomes ``sum_{q, Omega} L[sqrt(gamma_q(Omega)) d^q_Omega]``
    where ``d^q_Omega`` collects the dipole elements at transition frequency
    Omega; in the spherical basis the rate matrix is already diagonal.
    """
    basis = t.basis
    size = t.dim
    energies = basis.energies
    degenerate = np.abs(energies[:, None] - energies[None, :]) <= DEGENERACY_TOL
    freqs = transition_frequencies(energies)
    h_ls = np.zeros((size, size), dtype=complex)
    decay_ops = {}
    for q, a in t.dipole.items():
        h_ls += a.conj().T @ t.shift[q]
        nz = np.flatnonzero(a)
        if nz.size == 0:
            continue
        rows, cols = np.unravel_index(nz, a.shape)
        f = freqs[rows, cols]
        groups = _group_frequencies(f)
        for g in np.unique(groups):
            sel = groups == g
            r, c = rows[sel], cols[sel]
            op = np.zeros((size, size))
            op[r, c] = t.decay[q][r, c] / a[r, c]
            rate = op[r, c]
            if np.all(rate == 0):
                continue
            # common gamma within the group; take the mean to absorb roundoff
            op[r, c] = a[r, c] * np.sqrt(np.mean(rate))
            decay_ops[(q, float(np.mean(f[sel])))] = op
    h_ls = h_ls * degenerate
    h_ls = np.real_if_close(0.5 * (h_ls + h_ls.conj().T))
    return GeneratorSet(basis, np.diag(energies), h_ls, decay_ops, {}, {}, "full", t.counter_rotating)
