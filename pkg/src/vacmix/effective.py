"""Effective non-Hermitian Hamiltonians of single Bohr levels.

Projecting the geometric-mean Lindblad equation onto a Bohr level n and
dropping the refilling terms leaves the Schrodinger-type generator

    H_eff^(n) = H_at^(n) + sum_q [D_q^(n)T S D_q^(n) - (i/2) Sigma_q^(n)+ Sigma_q^(n)]

whose eigenvalues give the field-dressed energies (real part) and decay
rates (-2 x imaginary part). Because every D and Sigma changes m_j by q and
l by one unit, H_eff splits into blocks of fixed m_j and l-parity.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .atom import Basis, QuantumState, build_dipole_table
from .master_eq import GeneratorSet, build_br_tensor, full_secularize, geometric_mean_lindblad, partial_secularize

log = logging.getLogger(__name__)

BLOCK_TOL = 1e-14
CONDITION_LIMIT = 1e12
TIE_TOL = 1e-6


class BlockStructureError(RuntimeError):
    """H_eff couples states that should belong to different blocks."""


def _intermediate_mask(basis: Basis, levels):
    if levels is None:
        return np.ones(len(basis), dtype=bool)
    return np.isin(basis.levels, list(levels))


def level_operators(g: GeneratorSet, n: int, intermediate_levels=None):
    """``(D, signs, Sigma)`` per polarization for level n, rows restricted to ``intermediate_levels``."""
    if (0, n) not in g.decay_ops:
        raise KeyError(f"generator has no operators for Bohr level n={n}")
    keep = _intermediate_mask(g.basis, intermediate_levels)[:, None]
    ops = {}
    for (q, level), sigma in g.decay_ops.items():
        if level != n:
            continue
        ops[q] = (g.shift_ops[(q, n)] * keep, g.shift_signs[(q, n)], sigma * keep)
    return ops


def project_effective(g: GeneratorSet, n: int, intermediate_levels=None) -> np.ndarray:
    """H_eff on the span of the Bohr level ``n`` states (in basis order).

    Parameters
    ----------
    g : GeneratorSet
        Geometric-mean (partially secularized) generator.
    n : int
        Bohr level to project on.
    intermediate_levels : iterable of int, optional
        Restrict the virtual states that enter D^+D and Sigma^+Sigma.
    """
    if g.secularization != "partial+geometric-mean":
        raise ValueError("project_effective needs a partially secularized geometric-mean generator")
    idx = g.basis.select(n=n)
    if idx.size == 0:
        raise KeyError(f"Bohr level n={n} not in basis")
    h = g.h_at.astype(complex)
    for d_op, signs, sigma in level_operators(g, n, intermediate_levels).values():
        h = h + d_op.T @ (signs * d_op) - 0.5j * (sigma.conj().T @ sigma)
    return h[np.ix_(idx, idx)]


@dataclass
class EffectiveBlock:
    n: int
    m_j: Fraction
    parity: int
    h_eff: np.ndarray
    labels: tuple
    indices: np.ndarray
    eigenvalues: np.ndarray | None = None
    vectors: np.ndarray | None = None
    condition: float = float("nan")
    defective: bool = False

    @property
    def dim(self):
        return len(self.labels)


def block_decompose(h_eff: np.ndarray, labels, n: int | None = None, indices=None) -> list[EffectiveBlock]:
    """Split H_eff into (m_j, l-parity) blocks, checking that no element couples blocks.

    ``labels`` are the QuantumStates of the rows of ``h_eff``; ``indices``
    optionally records their positions in a larger basis.
    """
    labels = tuple(labels)
    if h_eff.shape != (len(labels), len(labels)):
        raise ValueError("h_eff and labels disagree in size")
    if indices is None:
        indices = np.arange(len(labels))
    keys = [(s.m_j, s.parity) for s in labels]
    scale = max(np.max(np.abs(h_eff)), 1.0) if h_eff.size else 1.0
    same = np.array([[ka == kb for kb in keys] for ka in keys])
    leak = np.abs(h_eff[~same]).max(initial=0.0)
    if leak > BLOCK_TOL * scale:
        raise BlockStructureError(f"cross-block element {leak:.3e} exceeds tolerance")
    blocks = []
    for m_j, parity in sorted(set(keys), key=lambda k: (k[0], -k[1])):
        sel = [i for i, k in enumerate(keys) if k == (m_j, parity)]
        level = labels[sel[0]].n if n is None else n
        blocks.append(
            EffectiveBlock(
                level,
                m_j,
                parity,
                h_eff[np.ix_(sel, sel)],
                tuple(labels[i] for i in sel),
                np.asarray(indices)[sel],
            )
        )
    return blocks


def effective_blocks(g: GeneratorSet, n: int, intermediate_levels=None) -> list[EffectiveBlock]:
    h = project_effective(g, n, intermediate_levels)
    idx = g.basis.select(n=n)
    return block_decompose(h, [g.basis[i] for i in idx], n, idx)


def effective_block(g: GeneratorSet, n: int, m_j, parity: int, intermediate_levels=None) -> EffectiveBlock:
    for block in effective_blocks(g, n, intermediate_levels):
        if block.m_j == Fraction(m_j).limit_denominator(2) and block.parity == parity:
            return block
    raise KeyError(f"no block n={n}, m_j={m_j}, parity={parity}")


def eigenanalyze(block: EffectiveBlock):
    """Energies, decay rates and unit-norm right eigenvectors, ordered by energy.

    The mean diagonal energy is removed before diagonalizing so that roundoff
    scales with the perturbation rather than with the Bohr energy.
    Ill-conditioned (near-defective) blocks are flagged, not rejected.
    """
    h = block.h_eff
    shift = np.mean(np.real(np.diag(h))) if h.size else 0.0
    vals, vecs = np.linalg.eig(h - shift * np.eye(len(h)))
    vals = vals + shift
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    order = np.lexsort((-2 * vals.imag, vals.real))
    vals, vecs = vals[order], vecs[:, order]
    cond = np.linalg.cond(vecs) if len(h) else 1.0
    block.eigenvalues, block.vectors, block.condition = vals, vecs, cond
    block.defective = bool(cond > CONDITION_LIMIT)
    if block.defective:
        warnings.warn(f"block (n={block.n}, m_j={block.m_j}) is nearly defective (cond={cond:.2e})", stacklevel=2)
    return vals.real.copy(), -2 * vals.imag, vecs


def participation_ratio(vector, labels=None, tol: float = 1e-10) -> float:
    """Number of basis states effectively contributing to a normalized vector.

    ``[sum_k |<psi|phi_k>|**4]**-1`` in the basis the vector is expressed in.
    """
    v = np.asarray(vector)
    if labels is not None and len(labels) != len(v):
        raise ValueError("vector and labels disagree in size")
    weights = np.abs(v) ** 2
    if abs(weights.sum() - 1.0) > tol:
        raise ValueError(f"vector is not normalized (norm**2 = {weights.sum():.6g})")
    return float(1.0 / np.sum(weights**2))


def dark_state_certificate(block: EffectiveBlock, decay_ops, rtol: float = 1e-10):
    """A block vector annihilated by every decay operator, or None.

    ``decay_ops`` are full-basis operators (e.g. from :func:`level_operators`);
    their columns for the block states are stacked into one map and a null
    vector is returned when its rank is below the block dimension.
    """
    mats = [np.asarray(op)[:, block.indices] for op in decay_ops]
    if not mats:
        raise ValueError("no decay operators")
    stacked = np.vstack(mats)
    u, s, vh = np.linalg.svd(stacked)
    tol = rtol * (s[0] if s.size and s[0] > 0 else 1.0)
    rank = int(np.sum(s > tol))
    if rank >= block.dim:
        return None
    vec = vh[-1].conj()
    return vec / np.linalg.norm(vec)


# ---------------------------------------------------------------- sweeps


@dataclass
class SweepPoint:
    energies: np.ndarray
    centered: np.ndarray
    rates: np.ndarray
    participation: np.ndarray
    vectors: np.ndarray

    @property
    def mean_participation(self):
        return float(np.mean(self.participation))


@dataclass
class SweepTable:
    """Per-point eigen-data; column ``k`` of every array follows one tracked state."""

    points: list
    labels: tuple
    ties: list = field(default_factory=list)

    def array(self, name):
        return np.array([getattr(p, name) for p in self.points])

    @property
    def energies(self):
        return self.array("energies")

    @property
    def centered(self):
        return self.array("centered")

    @property
    def rates(self):
        return self.array("rates")

    @property
    def participation(self):
        return self.array("participation")

    @property
    def mean_participation(self):
        return np.array([p.mean_participation for p in self.points])


def _analyze_point(model, basis, dipoles, n, m_j, parity, counter_rotating, intermediate_levels, diagonal):
    tensor = build_br_tensor(basis, dipoles, model, counter_rotating)
    if diagonal:
        block = diagonal_reference_block(tensor, n, m_j, parity)
    else:
        g = geometric_mean_lindblad(partial_secularize(tensor))
        block = effective_block(g, n, m_j, parity, intermediate_levels)
    energies, rates, vecs = eigenanalyze(block)
    pr = np.array([participation_ratio(vecs[:, k]) for k in range(vecs.shape[1])])
    return block, SweepPoint(energies, energies - energies.mean(), rates, pr, vecs)


def diagonal_reference_block(tensor, n, m_j, parity) -> EffectiveBlock:
    """Block of the fully secularized model: diagonal shifts and rates only."""
    g = full_secularize(tensor)
    idx = g.basis.select(n=n, m_j=m_j, parity=parity)
    h = g.hamiltonian.astype(complex)
    for op in g.jump_operators:
        h = h - 0.5j * (op.conj().T @ op)
    sub = h[np.ix_(idx, idx)]
    # full secularization keeps only degenerate couplings; drop them too for a purely diagonal model
    sub = np.diag(np.diag(sub))
    return EffectiveBlock(n, Fraction(m_j).limit_denominator(2), parity, sub, tuple(g.basis[i] for i in idx), idx)


def track_states(previous, current):
    """Permutation of current columns that best overlaps the previous ones (greedy)."""
    overlap = np.abs(previous.conj().T @ current) ** 2
    size = overlap.shape[0]
    perm = np.full(size, -1)
    ties = []
    free_prev, free_cur = set(range(size)), set(range(size))
    flat = sorted(((-overlap[i, j], i, j) for i in range(size) for j in range(size)))
    for neg, i, j in flat:
        if i not in free_prev or j not in free_cur:
            continue
        rivals = [k for k in free_cur if k != j and abs(overlap[i, k] + neg) < TIE_TOL]
        if rivals:
            # energy order (column order) decides among near-equal overlaps
            j = min([j] + rivals)
            ties.append((i, j))
        perm[i] = j
        free_prev.discard(i)
        free_cur.discard(j)
    return perm, ties


def sweep_and_track(
    models,
    n: int,
    m_j,
    parity: int,
    basis: Basis,
    dipoles=None,
    counter_rotating: bool = True,
    intermediate_levels=None,
    diagonal: bool = False,
    max_workers: int | None = None,
) -> SweepTable:
    """Eigen-analysis of one (n, m_j, parity) block across an ordered list of models.

    Points are evaluated independently (thread pool when ``max_workers`` >
    1); eigenstates are then matched between neighbouring points by maximal
    ``|<psi_prev|psi>|**2``. ``diagonal=True`` analyzes the fully secularized
    reference instead, whose eigenstates are the bare basis states.
    """
    dipoles = build_dipole_table(basis) if dipoles is None else dipoles
    args = (basis, dipoles, n, m_j, parity, counter_rotating, intermediate_levels, diagonal)
    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers) as pool:
            results = list(pool.map(lambda m: _analyze_point(m, *args), models))
    else:
        results = [_analyze_point(m, *args) for m in models]
    if not results:
        raise ValueError("empty sweep")
    labels = results[0][0].labels
    points = [results[0][1]]
    ties = []
    for k in range(1, len(results)):
        point = results[k][1]
        perm, tie = track_states(points[-1].vectors, point.vectors)
        ties.extend((k, i, j) for i, j in tie)
        points.append(
            SweepPoint(
                point.energies[perm],
                point.centered[perm],
                point.rates[perm],
                point.participation[perm],
                point.vectors[:, perm],
            )
        )
    return SweepTable(points, labels, ties)
