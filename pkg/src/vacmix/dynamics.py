"""Time propagation and the exact atom + lossy-mode reference model.

Four generator families are propagated on a common time grid:

* ``BRTensor`` (Bloch-Redfield, no positivity guarantee),
* ``GeneratorSet`` (Lindblad form),
* :class:`EffectiveGenerator` (non-Hermitian Schrodinger equation on one
  Bohr level, no refilling),
* :class:`OracleGenerator` (atom coupled to damped bosonic modes).

Before propagation the problem is reduced to the states connected to the
initial state through the generator (e.g. one m_j sector for z coupling).
The default ``method="expm"`` builds the reduced superoperator and steps
with its exact exponential, which stays accurate over windows that span
millions of optical periods. ``method="rk"`` integrates the operator-form
equation with an adaptive embedded Runge-Kutta scheme and is intended for
short windows and cross-checks.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm
from scipy.sparse.csgraph import connected_components

from .atom import Basis, DipoleTable
from .effective import project_effective
from .master_eq import BRTensor, GeneratorSet, lindblad_apply, lindblad_superoperator
from .units import atomic_to_fs, ev_to_hartree, fs_to_atomic, hbar_per_ev_to_atomic

log = logging.getLogger(__name__)

TRACE_DRIFT_LIMIT = 1e-6
MAX_EXPM_STATES = 64  # reduced dimension above which the dense superoperator is refused


class PropagationError(RuntimeError):
    pass


# ---------------------------------------------------------------- oracle


@dataclass(frozen=True)
class OracleMode:
    """Damped bosonic mode, parameters in Hartree units.

    ``polarization`` is one of ``"x"``, ``"y"``, ``"z"``: the mode couples
    to that Cartesian dipole component.
    """

    omega_m: float
    kappa: float
    g: float
    polarization: str = "z"

    def __post_init__(self):
        if self.polarization not in ("x", "y", "z"):
            raise ValueError(f"polarization must be x, y or z, got {self.polarization!r}")
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")

    @classmethod
    def from_ev(cls, omega_m, kappa, g, polarization="z"):
        return cls(ev_to_hartree(omega_m), ev_to_hartree(kappa), ev_to_hartree(g), polarization)


@dataclass(frozen=True)
class OracleModel:
    modes: tuple = ()
    max_photons: int = 1

    def __post_init__(self):
        if self.max_photons < 1:
            raise ValueError("photon truncation must be >= 1")

    def with_truncation(self, max_photons: int) -> "OracleModel":
        return OracleModel(self.modes, max_photons)


def fock_states(n_modes: int, max_photons: int) -> list[tuple]:
    """Occupation tuples with total photon number <= max_photons, vacuum first."""
    states = [s for s in itertools.product(range(max_photons + 1), repeat=n_modes) if sum(s) <= max_photons]
    return sorted(states, key=lambda s: (sum(s), tuple(-x for x in s)))


def _annihilation(fock, k):
    index = {s: i for i, s in enumerate(fock)}
    a = np.zeros((len(fock), len(fock)))
    for i, s in enumerate(fock):
        if s[k] > 0:
            lower = s[:k] + (s[k] - 1,) + s[k + 1 :]
            a[index[lower], i] = np.sqrt(s[k])
    return a


def _cartesian_component(dipoles: DipoleTable, polarization: str):
    dx, dy, dz = dipoles.cartesian()
    return {"x": dx, "y": dy, "z": dz}[polarization]


def rotating_parts(d, energies):
    """Lowering (``E_col >= E_row``) and raising (``E_col <= E_row``) parts of a dipole matrix.

    Degenerate elements belong to both parts, so the rotating-wave coupling
    ``down (x) a^+ + up (x) a`` stays Hermitian and keeps the zero-frequency
    terms that the rotating-wave master equation keeps.
    """
    down = d * (energies[None, :] >= energies[:, None])
    up = d * (energies[None, :] <= energies[:, None])
    return down, up


@dataclass(frozen=True)
class OracleGenerator:
    """Lindblad generator of the atom + modes, composite index ``atom * n_fock + fock``."""

    basis: Basis
    fock: tuple
    hamiltonian: np.ndarray
    jump_ops: tuple
    counter_rotating: bool

    @property
    def dim(self):
        return self.hamiltonian.shape[0]

    @property
    def atom_index(self):
        return np.repeat(np.arange(len(self.basis)), len(self.fock))

    def composite_index(self, atom: int, photons=None) -> int:
        photons = tuple(photons) if photons is not None else self.fock[0]
        return atom * len(self.fock) + self.fock.index(photons)

    def rhs(self, rho):
        return lindblad_apply(self.hamiltonian, self.jump_ops, rho)

    def coupling_pattern(self):
        out = self.hamiltonian != 0
        for op in self.jump_ops:
            out |= op != 0
        return out


def build_oracle(basis: Basis, dipoles: DipoleTable, oracle: OracleModel, counter_rotating: bool = True):
    """Exact Lindblad model of the atom coupled to damped modes.

    ``H = H_at + sum_k w_k a_k^+ a_k + sum_k g_k d_k (a_k + a_k^+)`` with the
    dissipator ``kappa_k L[a_k]``. Without counter-rotating terms the
    coupling is ``g_k (d_k^down a_k^+ + d_k^up a_k)``.
    """
    fock = fock_states(len(oracle.modes), oracle.max_photons)
    n_f = len(fock)
    eye_at, eye_f = np.eye(len(basis)), np.eye(n_f)
    energies = basis.energies
    h = np.kron(np.diag(energies), eye_f).astype(complex)
    jumps = []
    for k, mode in enumerate(oracle.modes):
        a = _annihilation(fock, k)
        h += mode.omega_m * np.kron(eye_at, a.T @ a)
        d = _cartesian_component(dipoles, mode.polarization)
        if counter_rotating:
            h += mode.g * np.kron(d, a + a.T)
        else:
            down, up = rotating_parts(d, energies)
            h += mode.g * (np.kron(down, a.T) + np.kron(up, a))
        if mode.kappa > 0:
            jumps.append(np.sqrt(mode.kappa) * np.kron(eye_at, a))
    return OracleGenerator(basis, tuple(fock), h, tuple(jumps), counter_rotating)


# ---------------------------------------------------------------- effective generator


@dataclass(frozen=True)
class EffectiveGenerator:
    """Non-Hermitian Hamiltonian of one Bohr level, embedded in the full basis."""

    basis: Basis
    n: int
    indices: np.ndarray
    h_eff: np.ndarray

    @classmethod
    def from_lindblad(cls, g: GeneratorSet, n: int, intermediate_levels=None):
        return cls(g.basis, n, g.basis.select(n=n), project_effective(g, n, intermediate_levels))


# ---------------------------------------------------------------- jobs and results


@dataclass
class PropagationJob:
    """One propagation.

    ``initial`` is an atom state index, a state vector or a density matrix
    over the atom basis (the oracle starts with the modes in vacuum).
    ``times_fs`` must start at 0 and increase strictly. ``observables`` maps
    names to Hermitian atom-space matrices; populations of every basis state
    are always recorded.
    """

    generator: object
    initial: object
    times_fs: np.ndarray
    observables: dict = field(default_factory=dict)
    method: str = "expm"
    rtol: float = 1e-9
    atol: float = 1e-12
    name: str = ""
    keep_states: bool = False

    def __post_init__(self):
        t = np.asarray(self.times_fs, dtype=float)
        if t.ndim != 1 or t.size == 0 or t[0] != 0 or np.any(np.diff(t) <= 0):
            raise ValueError("time grid must start at 0 and increase strictly")
        self.times_fs = t
        if self.method not in ("expm", "rk"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class RunResult:
    name: str
    variant: str
    times_fs: np.ndarray
    labels: tuple
    populations: np.ndarray  # (n_times, n_atom_states)
    observables: dict
    trace: np.ndarray
    min_eigenvalue: np.ndarray | None = None
    states: list | None = None
    meta: dict = field(default_factory=dict)

    def population(self, label_or_index):
        idx = label_or_index if isinstance(label_or_index, (int, np.integer)) else self.labels.index(label_or_index)
        return self.populations[:, idx]

    def columns(self, labels=None):
        """``{name: series}`` for the chosen population labels and all observables."""
        labels = self.labels if labels is None else labels
        out = {lab: self.population(lab) for lab in labels}
        out.update(self.observables)
        return out


def time_grid_hbar_per_ev(t_max, samples: int) -> np.ndarray:
    """Uniform grid in fs from a window given in units of hbar/eV."""
    if samples < 1:
        raise ValueError("need at least one sample")
    t_max_fs = atomic_to_fs(hbar_per_ev_to_atomic(t_max))
    return np.linspace(0.0, t_max_fs, samples) if samples > 1 else np.zeros(1)


def _initial_density(initial, size):
    arr = np.asarray(initial)
    if arr.ndim == 0:
        rho = np.zeros((size, size), dtype=complex)
        rho[int(arr), int(arr)] = 1.0
        return rho
    if arr.ndim == 1:
        if arr.size != size:
            raise ValueError("initial vector has wrong dimension")
        v = arr.astype(complex) / np.linalg.norm(arr)
        return np.outer(v, v.conj())
    if arr.shape != (size, size):
        raise ValueError("initial density matrix has wrong dimension")
    rho = arr.astype(complex)
    if np.max(np.abs(rho - rho.conj().T)) > 1e-12:
        raise ValueError("initial density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > 1e-12:
        raise ValueError("initial density matrix does not have unit trace")
    if np.linalg.eigvalsh(rho).min() < -1e-12:
        raise ValueError("initial density matrix is not positive semidefinite")
    return rho


def reachable_states(pattern: np.ndarray, seeds) -> np.ndarray:
    """Indices connected to any seed through the (symmetrized) coupling graph."""
    _, comp = connected_components(pattern | pattern.T, directed=False)
    return np.flatnonzero(np.isin(comp, np.unique(comp[np.asarray(seeds)])))


def _steps(times_au):
    """Step sizes; uniform grids get one exact step so a single propagator is reused."""
    dts = np.diff(times_au)
    if dts.size and np.allclose(dts, dts[0], rtol=1e-10, atol=0):
        dts = np.full(dts.size, times_au[-1] / dts.size)
    return dts


def _stepper(superop, rtol, atol, rhs, method):
    """``advance(v, dt)`` for the chosen method."""
    if method == "expm":
        cache = {}

        def advance(v, dt):
            if dt not in cache:
                cache[dt] = expm(superop() * dt)
            return cache[dt] @ v

        return advance

    def advance(v, dt):
        sol = solve_ivp(lambda _t, y: rhs(y), (0.0, dt), v, method="DOP853", rtol=rtol, atol=atol)
        if not sol.success:
            raise PropagationError(f"integrator failed: {sol.message}")
        return sol.y[:, -1]

    return advance


def _lazy(fn):
    cached = []

    def get():
        if not cached:
            cached.append(fn())
        return cached[0]

    return get


def _density_problem(gen):
    """(size, pattern, atom_index, restricted superoperator builder, restricted rhs builder, variant)."""
    if isinstance(gen, OracleGenerator):
        def sub(idx):
            h = gen.hamiltonian[np.ix_(idx, idx)]
            ops = [op[np.ix_(idx, idx)] for op in gen.jump_ops]
            return (lambda: lindblad_superoperator(h, ops)), (lambda r: lindblad_apply(h, ops, r))

        variant = "oracle" + ("" if gen.counter_rotating else "-rwa")
        return gen.dim, gen.coupling_pattern(), gen.atom_index, sub, variant
    if isinstance(gen, GeneratorSet):
        def sub(idx):
            h = gen.hamiltonian[np.ix_(idx, idx)]
            ops = [op[np.ix_(idx, idx)] for op in gen.jump_operators]
            return (lambda: lindblad_superoperator(h, ops)), (lambda r: lindblad_apply(h, ops, r))

        variant = "lindblad-" + gen.secularization + ("" if gen.counter_rotating else "-rwa")
        return gen.dim, gen.coupling_pattern(), np.arange(gen.dim), sub, variant
    if isinstance(gen, BRTensor):
        def sub(idx):
            t = gen.restrict(idx)
            return (lambda: t.superoperator()), (lambda r: t.rhs(r))

        pattern = gen.coupling_pattern() | np.eye(gen.dim, dtype=bool)
        variant = "bloch-redfield-" + gen.secular + ("" if gen.counter_rotating else "-rwa")
        return gen.dim, pattern, np.arange(gen.dim), sub, variant
    raise TypeError(f"cannot propagate {type(gen).__name__}")


def propagate(job: PropagationJob) -> RunResult:
    """Propagate a job and record atom-basis populations and observables.

    Raises
    ------
    PropagationError
        On integrator failure or trace drift above 1e-6 for trace-preserving
        generators.
    """
    if isinstance(job.generator, EffectiveGenerator):
        return _propagate_effective(job)
    size, pattern, atom_index, sub, variant = _density_problem(job.generator)
    basis = job.generator.basis
    n_atom = len(basis)
    rho_atom = _initial_density(job.initial, n_atom)
    if isinstance(job.generator, OracleGenerator):
        n_f = len(job.generator.fock)
        rho0 = np.zeros((size, size), dtype=complex)
        rho0[::n_f, ::n_f] = rho_atom  # modes start in vacuum (fock[0])
    else:
        rho0 = rho_atom
    seeds = np.flatnonzero(np.abs(rho0).sum(axis=0) > 0)
    idx = reachable_states(pattern, seeds)
    m = idx.size
    log.info("%s: propagating %d of %d states (%s)", job.name or variant, m, size, job.method)
    if job.method == "expm" and m > MAX_EXPM_STATES:
        raise PropagationError(
            f"{job.name or variant}: {m} coupled states exceed the dense-propagator limit "
            f"of {MAX_EXPM_STATES}; use method='rk' for short windows"
        )
    superop_fn, rhs_fn = sub(idx)
    superop = _lazy(superop_fn)
    advance = _stepper(superop, job.rtol, job.atol, lambda y: rhs_fn(y.reshape(m, m)).ravel(), job.method)

    times_au = fs_to_atomic(job.times_fs)
    atom_sub = atom_index[idx]
    obs_sub = {k: np.asarray(o)[np.ix_(atom_sub, atom_sub)] for k, o in job.observables.items()}
    same_atom = atom_sub[:, None] == atom_sub[None, :]
    pops = np.zeros((len(times_au), n_atom))
    obs = {k: np.zeros(len(times_au)) for k in job.observables}
    trace = np.zeros(len(times_au))
    min_eig = np.zeros(len(times_au))
    states = [] if job.keep_states else None
    v = rho0[np.ix_(idx, idx)].ravel()
    dts = _steps(times_au)
    for k in range(len(times_au)):
        if k > 0:
            v = advance(v, dts[k - 1])
        rho = v.reshape(m, m)
        diag = np.real(np.diag(rho))
        np.add.at(pops[k], atom_sub, diag)
        trace[k] = diag.sum()
        herm = 0.5 * (rho + rho.conj().T)
        min_eig[k] = np.linalg.eigvalsh(herm).min()
        for name, o in obs_sub.items():
            # atom observables act as o (x) 1 on the modes
            obs[name][k] = np.real(np.sum((o * same_atom) * rho.T))
        if states is not None:
            full = np.zeros((size, size), dtype=complex)
            full[np.ix_(idx, idx)] = rho
            states.append(full)
    drift = np.max(np.abs(trace - trace[0]))
    if drift > TRACE_DRIFT_LIMIT:
        raise PropagationError(f"{job.name or variant}: trace drift {drift:.3e} exceeds {TRACE_DRIFT_LIMIT}")
    labels = tuple(s.label for s in basis)
    meta = {"variant": variant, "reduced_dimension": int(m), "method": job.method, "trace_drift": float(drift)}
    return RunResult(job.name or variant, variant, job.times_fs, labels, pops, obs, trace, min_eig, states, meta)


def _propagate_effective(job: PropagationJob) -> RunResult:
    gen = job.generator
    n_atom = len(gen.basis)
    arr = np.asarray(job.initial)
    if arr.ndim == 0:
        psi_full = np.zeros(n_atom, dtype=complex)
        psi_full[int(arr)] = 1.0
    elif arr.ndim == 1 and arr.size == n_atom:
        psi_full = arr.astype(complex) / np.linalg.norm(arr)
    else:
        raise ValueError("effective propagation needs a pure initial state (index or vector)")
    if np.any(np.abs(np.delete(psi_full, gen.indices)) > 0):
        raise ValueError(f"initial state has weight outside Bohr level n={gen.n}")
    psi = psi_full[gen.indices]
    h = gen.h_eff
    times_au = fs_to_atomic(job.times_fs)
    rhs = lambda y: -1j * (h @ y)  # noqa: E731
    advance = _stepper(_lazy(lambda: -1j * h), job.rtol, job.atol, rhs, job.method)
    pops = np.zeros((len(times_au), n_atom))
    obs = {k: np.zeros(len(times_au)) for k in job.observables}
    obs_sub = {k: np.asarray(o)[np.ix_(gen.indices, gen.indices)] for k, o in job.observables.items()}
    norm = np.zeros(len(times_au))
    states = [] if job.keep_states else None
    dts = _steps(times_au)
    for k in range(len(times_au)):
        if k > 0:
            psi = advance(psi, dts[k - 1])
        pops[k, gen.indices] = np.abs(psi) ** 2
        norm[k] = np.sum(np.abs(psi) ** 2)
        for name, o in obs_sub.items():
            obs[name][k] = np.real(np.vdot(psi, o @ psi))
        if states is not None:
            full = np.zeros(n_atom, dtype=complex)
            full[gen.indices] = psi
            states.append(full)
    labels = tuple(s.label for s in gen.basis)
    meta = {"variant": "effective", "reduced_dimension": int(len(gen.indices)), "method": job.method}
    return RunResult(job.name or "effective", "effective", job.times_fs, labels, pops, obs, norm, None, states, meta)


def propagate_many(jobs, max_workers: int | None = None) -> list[RunResult]:
    """Independent jobs as a parallel map (threads; numpy releases the GIL)."""
    if max_workers and max_workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers) as pool:
            return list(pool.map(propagate, jobs))
    return [propagate(j) for j in jobs]


# ---------------------------------------------------------------- comparison


@dataclass
class DeviationReport:
    max_abs: dict
    rms: dict
    tolerance: float | None

    @property
    def worst(self) -> float:
        return max(self.max_abs.values(), default=0.0)

    @property
    def passed(self) -> bool | None:
        return None if self.tolerance is None else self.worst < self.tolerance

    def to_dict(self):
        return {"max_abs": self.max_abs, "rms": self.rms, "tolerance": self.tolerance, "worst": self.worst, "passed": self.passed}


def compare_runs(run_a: RunResult, run_b: RunResult, labels=None, tolerance: float | None = None) -> DeviationReport:
    """Per-observable max and RMS absolute deviation between two runs."""
    if run_a.times_fs.shape != run_b.times_fs.shape or np.any(run_a.times_fs != run_b.times_fs):
        raise ValueError("runs do not share a time grid")
    if set(run_a.observables) != set(run_b.observables):
        raise ValueError("runs record different observables")
    cols_a, cols_b = run_a.columns(labels), run_b.columns(labels)
    max_abs, rms = {}, {}
    for name, series in cols_a.items():
        diff = np.abs(series - cols_b[name])
        max_abs[name] = float(diff.max())
        rms[name] = float(np.sqrt(np.mean(diff**2)))
    return DeviationReport(max_abs, rms, tolerance)


def largest_populations(run: RunResult, candidates, count: int):
    """Labels of the ``count`` candidates with the largest peak population."""
    peaks = sorted(candidates, key=lambda lab: -run.population(lab).max())
    return peaks[:count]


# ---------------------------------------------------------------- output


def format_float(x: float) -> str:
    return f"{x + 0.0:.17g}"  # no "-0"


def config_hash(obj) -> str:
    text = json.dumps(obj, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def write_run(run: RunResult, path, labels=None, header_lines=(), sidecar_extra=None) -> Path:
    """CSV ``t_fs, <columns>`` plus a JSON sidecar describing each column."""
    path = Path(path)
    cols = run.columns(labels)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(["t_fs", *cols]) + "\n")
        for k, t in enumerate(run.times_fs):
            fh.write(",".join([format_float(t), *(format_float(v[k]) for v in cols.values())]) + "\n")
    sidecar = {
        "run": run.name,
        "generator": run.variant,
        "columns": [
            {"name": name, "kind": "population" if name in run.labels else "observable"} for name in cols
        ],
        "meta": run.meta,
    }
    sidecar.update(sidecar_extra or {})
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
