"""Numerical acceptance checks, shared by the ``verify`` command and the test suite.

Each ``criterion_<k>`` function returns a :class:`CriterionResult` with the
measured quantities and a pass/fail verdict. Dynamics-based checks use the
reference setup described by the configuration (a Lorentzian bath coupled
through one or more damped modes); the other checks build their own inputs.
"""

from __future__ import annotations

import logging
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .atom import build_dipole_table, enumerate_basis, parse_state_label, radial_integral, radial_integral_quadrature
from .bath import FlatModel, LorentzianModel, TabulatedModel, oscillator_density, power_law_family, write_spectral_file
from .config import RunConfig
from .dynamics import (
    EffectiveGenerator,
    OracleMode,
    OracleModel,
    PropagationJob,
    build_oracle,
    compare_runs,
    largest_populations,
    propagate,
)
from .effective import (
    dark_state_certificate,
    effective_block,
    effective_blocks,
    eigenanalyze,
    level_operators,
    participation_ratio,
)
from .master_eq import (
    build_br_tensor,
    geometric_mean_lindblad,
    kossakowski_matrix,
    partial_secularize,
)
from .units import FINE_STRUCTURE, HARTREE_EV, ev_to_hartree

log = logging.getLogger(__name__)
DYNAMICS_CRITERIA = (1, 2, 3, 5)

NAMES = {
    1: "oracle agreement",
    2: "refilling magnitude",
    3: "Bloch-Redfield vs Lindblad",
    4: "dark state",
    5: "counter-rotating relevance",
    6: "flat-bath exactness",
    7: "structural invariants",
    8: "dipole oracle",
    9: "sweep: avoided crossings and protected state",
}


@dataclass
class CriterionResult:
    number: int
    passed: bool
    measured: dict
    requirement: str
    detail: str = ""

    @property
    def name(self):
        return NAMES[self.number]

    def line(self) -> str:
        vals = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        verdict = "PASS" if self.passed else "FAIL"
        extra = f" [{self.detail}]" if self.detail else ""
        return f"criterion {self.number} ({self.name}): {verdict} | {vals} | required: {self.requirement}{extra}"

    def to_dict(self):
        return {
            "criterion": self.number,
            "name": self.name,
            "passed": bool(self.passed),
            "measured": {k: _plain(v) for k, v in self.measured.items()},
            "requirement": self.requirement,
            "detail": self.detail,
        }


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{v:.4g}"
    return str(v)


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    return v


# ---------------------------------------------------------------- reference dynamics setup


def lorentzian_from_config(cfg: RunConfig) -> LorentzianModel:
    b = cfg.bath
    return LorentzianModel.from_ev(b.g_xx_ev, b.g_zz_ev, b.kappa_ev, b.omega_m_ev, allow_unphysical=b.allow_unphysical)


def oracle_modes(cfg: RunConfig) -> tuple:
    """One damped mode per Cartesian component with nonzero coupling (J_xx = J_yy)."""
    b = cfg.bath
    modes = []
    if b.g_xx_ev:
        modes += [OracleMode.from_ev(b.omega_m_ev, b.kappa_ev, b.g_xx_ev, p) for p in ("x", "y")]
    if b.g_zz_ev:
        modes.append(OracleMode.from_ev(b.omega_m_ev, b.kappa_ev, b.g_zz_ev, "z"))
    return tuple(modes)


@dataclass
class ReferenceDynamics:
    """Oracle and approximate runs for the Lorentzian reference setup (computed lazily)."""

    cfg: RunConfig
    cache: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.cfg.bath.model != "lorentzian":
            raise ValueError("the reference dynamics need a Lorentzian bath (it has an exact mode model)")
        alpha = FINE_STRUCTURE if self.cfg.atom.alpha is None else self.cfg.atom.alpha
        self.basis = enumerate_basis(self.cfg.atom.n_max, alpha)
        self.dipoles = build_dipole_table(self.basis)
        self.model = lorentzian_from_config(self.cfg)
        self.initial = self.basis.index(*parse_state_label(self.cfg.dynamics.initial_state))
        init = self.basis[self.initial]
        self.level_states = [s.label for s in self.basis if s.n == init.n and s.m_j == init.m_j]
        self.refill_states = [s.label for s in self.basis if s.n == init.n and s.m_j == init.m_j and s.parity != init.parity]
        dyn = self.cfg.dynamics
        self.times = np.linspace(0.0, dyn.t_max_fs, dyn.samples)

    def tensor(self, counter_rotating=True):
        key = ("tensor", counter_rotating)
        if key not in self.cache:
            self.cache[key] = build_br_tensor(self.basis, self.dipoles, self.model, counter_rotating)
        return self.cache[key]

    def lindblad(self, counter_rotating=True):
        key = ("lindblad", counter_rotating)
        if key not in self.cache:
            self.cache[key] = geometric_mean_lindblad(partial_secularize(self.tensor(counter_rotating)))
        return self.cache[key]

    def run(self, kind, counter_rotating=True, max_photons=None):
        key = ("run", kind, counter_rotating, max_photons)
        if key in self.cache:
            return self.cache[key]
        if kind == "oracle":
            photons = max_photons or self.cfg.dynamics.max_photons
            gen = build_oracle(self.basis, self.dipoles, OracleModel(oracle_modes(self.cfg), photons), counter_rotating)
        elif kind == "lindblad":
            gen = self.lindblad(counter_rotating)
        elif kind == "effective":
            gen = EffectiveGenerator.from_lindblad(self.lindblad(counter_rotating), self.basis[self.initial].n)
        elif kind == "bloch-redfield":
            gen = self.tensor(counter_rotating)
        else:
            raise ValueError(kind)
        job = PropagationJob(gen, self.initial, self.times, method=self.cfg.dynamics.method, rtol=self.cfg.dynamics.rtol,
                             name=f"{kind}{'' if counter_rotating else '-rwa'}")
        self.cache[key] = propagate(job)
        return self.cache[key]


# ---------------------------------------------------------------- criteria 1, 2, 3, 5


def criterion_1(ref: ReferenceDynamics) -> CriterionResult:
    oracle = ref.run("oracle")
    top = largest_populations(oracle, ref.level_states, 3)
    dev_l = compare_runs(oracle, ref.run("lindblad"), top).worst
    dev_e = compare_runs(oracle, ref.run("effective"), top).worst
    photons = ref.cfg.dynamics.max_photons
    conv = compare_runs(oracle, ref.run("oracle", max_photons=photons + 1), ref.level_states).worst
    min_eig = float(oracle.min_eigenvalue.min())
    passed = dev_l < 0.02 and dev_e < 0.02 and conv < 1e-4 and min_eig >= -1e-8
    return CriterionResult(
        1,
        passed,
        {"max_dev_lindblad": dev_l, "max_dev_effective": dev_e, "truncation_change": conv, "oracle_min_eig": min_eig},
        "deviations < 0.02; photon truncation N -> N+1 change < 1e-4; oracle rho eigenvalues >= -1e-8",
        "states: " + ", ".join(top),
    )


def criterion_2(ref: ReferenceDynamics) -> CriterionResult:
    lind, eff = ref.run("lindblad"), ref.run("effective")
    peaks = {lab: float(lind.population(lab).max()) for lab in ref.refill_states}
    eff_max = max((float(np.abs(eff.population(lab)).max()) for lab in ref.refill_states), default=0.0)
    ok = len(peaks) == 2 and all(2e-4 <= p <= 5e-3 for p in peaks.values()) and eff_max == 0.0
    measured = {f"peak {k}": v for k, v in peaks.items()}
    measured["effective_max"] = eff_max
    return CriterionResult(2, ok, measured, "two peaks in [2e-4, 5e-3]; exactly zero in the effective run")


def criterion_3(ref: ReferenceDynamics) -> CriterionResult:
    br, lind = ref.run("bloch-redfield"), ref.run("lindblad")
    dev = compare_runs(br, lind).worst
    return CriterionResult(3, dev < 0.01, {"max_population_dev": dev}, "< 0.01 over all atomic populations")


def criterion_5(ref: ReferenceDynamics) -> CriterionResult:
    on, off = ref.run("effective", True), ref.run("effective", False)
    dev = compare_runs(on, off, ref.level_states).worst
    return CriterionResult(5, dev > 0.05, {"max_population_dev": dev}, "> 0.05")


# ---------------------------------------------------------------- criterion 4


def dark_state_check(model, n: int = 7, m_j=0.5, intermediate: int = 6):
    """Decay rates of the (n, m_j, even) block with alpha = 0 and intermediates restricted to one level."""
    basis = enumerate_basis(n, alpha=0.0)
    dipoles = build_dipole_table(basis)
    g = geometric_mean_lindblad(partial_secularize(build_br_tensor(basis, dipoles, model)))
    block = effective_block(g, n, m_j, 1, [intermediate])
    _, rates, _ = eigenanalyze(block)
    sigmas = [ops[2] for ops in level_operators(g, n, [intermediate]).values()]
    cert = dark_state_certificate(block, sigmas)
    return block, rates, cert, sigmas


def criterion_4(cfg: RunConfig, model=None) -> CriterionResult:
    if model is None:
        model = lorentzian_from_config(cfg) if cfg.bath.model == "lorentzian" else _tabulated_from_config(cfg)
    block, rates, cert, sigmas = dark_state_check(model)
    top = float(rates.max())
    small = int(np.sum(rates <= 1e-10 * top)) if top > 0 else len(rates)
    ratio = float(rates.min() / top) if top > 0 else float("nan")
    ok = block.dim == 7 and small == 1
    return CriterionResult(
        4,
        ok,
        {"block_dim": block.dim, "min_over_max_rate": ratio, "protected_states": small, "certificate": cert is not None},
        "block dim 7 with exactly one rate <= 1e-10 x max",
    )


def _tabulated_from_config(cfg):
    from .bath import read_spectral_file

    if not cfg.bath.file:
        raise ValueError("tabulated bath needs bath.file")
    return read_spectral_file(cfg.resolve(cfg.bath.file), cfg.bath.out_of_grid, cfg.bath.interpolation)


# ---------------------------------------------------------------- criterion 6


def criterion_6(n_max: int = 3) -> CriterionResult:
    basis = enumerate_basis(n_max)
    dipoles = build_dipole_table(basis)
    model = FlatModel(gamma_xx=0.02, gamma_zz=0.03, lambda_xx=0.01, lambda_zz=-0.015)
    t = partial_secularize(build_br_tensor(basis, dipoles, model))
    br = t.superoperator()
    gm = geometric_mean_lindblad(t).superoperator()
    diff = float(np.abs(br - gm).max())
    return CriterionResult(6, diff <= 1e-12, {"max_entry_diff": diff, "max_entry": float(np.abs(br).max())}, "<= 1e-12")


# ---------------------------------------------------------------- criterion 7


def random_cylindrical_model(rng: np.random.Generator) -> TabulatedModel:
    """Smooth random J_xx, J_zz >= 0: one to three damped oscillators per component."""
    omega_ev = np.linspace(0.02, 40.0, 2000)
    cols = []
    for _ in range(2):
        j = np.zeros_like(omega_ev)
        for _ in range(rng.integers(1, 4)):
            j += oscillator_density(omega_ev, rng.uniform(0.5, 15.0), rng.uniform(0.3, 4.0), 10 ** rng.uniform(-6, -3))
        cols.append(j / HARTREE_EV)
    return TabulatedModel(ev_to_hartree(omega_ev), cols[0], cols[1])


def structural_checks(model, basis, dipoles, small_basis=None, small_dipoles=None, rng=None):
    """Measured invariants for one spectral model (see criterion 7)."""
    out = {}
    tensor = build_br_tensor(basis, dipoles, model)
    g = geometric_mean_lindblad(partial_secularize(tensor))
    h = g.h_cp
    out["hcp_hermiticity"] = float(np.abs(h - h.conj().T).max() / max(np.abs(h).max(), 1e-300))
    pr_bad = 0
    for n in np.unique(basis.levels):
        for block in effective_blocks(g, int(n)):
            _, _, vecs = eigenanalyze(block)
            for k in range(vecs.shape[1]):
                p = participation_ratio(vecs[:, k])
                if not (1 - 1e-12 <= p <= block.dim + 1e-12):
                    pr_bad += 1
    out["participation_out_of_range"] = pr_bad
    if small_basis is not None:
        ts = partial_secularize(build_br_tensor(small_basis, small_dipoles, model))
        kos = kossakowski_matrix(ts, geometric_mean=True)
        eig = np.linalg.eigvalsh(0.5 * (kos + kos.conj().T))
        out["kossakowski_min_over_norm"] = float(eig.min() / max(np.abs(eig).max(), 1e-300))
        gs = geometric_mean_lindblad(ts)
        rng = rng or np.random.default_rng(0)
        x = rng.normal(size=(len(small_basis),) * 2) + 1j * rng.normal(size=(len(small_basis),) * 2)
        rho0 = x @ x.conj().T
        rho0 /= np.trace(rho0).real
        rate = max(np.abs(gs.superoperator()).max(), 1e-300)
        times = np.linspace(0.0, 50.0 / rate, 6)
        from .units import atomic_to_fs

        run = propagate(PropagationJob(gs, rho0, atomic_to_fs(times)))
        out["trace_drift"] = float(np.abs(run.trace - 1).max())
    return out


def equal_superposition_error(rng, max_dim: int = 7) -> float:
    worst = 0.0
    for n in range(1, max_dim + 1):
        v = np.exp(1j * rng.uniform(0, 2 * np.pi, n)) / np.sqrt(n)
        worst = max(worst, abs(participation_ratio(v) - n))
    return worst


def criterion_7(count: int = 100, seed: int = 20240611) -> CriterionResult:
    rng = np.random.default_rng(seed)
    basis, small = enumerate_basis(3), enumerate_basis(2)
    dip, dip_small = build_dipole_table(basis), build_dipole_table(small)
    worst = {"hcp_hermiticity": 0.0, "kossakowski_min_over_norm": 0.0, "trace_drift": 0.0, "participation_out_of_range": 0}
    failures = []
    for i in range(count):
        model = random_cylindrical_model(rng)
        try:
            res = structural_checks(model, basis, dip, small, dip_small, rng)
        except Exception as exc:  # a model that cannot be processed counts as a failure
            failures.append(f"model {i}: {exc}")
            continue
        worst["hcp_hermiticity"] = max(worst["hcp_hermiticity"], res["hcp_hermiticity"])
        worst["kossakowski_min_over_norm"] = min(worst["kossakowski_min_over_norm"], res["kossakowski_min_over_norm"])
        worst["trace_drift"] = max(worst["trace_drift"], res["trace_drift"])
        worst["participation_out_of_range"] += res["participation_out_of_range"]
    worst["equal_superposition_err"] = equal_superposition_error(rng)
    ok = (
        not failures
        and worst["hcp_hermiticity"] <= 1e-12
        and worst["kossakowski_min_over_norm"] >= -1e-10
        and worst["trace_drift"] < 1e-10
        and worst["participation_out_of_range"] == 0
        and worst["equal_superposition_err"] <= 1e-12
    )
    worst["models"] = count
    return CriterionResult(
        7,
        ok,
        worst,
        "H_CP hermiticity <= 1e-12; Kossakowski min/norm >= -1e-10; trace drift < 1e-10; 1 <= P <= dim; equal superposition P = n to 1e-12",
        "; ".join(failures[:3]),
    )


# ---------------------------------------------------------------- criterion 8


def criterion_8(n_limit: int = 8) -> CriterionResult:
    worst = 0.0
    for n in range(1, n_limit + 1):
        for l in range(n):
            for n2 in range(1, n_limit + 1):
                for l2 in (l - 1, l + 1):
                    if 0 <= l2 < n2:
                        exact = radial_integral(n, l, n2, l2)
                        quad = radial_integral_quadrature(n, l, n2, l2)
                        worst = max(worst, abs(exact - quad) / abs(quad))
    # <1s| z |2p, m=0> = R(1s, 2p) <Y00| cos(theta) |Y10> = R / sqrt(3); exact value 128 sqrt(2) / 243
    element = radial_integral(1, 0, 2, 1) / np.sqrt(3)
    err = abs(element - 128 * np.sqrt(2) / 243)
    return CriterionResult(
        8,
        worst <= 1e-8 and err <= 1e-6,
        {"max_rel_dev": worst, "z_1s_2p0": element, "abs_err_vs_exact": err, "abs_err_vs_0.744937": abs(element - 0.744937)},
        "radial closed form vs quadrature <= 1e-8 relative; <1s|z|2p0> = 128 sqrt(2)/243 to 1e-6",
        "0.744937 is a rounded quote of 0.7449355; the check uses the exact value",
    )


# ---------------------------------------------------------------- criterion 9

SYNTHETIC_DISTANCES_NM = tuple(np.round(np.linspace(150.0, 30.0, 41), 6))


def synthetic_family_files(directory, distances=SYNTHETIC_DISTANCES_NM):
    """Write the synthetic power-law family (axial damped oscillator at 2.5 eV) to files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    omega = np.linspace(0.01, 12.0, 6000)
    j_zz = oscillator_density(omega, 2.5, 0.5, 1e-6)
    models = power_law_family(omega, np.zeros_like(omega), j_zz, distances)
    paths = []
    for d, model in zip(distances, models):
        p = directory / f"J_d{d:08.3f}nm.dat"
        write_spectral_file(p, model, f"synthetic damped oscillator, amplitude x (100 nm / {d} nm)^3")
        paths.append(p)
    return paths


def sweep_features(full, ref, bare_energies):
    """Measures used by criterion 9 from tracked sweep tables."""
    e_ref = ref.centered
    crossings = 0
    for i in range(e_ref.shape[1]):
        for j in range(i + 1, e_ref.shape[1]):
            diff = np.sign(e_ref[:, i] - e_ref[:, j])
            crossings += int(np.sum(diff[1:] * diff[:-1] < 0))
    sorted_full = np.sort(full.energies, axis=1)
    full_gap = float(np.diff(sorted_full, axis=1).min()) if sorted_full.shape[1] > 1 else float("inf")
    bare_gap = float(np.diff(np.sort(bare_energies)).min())
    min_rate = full.rates.min(axis=1)
    steps = np.diff(min_rate)
    scale = np.abs(min_rate).max()
    rises, falls = bool(np.any(steps > 1e-9 * scale)), bool(np.any(steps < -1e-9 * scale))
    ref_rates = ref.rates
    ref_monotone = bool(np.all(np.diff(ref_rates, axis=0) >= -1e-12 * np.abs(ref_rates).max()))
    return {
        "reference_crossings": crossings,
        "full_min_gap_over_bare_gap": full_gap / bare_gap,
        "min_rate_non_monotone": rises and falls,
        "reference_rates_monotone": ref_monotone,
    }


def criterion_9(workdir=None, threads: int | None = None) -> CriterionResult:
    from .cli import run_sweep
    from .config import config_from_dict

    with tempfile.TemporaryDirectory() as tmp:
        base = Path(workdir or tmp)
        files = synthetic_family_files(base / "synthetic")
        cfg = config_from_dict(
            {
                "atom": {"n_max": 4, "n": 3, "m_j": 0.5, "parity": "odd"},
                "bath": {"model": "tabulated", "files": [str(p) for p in files], "distances_nm": list(SYNTHETIC_DISTANCES_NM)},
                "output": {"directory": str(base / "sweep")},
            }
        )
        result = run_sweep(cfg, threads=threads)
    full, ref = result["full"], result["reference"]
    bare = np.array([s.energy for s in full.labels])
    feats = sweep_features(full, ref, bare)
    ok = (
        feats["reference_crossings"] >= 1
        and feats["full_min_gap_over_bare_gap"] >= 0.25
        and feats["min_rate_non_monotone"]
        and feats["reference_rates_monotone"]
    )
    return CriterionResult(
        9,
        ok,
        feats,
        "reference levels cross while full-model levels keep >= 0.25 of the bare gap; full min rate non-monotone; reference rates monotone",
    )


# ---------------------------------------------------------------- driver


def run_criteria(cfg: RunConfig, criteria=None, threads=None, report=print, model=None) -> list[CriterionResult]:
    criteria = sorted(criteria or cfg.verify.criteria)
    ref = None
    results = []
    for k in criteria:
        try:
            if k in DYNAMICS_CRITERIA:
                ref = ref or ReferenceDynamics(cfg)
                res = {1: criterion_1, 2: criterion_2, 3: criterion_3, 5: criterion_5}[k](ref)
            elif k == 4:
                res = criterion_4(cfg, model)
            elif k == 6:
                res = criterion_6()
            elif k == 7:
                res = criterion_7(cfg.verify.random_models, cfg.verify.seed)
            elif k == 8:
                res = criterion_8()
            else:
                res = criterion_9(threads=threads)
        except Exception as exc:  # report and continue with the remaining criteria
            log.debug("criterion %d raised", k, exc_info=True)
            res = CriterionResult(k, False, {}, "", f"error: {exc}")
        if report:
            report(res.line())
        results.append(res)
    return results
