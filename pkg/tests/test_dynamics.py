import json

import numpy as np
import pytest
from conftest import G_ZZ_EV, KAPPA_EV, OMEGA_M_EV, random_density

from vacmix import (
    EffectiveGenerator,
    FlatModel,
    LorentzianModel,
    OracleMode,
    OracleModel,
    PropagationJob,
    build_br_tensor,
    build_oracle,
    compare_runs,
    geometric_mean_lindblad,
    partial_secularize,
    propagate,
)
from vacmix.dynamics import (
    PropagationError,
    fock_states,
    largest_populations,
    propagate_many,
    reachable_states,
    rotating_parts,
    time_grid_hbar_per_ev,
    write_run,
)
from vacmix.units import atomic_to_fs, fs_to_atomic, hbar_per_ev_to_atomic


def cavity_oracle(basis, dipoles, g=G_ZZ_EV, photons=1, counter_rotating=True):
    mode = OracleMode.from_ev(OMEGA_M_EV, KAPPA_EV, g, "z")
    return build_oracle(basis, dipoles, OracleModel((mode,), photons), counter_rotating)


def short_grid(t_hbar_per_ev=2000.0, samples=41):
    return time_grid_hbar_per_ev(t_hbar_per_ev, samples)


class TestOracle:
    def test_fock_states(self):
        assert fock_states(1, 2) == [(0,), (1,), (2,)]
        assert fock_states(2, 1) == [(0, 0), (1, 0), (0, 1)]
        assert fock_states(0, 3) == [()]
        assert len(fock_states(3, 2)) == 10

    def test_hamiltonian_structure(self, basis3, dipoles3):
        gen = cavity_oracle(basis3, dipoles3)
        h = gen.hamiltonian
        assert gen.dim == 2 * len(basis3)
        np.testing.assert_allclose(h, h.conj().T, atol=0)
        # vacuum block is the bare atom; one-photon block adds hbar omega_M
        vac = [gen.composite_index(i) for i in range(len(basis3))]
        np.testing.assert_allclose(np.diag(h)[vac].real, basis3.energies)
        one = [gen.composite_index(i, (1,)) for i in range(len(basis3))]
        np.testing.assert_allclose(np.diag(h)[one].real - basis3.energies, OracleMode.from_ev(OMEGA_M_EV, KAPPA_EV, 0).omega_m)
        a, b = basis3.index(3, 0, 0.5, 0.5), basis3.index(2, 1, 0.5, 0.5)
        g = OracleMode.from_ev(OMEGA_M_EV, KAPPA_EV, G_ZZ_EV).g
        assert h[gen.composite_index(a), gen.composite_index(b, (1,))] == pytest.approx(g * dipoles3.matrix(0)[a, b])

    def test_rwa_hamiltonian_hermitian(self, basis3, dipoles3):
        gen = cavity_oracle(basis3, dipoles3, counter_rotating=False)
        np.testing.assert_allclose(gen.hamiltonian, gen.hamiltonian.conj().T, atol=0)

    def test_rotating_parts(self, basis3, dipoles3):
        d = dipoles3.matrix(0)
        e = basis3.energies
        down, up = rotating_parts(d, e)
        degenerate = np.isclose(e[:, None], e[None, :], rtol=0, atol=0)
        np.testing.assert_array_equal(down + up - d * degenerate, d)
        np.testing.assert_array_equal(down.T, up)

    def test_mode_validation(self):
        with pytest.raises(ValueError):
            OracleMode(1.0, 0.1, 0.1, "w")
        with pytest.raises(ValueError):
            OracleMode(1.0, -0.1, 0.1)
        with pytest.raises(ValueError):
            OracleModel((), 0)

    def test_zero_coupling_is_closed(self, basis3, dipoles3):
        gen = cavity_oracle(basis3, dipoles3, g=0.0)
        start = basis3.index(3, 0, 0.5, 0.5)
        run = propagate(PropagationJob(gen, start, short_grid()))
        np.testing.assert_allclose(run.population(start), 1.0, atol=1e-12)

    def test_no_modes_is_bare_evolution(self, basis2, dipoles2):
        gen = build_oracle(basis2, dipoles2, OracleModel((), 1))
        a, b = basis2.index(2, 1, 1.5, 0.5), basis2.index(1, 0, 0.5, 0.5)
        psi = np.zeros(len(basis2))
        psi[[a, b]] = 1 / np.sqrt(2)
        t = short_grid(50.0, 11)
        run = propagate(PropagationJob(gen, psi, t, keep_states=True))
        w = basis2.energies[a] - basis2.energies[b]
        coherence = np.array([s[a, b] for s in run.states])
        np.testing.assert_allclose(coherence, 0.5 * np.exp(-1j * w * fs_to_atomic(t)), atol=1e-10)


class TestPropagation:
    def test_lindblad_trace(self, basis3, dipoles3, cavity_model):
        g = geometric_mean_lindblad(partial_secularize(build_br_tensor(basis3, dipoles3, cavity_model)))
        run = propagate(PropagationJob(g, basis3.index(3, 0, 0.5, 0.5), short_grid()))
        np.testing.assert_allclose(run.trace, 1.0, atol=1e-10)
        assert run.min_eigenvalue.min() > -1e-10

    def test_effective_norm_decreases(self, basis3, dipoles3, cavity_model):
        g = geometric_mean_lindblad(partial_secularize(build_br_tensor(basis3, dipoles3, cavity_model)))
        eff = EffectiveGenerator.from_lindblad(g, 3)
        run = propagate(PropagationJob(eff, basis3.index(3, 1, 1.5, 0.5), short_grid(20000.0, 51)))
        assert np.all(np.diff(run.trace) <= 1e-15)
        assert run.trace[-1] < run.trace[0]

    def test_expm_matches_rk(self, basis2, dipoles2):
        model = LorentzianModel.from_ev(2e-2, 3e-2, 0.5, 10.0, allow_unphysical=True)
        g = geometric_mean_lindblad(partial_secularize(build_br_tensor(basis2, dipoles2, model)))
        rho = random_density(np.random.default_rng(3), len(basis2))
        t = short_grid(20.0, 21)
        a = propagate(PropagationJob(g, rho, t, method="expm"))
        b = propagate(PropagationJob(g, rho, t, method="rk", rtol=1e-11, atol=1e-13))
        np.testing.assert_allclose(a.populations, b.populations, atol=1e-9)

    def test_two_level_decay_oracle(self, basis2, dipoles2):
        # nothing feeds the top state, so its population follows exp(-Gamma t) with Gamma summed over lower states
        model = LorentzianModel.from_ev(2e-2, 3e-2, 0.5, 10.0, allow_unphysical=True)
        g = geometric_mean_lindblad(partial_secularize(build_br_tensor(basis2, dipoles2, model, counter_rotating=False)))
        a = basis2.index(2, 1, 1.5, 1.5)
        ground = basis2.index(1, 0, 0.5, 0.5)
        w = basis2.energies[a] - basis2.energies
        rate = sum(
            float(dipoles2.matrix(q)[c, a] ** 2 * model.gamma(q, w[c])) for q in (1, -1, 0) for c in range(len(basis2)) if w[c] > 0
        )
        assert rate > dipoles2.matrix(-1)[ground, a] ** 2 * float(model.gamma(-1, w[ground]))
        t = atomic_to_fs(np.linspace(0, 3 / rate, 31))
        run = propagate(PropagationJob(g, a, t))
        np.testing.assert_allclose(run.population(a), np.exp(-rate * fs_to_atomic(t)), rtol=1e-9)

    def test_observables(self, basis2, dipoles2, cavity_model):
        g = geometric_mean_lindblad(partial_secularize(build_br_tensor(basis2, dipoles2, cavity_model)))
        proj = np.zeros((len(basis2),) * 2)
        a = basis2.index(2, 0, 0.5, 0.5)
        proj[a, a] = 1.0
        run = propagate(PropagationJob(g, a, short_grid(), observables={"P": proj}))
        np.testing.assert_allclose(run.observables["P"], run.population(a), atol=1e-14)

    def test_oracle_observables_trace_modes(self, basis3, dipoles3):
        gen = cavity_oracle(basis3, dipoles3)
        a = basis3.index(3, 0, 0.5, 0.5)
        proj = np.zeros((len(basis3),) * 2)
        proj[a, a] = 1.0
        run = propagate(PropagationJob(gen, a, short_grid(), observables={"P": proj}))
        np.testing.assert_allclose(run.observables["P"], run.population(a), atol=1e-12)

    def test_reduced_subspace(self, basis4, dipoles4):
        gen = cavity_oracle(basis4, dipoles4)
        idx = reachable_states(gen.coupling_pattern(), [gen.composite_index(basis4.index(3, 0, 0.5, 0.5))])
        assert len(idx) == 32
        gen2 = cavity_oracle(basis4, dipoles4, photons=2)
        idx2 = reachable_states(gen2.coupling_pattern(), [gen2.composite_index(basis4.index(3, 0, 0.5, 0.5))])
        assert len(idx2) == 48

    def test_bloch_redfield_generator(self, basis2, dipoles2, cavity_model):
        t = build_br_tensor(basis2, dipoles2, cavity_model)
        run = propagate(PropagationJob(t, basis2.index(2, 0, 0.5, 0.5), short_grid()))
        np.testing.assert_allclose(run.trace, 1.0, atol=1e-10)

    def test_dense_limit(self, basis4, dipoles4):
        modes = tuple(OracleMode.from_ev(2.0, 0.1, 1e-3, p) for p in "xz")
        gen = build_oracle(basis4, dipoles4, OracleModel(modes, 1))
        start = basis4.index(3, 0, 0.5, 0.5)
        with pytest.raises(PropagationError, match="dense-propagator limit"):
            propagate(PropagationJob(gen, start, short_grid()))

    def test_trace_drift_guard(self, basis2, dipoles2, cavity_model, monkeypatch):
        import vacmix.dynamics as dyn

        g = geometric_mean_lindblad(partial_secularize(build_br_tensor(basis2, dipoles2, cavity_model)))
        monkeypatch.setattr(dyn, "TRACE_DRIFT_LIMIT", -1.0)
        with pytest.raises(PropagationError, match="trace drift"):
            propagate(PropagationJob(g, 0, short_grid(10.0, 3)))

    def test_zero_window(self, basis2, dipoles2, cavity_model):
        g = geometric_mean_lindblad(partial_secularize(build_br_tensor(basis2, dipoles2, cavity_model)))
        run = propagate(PropagationJob(g, 3, np.zeros(1)))
        assert run.populations.shape == (1, len(basis2))
        assert run.population(3)[0] == 1.0

    def test_job_validation(self, basis2, dipoles2):
        g = geometric_mean_lindblad(partial_secularize(build_br_tensor(basis2, dipoles2, FlatModel(0.0, 0.0))))
        for times in ([1.0, 2.0], [0.0, 0.0], [0.0, 2.0, 1.0]):
            with pytest.raises(ValueError):
                PropagationJob(g, 0, times)
        with pytest.raises(ValueError):
            PropagationJob(g, 0, [0.0, 1.0], method="euler")
        bad = np.eye(len(basis2))
        with pytest.raises(ValueError, match="unit trace"):
            propagate(PropagationJob(g, bad, [0.0, 1.0]))
        with pytest.raises(ValueError, match="dimension"):
            propagate(PropagationJob(g, np.ones(3), [0.0, 1.0]))

    def test_effective_needs_level_state(self, basis3, dipoles3, cavity_model):
        g = geometric_mean_lindblad(partial_secularize(build_br_tensor(basis3, dipoles3, cavity_model)))
        eff = EffectiveGenerator.from_lindblad(g, 3)
        with pytest.raises(ValueError, match="outside"):
            propagate(PropagationJob(eff, basis3.index(2, 0, 0.5, 0.5), [0.0, 1.0]))

    def test_parallel_map(self, basis2, dipoles2, cavity_model):
        g = geometric_mean_lindblad(partial_secularize(build_br_tensor(basis2, dipoles2, cavity_model)))
        jobs = [PropagationJob(g, i, short_grid(), name=str(i)) for i in range(4)]
        serial = propagate_many(jobs)
        threaded = propagate_many(jobs, max_workers=4)
        for a, b in zip(serial, threaded):
            np.testing.assert_array_equal(a.populations, b.populations)


@pytest.fixture(scope="module")
def effective_runs(basis4, dipoles4, cavity_model):
    t = short_grid(20000.0, 101)
    start = basis4.index(3, 0, 0.5, 0.5)
    out = {}
    for cr in (True, False):
        g = geometric_mean_lindblad(partial_secularize(build_br_tensor(basis4, dipoles4, cavity_model, cr)))
        out[cr] = propagate(PropagationJob(EffectiveGenerator.from_lindblad(g, 3), start, t))
    return out


class TestComparison:
    @pytest.fixture
    def runs(self, effective_runs):
        return effective_runs

    def test_self_comparison(self, runs):
        rep = compare_runs(runs[True], runs[True], tolerance=1e-12)
        assert rep.worst == 0.0 and rep.passed

    def test_counter_rotating_difference(self, runs):
        labels = [s for s in runs[True].labels if s.startswith("3")]
        assert compare_runs(runs[True], runs[False], labels).worst > 1e-3

    def test_grid_mismatch(self, runs, basis2, dipoles2, cavity_model):
        g = geometric_mean_lindblad(partial_secularize(build_br_tensor(basis2, dipoles2, cavity_model)))
        other = propagate(PropagationJob(g, 0, short_grid(10.0, 5)))
        with pytest.raises(ValueError):
            compare_runs(runs[True], other)

    def test_largest_populations(self, runs):
        labels = [s for s in runs[True].labels if s.startswith("3") and s.endswith("(m=+1/2)")]
        top = largest_populations(runs[True], labels, 2)
        assert top[0] == "3s1/2(m=+1/2)" and len(top) == 2

    def test_write_run(self, runs, tmp_path):
        path = write_run(runs[True], tmp_path / "eff.csv", ["3s1/2(m=+1/2)"], ["header line"])
        lines = path.read_text().splitlines()
        assert lines[0] == "# header line"
        assert lines[1] == "t_fs,3s1/2(m=+1/2)"
        assert len(lines) == 2 + len(runs[True].times_fs)
        assert float(lines[2].split(",")[1]) == 1.0
        side = json.loads(path.with_suffix(".json").read_text())
        assert side["generator"] == "effective"
        assert side["columns"] == [{"name": "3s1/2(m=+1/2)", "kind": "population"}]


class TestTimeGrid:
    def test_conversion(self):
        t = time_grid_hbar_per_ev(5e5, 3)
        assert t[-1] == pytest.approx(atomic_to_fs(hbar_per_ev_to_atomic(5e5)))
        assert t[-1] == pytest.approx(329106.0, rel=1e-5)
        np.testing.assert_array_equal(time_grid_hbar_per_ev(0.0, 1), [0.0])
        with pytest.raises(ValueError):
            time_grid_hbar_per_ev(1.0, 0)
