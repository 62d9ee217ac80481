import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import constants as sc
from scipy import integrate

from vacmix import FlatModel, LorentzianModel, TabulatedModel, gamma, lambda_shift, read_spectral_file
from vacmix import spectral_density_from_green
from vacmix.bath import (
    oscillator_density,
    power_law_family,
    principal_value_integral,
    write_spectral_file,
)
from vacmix.units import HARTREE_EV, ev_to_hartree


@pytest.fixture
def lorentzian():
    return LorentzianModel.from_ev(1e-3, 2e-3, 2e-3, 1.95, allow_unphysical=True)


def fine_grid_ev():
    # kappa / 200 spacing around the peak, coarser elsewhere; symmetric about 1.95 eV
    return np.concatenate(
        [np.linspace(0.01, 1.85, 2000, endpoint=False), np.linspace(1.85, 2.05, 20001), np.linspace(2.05, 3.89, 2001)[1:]]
    )


class TestLorentzian:
    def test_peak_rate(self, lorentzian):
        m = lorentzian
        assert gamma(m, 0, m.omega_m) == pytest.approx(4 * m.g_zz**2 / m.kappa, rel=1e-14)
        assert gamma(m, 1, m.omega_m) == pytest.approx(4 * m.g_xx**2 / m.kappa, rel=1e-14)

    def test_tails(self, lorentzian):
        m = lorentzian
        big = np.array([-1e8, 1e8])
        assert np.all(gamma(m, 0, big) < 1e-20)
        assert np.all(np.abs(lambda_shift(m, 0, big)) < 1e-12)

    def test_shift_zero_at_resonance(self, lorentzian):
        assert lambda_shift(lorentzian, 0, lorentzian.omega_m) == 0.0

    def test_shift_at_half_width(self, lorentzian):
        m = lorentzian
        assert lambda_shift(m, 0, m.omega_m + m.kappa / 2) == pytest.approx(m.g_zz**2 / m.kappa, rel=1e-14)
        assert lambda_shift(m, -1, m.omega_m - m.kappa / 2) == pytest.approx(-m.g_xx**2 / m.kappa, rel=1e-14)

    def test_needs_opt_in(self):
        with pytest.raises(ValueError, match="allow_unphysical"):
            LorentzianModel(1.0, 1.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            LorentzianModel(1.0, 1.0, 0.0, 1.0, allow_unphysical=True)

    def test_shift_is_principal_value_of_density(self, lorentzian):
        # independent check of the closed form: scipy's Cauchy-weight quadrature
        m = lorentzian
        w = m.omega_m + 0.3 * m.kappa
        lo, hi = w - 20 * m.kappa, w + 20 * m.kappa
        # quad(weight="cauchy") returns P int f(x) / (x - w) over the window around the pole
        near, _ = integrate.quad(lambda x: m.density(0, x), lo, hi, weight="cauchy", wvar=w, limit=500)
        outer = lambda x: m.density(0, x) / (w - x)  # noqa: E731
        # the tails beyond 1e5 kappa contribute about 1e-8 relative
        far = 1e5 * m.kappa
        left = sum(integrate.quad(outer, a, b, limit=500)[0] for a, b in ((w - far, lo - 100 * m.kappa), (lo - 100 * m.kappa, lo)))
        right = sum(integrate.quad(outer, a, b, limit=500)[0] for a, b in ((hi, hi + 100 * m.kappa), (hi + 100 * m.kappa, w + far)))
        assert left + right - near == pytest.approx(float(m.lambda_shift(0, w)), rel=1e-6)

    def test_polarization_components(self, lorentzian):
        m = lorentzian
        assert m.density(1, 0.1) == m.density(-1, 0.1)
        with pytest.raises(ValueError):
            m.density(2, 0.1)

    def test_scaled(self, lorentzian):
        s = lorentzian.scaled(4.0)
        assert s.density(0, 0.07) == pytest.approx(4 * lorentzian.density(0, 0.07), rel=1e-14)
        assert s.lambda_shift(1, 0.07) == pytest.approx(4 * lorentzian.lambda_shift(1, 0.07), rel=1e-14)


class TestTabulated:
    def test_lorentzian_samples_reproduce_shift(self, lorentzian):
        w = ev_to_hartree(fine_grid_ev())
        m = lorentzian
        tab = TabulatedModel(w, m.density(1, w), m.density(0, w))
        pts = m.omega_m + m.kappa * np.linspace(-3, 3, 121)
        pts = pts[np.abs(pts - m.omega_m) > 0.05 * m.kappa]
        np.testing.assert_allclose(tab.lambda_shift(0, pts), m.lambda_shift(0, pts), rtol=1e-4)
        np.testing.assert_allclose(tab.gamma(0, pts), m.gamma(0, pts), rtol=1e-4)

    def test_negative_frequency_is_zero(self):
        tab = TabulatedModel(ev_to_hartree(np.linspace(0.5, 3.0, 50)), np.ones(50), np.ones(50))
        assert tab.density(0, ev_to_hartree(-0.1)) == 0.0
        assert tab.gamma(1, ev_to_hartree(-0.1)) == 0.0

    def test_out_of_grid_modes(self):
        w = ev_to_hartree(np.linspace(0.5, 3.0, 50))
        zero = TabulatedModel(w, np.ones(50), np.ones(50))
        assert zero.density(0, ev_to_hartree(5.0)) == 0.0
        strict = TabulatedModel(w, np.ones(50), np.ones(50), out_of_grid="error")
        with pytest.raises(ValueError, match="outside"):
            strict.density(0, ev_to_hartree(5.0))

    @pytest.mark.parametrize(
        "omega, jxx, jzz",
        [([0.1], [1.0], [1.0]), ([0.2, 0.1], [1, 1], [1, 1]), ([0.0, 0.1], [1, 1], [1, 1]), ([0.1, 0.2], [-1, 1], [1, 1])],
    )
    def test_validation(self, omega, jxx, jzz):
        with pytest.raises(ValueError):
            TabulatedModel(np.array(omega, float), np.array(jxx, float), np.array(jzz, float))

    def test_pv_of_linear_hat_closed_form(self):
        # hat function on [0, 2] peaked at 1: PV has a textbook closed form
        x = np.array([0.0, 1.0, 2.0])
        y = np.array([0.0, 1.0, 0.0])
        w = np.array([0.5, 1.0, 1.7, 3.0, -1.0])

        def exact(t):
            f = lambda u: u * np.log(abs(u)) if u != 0 else 0.0  # noqa: E731
            # P int hat(x') / (w - x') dx' = f(w) - 2 f(w - 1) + f(w - 2)
            return f(t) - 2 * f(t - 1) + f(t - 2)

        got = principal_value_integral(x, y, w, order=1)
        np.testing.assert_allclose(got, [exact(t) for t in w], rtol=1e-13, atol=1e-15)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.2, 1.8), st.integers(2, 5))
    def test_pv_exact_for_quadratics(self, w, deg):
        # piecewise-quadratic interpolation integrates a quadratic bump exactly; compare with scipy
        x = np.linspace(0.0, 2.0, 2 * deg + 1)
        f = lambda t: t * (2.0 - t)  # noqa: E731
        ref, _ = integrate.quad(f, 0.0, 2.0, weight="cauchy", wvar=w)
        got = principal_value_integral(x, f(x), w, order=2)
        assert got == pytest.approx(-ref, rel=1e-9, abs=1e-12)

    def test_flat_model(self):
        m = FlatModel(0.2, 0.3, 0.1, -0.4)
        w = np.array([-1.0, 0.0, 2.0])
        np.testing.assert_allclose(m.gamma(1, w), 0.2)
        np.testing.assert_allclose(m.gamma(0, w), 0.3)
        np.testing.assert_allclose(m.lambda_shift(0, w), -0.4)


class TestGreen:
    def test_zero_green_gives_zero_kernels(self):
        w = np.linspace(0.5, 3.0, 40)
        m = spectral_density_from_green(w, np.zeros(40), np.zeros(40))
        pts = ev_to_hartree(np.array([0.7, 1.3, 2.9]))
        assert np.all(m.density(0, pts) == 0) and np.all(m.lambda_shift(1, pts) == 0)

    def test_linearity(self):
        w = np.linspace(0.5, 3.0, 40)
        g = 1e6 * np.exp(-((w - 1.5) ** 2))
        one = spectral_density_from_green(w, g, 2 * g)
        two = spectral_density_from_green(w, 2 * g, 4 * g)
        np.testing.assert_allclose(two.j_xx, 2 * one.j_xx, rtol=1e-15)
        np.testing.assert_allclose(two.j_zz, 2 * one.j_zz, rtol=1e-15)

    def test_hand_conversion(self):
        # J = w**2 Im G / (hbar pi eps0 c**2), in SI, then expressed per Hartree / (e a0)**2
        w_ev, im_g = 2.0, 3.5e5
        omega = w_ev * sc.e / sc.hbar
        j_si = omega**2 * im_g / (sc.hbar * np.pi * sc.epsilon_0 * sc.c**2)  # 1/s per (C m)^2
        a0 = sc.physical_constants["Bohr radius"][0]
        e_h = sc.physical_constants["Hartree energy"][0]
        expected = j_si * sc.hbar * (sc.e * a0) ** 2 / e_h
        m = spectral_density_from_green(np.array([1.0, w_ev]), np.array([0.0, im_g]), np.array([0.0, 0.0]))
        assert m.j_xx[1] == pytest.approx(expected, rel=1e-12)

    def test_single_pole_profile(self):
        # Im G shaped so that J is a Lorentzian; its shift must follow the closed form
        ref = LorentzianModel.from_ev(2e-3, 2e-3, 2e-3, 1.95, allow_unphysical=True)
        w_ev = fine_grid_ev()
        unit = spectral_density_from_green(w_ev, np.ones_like(w_ev), np.ones_like(w_ev)).j_xx
        im_g = ref.density(0, ev_to_hartree(w_ev)) / unit
        m = spectral_density_from_green(w_ev, im_g, im_g)
        pts = ref.omega_m + ref.kappa * np.array([-2.0, -0.7, 0.4, 1.5])
        np.testing.assert_allclose(m.lambda_shift(0, pts), ref.lambda_shift(0, pts), rtol=1e-4)

    def test_rejects_active_medium(self):
        with pytest.raises(ValueError, match="passive"):
            spectral_density_from_green([1.0, 2.0], [1.0, -1.0], [1.0, 1.0])


class TestFiles:
    def test_roundtrip(self, tmp_path):
        w = ev_to_hartree(np.linspace(0.1, 4.0, 30))
        m = TabulatedModel(w, np.linspace(0, 1, 30) / HARTREE_EV, np.linspace(1, 2, 30) / HARTREE_EV)
        p = tmp_path / "j.dat"
        write_spectral_file(p, m, "test family")
        back = read_spectral_file(p)
        np.testing.assert_allclose(back.omega, m.omega, rtol=1e-15)
        np.testing.assert_allclose(back.j_zz, m.j_zz, rtol=1e-15)

    def test_imgreen_format(self, tmp_path):
        p = tmp_path / "g.dat"
        p.write_text("#format: imgreen\n1.0 0 0\n2.0 3.5e5 1e5\n3.0 0 0\n")
        m = read_spectral_file(p)
        direct = spectral_density_from_green([1.0, 2.0, 3.0], [0, 3.5e5, 0], [0, 1e5, 0])
        np.testing.assert_allclose(m.j_xx, direct.j_xx)

    @pytest.mark.parametrize("text", ["1.0 2.0\n", "# only comments\n", "#format: other\n1 1 1\n2 1 1\n"])
    def test_bad_files(self, tmp_path, text):
        p = tmp_path / "bad.dat"
        p.write_text(text)
        with pytest.raises(ValueError):
            read_spectral_file(p)


class TestSyntheticFamilies:
    def test_oscillator_profile(self):
        w = np.array([0.0, 2.5])
        j = oscillator_density(w, 2.5, 0.5, 1e-6)
        assert j[0] == 0.0
        assert j[1] == pytest.approx(1e-6 / (2.5 * 0.5), rel=1e-14)

    def test_power_law(self):
        w = np.linspace(0.1, 5.0, 20)
        j = oscillator_density(w, 2.5, 0.5, 1e-6)
        models = power_law_family(w, np.zeros_like(w), j, [200.0, 100.0, 50.0])
        ratios = [mm.j_zz[5] / models[1].j_zz[5] for mm in models]
        np.testing.assert_allclose(ratios, [1 / 8, 1.0, 8.0], rtol=1e-14)
