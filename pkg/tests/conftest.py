import numpy as np
import pytest

from vacmix import LorentzianModel, build_dipole_table, enumerate_basis

# reference cavity-mode setup used across the suite (eV and eV/(e a0))
G_ZZ_EV = 9 / np.sqrt(5) * 1e-4
KAPPA_EV = 2e-3
OMEGA_M_EV = 1.95


@pytest.fixture(scope="session")
def basis2():
    return enumerate_basis(2)


@pytest.fixture(scope="session")
def basis3():
    return enumerate_basis(3)


@pytest.fixture(scope="session")
def dipoles2(basis2):
    return build_dipole_table(basis2)


@pytest.fixture(scope="session")
def dipoles3(basis3):
    return build_dipole_table(basis3)


@pytest.fixture(scope="session")
def basis4():
    return enumerate_basis(4)


@pytest.fixture(scope="session")
def dipoles4(basis4):
    return build_dipole_table(basis4)


@pytest.fixture(scope="session")
def cavity_model():
    return LorentzianModel.from_ev(0.0, G_ZZ_EV, KAPPA_EV, OMEGA_M_EV, allow_unphysical=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_density(rng, size):
    x = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
    rho = x @ x.conj().T
    return rho / np.trace(rho).real
