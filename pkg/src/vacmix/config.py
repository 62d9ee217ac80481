"""Run configuration: strict YAML/JSON loading with defaults and serialization.

Key names carry their units (``_ev``, ``_fs``, ``_nm``); spectral densities
in files are in eV/(e a0)**2. Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .dynamics import config_hash
from .units import atomic_to_fs, hbar_per_ev_to_atomic

DEFAULT_WINDOW_FS = atomic_to_fs(hbar_per_ev_to_atomic(5e5))
GENERATORS = ("oracle", "lindblad", "effective", "bloch-redfield")
SECULARIZATIONS = ("none", "full", "partial+geometric-mean")


class ConfigError(ValueError):
    pass


@dataclass
class AtomSection:
    n_max: int = 4
    n: int = 3
    m_j: float = 0.5
    parity: str = "even"  # even | odd
    alpha: float | None = None  # None: CODATA value

    def check(self):
        if self.n_max < 1 or not 1 <= self.n <= self.n_max:
            raise ConfigError("atom: need 1 <= n <= n_max")
        if self.parity not in ("even", "odd"):
            raise ConfigError("atom.parity must be 'even' or 'odd'")
        if (2 * self.m_j) % 2 != 1:
            raise ConfigError("atom.m_j must be a half-integer")

    @property
    def parity_sign(self):
        return 1 if self.parity == "even" else -1


@dataclass
class BathSection:
    model: str = "lorentzian"  # lorentzian | tabulated
    g_xx_ev: float = 0.0  # eV / (e a0)
    g_zz_ev: float = 9 / 5**0.5 * 1e-4
    kappa_ev: float = 2e-3
    omega_m_ev: float = 1.95
    allow_unphysical: bool = True
    file: str | None = None
    files: list = field(default_factory=list)
    distances_nm: list = field(default_factory=list)
    out_of_grid: str = "zero"
    interpolation: str = "quadratic"

    def check(self):
        if self.model not in ("lorentzian", "tabulated"):
            raise ConfigError("bath.model must be 'lorentzian' or 'tabulated'")
        if self.model == "lorentzian" and self.kappa_ev <= 0:
            raise ConfigError("bath.kappa_ev must be positive")
        if self.out_of_grid not in ("zero", "error"):
            raise ConfigError("bath.out_of_grid must be 'zero' or 'error'")
        if self.interpolation not in ("linear", "quadratic"):
            raise ConfigError("bath.interpolation must be 'linear' or 'quadratic'")
        if self.distances_nm and len(self.distances_nm) != len(self.files):
            raise ConfigError("bath.distances_nm must match bath.files")


@dataclass
class FlagsSection:
    counter_rotating: bool = True
    secularization: str = "partial+geometric-mean"
    intermediate_levels: list | None = None

    def check(self):
        if self.secularization not in SECULARIZATIONS:
            raise ConfigError(f"flags.secularization must be one of {SECULARIZATIONS}")


@dataclass
class DynamicsSection:
    initial_state: str = "3s1/2(m=+1/2)"
    t_max_fs: float = DEFAULT_WINDOW_FS
    samples: int = 1001
    method: str = "expm"  # expm | rk
    rtol: float = 1e-9
    generators: list = field(default_factory=lambda: ["oracle", "lindblad", "effective"])
    rwa_pair: bool = False
    max_photons: int = 1
    compare_tolerance: float = 0.02

    def check(self):
        if self.t_max_fs < 0 or self.samples < 1 or (self.t_max_fs == 0) != (self.samples == 1):
            raise ConfigError("dynamics: t_max_fs >= 0 and samples >= 1, with a single sample exactly for a zero window")
        if self.method not in ("expm", "rk"):
            raise ConfigError("dynamics.method must be 'expm' or 'rk'")
        bad = [g for g in self.generators if g not in GENERATORS]
        if bad or not self.generators:
            raise ConfigError(f"dynamics.generators must be a non-empty subset of {GENERATORS}")
        if self.max_photons < 1:
            raise ConfigError("dynamics.max_photons must be >= 1")


@dataclass
class SpectraSection:
    omega_min_ev: float = 1.8
    omega_max_ev: float = 2.1
    points: int = 301

    def check(self):
        if self.points < 1 or self.omega_max_ev < self.omega_min_ev:
            raise ConfigError("spectra: need points >= 1 and omega_max_ev >= omega_min_ev")


@dataclass
class OutputSection:
    directory: str = "out"
    formats: list = field(default_factory=lambda: ["csv", "json"])

    def check(self):
        if "csv" not in self.formats or any(f not in ("csv", "json") for f in self.formats):
            raise ConfigError("output.formats must include 'csv' and may add 'json'")


@dataclass
class VerifySection:
    criteria: list = field(default_factory=lambda: list(range(1, 10)))
    seed: int = 20240611
    random_models: int = 100

    def check(self):
        if any(c not in range(1, 10) for c in self.criteria):
            raise ConfigError("verify.criteria must be numbers 1 to 9")


@dataclass
class RunConfig:
    atom: AtomSection = field(default_factory=AtomSection)
    bath: BathSection = field(default_factory=BathSection)
    flags: FlagsSection = field(default_factory=FlagsSection)
    dynamics: DynamicsSection = field(default_factory=DynamicsSection)
    spectra: SpectraSection = field(default_factory=SpectraSection)
    output: OutputSection = field(default_factory=OutputSection)
    verify: VerifySection = field(default_factory=VerifySection)
    base_dir: str = field(default=".", compare=False, repr=False)

    def check(self):
        for f in _sections():
            getattr(self, f.name).check()
        return self

    def to_dict(self) -> dict:
        return {f.name: dataclasses.asdict(getattr(self, f.name)) for f in _sections()}

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @property
    def hash(self) -> str:
        return config_hash(self.to_dict())

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p


def _sections():
    return [f for f in dataclasses.fields(RunConfig) if f.name != "base_dir"]


def _build(cls, data, where):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    default = cls()
    kwargs = {}
    for key, value in data.items():
        ref = getattr(default, key)
        if isinstance(ref, bool) and not isinstance(value, bool):
            raise ConfigError(f"{where}.{key}: expected true or false")
        if isinstance(ref, (int, float)) and not isinstance(ref, bool) and value is not None:
            if isinstance(value, str):
                # YAML 1.1 reads "1e-9" (no dot) as a string
                try:
                    value = float(value)
                except ValueError:
                    raise ConfigError(f"{where}.{key}: expected a number") from None
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{where}.{key}: expected a number")
            if isinstance(ref, int) and not isinstance(ref, bool) and not float(value).is_integer():
                raise ConfigError(f"{where}.{key}: expected an integer")
            value = type(ref)(value)
        kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(data: dict | None, base_dir=".") -> RunConfig:
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    names = [f.name for f in _sections()]
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"unknown section(s) {', '.join(unknown)}")
    sections = {f.name: _build(f.default_factory().__class__, data.get(f.name), f.name) for f in _sections()}
    return RunConfig(**sections, base_dir=str(base_dir)).check()


def load_config(path) -> RunConfig:
    """Parse a YAML (or JSON) configuration file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse configuration {path}: {exc}") from exc
    return config_from_dict(data, path.resolve().parent)
