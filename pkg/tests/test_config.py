import json

import pytest

from vacmix.config import DEFAULT_WINDOW_FS, ConfigError, RunConfig, config_from_dict, load_config
from vacmix.units import atomic_to_fs, hbar_per_ev_to_atomic


def test_defaults():
    cfg = config_from_dict({})
    assert cfg.atom.n_max == 4 and cfg.atom.n == 3
    assert cfg.bath.g_xx_ev == 0.0
    assert cfg.bath.g_zz_ev == pytest.approx(9 / 5**0.5 * 1e-4)
    assert cfg.flags.counter_rotating and cfg.flags.secularization == "partial+geometric-mean"
    assert cfg.dynamics.t_max_fs == DEFAULT_WINDOW_FS == pytest.approx(329105.978, rel=1e-8)
    assert DEFAULT_WINDOW_FS == atomic_to_fs(hbar_per_ev_to_atomic(5e5))
    assert cfg.verify.criteria == list(range(1, 10))


@pytest.mark.parametrize(
    "data, match",
    [
        ({"atomm": {}}, "unknown section"),
        ({"atom": {"nmax": 3}}, "unknown key"),
        ({"atom": {"n_max": "three"}}, "expected a number"),
        ({"atom": {"n_max": 2.5}}, "expected an integer"),
        ({"atom": {"n": 5}}, "n <= n_max"),
        ({"atom": {"m_j": 1.0}}, "half-integer"),
        ({"atom": {"parity": "up"}}, "parity"),
        ({"flags": {"counter_rotating": "yes"}}, "true or false"),
        ({"flags": {"secularization": "partial"}}, "secularization"),
        ({"bath": {"model": "drude"}}, "bath.model"),
        ({"bath": {"kappa_ev": 0.0}}, "kappa_ev"),
        ({"bath": {"files": ["a", "b"], "distances_nm": [1.0]}}, "distances_nm"),
        ({"dynamics": {"t_max_fs": 0.0}}, "zero window"),
        ({"dynamics": {"generators": ["exact"]}}, "generators"),
        ({"dynamics": {"generators": []}}, "generators"),
        ({"output": {"formats": ["json"]}}, "csv"),
        ({"spectra": {"points": 0}}, "points"),
        ({"verify": {"criteria": [10]}}, "1 to 9"),
        ({"atom": [1, 2]}, "mapping"),
    ],
)
def test_rejected(data, match):
    with pytest.raises(ConfigError, match=match):
        config_from_dict(data)


def test_string_numbers(tmp_path):
    # YAML 1.1 leaves "1e-9" (no decimal point) as a string
    p = tmp_path / "run.yaml"
    p.write_text("dynamics:\n  rtol: 1e-9\n  samples: 11\nbath:\n  kappa_ev: 2e-3\n")
    cfg = load_config(p)
    assert cfg.dynamics.rtol == 1e-9 and cfg.bath.kappa_ev == 2e-3
    assert isinstance(cfg.dynamics.samples, int)


def test_zero_window_allowed():
    cfg = config_from_dict({"dynamics": {"t_max_fs": 0, "samples": 1}})
    assert cfg.dynamics.t_max_fs == 0.0


def test_roundtrip(tmp_path):
    cfg = config_from_dict({"atom": {"n_max": 3}, "bath": {"g_xx_ev": 1e-4}, "dynamics": {"rwa_pair": True}})
    p = tmp_path / "dump.yaml"
    p.write_text(cfg.dumps())
    again = load_config(p)
    assert again == cfg
    assert again.hash == cfg.hash


def test_json(tmp_path):
    p = tmp_path / "run.json"
    p.write_text(json.dumps({"atom": {"n_max": 3}}))
    assert load_config(p).atom.n_max == 3


def test_hash_tracks_content():
    a = config_from_dict({})
    b = config_from_dict({"bath": {"kappa_ev": 3e-3}})
    assert a.hash == config_from_dict({}).hash
    assert a.hash != b.hash
    assert len(a.hash) >= 8


def test_relative_paths_follow_config(tmp_path):
    sub = tmp_path / "cfg"
    sub.mkdir()
    p = sub / "run.yaml"
    p.write_text("bath:\n  model: tabulated\n  file: data/j.dat\n")
    cfg = load_config(p)
    assert cfg.resolve(cfg.bath.file) == sub / "data" / "j.dat"
    assert cfg.resolve("/abs/x").as_posix() == "/abs/x"


def test_errors_on_files(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("atom: [unclosed\n")
    with pytest.raises(ConfigError, match="cannot parse"):
        load_config(bad)


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "empty.yaml"
    p.write_text("")
    assert load_config(p) == RunConfig()
