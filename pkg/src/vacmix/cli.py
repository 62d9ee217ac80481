"""Command-line entry point: ``vacmix {spectra,sweep,propagate,verify}``.

Exit status: 0 success, 1 a physics check or propagation failed,
2 configuration or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .atom import build_dipole_table, enumerate_basis, parse_state_label
from .bath import LorentzianModel, read_spectral_file
from .config import ConfigError, RunConfig, config_from_dict, load_config
from .dynamics import (
    EffectiveGenerator,
    OracleModel,
    PropagationError,
    PropagationJob,
    build_oracle,
    compare_runs,
    format_float,
    propagate_many,
    write_run,
)
from .effective import sweep_and_track
from .master_eq import build_br_tensor, full_secularize, geometric_mean_lindblad, partial_secularize
from .units import FINE_STRUCTURE, HARTREE_EV, ev_to_hartree

log = logging.getLogger("vacmix")


# ---------------------------------------------------------------- model assembly


def build_model(cfg: RunConfig, path=None):
    """Spectral model from the bath section (``path`` overrides ``bath.file``)."""
    b = cfg.bath
    if b.model == "lorentzian" and path is None:
        return LorentzianModel.from_ev(b.g_xx_ev, b.g_zz_ev, b.kappa_ev, b.omega_m_ev, allow_unphysical=b.allow_unphysical)
    path = path or b.file
    if not path:
        raise ConfigError("bath.model 'tabulated' needs bath.file or bath.files")
    full = cfg.resolve(path)
    try:
        return read_spectral_file(full, b.out_of_grid, b.interpolation)
    except OSError as exc:
        raise ConfigError(f"cannot read spectral file {full}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"invalid spectral file {full}: {exc}") from exc


def build_models(cfg: RunConfig) -> list:
    if cfg.bath.files:
        missing = [f for f in cfg.bath.files if not cfg.resolve(f).is_file()]
        if missing:
            raise ConfigError(f"missing spectral file(s) for sweep points: {', '.join(map(str, missing))}")
        return [build_model(cfg, f) for f in cfg.bath.files]
    return [build_model(cfg)]


def build_basis(cfg: RunConfig):
    alpha = FINE_STRUCTURE if cfg.atom.alpha is None else cfg.atom.alpha
    basis = enumerate_basis(cfg.atom.n_max, alpha)
    return basis, build_dipole_table(basis)


def build_generator(cfg: RunConfig, basis, dipoles, model, counter_rotating=None):
    cr = cfg.flags.counter_rotating if counter_rotating is None else counter_rotating
    tensor = build_br_tensor(basis, dipoles, model, cr)
    mode = cfg.flags.secularization
    if mode == "none":
        return tensor
    if mode == "full":
        return full_secularize(tensor)
    return geometric_mean_lindblad(partial_secularize(tensor))


def _header(cfg: RunConfig):
    return [f"vacmix {__version__} config {cfg.hash}"]


def _write_csv(path: Path, cfg, columns: dict):
    names = list(columns)
    rows = len(next(iter(columns.values()))) if columns else 0
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for line in _header(cfg):
            fh.write(f"# {line}\n")
        fh.write(",".join(names) + "\n")
        for k in range(rows):
            fh.write(",".join(format_float(float(columns[n][k])) for n in names) + "\n")
    return path


def _write_json(path: Path, cfg, payload: dict):
    payload = {"version": __version__, "config_hash": cfg.hash, **payload}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")
    return path


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def _out_dir(cfg: RunConfig) -> Path:
    out = cfg.resolve(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- spectra


def run_spectra(cfg: RunConfig) -> dict:
    """Density and kernel tables per component over the configured grid (eV units)."""
    sp = cfg.spectra
    if sp.points < 1:
        raise ConfigError("empty frequency grid")
    model = build_model(cfg)
    omega_ev = np.linspace(sp.omega_min_ev, sp.omega_max_ev, sp.points)
    w = ev_to_hartree(omega_ev)
    cols = {"omega_eV": omega_ev}
    for name, q in (("xx", 1), ("zz", 0)):
        # J in eV/(e a0)^2 and the kernels in eV per (e a0)^2
        cols[f"J_{name}"] = model.density(q, w) * HARTREE_EV
        cols[f"gamma_{name}"] = model.gamma(q, w) * HARTREE_EV
        cols[f"lambda_{name}"] = model.lambda_shift(q, w) * HARTREE_EV
    out = _out_dir(cfg)
    path = _write_csv(out / "spectra.csv", cfg, cols)
    if "json" in cfg.output.formats:
        _write_json(out / "spectra.json", cfg, {"columns": list(cols), "units": "omega in eV; J, gamma, lambda in eV/(e a0)^2"})
    return {"columns": cols, "path": path}


# ---------------------------------------------------------------- sweep


def _dominant_labels(table):
    vecs = table.points[0].vectors
    return [table.labels[int(np.argmax(np.abs(vecs[:, k])))].label for k in range(vecs.shape[1])]


def run_sweep(cfg: RunConfig, threads=None) -> dict:
    """Eigen-analysis of the configured block at every sweep point, with the diagonal reference."""
    models = build_models(cfg)
    basis, dipoles = build_basis(cfg)
    a = cfg.atom
    common = dict(
        n=a.n,
        m_j=a.m_j,
        parity=a.parity_sign,
        basis=basis,
        dipoles=dipoles,
        counter_rotating=cfg.flags.counter_rotating,
        max_workers=threads,
    )
    full = sweep_and_track(models, intermediate_levels=cfg.flags.intermediate_levels, **common)
    reference = sweep_and_track(models, diagonal=True, **common)
    out = _out_dir(cfg)
    param = np.asarray(cfg.bath.distances_nm, dtype=float) if cfg.bath.distances_nm else np.arange(len(models), dtype=float)
    pname = "d_nm" if cfg.bath.distances_nm else "point"
    written = []
    for prefix, table in (("", full), ("reference_", reference)):
        states = [f"state_{k + 1}" for k in range(len(table.labels))]
        blocks = {
            "energies": table.energies * HARTREE_EV,
            "energies_centered": table.centered * HARTREE_EV,
            "rates": table.rates * HARTREE_EV,
            "participation": table.participation,
        }
        for name, arr in blocks.items():
            cols = {pname: param, **{s: arr[:, k] for k, s in enumerate(states)}}
            if name == "participation":
                cols["mean"] = table.mean_participation
            written.append(_write_csv(out / f"{prefix}{name}.csv", cfg, cols))
    if "json" in cfg.output.formats:
        _write_json(
            out / "sweep.json",
            cfg,
            {
                "block": {"n": a.n, "m_j": a.m_j, "parity": a.parity},
                "units": {"energies": "eV", "rates": "eV (hbar = 1)", "participation": "dimensionless"},
                "tracked_states": _dominant_labels(full),
                "reference_states": [s.label for s in reference.labels],
                "ties": [{"point": p, "previous": i, "current": j} for p, i, j in full.ties],
                "files": [p.name for p in written],
            },
        )
    return {"full": full, "reference": reference, "files": written}


# ---------------------------------------------------------------- propagate


def _jobs(cfg: RunConfig, basis, dipoles, model, initial, times):
    dyn = cfg.dynamics
    variants = [True, False] if dyn.rwa_pair else [cfg.flags.counter_rotating]
    jobs = []
    for cr in variants:
        suffix = "" if cr else "-rwa"
        lindblad = None
        for kind in dyn.generators:
            if kind == "oracle":
                if not isinstance(model, LorentzianModel):
                    raise ConfigError("the oracle needs a Lorentzian bath")
                from .verify import oracle_modes

                gen = build_oracle(basis, dipoles, OracleModel(oracle_modes(cfg), dyn.max_photons), cr)
            elif kind == "bloch-redfield":
                gen = build_br_tensor(basis, dipoles, model, cr)
            else:
                lindblad = lindblad or geometric_mean_lindblad(partial_secularize(build_br_tensor(basis, dipoles, model, cr)))
                gen = lindblad if kind == "lindblad" else EffectiveGenerator.from_lindblad(
                    lindblad, basis[initial].n, cfg.flags.intermediate_levels
                )
            jobs.append(PropagationJob(gen, initial, times, method=dyn.method, rtol=dyn.rtol, name=kind + suffix))
    return jobs


def run_propagate(cfg: RunConfig, threads=None) -> dict:
    dyn = cfg.dynamics
    basis, dipoles = build_basis(cfg)
    model = build_model(cfg)
    try:
        initial = basis.index(*parse_state_label(dyn.initial_state))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"dynamics.initial_state: {exc}") from exc
    times = np.linspace(0.0, dyn.t_max_fs, dyn.samples)
    jobs = _jobs(cfg, basis, dipoles, model, initial, times)
    runs = propagate_many(jobs, threads)
    init = basis[initial]
    labels = [s.label for s in basis if s.n == init.n and s.m_j == init.m_j]
    out = _out_dir(cfg)
    files = []
    for run in runs:
        path = write_run(
            run,
            out / f"{run.name}.csv",
            labels,
            _header(cfg),
            {"version": __version__, "config_hash": cfg.hash, "units": {"t_fs": "fs", "populations": "probability"}},
        )
        files.append(path)
    reports = {}
    base = next((r for r in runs if r.name == "oracle"), runs[0])
    for run in runs:
        if run is not base and run.name.endswith("-rwa") == base.name.endswith("-rwa"):
            reports[f"{run.name} vs {base.name}"] = compare_runs(base, run, labels, dyn.compare_tolerance).to_dict()
    by_name = {r.name: r for r in runs}
    for r in runs:
        if r.name + "-rwa" in by_name:
            reports[f"{r.name} vs {r.name}-rwa"] = compare_runs(r, by_name[r.name + "-rwa"], labels).to_dict()
    _write_json(out / "comparison.json", cfg, {"states": labels, "reports": reports})
    return {"runs": runs, "reports": reports, "files": files}


# ---------------------------------------------------------------- verify


def run_verify(cfg: RunConfig, threads=None, report=print) -> list:
    from .verify import DYNAMICS_CRITERIA, run_criteria

    model = None
    if cfg.bath.model == "tabulated":
        needs_lorentzian = sorted(set(cfg.verify.criteria) & set(DYNAMICS_CRITERIA))
        if needs_lorentzian:
            raise ConfigError(f"criteria {needs_lorentzian} compare against the oracle and need a Lorentzian bath")
        model = build_model(cfg)
    results = run_criteria(cfg, threads=threads, report=report, model=model)
    out = _out_dir(cfg)
    _write_json(out / "verify.json", cfg, {"criteria": [r.to_dict() for r in results]})
    return results


# ---------------------------------------------------------------- argument handling


def _parser():
    p = argparse.ArgumentParser(prog="vacmix", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"vacmix {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (
        ("spectra", "tabulate gamma and lambda kernels"),
        ("sweep", "eigen-analysis across a list of spectral files"),
        ("propagate", "time evolution with the configured generators"),
        ("verify", "run the numerical acceptance checks"),
    ):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", help="YAML or JSON run configuration (defaults apply when omitted)")
        s.add_argument("--out", help="output directory (overrides output.directory)")
        s.add_argument("--threads", type=int, default=None, help="worker threads for independent jobs")
        s.add_argument("--seed", type=int, default=None, help="seed for randomized checks (overrides verify.seed)")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else config_from_dict({}, Path.cwd())
    if args.out:
        cfg.output.directory = str(Path(args.out).resolve())
    if args.seed is not None:
        cfg.verify.seed = args.seed
    if args.threads is not None and args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        if args.command == "spectra":
            res = run_spectra(cfg)
            print(f"wrote {res['path']}")
        elif args.command == "sweep":
            res = run_sweep(cfg, args.threads)
            print(f"wrote {len(res['files'])} tables to {_out_dir(cfg)}")
        elif args.command == "propagate":
            res = run_propagate(cfg, args.threads)
            for name, rep in res["reports"].items():
                print(f"{name}: max deviation {rep['worst']:.3e}")
        else:
            results = run_verify(cfg, args.threads)
            failed = [r.number for r in results if not r.passed]
            print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
            return 1 if failed else 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except PropagationError as exc:
        print(f"propagation failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
