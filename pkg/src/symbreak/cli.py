"""Command-line front end: config parsing, run orchestration, file emission.

Results land as CSV (series and tables, 17 significant digits) and JSON
(fits and the run manifest), so downstream tooling can consume them
without importing this package. Every run directory gets exactly one
manifest.json recording the normalized config, seeds, version, and the
emitted files; together with the package that is enough to reproduce
the outputs byte for byte.

Exit codes: 0 success, 1 config error, 2 numerical failure, 3 resource
limit.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, engine, model, observables
from .errors import (
    InvalidSpecError,
    NumericalFailureError,
    ResourceLimitError,
)
from .experiments import (
    QuenchConfig,
    TgParams,
    TimeGrid,
    derive_seed,
    ensemble_run,
    nm_window_comparison,
    run_quench,
    tg_scaling_experiment,
)
from .spectra import spectrum_sweep

log = logging.getLogger("symbreak.cli")

FLOAT_FORMAT = ".17g"

SUBCOMMANDS = (
    "quench-torus",
    "quench-connected",
    "spectrum-sweep",
    "tg-scaling",
    "ensemble",
    "angle-scan",
    "nm-windows",
)

DEFAULT_REALIZATIONS = {"tg-scaling": 20, "ensemble": 8, "nm-windows": 8}

_TIME_GRID_KEYS = {"kind", "start", "stop", "dt", "num", "windows"}
_TG_KEYS = {
    "method",
    "threshold",
    "persistence",
    "peak_threshold",
    "baseline_quantile",
    "censor_margin",
}
_SECTION_KEYS = {"sweep", "scaling", "angles", "windows"}
_TOP_KEYS = {
    "model",
    "lx",
    "ly",
    "n_sites",
    "m",
    "mode",
    "n_particles",
    "g",
    "k",
    "filling",
    "include_onsite",
    "fill_unperturbed",
    "coupling_seed",
    "system_sites",
    "seed",
    "entropy",
    "bath_corr",
    "time_grid",
    "tg",
} | _SECTION_KEYS

# grids used when the config omits time_grid: a long linear window for
# the planar reconstruction runs, a log grid for connected decays
PLANAR_DEFAULT_GRID = {"kind": "linear", "start": 0.0, "stop": 2000.0, "dt": 0.5}
CONNECTED_DEFAULT_GRID = {"kind": "log", "start": 0.1, "stop": 1e4, "num": 1000}

# desk-scale connected defaults, recorded in every manifest
CONNECTED_DEFAULTS = {"n_sites": 12, "m": 2, "mode": "many_body", "n_particles": 3}
PLANAR_DEFAULTS = {"lx": 10, "ly": 10}


@dataclass
class RunSpec:
    """Normalized config file: the quench core plus optional sections."""

    quench: QuenchConfig
    sweep: dict | None = None
    scaling: dict | None = None
    angles: dict | None = None
    windows: dict | None = None


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    for key in section:
        if key not in allowed:
            raise InvalidSpecError(f"unknown config key {key!r} in {where}")


def _require(section: dict, keys: tuple[str, ...], where: str) -> None:
    for key in keys:
        if key not in section:
            raise InvalidSpecError(f"{where} needs the key {key!r}")


def _build_time_grid(section: dict) -> TimeGrid:
    _check_keys(section, _TIME_GRID_KEYS, "time_grid")
    kind = section.get("kind")
    if kind == "linear":
        _require(section, ("start", "stop", "dt"), "linear time_grid")
        return TimeGrid.linear(section["start"], section["stop"], section["dt"])
    if kind == "log":
        _require(section, ("start", "stop", "num"), "log time_grid")
        return TimeGrid.log(section["start"], section["stop"], section["num"])
    if kind == "windows":
        _require(section, ("windows",), "windows time_grid")
        return TimeGrid.from_windows(section["windows"])
    raise InvalidSpecError(
        f"time_grid kind must be linear, log, or windows, got {kind!r}"
    )


def _grid_list(section: dict, where: str) -> list[float]:
    grid = section.get("grid")
    if not isinstance(grid, (list, tuple)) or not grid:
        raise InvalidSpecError(f"{where} needs a non-empty 'grid' list")
    try:
        return [float(x) for x in grid]
    except (TypeError, ValueError) as exc:
        raise InvalidSpecError(f"{where} grid must be numeric: {exc}") from exc


def _param_name(section: dict, where: str, default: str | None = None) -> str:
    param = section.get("param", default)
    if param not in ("g", "k"):
        raise InvalidSpecError(f"{where} param must be 'g' or 'k', got {param!r}")
    return param


def _window_pair(section: dict, key: str) -> tuple[float, float]:
    raw = section.get(key)
    if not isinstance(raw, (list, tuple)) or len(raw) != 2:
        raise InvalidSpecError(f"windows section key {key!r} must be [start, stop]")
    lo, hi = float(raw[0]), float(raw[1])
    if hi <= lo:
        raise InvalidSpecError(f"window {key!r} must have stop > start, got {raw}")
    return lo, hi


def validate_config(path: str | Path) -> RunSpec:
    """Parse and normalize a JSON config file.

    Fills documented defaults, rejects unknown keys at every level, and
    runs all range and geometry validation up front so a bad file fails
    before any work starts.
    """
    path = Path(path)
    if not path.is_file():
        raise InvalidSpecError(f"config file {path} does not exist")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidSpecError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidSpecError("config file must hold a JSON object")
    _check_keys(data, _TOP_KEYS, "config")

    model_name = data.get("model")
    if model_name not in ("torus", "strip", "connected"):
        raise InvalidSpecError(
            f"config key 'model' must be torus, strip, or connected, got {model_name!r}"
        )

    kwargs: dict = {"model": model_name}
    if model_name == "connected":
        defaults = dict(CONNECTED_DEFAULTS)
        if data.get("mode", defaults["mode"]) != "many_body":
            defaults.pop("n_particles")
        for key, value in defaults.items():
            kwargs[key] = data.get(key, value)
        for key in ("n_particles", "filling", "include_onsite", "fill_unperturbed"):
            if key in data:
                kwargs[key] = data[key]
        if "lx" in data or "ly" in data:
            raise InvalidSpecError("config keys lx/ly do not apply to the connected model")
    else:
        for key, value in PLANAR_DEFAULTS.items():
            kwargs[key] = data.get(key, value)
        for key in ("n_sites", "m", "n_particles", "mode", "filling",
                    "include_onsite", "fill_unperturbed"):
            if key in data:
                raise InvalidSpecError(
                    f"config key {key!r} does not apply to planar models"
                )

    for key in ("g", "k", "seed", "coupling_seed", "entropy", "bath_corr"):
        if key in data:
            kwargs[key] = data[key]
    if "system_sites" in data:
        sites = data["system_sites"]
        if not isinstance(sites, (list, tuple)) or len(sites) != 2:
            raise InvalidSpecError("config key 'system_sites' must be a pair")
        kwargs["system_sites"] = (int(sites[0]), int(sites[1]))

    grid_section = data.get(
        "time_grid",
        CONNECTED_DEFAULT_GRID if model_name == "connected" else PLANAR_DEFAULT_GRID,
    )
    kwargs["time_grid"] = _build_time_grid(grid_section)

    tg_section = data.get("tg", {})
    _check_keys(tg_section, _TG_KEYS, "tg")
    kwargs["tg"] = TgParams(**tg_section)

    quench = QuenchConfig(**kwargs)
    quench.lattice_spec()  # geometry validation up front

    spec = RunSpec(quench)
    if "sweep" in data:
        _check_keys(data["sweep"], {"param", "grid"}, "sweep")
        spec.sweep = {
            "param": _param_name(data["sweep"], "sweep", default="g"),
            "grid": _grid_list(data["sweep"], "sweep"),
        }
    if "scaling" in data:
        _check_keys(data["scaling"], {"param", "grid", "horizon_scale"}, "scaling")
        spec.scaling = {
            "param": _param_name(data["scaling"], "scaling"),
            "grid": _grid_list(data["scaling"], "scaling"),
            "horizon_scale": data["scaling"].get("horizon_scale"),
        }
    if "angles" in data:
        _check_keys(data["angles"], {"num", "start", "stop"}, "angles")
        spec.angles = {
            "num": int(data["angles"].get("num", 21)),
            "start": float(data["angles"].get("start", 0.0)),
            "stop": float(data["angles"].get("stop", math.pi)),
        }
        if spec.angles["num"] < 1:
            raise InvalidSpecError("angles num must be >= 1")
        if spec.angles["num"] > 1 and spec.angles["stop"] <= spec.angles["start"]:
            raise InvalidSpecError("angles stop must exceed start")
    if "windows" in data:
        _check_keys(data["windows"], {"early", "late", "dt"}, "windows")
        _require(data["windows"], ("early", "late"), "windows section")
        spec.windows = {
            "early": _window_pair(data["windows"], "early"),
            "late": _window_pair(data["windows"], "late"),
            "dt": float(data["windows"].get("dt", 0.5)),
        }
    return spec


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), FLOAT_FORMAT)
    return str(value)


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def read_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Header and float data of a CSV written by :func:`write_csv`."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise InvalidSpecError(f"{path} is empty")
    header = lines[0].split(",")
    data = np.array(
        [[float(cell) for cell in line.split(",")] for line in lines[1:]]
    )
    return header, data


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serializable: {type(value)}")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n"
    )


def _config_echo(spec: RunSpec) -> dict:
    echo = asdict(spec.quench)
    for name in ("sweep", "scaling", "angles", "windows"):
        section = getattr(spec, name)
        if section is not None:
            echo[name] = section
    return echo


# ---------------------------------------------------------------------------
# subcommand bodies: each returns (output file names, manifest extras)
# ---------------------------------------------------------------------------


def _effective_config(spec: RunSpec, args) -> QuenchConfig:
    cfg = spec.quench
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _n_realizations(args) -> int:
    if args.realizations is not None:
        if args.realizations < 1:
            raise InvalidSpecError(
                f"--realizations must be >= 1, got {args.realizations}"
            )
        return args.realizations
    return DEFAULT_REALIZATIONS.get(args.subcommand, 8)


def _cmd_quench(spec: RunSpec, args, out_dir: Path):
    cfg = _effective_config(spec, args)
    planar = args.subcommand == "quench-torus"
    if planar and cfg.model == "connected":
        raise InvalidSpecError("quench-torus needs config model torus or strip")
    if not planar and cfg.model != "connected":
        raise InvalidSpecError("quench-connected needs config model connected")
    cfg = replace(cfg, entropy=True, bath_corr=True)
    spec.quench = cfg
    result = run_quench(cfg)
    rows = zip(
        result.distance.times,
        result.distance.values,
        result.series["vn_entropy"].values,
        result.series["bath_corr"].values,
    )
    write_csv(
        out_dir / "timeseries.csv",
        ["t", "trace_distance", "vn_entropy", "bath_corr"],
        rows,
    )
    return ["timeseries.csv"], {"seed": cfg.seed, "n_renorm": result.n_renorm}


def _sweep_builder(cfg: QuenchConfig, param: str):
    """H(param) with every other draw held fixed across the sweep."""
    lattice = cfg.lattice_spec()
    r = model.sample_symmetric_uniform(lattice.n_sites, derive_seed(cfg.seed, 1))
    if cfg.model in ("torus", "strip"):
        if param != "g":
            raise InvalidSpecError("planar sweeps only support param 'g'")
        return lattice, lambda v: model.build_2d_hamiltonian(
            lattice, model.SymBreakTerm(r, v)
        )
    coupling_seed = (
        cfg.coupling_seed if cfg.coupling_seed is not None else derive_seed(cfg.seed, 2)
    )
    r_prime = model.sample_symmetric_uniform(lattice.m, coupling_seed)
    n_particles = cfg.bath_filling() if cfg.mode == "many_body" else None

    def build(v: float) -> np.ndarray:
        sym = model.SymBreakTerm(r, v if param == "g" else cfg.g)
        coupling = model.CouplingTerm(r_prime, v if param == "k" else cfg.k)
        pair = model.build_connected_hamiltonian(
            lattice,
            sym,
            coupling,
            mode=cfg.mode,
            n_particles=n_particles,
            include_onsite=cfg.include_onsite,
        )
        return pair.post_quench

    return lattice, build


def _cmd_spectrum_sweep(spec: RunSpec, args, out_dir: Path):
    if spec.sweep is None:
        raise InvalidSpecError("spectrum-sweep needs a 'sweep' config section")
    cfg = _effective_config(spec, args)
    spec.quench = cfg
    param, grid = spec.sweep["param"], spec.sweep["grid"]
    _, build = _sweep_builder(cfg, param)
    sweep = spectrum_sweep(build, grid, param_name=param, store_vectors=False)
    width = len(str(sweep.dim - 1))
    header = [param] + [f"level_{i:0{width}d}" for i in range(sweep.dim)]
    rows = (
        [sweep.grid[i]] + list(sweep.eigenvalues[i]) for i in range(sweep.grid.size)
    )
    write_csv(out_dir / "spectrum.csv", header, rows)
    return ["spectrum.csv"], {"seed": cfg.seed, "dim": sweep.dim}


def _cmd_tg_scaling(spec: RunSpec, args, out_dir: Path):
    if spec.scaling is None:
        raise InvalidSpecError("tg-scaling needs a 'scaling' config section")
    cfg = _effective_config(spec, args)
    spec.quench = cfg
    n_real = _n_realizations(args)
    result = tg_scaling_experiment(
        cfg,
        spec.scaling["param"],
        spec.scaling["grid"],
        n_realizations=n_real,
        master_seed=cfg.seed,
        workers=args.workers,
        horizon_scale=spec.scaling["horizon_scale"],
    )
    write_csv(
        out_dir / "scaling.csv",
        ["param", "tg_median", "tg_mean", "n_censored", "n_total"],
        (
            [p.param, p.tg_median, p.tg_mean, p.n_censored, p.n_total]
            for p in result.points
        ),
    )
    fit = result.fit
    _write_json(
        out_dir / "fit.json",
        {
            "slope": None if fit is None else fit.slope,
            "intercept": None if fit is None else fit.intercept,
            "r2": None if fit is None else fit.r_squared,
        },
    )
    extras = {
        "master_seed": cfg.seed,
        "n_realizations": n_real,
        "censoring": [
            {
                "param": p.param,
                "n_censored": p.n_censored,
                "n_total": p.n_total,
                "flagged": p.flagged,
            }
            for p in result.points
        ],
        "point_master_seeds": [
            derive_seed(cfg.seed, 10_000 + i) for i in range(len(result.points))
        ],
    }
    return ["scaling.csv", "fit.json"], extras


def _cmd_ensemble(spec: RunSpec, args, out_dir: Path):
    cfg = _effective_config(spec, args)
    spec.quench = cfg
    n_real = _n_realizations(args)
    ens = ensemble_run(cfg, n_real, master_seed=cfg.seed, workers=args.workers)
    header = ["t", "mean_trace_distance"] + [f"d{i:03d}" for i in range(n_real)]
    mean = ens.distances.mean(axis=0)
    rows = (
        [ens.times[j], mean[j]] + list(ens.distances[:, j])
        for j in range(ens.times.size)
    )
    write_csv(out_dir / "ensemble.csv", header, rows)
    write_csv(
        out_dir / "tg.csv",
        ["realization", "seed", "tg", "censored", "flag"],
        (
            [i, ens.seeds[i], est.value, est.censored, est.flag]
            for i, est in enumerate(ens.tg_estimates)
        ),
    )
    extras = {
        "master_seed": cfg.seed,
        "seeds": ens.seeds,
        "n_realizations": n_real,
        "n_censored": sum(1 for t in ens.tg_estimates if t.censored),
    }
    return ["ensemble.csv", "tg.csv"], extras


def _cmd_angle_scan(spec: RunSpec, args, out_dir: Path):
    cfg = _effective_config(spec, args)
    spec.quench = cfg
    if cfg.model != "connected":
        raise InvalidSpecError("angle-scan needs config model connected")
    section = spec.angles or {"num": 21, "start": 0.0, "stop": math.pi}
    spec.angles = section
    thetas = np.linspace(section["start"], section["stop"], section["num"])

    lattice = cfg.lattice_spec()
    sym = model.SymBreakTerm.sample(lattice.n_sites, cfg.g, derive_seed(cfg.seed, 1))
    coupling_seed = (
        cfg.coupling_seed if cfg.coupling_seed is not None else derive_seed(cfg.seed, 2)
    )
    coupling = model.CouplingTerm.sample(lattice.m, cfg.k, coupling_seed)
    n_fill = cfg.bath_filling()
    pair = model.build_connected_hamiltonian(
        lattice,
        sym,
        coupling,
        mode=cfg.mode,
        n_particles=n_fill if cfg.mode == "many_body" else None,
        include_onsite=cfg.include_onsite,
    )
    if cfg.fill_unperturbed:
        flat = model.SymBreakTerm(np.zeros((lattice.n_sites,) * 2), 0.0)
        bath = model.bath_matrix(lattice, flat, cfg.include_onsite)
    else:
        bath = model.bath_matrix(lattice, sym, cfg.include_onsite)
    bath_decomp = engine.diagonalize(bath)
    if cfg.mode == "many_body":
        basis = engine.FockBasis.build(lattice.n_sites, n_fill)
        bath_state = engine.slater_amplitudes(
            bath_decomp.eigenvectors[:, :n_fill], basis
        )
    else:
        bath_state = bath_decomp.eigenvectors[:, 0]
    decomp = engine.diagonalize(pair.post_quench)
    scan = observables.angle_scan(decomp, thetas, bath_state)
    write_csv(
        out_dir / "anglescan.csv",
        ["theta", "dephased_estimate"],
        zip(scan.times, scan.values),
    )
    return ["anglescan.csv"], {"seed": cfg.seed}


def _cmd_nm_windows(spec: RunSpec, args, out_dir: Path):
    if spec.windows is None:
        raise InvalidSpecError("nm-windows needs a 'windows' config section")
    cfg = _effective_config(spec, args)
    early, late = spec.windows["early"], spec.windows["late"]
    dt = spec.windows["dt"]
    grid = TimeGrid.from_windows([(*early, dt), (*late, dt)])
    cfg = replace(cfg, time_grid=grid)
    spec.quench = cfg
    n_real = _n_realizations(args)
    ens = ensemble_run(cfg, n_real, master_seed=cfg.seed, workers=args.workers)
    comp = nm_window_comparison(ens, early, late)
    write_csv(
        out_dir / "nmwindows.csv",
        ["window", "t_start", "t_stop", "mean_of_measure", "measure_of_mean"],
        [
            ["early", early[0], early[1], comp.mean_of_measure_early,
             comp.measure_of_mean_early],
            ["late", late[0], late[1], comp.mean_of_measure_late,
             comp.measure_of_mean_late],
        ],
    )
    extras = {
        "master_seed": cfg.seed,
        "seeds": ens.seeds,
        "n_realizations": n_real,
    }
    return ["nmwindows.csv"], extras


_HANDLERS = {
    "quench-torus": _cmd_quench,
    "quench-connected": _cmd_quench,
    "spectrum-sweep": _cmd_spectrum_sweep,
    "tg-scaling": _cmd_tg_scaling,
    "ensemble": _cmd_ensemble,
    "angle-scan": _cmd_angle_scan,
    "nm-windows": _cmd_nm_windows,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as config errors (exit 1)."""

    def error(self, message: str):
        raise InvalidSpecError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="symbreak", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument(
            "--realizations", type=int, default=None, help="ensemble size"
        )
        p.add_argument("--workers", type=int, default=1, help="worker processes")
    return parser


def run(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = validate_config(args.config)
    started = datetime.now(timezone.utc).isoformat()
    outputs, extras = _HANDLERS[args.subcommand](spec, args, out_dir)
    manifest = {
        "subcommand": args.subcommand,
        "version": __version__,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "config": _config_echo(spec),
        "workers": args.workers,
        "outputs": sorted(outputs),
    }
    manifest.update(extras)
    _write_json(out_dir / "manifest.json", manifest)
    return 0


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr, format="%(name)s: %(message)s"
    )
    try:
        args = _build_parser().parse_args(argv)
        return run(args)
    except InvalidSpecError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericalFailureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except ResourceLimitError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
