"""Quench experiments: single runs, ensembles, and scaling sweeps.

A run builds one disorder realization, diagonalizes once, and evaluates
the trace-distance trajectory between the two distinguishable initial
preparations on a configured time grid. Ensembles repeat that over
deterministically derived seeds; scaling sweeps repeat ensembles over a
parameter grid with horizons that grow as the expected equilibration
time does (100/g for the planar model, 100/g^2 and 100/k^2 for the
connected one).

Everything is deterministic: per-realization seeds come from a
splitmix64 stream over the master seed, so results are independent of
worker count and reproducible byte for byte.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import engine, model, observables
from ._kernels import fold_occupancy_amplitudes
from .errors import InvalidSpecError, NumericalFailureError, ResourceLimitError
from .series import TimeSeries
from .spectra import ScalingFit, loglog_slope

log = logging.getLogger("symbreak.experiments")

MAX_TIME_SAMPLES = 20_000_000
_CHUNK = 2048

# scaling-sweep defaults: horizon = scale / param ** exponent
PLANAR_HORIZON_SCALE = 100.0
CONNECTED_HORIZON_SCALE = 100.0
PLANAR_SCAN_DT = 0.5
CONNECTED_SCAN_SAMPLES = 1000
CONNECTED_SCAN_T_MIN = 0.1


def derive_seed(master: int, index: int) -> int:
    """index-th output of a splitmix64 stream seeded at ``master``."""
    mask = (1 << 64) - 1
    z = (int(master) + (int(index) + 1) * 0x9E3779B97F4A7C15) & mask
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & mask
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & mask
    z ^= z >> 31
    return z


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeGrid:
    """Declarative time grid: linear, logarithmic, or linear windows."""

    kind: str
    start: float = 0.0
    stop: float = 0.0
    dt: float = 0.0
    num: int = 0
    windows: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self) -> None:
        if self.kind == "linear":
            if self.dt <= 0 or self.stop <= self.start:
                raise InvalidSpecError(
                    f"linear grid needs dt > 0 and stop > start, got "
                    f"dt={self.dt}, [{self.start}, {self.stop}]"
                )
        elif self.kind == "log":
            if self.start <= 0 or self.stop <= self.start or self.num < 2:
                raise InvalidSpecError(
                    f"log grid needs 0 < start < stop and num >= 2, got "
                    f"[{self.start}, {self.stop}] num={self.num}"
                )
        elif self.kind == "windows":
            if not self.windows:
                raise InvalidSpecError("windows grid needs at least one window")
            prev_end = -np.inf
            for w in self.windows:
                if len(w) != 3 or w[2] <= 0 or w[1] <= w[0]:
                    raise InvalidSpecError(f"bad window {w}")
                if w[0] <= prev_end:
                    raise InvalidSpecError("windows must be ordered and disjoint")
                prev_end = w[1]
        else:
            raise InvalidSpecError(
                f"grid kind must be linear, log, or windows, got {self.kind!r}"
            )

    @classmethod
    def linear(cls, start: float, stop: float, dt: float) -> "TimeGrid":
        return cls("linear", start=float(start), stop=float(stop), dt=float(dt))

    @classmethod
    def log(cls, start: float, stop: float, num: int) -> "TimeGrid":
        return cls("log", start=float(start), stop=float(stop), num=int(num))

    @classmethod
    def from_windows(cls, windows) -> "TimeGrid":
        return cls("windows", windows=tuple(tuple(float(x) for x in w) for w in windows))

    def times(self) -> np.ndarray:
        if self.kind == "linear":
            pieces = [self._linear(self.start, self.stop, self.dt)]
        elif self.kind == "log":
            pieces = [np.geomspace(self.start, self.stop, self.num)]
        else:
            pieces = [self._linear(*w) for w in self.windows]
        times = np.concatenate(pieces)
        if times.size > MAX_TIME_SAMPLES:
            raise ResourceLimitError(
                f"time grid has {times.size} samples (cap {MAX_TIME_SAMPLES})"
            )
        if np.any(np.diff(times) <= 0):
            raise InvalidSpecError("time grid is not strictly increasing")
        return times

    @staticmethod
    def _linear(start: float, stop: float, dt: float) -> np.ndarray:
        n = int(np.floor((stop - start) / dt + 1e-9)) + 1
        if n > MAX_TIME_SAMPLES:
            raise ResourceLimitError(
                f"time grid has {n} samples (cap {MAX_TIME_SAMPLES})"
            )
        return start + dt * np.arange(n)


@dataclass(frozen=True)
class TgParams:
    """Equilibration-time extraction settings.

    ``method`` is "peaks" (time of the last reconstruction peak, planar
    default), "threshold" (first persistent drop below ``threshold``,
    connected default), or "auto" (pick by model). A peak is a 3-point
    local maximum above max(peak_threshold, baseline quantile of the
    series); a run whose last peak falls inside the trailing
    ``censor_margin`` fraction of the horizon is censored, because its
    peaks may well continue past the end of the window.
    """

    method: str = "auto"
    threshold: float = 0.4
    persistence: int = 5
    peak_threshold: float = 0.5
    baseline_quantile: float = 0.9
    censor_margin: float = 0.2

    def __post_init__(self) -> None:
        if self.method not in ("auto", "peaks", "threshold"):
            raise InvalidSpecError(f"unknown t_g method {self.method!r}")
        for name in ("threshold", "peak_threshold"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise InvalidSpecError(f"{name} must lie in (0, 1), got {v}")
        if self.persistence < 1:
            raise InvalidSpecError(f"persistence must be >= 1, got {self.persistence}")
        if not 0.0 <= self.baseline_quantile <= 1.0:
            raise InvalidSpecError(
                f"baseline_quantile must lie in [0, 1], got {self.baseline_quantile}"
            )
        if not 0.0 <= self.censor_margin < 1.0:
            raise InvalidSpecError(
                f"censor_margin must lie in [0, 1), got {self.censor_margin}"
            )


@dataclass(frozen=True)
class QuenchConfig:
    """Everything one quench run needs, serializable and hashable.

    ``seed`` feeds two derived streams: the bond disorder r uses
    derive_seed(seed, 1) and the coupling r' uses derive_seed(seed, 2)
    unless ``coupling_seed`` pins the latter across realizations.
    """

    model: str
    time_grid: TimeGrid
    seed: int = 0
    lx: int = 0
    ly: int = 0
    n_sites: int = 0
    m: int = 0
    mode: str = "single_particle"
    n_particles: int | None = None
    g: float = 0.0
    k: float = 1.0
    filling: float = 0.25
    include_onsite: bool = False
    fill_unperturbed: bool = False
    coupling_seed: int | None = None
    system_sites: tuple[int, int] = (0, 1)
    entropy: bool = True
    bath_corr: bool = True
    tg: TgParams = field(default_factory=TgParams)

    def __post_init__(self) -> None:
        if self.model not in ("torus", "strip", "connected"):
            raise InvalidSpecError(
                f"model must be torus, strip, or connected, got {self.model!r}"
            )
        if self.model == "connected":
            if self.mode not in ("single_particle", "many_body"):
                raise InvalidSpecError(f"unknown mode {self.mode!r}")
            if not 0.0 < self.filling <= 1.0:
                raise InvalidSpecError(f"filling must lie in (0, 1], got {self.filling}")
        if self.g < 0.0 or not np.isfinite(self.g):
            raise InvalidSpecError(f"g must be finite and >= 0, got {self.g}")
        if not 0.0 <= self.k <= 1.0:
            raise InvalidSpecError(f"k must lie in [0, 1], got {self.k}")

    def lattice_spec(self) -> model.LatticeSpec:
        if self.model == "torus":
            return model.LatticeSpec.torus(self.lx, self.ly, self.system_sites)
        if self.model == "strip":
            return model.LatticeSpec.strip(self.lx, self.ly, self.system_sites)
        return model.LatticeSpec.fully_connected(self.n_sites, self.m)

    def bath_filling(self) -> int:
        """Particle count for the connected bath (half-up rounding)."""
        if self.n_particles is not None:
            return self.n_particles
        return int(np.floor(self.n_sites * self.filling + 0.5))


@dataclass
class QuenchResult:
    """Series produced by one run, keyed by observable name."""

    config: QuenchConfig
    series: dict[str, TimeSeries]
    n_renorm: int = 0

    @property
    def distance(self) -> TimeSeries:
        return self.series["trace_distance"]


@dataclass
class TgEstimate:
    """Equilibration time with explicit censoring.

    ``censored`` means the horizon ended before equilibration could be
    confirmed; ``flag`` is "" for a clean estimate, "censored", or
    "no_peaks" (peak method found nothing; value 0).
    """

    value: float
    censored: bool
    flag: str = ""

    @property
    def usable(self) -> bool:
        return not self.censored and self.flag == "" and self.value > 0.0


# ---------------------------------------------------------------------------
# single runs
# ---------------------------------------------------------------------------


def _phase_chunks(times: np.ndarray, eigenvalues: np.ndarray):
    for lo in range(0, times.size, _CHUNK):
        tc = times[lo : lo + _CHUNK]
        yield lo, lo + tc.size, np.exp(-1j * np.outer(tc, eigenvalues))


def _check_initial_distance(times: np.ndarray, dvals: np.ndarray) -> None:
    if times[0] == 0.0 and abs(dvals[0] - 1.0) > 1e-9:
        raise NumericalFailureError(
            f"initial trace distance {dvals[0]!r} differs from 1 beyond 1e-9"
        )


def run_torus_quench(config: QuenchConfig) -> QuenchResult:
    """Planar quench: dimer joined to the lattice at t = 0.

    Trace distance between the occupancy reductions of the two
    half-filled preparations (shared bath, bonding vs antibonding dimer
    orbital), plus entropy of the first and, optionally, the joining
    correlation. All times are evaluated in the post-quench eigenbasis;
    only the two tracked rows and the column sums of the evolved
    orbitals are formed, never the full propagated matrix.
    """
    if config.model not in ("torus", "strip"):
        raise InvalidSpecError(f"run_torus_quench got model {config.model!r}")
    spec = config.lattice_spec()
    sym = model.SymBreakTerm.sample(
        spec.n_sites, config.g, derive_seed(config.seed, 1)
    )
    pair = model.hamiltonian_pair_2d(spec, sym)
    ens_plus, ens_minus = engine.prepare_initial_pair_2d(
        engine.diagonalize(pair.pre_quench), spec
    )
    decomp = engine.diagonalize(pair.post_quench)
    times = config.time_grid.times()

    v, lam = decomp.eigenvectors, decomp.eigenvalues
    s1, s2 = spec.system_sites
    # distinct orbitals: shared bath columns, bonding, antibonding
    phi_all = np.column_stack([ens_plus.orbitals, ens_minus.orbitals[:, -1]])
    c0 = v.conj().T @ phi_all
    row1, row2, rowsum = v[s1, :], v[s2, :], v.sum(axis=0)
    n_orb = ens_plus.n_orbitals
    cols_plus = np.arange(n_orb)
    cols_minus = np.concatenate([np.arange(n_orb - 1), [n_orb]])

    dvals = np.empty(times.size)
    svals = np.empty(times.size) if config.entropy else None
    n_renorm = 0
    rest_norm = np.sqrt(spec.n_sites - 2)
    for lo, hi, phases in _phase_chunks(times, lam):
        a_all = (phases * row1) @ c0
        b_all = (phases * row2) @ c0
        s_all = ((phases * rowsum) @ c0 - a_all - b_all) / rest_norm
        p_all = 1.0 - np.abs(a_all) ** 2 - np.abs(b_all) ** 2
        rho_p, k1 = fold_occupancy_amplitudes(
            a_all[:, cols_plus], b_all[:, cols_plus],
            s_all[:, cols_plus], p_all[:, cols_plus],
        )
        rho_m, k2 = fold_occupancy_amplitudes(
            a_all[:, cols_minus], b_all[:, cols_minus],
            s_all[:, cols_minus], p_all[:, cols_minus],
        )
        n_renorm += k1 + k2
        dvals[lo:hi] = observables.trace_distance_batch(rho_p, rho_m)
        if svals is not None:
            svals[lo:hi] = observables.entropy_batch(rho_p)
    _check_initial_distance(times, dvals)

    series = {"trace_distance": TimeSeries(times, dvals, "trace_distance")}
    if svals is not None:
        series["vn_entropy"] = TimeSeries(times, svals, "vn_entropy")
    if config.bath_corr:
        joiner = model.joining_operator(spec, sym)
        system_orbital = engine.PureState(ens_plus.orbitals[:, -1], "site")
        series["bath_corr"] = observables.bath_correlation(
            decomp, joiner, system_orbital, times
        )
    if n_renorm:
        log.debug("planar run renormalized %d fold steps", n_renorm)
    return QuenchResult(config, series, n_renorm)


def run_connected_quench(config: QuenchConfig) -> QuenchResult:
    """Connected quench: spin coupled to the complete-graph bath at t = 0.

    Trace distance between the spin reductions of the up and down
    preparations over the filled bath, plus the entropy of the first and
    optionally the coupling correlation.
    """
    if config.model != "connected":
        raise InvalidSpecError(f"run_connected_quench got model {config.model!r}")
    spec = config.lattice_spec()
    sym = model.SymBreakTerm.sample(
        spec.n_sites, config.g, derive_seed(config.seed, 1)
    )
    coupling_seed = (
        config.coupling_seed
        if config.coupling_seed is not None
        else derive_seed(config.seed, 2)
    )
    coupling = model.CouplingTerm.sample(spec.m, config.k, coupling_seed)
    n_fill = config.bath_filling()
    pair = model.build_connected_hamiltonian(
        spec,
        sym,
        coupling,
        mode=config.mode,
        n_particles=n_fill if config.mode == "many_body" else None,
        include_onsite=config.include_onsite,
    )
    if config.fill_unperturbed:
        flat = model.SymBreakTerm(np.zeros((spec.n_sites,) * 2), 0.0)
        bath = model.bath_matrix(spec, flat, config.include_onsite)
    else:
        bath = model.bath_matrix(spec, sym, config.include_onsite)
    basis = (
        engine.FockBasis.build(spec.n_sites, n_fill)
        if config.mode == "many_body"
        else None
    )
    psi_up, psi_down = engine.prepare_initial_pair_connected(
        engine.diagonalize(bath),
        config.mode,
        basis=basis,
        filling=n_fill / spec.n_sites,
    )
    decomp = engine.diagonalize(pair.post_quench)
    times = config.time_grid.times()

    v, lam = decomp.eigenvectors, decomp.eigenvalues
    c_up = v.conj().T @ psi_up.amplitudes
    c_down = v.conj().T @ psi_down.amplitudes
    dvals = np.empty(times.size)
    svals = np.empty(times.size) if config.entropy else None
    for lo, hi, phases in _phase_chunks(times, lam):
        states_up = (phases * c_up) @ v.T
        states_down = (phases * c_down) @ v.T
        rho_up = observables.spin_rdm_batch(states_up)
        rho_down = observables.spin_rdm_batch(states_down)
        dvals[lo:hi] = observables.trace_distance_batch(rho_up, rho_down)
        if svals is not None:
            svals[lo:hi] = observables.entropy_batch(rho_up)
    _check_initial_distance(times, dvals)

    series = {"trace_distance": TimeSeries(times, dvals, "trace_distance")}
    if svals is not None:
        series["vn_entropy"] = TimeSeries(times, svals, "vn_entropy")
    if config.bath_corr:
        joiner = model.joining_operator(
            spec,
            coupling=coupling,
            mode=config.mode,
            n_particles=n_fill if config.mode == "many_body" else None,
        )
        series["bath_corr"] = observables.bath_correlation(
            decomp, joiner, psi_up, times
        )
    return QuenchResult(config, series)


def run_quench(config: QuenchConfig) -> QuenchResult:
    if config.model == "connected":
        return run_connected_quench(config)
    return run_torus_quench(config)


# ---------------------------------------------------------------------------
# equilibration-time extraction
# ---------------------------------------------------------------------------


def extract_tg_threshold(
    series: TimeSeries, threshold: float = 0.4, persistence: int = 5
) -> TgEstimate:
    """First time the series drops below ``threshold`` and stays there
    for ``persistence`` consecutive samples. Censored at the horizon if
    that never happens."""
    if not 0.0 < threshold < 1.0:
        raise InvalidSpecError(f"threshold must lie in (0, 1), got {threshold}")
    below = series.values < threshold
    if below.size >= persistence:
        runs = np.convolve(below.astype(np.int64), np.ones(persistence, np.int64), "valid")
        hits = np.nonzero(runs == persistence)[0]
        if hits.size:
            return TgEstimate(float(series.times[hits[0]]), False)
    return TgEstimate(float(series.times[-1]), True, "censored")


def extract_tg_peaks(
    series: TimeSeries,
    peak_threshold: float = 0.5,
    baseline_quantile: float = 0.9,
    censor_margin: float = 0.2,
) -> TgEstimate:
    """Time of the last reconstruction peak of the series.

    Peaks are strict 3-point local maxima above
    max(peak_threshold, quantile(values, baseline_quantile)); the
    quantile guard keeps the cut above a drifted baseline. No peaks at
    all gives value 0 flagged "no_peaks". A last peak inside the
    trailing ``censor_margin`` fraction of the horizon censors the run:
    peaks may continue beyond the window.
    """
    if not 0.0 < peak_threshold < 1.0:
        raise InvalidSpecError(f"peak_threshold must lie in (0, 1), got {peak_threshold}")
    vals, times = series.values, series.times
    cut = max(peak_threshold, float(np.quantile(vals, baseline_quantile)))
    inner = (vals[1:-1] > vals[:-2]) & (vals[1:-1] > vals[2:]) & (vals[1:-1] > cut)
    peak_idx = np.nonzero(inner)[0] + 1
    if peak_idx.size == 0:
        return TgEstimate(0.0, False, "no_peaks")
    t_last = float(times[peak_idx[-1]])
    horizon_cut = times[0] + (1.0 - censor_margin) * (times[-1] - times[0])
    if t_last > horizon_cut:
        return TgEstimate(t_last, True, "censored")
    return TgEstimate(t_last, False)


def extract_tg(series: TimeSeries, params: TgParams, model_name: str) -> TgEstimate:
    """Dispatch on method, resolving "auto" by model family."""
    method = params.method
    if method == "auto":
        method = "peaks" if model_name in ("torus", "strip") else "threshold"
    if method == "peaks":
        return extract_tg_peaks(
            series,
            params.peak_threshold,
            params.baseline_quantile,
            params.censor_margin,
        )
    return extract_tg_threshold(series, params.threshold, params.persistence)


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------


@dataclass
class EnsembleResult:
    """Distance trajectories over disorder realizations.

    ``distances`` is (n_realizations, n_times) in seed order. The two
    fluctuation summaries follow the windowed definitions: m_sigma is
    the ensemble mean of each realization's std over time, sigma_m the
    std over time of the ensemble-mean series (population std in both).
    """

    config: QuenchConfig
    master_seed: int
    seeds: list[int]
    times: np.ndarray
    distances: np.ndarray
    tg_estimates: list[TgEstimate]

    @property
    def n_realizations(self) -> int:
        return self.distances.shape[0]

    def mean_series(self) -> TimeSeries:
        return TimeSeries(self.times, self.distances.mean(axis=0), "mean_trace_distance")

    def realization_series(self, i: int) -> TimeSeries:
        return TimeSeries(self.times, self.distances[i], f"trace_distance_{i:03d}")

    def _window_mask(self, t_start: float | None, t_stop: float | None) -> np.ndarray:
        lo = self.times[0] if t_start is None else t_start
        hi = self.times[-1] if t_stop is None else t_stop
        mask = (self.times >= lo) & (self.times <= hi)
        if np.count_nonzero(mask) < 2:
            raise InvalidSpecError(f"window [{lo}, {hi}] has fewer than 2 samples")
        return mask

    def m_sigma(self, t_start: float | None = None, t_stop: float | None = None) -> float:
        mask = self._window_mask(t_start, t_stop)
        return float(np.mean(np.std(self.distances[:, mask], axis=1)))

    def sigma_m(self, t_start: float | None = None, t_stop: float | None = None) -> float:
        mask = self._window_mask(t_start, t_stop)
        return float(np.std(self.distances[:, mask].mean(axis=0)))


def _distance_worker(payload: tuple[QuenchConfig, int]) -> np.ndarray:
    config, seed = payload
    cfg = replace(config, seed=seed, entropy=False, bath_corr=False)
    return run_quench(cfg).distance.values


def ensemble_run(
    config: QuenchConfig,
    n_realizations: int,
    master_seed: int,
    workers: int = 1,
) -> EnsembleResult:
    """Repeat a quench over derived seeds and collect distance series.

    Only the trace distance is tracked (entropy and correlation are
    switched off per realization). Results are assembled in seed order,
    so the output is identical for any worker count.
    """
    if n_realizations < 1:
        raise InvalidSpecError(f"need n_realizations >= 1, got {n_realizations}")
    seeds = [derive_seed(master_seed, i) for i in range(n_realizations)]
    payloads = [(config, s) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_distance_worker, payloads, chunksize=1))
    else:
        rows = [_distance_worker(p) for p in payloads]
    times = config.time_grid.times()
    distances = np.vstack(rows)
    tg_list = [
        extract_tg(TimeSeries(times, row, "trace_distance"), config.tg, config.model)
        for row in distances
    ]
    return EnsembleResult(config, master_seed, seeds, times, distances, tg_list)


# ---------------------------------------------------------------------------
# scaling sweeps
# ---------------------------------------------------------------------------


@dataclass
class ScalingPoint:
    """Per-parameter t_g statistics; flagged points are dropped from fits."""

    param: float
    tg_median: float
    tg_mean: float
    n_censored: int
    n_total: int
    flagged: bool


@dataclass
class ScalingResult:
    param_name: str
    points: list[ScalingPoint]
    fit: ScalingFit | None
    n_realizations: int
    master_seed: int
    ensembles: list[EnsembleResult] = field(default_factory=list)


def _scan_grid(config: QuenchConfig, param: float, horizon_scale: float) -> TimeGrid:
    if config.model in ("torus", "strip"):
        return TimeGrid.linear(0.0, horizon_scale / param, PLANAR_SCAN_DT)
    return TimeGrid.log(
        CONNECTED_SCAN_T_MIN, horizon_scale / param**2, CONNECTED_SCAN_SAMPLES
    )


def tg_scaling_experiment(
    config: QuenchConfig,
    param_name: str,
    grid,
    n_realizations: int,
    master_seed: int,
    workers: int = 1,
    horizon_scale: float | None = None,
    keep_ensembles: bool = False,
) -> ScalingResult:
    """Median equilibration time against a breaking parameter.

    For each grid value the configured parameter (g or k) is set, the
    horizon auto-scales (scale/param for planar runs, scale/param^2 for
    connected ones), and an ensemble is evaluated. Censored realizations
    are excluded from the medians but counted; grid points with more
    than half their realizations censored are flagged and left out of
    the log-log fit.
    """
    if param_name not in ("g", "k"):
        raise InvalidSpecError(f"param_name must be 'g' or 'k', got {param_name!r}")
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise InvalidSpecError("parameter grid must be positive and increasing")
    if horizon_scale is None:
        horizon_scale = (
            PLANAR_HORIZON_SCALE
            if config.model in ("torus", "strip")
            else CONNECTED_HORIZON_SCALE
        )

    points: list[ScalingPoint] = []
    kept: list[EnsembleResult] = []
    for idx, param in enumerate(grid):
        cfg = replace(
            config,
            time_grid=_scan_grid(config, float(param), horizon_scale),
            **{param_name: float(param)},
        )
        ens = ensemble_run(
            cfg, n_realizations, derive_seed(master_seed, 10_000 + idx), workers
        )
        usable = [t.value for t in ens.tg_estimates if t.usable]
        n_bad = sum(1 for t in ens.tg_estimates if not t.usable)
        flagged = n_bad * 2 > n_realizations or not usable
        points.append(
            ScalingPoint(
                float(param),
                float(np.median(usable)) if usable else float("nan"),
                float(np.mean(usable)) if usable else float("nan"),
                n_bad,
                n_realizations,
                flagged,
            )
        )
        if keep_ensembles:
            kept.append(ens)
        log.info(
            "scaling %s=%g: median t_g %s (%d/%d censored)",
            param_name, param, points[-1].tg_median, n_bad, n_realizations,
        )

    good = [p for p in points if not p.flagged]
    fit = None
    if len(good) >= 4:
        xs = np.array([p.param for p in good])
        ys = np.array([p.tg_median for p in good])
        fit = loglog_slope(xs, ys, window=(float(xs.min()), float(xs.max())))
    return ScalingResult(param_name, points, fit, n_realizations, master_seed, kept)


# ---------------------------------------------------------------------------
# window comparison of the backflow measure
# ---------------------------------------------------------------------------


@dataclass
class NmComparison:
    """Backflow measure, ensemble-mean-first vs measure-first, two windows."""

    early_window: tuple[float, float]
    late_window: tuple[float, float]
    mean_of_measure_early: float
    measure_of_mean_early: float
    mean_of_measure_late: float
    measure_of_mean_late: float


def nm_window_comparison(
    ensemble: EnsembleResult,
    early_window: tuple[float, float],
    late_window: tuple[float, float],
) -> NmComparison:
    """Compare averaging orders of the backflow measure on two windows.

    "Mean of measure" evaluates the measure per realization and averages;
    "measure of mean" evaluates it once on the ensemble-mean series.
    While every realization still follows the symmetric dynamics the two
    coincide; once symmetry breaking decorrelates the trajectories the
    mean series flattens and its measure collapses.
    """
    mean_series = ensemble.mean_series()
    out = {}
    for tag, (w0, w1) in (("early", early_window), ("late", late_window)):
        dt = w1 - w0
        per = [
            observables.nm_measure(ensemble.realization_series(i), w0, dt)
            for i in range(ensemble.n_realizations)
        ]
        out[f"mean_of_measure_{tag}"] = float(np.mean(per))
        out[f"measure_of_mean_{tag}"] = observables.nm_measure(mean_series, w0, dt)
    return NmComparison(
        tuple(early_window), tuple(late_window),
        out["mean_of_measure_early"], out["measure_of_mean_early"],
        out["mean_of_measure_late"], out["measure_of_mean_late"],
    )
