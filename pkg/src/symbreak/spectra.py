"""Spectral structure under symmetry breaking.

The symmetric models carry heavily degenerate spectra, and with them
degenerate *gaps*: many level pairs share the same transition frequency,
which is what keeps reduced dynamics coherent for long. These tools
sweep spectra against a breaking parameter, identify degenerate
manifolds, track levels through the sweep, and fit power laws to how
widths and gap deviations grow.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .engine import SpectralDecomposition, diagonalize
from .errors import InvalidSpecError
from .series import TimeSeries

DEGENERACY_TOL = 1e-10
OVERLAP_AMBIGUITY = 1e-8


@dataclass
class SpectrumSweep:
    """Eigenvalues (and optionally eigenvectors) along a parameter grid."""

    param_name: str
    grid: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[1]

    def spectral_range(self) -> float:
        return float(np.max(self.eigenvalues) - np.min(self.eigenvalues))


@dataclass
class ScalingFit:
    """Least-squares power law y = 10^intercept * x^slope."""

    slope: float
    intercept: float
    r_squared: float
    n_points: int
    window: tuple[float, float]

    def predict(self, x: np.ndarray) -> np.ndarray:
        return 10.0 ** (self.intercept + self.slope * np.log10(np.asarray(x)))


def spectrum_sweep(
    build: Callable[[float], np.ndarray],
    grid: Sequence[float],
    param_name: str = "g",
    store_vectors: bool = True,
) -> SpectrumSweep:
    """Diagonalize ``build(value)`` for every grid value.

    The grid must be strictly increasing; the builder should hold
    everything except the swept parameter fixed (one disorder draw, one
    coupling draw) so levels stay comparable across the sweep.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise InvalidSpecError("sweep grid is empty")
    if np.any(np.diff(grid) <= 0):
        raise InvalidSpecError("sweep grid must be strictly increasing")
    vals: list[np.ndarray] = []
    vecs: list[np.ndarray] = []
    for value in grid:
        decomp = diagonalize(build(float(value)))
        vals.append(decomp.eigenvalues)
        if store_vectors:
            vecs.append(decomp.eigenvectors)
    return SpectrumSweep(
        param_name,
        grid,
        np.array(vals),
        np.array(vecs) if store_vectors else None,
    )


def degenerate_manifolds(
    eigenvalues: np.ndarray, tol: float = DEGENERACY_TOL
) -> list[list[int]]:
    """Maximal runs of consecutive eigenvalues closer than tol * range.

    A flat spectrum (zero range) is one manifold.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if lam.ndim != 1 or lam.size == 0:
        raise InvalidSpecError(f"expected a 1d spectrum, got shape {lam.shape}")
    rng = float(lam[-1] - lam[0])
    if rng < 0:
        raise InvalidSpecError("eigenvalues must be sorted ascending")
    if rng == 0.0:
        return [list(range(lam.size))]
    out: list[list[int]] = [[0]]
    for i in range(1, lam.size):
        if lam[i] - lam[i - 1] < tol * rng:
            out[-1].append(i)
        else:
            out.append([i])
    return out


def track_levels(sweep: SpectrumSweep, indices: Sequence[int]) -> np.ndarray:
    """Follow eigenvalue indices across the grid by continuity.

    Matching between consecutive grid points is nearest-by-value; when
    two candidate levels sit within ``OVERLAP_AMBIGUITY`` times the
    spectral range of each other, eigenvector overlaps break the tie
    (requires a sweep with stored vectors). Returns an (n_grid, k) index
    array whose first row is ``indices``.
    """
    indices = list(indices)
    if len(set(indices)) != len(indices):
        raise InvalidSpecError(f"duplicate tracked indices {indices}")
    if not all(0 <= i < sweep.dim for i in indices):
        raise InvalidSpecError(f"tracked indices {indices} out of range")
    scale = max(sweep.spectral_range(), 1e-300)
    n_grid = sweep.grid.size
    out = np.empty((n_grid, len(indices)), dtype=np.int64)
    out[0] = indices
    for row in range(1, n_grid):
        prev_vals = sweep.eigenvalues[row - 1]
        cur_vals = sweep.eigenvalues[row]
        taken: set[int] = set()
        for col, prev_idx in enumerate(out[row - 1]):
            dist = np.abs(cur_vals - prev_vals[prev_idx])
            dist[list(taken)] = np.inf
            best = int(np.argmin(dist))
            close = np.nonzero(dist - dist[best] <= OVERLAP_AMBIGUITY * scale)[0]
            if close.size > 1 and sweep.eigenvectors is not None:
                prev_vec = sweep.eigenvectors[row - 1][:, prev_idx]
                overlaps = np.abs(
                    sweep.eigenvectors[row][:, close].conj().T @ prev_vec
                )
                best = int(close[np.argmax(overlaps)])
            out[row, col] = best
            taken.add(best)
    return out


def manifold_width(sweep: SpectrumSweep, indices: Sequence[int]) -> TimeSeries:
    """Width (max - min) of a tracked level group along the sweep."""
    if len(indices) < 2:
        raise InvalidSpecError("a manifold width needs at least two levels")
    tracked = track_levels(sweep, indices)
    vals = np.take_along_axis(sweep.eigenvalues, tracked, axis=1)
    return TimeSeries(sweep.grid, vals.max(axis=1) - vals.min(axis=1), "manifold_width")


def gap_deviation(
    sweep: SpectrumSweep,
    pair: tuple[int, int],
    degeneracy_tol: float = DEGENERACY_TOL,
) -> TimeSeries:
    """|Delta(x) - Delta(x0)| for a tracked level pair along the sweep.

    The pair's gap at the first grid point must be degenerate with at
    least one other pair's gap (that shared transition frequency is what
    the breaking parameter then splits); otherwise the input is refused.
    """
    i, j = pair
    if i == j:
        raise InvalidSpecError("gap pair must be two distinct levels")
    lam0 = sweep.eigenvalues[0]
    gap0 = abs(lam0[j] - lam0[i])
    scale = max(sweep.spectral_range(), 1e-300)
    diffs = np.abs(lam0[:, None] - lam0[None, :])
    match = np.abs(diffs - gap0) <= degeneracy_tol * scale
    match[i, j] = match[j, i] = False
    np.fill_diagonal(match, False)
    if not np.any(np.triu(match, 1)):
        raise InvalidSpecError(
            f"gap {gap0:.6g} of pair {pair} is not degenerate with any other "
            "pair at the sweep start"
        )
    tracked = track_levels(sweep, [i, j])
    vals = np.take_along_axis(sweep.eigenvalues, tracked, axis=1)
    dev = np.abs(np.abs(vals[:, 1] - vals[:, 0]) - gap0)
    return TimeSeries(sweep.grid, dev, "gap_deviation")


def two_level_avoided_crossing(delta0: float, g0: float) -> float:
    """Upper eigenvalue sqrt(delta0^2 / 4 + g0^2) of ((d/2, g), (g, -d/2)).

    Exact closed form; its small-g0 expansion is
    delta0/2 + g0^2/delta0 + O(g0^4).
    """
    if delta0 < 0:
        raise InvalidSpecError(f"delta0 must be >= 0, got {delta0}")
    return float(np.sqrt(0.25 * delta0**2 + g0**2))


def coupling_decomposition(
    sys_decomp: SpectralDecomposition,
    bath_decomp: SpectralDecomposition,
    s_op: np.ndarray,
    r_op: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Split S (x) R into an energy-diagonal part and a residual.

    In the product eigenbasis of the two free Hamiltonians, the diagonal
    entries of S (x) R form a matrix that commutes with both free parts
    (it only dephases); the remainder has exactly zero diagonal there and
    carries all level repulsion. Returns (diagonal_part, residual) in the
    original basis; their sum reconstructs S (x) R to machine precision.
    """
    vs, vb = sys_decomp.eigenvectors, bath_decomp.eigenvectors
    s_op = np.asarray(s_op, dtype=np.complex128)
    r_op = np.asarray(r_op, dtype=np.complex128)
    if s_op.shape != (sys_decomp.dim,) * 2 or r_op.shape != (bath_decomp.dim,) * 2:
        raise InvalidSpecError(
            f"operator shapes {s_op.shape}, {r_op.shape} do not match the "
            f"decompositions ({sys_decomp.dim}, {bath_decomp.dim})"
        )
    s_tilde = vs.conj().T @ s_op @ vs
    r_tilde = vb.conj().T @ r_op @ vb
    diag_vec = np.kron(np.diag(s_tilde), np.diag(r_tilde))
    v_prod = np.kron(vs, vb)
    diag_part = (v_prod * diag_vec) @ v_prod.conj().T
    residual = np.kron(s_op, r_op) - diag_part
    return diag_part, residual


def loglog_slope(
    x: np.ndarray,
    y: np.ndarray,
    window: tuple[float, float] | None = None,
) -> ScalingFit:
    """Least-squares line through (log10 x, log10 y).

    ``window`` restricts to x in [lo, hi]; the default takes the two
    smallest decades, [min(x), 100 * min(x)]. Needs at least 4 strictly
    positive points in the window.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise InvalidSpecError(f"x and y must be congruent 1d, got {x.shape}, {y.shape}")
    if np.any(x <= 0):
        raise InvalidSpecError("x values must be positive for a log-log fit")
    if window is None:
        lo = float(np.min(x))
        window = (lo, 100.0 * lo)
    lo, hi = window
    mask = (x >= lo) & (x <= hi)
    if np.count_nonzero(mask) < 4:
        raise InvalidSpecError(
            f"log-log fit needs >= 4 points in window [{lo}, {hi}], "
            f"found {np.count_nonzero(mask)}"
        )
    if np.any(y[mask] <= 0):
        raise InvalidSpecError("y values in the fit window must be positive")
    lx, ly = np.log10(x[mask]), np.log10(y[mask])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (intercept + slope * lx)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return ScalingFit(float(slope), float(intercept), r2, int(mask.sum()), (lo, hi))
