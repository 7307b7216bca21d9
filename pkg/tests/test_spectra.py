"""Spectral sweeps, degeneracy bookkeeping, and power-law fits."""

import numpy as np
import pytest

from symbreak import InvalidSpecError, model as md
from symbreak.engine import diagonalize, spin_bath_matrix
from symbreak.spectra import (
    ScalingFit,
    SpectrumSweep,
    coupling_decomposition,
    degenerate_manifolds,
    gap_deviation,
    loglog_slope,
    manifold_width,
    spectrum_sweep,
    track_levels,
    two_level_avoided_crossing,
)

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]])
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]])


def crossing_builder(g: float) -> np.ndarray:
    """Two uncoupled levels that cross exactly at g = 0.5."""
    return np.diag([g, 1.0 - g])


def split_gap_builder(g: float) -> np.ndarray:
    """A fixed gap-2 pair next to a pair whose gap grows off 2 as ~g^2."""
    out = np.zeros((4, 4))
    out[0, 0], out[1, 1] = -3.0, -1.0
    out[2, 2], out[3, 3] = 1.0, 3.0
    out[2, 3] = out[3, 2] = g
    return out


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


def test_sweep_single_point():
    h = np.diag([0.0, 2.0, 5.0])
    sweep = spectrum_sweep(lambda g: h, [0.0], param_name="g")
    assert sweep.grid.shape == (1,)
    assert sweep.dim == 3
    np.testing.assert_allclose(sweep.eigenvalues[0], [0.0, 2.0, 5.0], atol=1e-14)
    assert sweep.eigenvectors.shape == (1, 3, 3)


def test_sweep_of_symmetric_complete_graph_with_spin():
    a = np.ones((8, 8)) - np.eye(8)
    sweep = spectrum_sweep(
        lambda g: spin_bath_matrix(a, np.zeros((8, 8)), 0.0), [0.0], store_vectors=False
    )
    expected = np.sort(np.concatenate([np.full(7, -2.0), np.zeros(7), [6.0, 8.0]]))
    np.testing.assert_allclose(sweep.eigenvalues[0], expected, atol=1e-12)
    assert sweep.eigenvectors is None


def test_sweep_levels_move_slower_than_the_perturbation():
    rng = np.random.default_rng(7)
    r = md.sample_symmetric_uniform(6, seed=7)
    a0 = np.ones((6, 6)) - np.eye(6)
    grid = np.linspace(0.0, 1.0, 11)
    sweep = spectrum_sweep(lambda g: a0 + g * r, grid, store_vectors=False)
    step = float(grid[1] - grid[0])
    bound = 6 * float(np.abs(r).max()) * step
    shifts = np.abs(np.diff(sweep.eigenvalues, axis=0))
    assert shifts.max() <= bound + 1e-12


def test_sweep_validates_grid():
    h = np.eye(2)
    with pytest.raises(InvalidSpecError):
        spectrum_sweep(lambda g: h, [])
    with pytest.raises(InvalidSpecError):
        spectrum_sweep(lambda g: h, [0.0, 0.0])
    with pytest.raises(InvalidSpecError):
        spectrum_sweep(lambda g: h, [1.0, 0.5])


# ---------------------------------------------------------------------------
# degeneracy bookkeeping
# ---------------------------------------------------------------------------


def test_manifolds_group_repeated_levels():
    groups = degenerate_manifolds(np.array([-1.0, -1.0, -1.0, 4.0]))
    assert groups == [[0, 1, 2], [3]]


def test_manifolds_of_distinct_levels_are_singletons():
    groups = degenerate_manifolds(np.array([1.0, 2.0, 3.0]))
    assert groups == [[0], [1], [2]]


def test_manifolds_of_spin_split_complete_graph():
    h = spin_bath_matrix(np.ones((5, 5)) - np.eye(5), np.zeros((5, 5)), 0.0)
    groups = degenerate_manifolds(np.linalg.eigvalsh(h))
    assert [len(g) for g in groups] == [4, 4, 1, 1]


def test_manifolds_of_flat_spectrum():
    assert degenerate_manifolds(np.zeros(3)) == [[0, 1, 2]]


def test_manifolds_validate_input():
    with pytest.raises(InvalidSpecError):
        degenerate_manifolds(np.zeros((2, 2)))
    with pytest.raises(InvalidSpecError):
        degenerate_manifolds(np.array([3.0, 2.0, 1.0]))


# ---------------------------------------------------------------------------
# level tracking
# ---------------------------------------------------------------------------


def test_tracking_follows_levels_through_a_crossing():
    grid = np.array([0.3, 0.4, 0.5, 0.6, 0.7])
    sweep = spectrum_sweep(crossing_builder, grid)
    tracked = track_levels(sweep, [0, 1])
    vals = np.take_along_axis(sweep.eigenvalues, tracked, axis=1)
    # level 0 rides the g branch upward, level 1 the 1-g branch downward
    np.testing.assert_allclose(vals[:, 0], grid, atol=1e-12)
    np.testing.assert_allclose(vals[:, 1], 1.0 - grid, atol=1e-12)
    np.testing.assert_array_equal(tracked[0], [0, 1])
    np.testing.assert_array_equal(tracked[-1], [1, 0])


def test_tracking_is_involutive():
    grid = np.array([0.3, 0.4, 0.5, 0.6, 0.7])
    sweep = spectrum_sweep(crossing_builder, grid)
    forward = track_levels(sweep, [0, 1])
    reverse = SpectrumSweep(
        sweep.param_name,
        sweep.grid,
        sweep.eigenvalues[::-1].copy(),
        sweep.eigenvectors[::-1].copy(),
    )
    back = track_levels(reverse, list(forward[-1]))
    np.testing.assert_array_equal(back[-1], forward[0])


def test_tracking_validates_indices():
    sweep = spectrum_sweep(crossing_builder, np.array([0.3, 0.4]))
    with pytest.raises(InvalidSpecError):
        track_levels(sweep, [0, 0])
    with pytest.raises(InvalidSpecError):
        track_levels(sweep, [0, 5])


# ---------------------------------------------------------------------------
# manifold widths
# ---------------------------------------------------------------------------


def test_degenerate_manifold_width_grows_linearly():
    r = md.sample_symmetric_uniform(6, seed=9)
    a0 = np.ones((6, 6)) - np.eye(6)
    grid = np.geomspace(1e-4, 1e-2, 7)
    sweep = spectrum_sweep(lambda g: a0 + g * r, grid)
    widths = manifold_width(sweep, [0, 1, 2, 3, 4])
    fit = loglog_slope(widths.times, widths.values, window=(grid[0], grid[-1]))
    assert abs(fit.slope - 1.0) <= 0.1
    assert fit.r_squared > 0.99


def test_manifold_width_needs_two_levels():
    sweep = spectrum_sweep(crossing_builder, np.array([0.3, 0.4]))
    with pytest.raises(InvalidSpecError):
        manifold_width(sweep, [0])


# ---------------------------------------------------------------------------
# gap deviations
# ---------------------------------------------------------------------------


def test_gap_deviation_grows_quadratically():
    grid = np.concatenate([[0.0], np.geomspace(1e-3, 1e-1, 9)])
    sweep = spectrum_sweep(split_gap_builder, grid)
    dev = gap_deviation(sweep, (2, 3))
    assert dev.values[0] == 0.0
    fit = loglog_slope(dev.times[1:], dev.values[1:], window=(1e-3, 1e-1))
    assert abs(fit.slope - 2.0) <= 0.05


def test_gap_deviation_of_untouched_pair_is_zero():
    grid = np.concatenate([[0.0], np.geomspace(1e-3, 1e-1, 9)])
    sweep = spectrum_sweep(split_gap_builder, grid)
    dev = gap_deviation(sweep, (0, 1))
    assert np.abs(dev.values).max() <= 1e-12


def test_gap_deviation_requires_a_degenerate_gap():
    sweep = spectrum_sweep(
        lambda g: np.diag([0.0, 1.0, 3.0, 7.0]), np.array([0.0, 1.0])
    )
    with pytest.raises(InvalidSpecError):
        gap_deviation(sweep, (0, 1))
    with pytest.raises(InvalidSpecError):
        gap_deviation(sweep, (2, 2))


# ---------------------------------------------------------------------------
# avoided crossings
# ---------------------------------------------------------------------------


def test_avoided_crossing_reference_points():
    assert two_level_avoided_crossing(2.0, 0.0) == 1.0
    got = two_level_avoided_crossing(2.0, 0.1)
    assert abs(got - np.sqrt(1.01)) < 1e-15
    assert abs(got - 1.0049875621120890) < 1e-12


def test_avoided_crossing_matches_the_matrix():
    rng = np.random.default_rng(12)
    for _ in range(10):
        delta0 = float(rng.uniform(0.1, 3.0))
        g0 = float(rng.uniform(0.0, 2.0))
        h = np.array([[delta0 / 2.0, g0], [g0, -delta0 / 2.0]])
        top = float(np.linalg.eigvalsh(h)[-1])
        assert abs(two_level_avoided_crossing(delta0, g0) - top) <= 1e-12


def test_avoided_crossing_asymptotes():
    assert abs(two_level_avoided_crossing(0.1, 50.0) / 50.0 - 1.0) < 1e-4
    for g0 in (1e-4, 1e-3, 1e-2):
        residual = two_level_avoided_crossing(1.0, g0) - (0.5 + g0**2)
        assert abs(residual) <= 2.0 * g0**4 + 3e-16
    with pytest.raises(InvalidSpecError):
        two_level_avoided_crossing(-1.0, 0.1)


# ---------------------------------------------------------------------------
# coupling decomposition
# ---------------------------------------------------------------------------


def test_decomposition_of_co_diagonal_coupling_has_no_residual():
    sys_decomp = diagonalize(PAULI_X)
    bath_h = np.diag([1.0, 2.0, 3.0])
    bath_decomp = diagonalize(bath_h)
    s_op = PAULI_X.copy()
    r_op = np.diag([4.0, 5.0, 6.0])
    diag_part, residual = coupling_decomposition(sys_decomp, bath_decomp, s_op, r_op)
    assert np.abs(residual).max() <= 1e-12
    np.testing.assert_allclose(diag_part, np.kron(s_op, r_op), atol=1e-12)


def test_decomposition_reconstructs_and_kills_the_diagonal():
    rng = np.random.default_rng(3)
    hs = rng.normal(size=(3, 3))
    hs = (hs + hs.T) / 2.0
    hb = rng.normal(size=(4, 4))
    hb = (hb + hb.T) / 2.0
    s_op = rng.normal(size=(3, 3))
    s_op = (s_op + s_op.T) / 2.0
    r_op = rng.normal(size=(4, 4))
    r_op = (r_op + r_op.T) / 2.0
    sys_decomp, bath_decomp = diagonalize(hs), diagonalize(hb)
    diag_part, residual = coupling_decomposition(sys_decomp, bath_decomp, s_op, r_op)
    np.testing.assert_allclose(
        diag_part + residual, np.kron(s_op, r_op), atol=1e-12
    )
    v_prod = np.kron(sys_decomp.eigenvectors, bath_decomp.eigenvectors)
    rotated = v_prod.conj().T @ residual @ v_prod
    assert np.abs(np.diag(rotated)).max() <= 1e-12


def test_spin_flip_coupling_is_purely_off_diagonal():
    rng = np.random.default_rng(4)
    hb = rng.normal(size=(5, 5))
    hb = (hb + hb.T) / 2.0
    r_op = rng.normal(size=(5, 5))
    r_op = (r_op + r_op.T) / 2.0
    # sigma_z between sigma_x eigenstates has zero diagonal
    diag_part, residual = coupling_decomposition(
        diagonalize(PAULI_X), diagonalize(hb), PAULI_Z, r_op
    )
    assert np.abs(diag_part).max() <= 1e-13
    np.testing.assert_allclose(residual, np.kron(PAULI_Z, r_op), atol=1e-13)


def test_diagonal_part_only_shifts_free_levels():
    rng = np.random.default_rng(5)
    hs = rng.normal(size=(2, 2))
    hs = (hs + hs.T) / 2.0
    hb = rng.normal(size=(4, 4))
    hb = (hb + hb.T) / 2.0
    s_op = rng.normal(size=(2, 2))
    s_op = (s_op + s_op.T) / 2.0
    r_op = rng.normal(size=(4, 4))
    r_op = (r_op + r_op.T) / 2.0
    sys_decomp, bath_decomp = diagonalize(hs), diagonalize(hb)
    diag_part, _ = coupling_decomposition(sys_decomp, bath_decomp, s_op, r_op)

    h_free = np.kron(hs, np.eye(4)) + np.kron(np.eye(2), hb)
    free_levels = np.add.outer(
        sys_decomp.eigenvalues, bath_decomp.eigenvalues
    ).ravel()
    s_diag = np.diag(sys_decomp.eigenvectors.conj().T @ s_op @ sys_decomp.eigenvectors)
    r_diag = np.diag(
        bath_decomp.eigenvectors.conj().T @ r_op @ bath_decomp.eigenvectors
    )
    shifts = np.kron(s_diag, r_diag).real
    for k in (0.1, 1.0):
        got = np.linalg.eigvalsh(h_free + k * diag_part)
        np.testing.assert_allclose(got, np.sort(free_levels + k * shifts), atol=1e-10)


def test_decomposition_validates_shapes():
    with pytest.raises(InvalidSpecError):
        coupling_decomposition(
            diagonalize(PAULI_X), diagonalize(np.eye(3)), np.eye(3), np.eye(3)
        )


# ---------------------------------------------------------------------------
# power-law fits
# ---------------------------------------------------------------------------


def test_loglog_slope_of_exact_power_laws():
    x = np.geomspace(1e-3, 1e-1, 9)
    fit = loglog_slope(x, 3.0 * x**2, window=(x[0], x[-1]))
    assert abs(fit.slope - 2.0) < 1e-12
    assert abs(fit.intercept - np.log10(3.0)) < 1e-12
    assert abs(fit.r_squared - 1.0) < 1e-12
    np.testing.assert_allclose(fit.predict(x), 3.0 * x**2, rtol=1e-10)

    fit = loglog_slope(x, 5.0 / x, window=(x[0], x[-1]))
    assert abs(fit.slope + 1.0) < 1e-12
    assert abs(fit.intercept - np.log10(5.0)) < 1e-12


def test_loglog_slope_default_window_is_two_decades():
    x = np.geomspace(1e-2, 1e2, 9)
    y = np.where(x <= 1.0, x**2, 7.0)
    fit = loglog_slope(x, y)
    assert fit.n_points == 5
    assert fit.window == (1e-2, 1.0)
    assert abs(fit.slope - 2.0) < 1e-12


def test_loglog_slope_validates_input():
    x = np.geomspace(1e-2, 1e2, 9)
    with pytest.raises(InvalidSpecError):
        loglog_slope(np.array([-1.0, 1.0, 2.0, 3.0]), np.ones(4))
    with pytest.raises(InvalidSpecError):
        loglog_slope(x, np.zeros(9), window=(1e-2, 1e2))
    with pytest.raises(InvalidSpecError):
        loglog_slope(x[:3], x[:3] ** 2, window=(1e-2, 1e2))
    with pytest.raises(InvalidSpecError):
        loglog_slope(x, np.ones(5))


def test_scaling_fit_predict_round_trips():
    fit = ScalingFit(2.0, np.log10(3.0), 1.0, 5, (1e-3, 1e-1))
    x = np.array([1e-3, 1e-2, 1e-1])
    np.testing.assert_allclose(fit.predict(x), 3.0 * x**2, rtol=1e-12)
