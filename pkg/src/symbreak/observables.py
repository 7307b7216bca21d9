"""Reduced density matrices and the diagnostics built on them.

The central quantity is the trace distance between the reduced states of
two quench trajectories that start from distinguishable system states;
its decay, revivals, and increments carry the equilibration story. Two
reductions appear: a 2x2 spin trace (connected model) and a 4x4
two-site occupancy construction (planar model) whose per-orbital blocks
combine through the pairwise fold in ``_kernels``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import engine
from ._kernels import combination_tensor, fold_occupancy_amplitudes, fold_rdm_chain
from .errors import (
    InvalidSpecError,
    InvalidStateError,
    UndefinedCorrelationError,
)
from .series import TimeSeries

__all__ = [
    "ReducedDensityMatrix",
    "TimeSeries",
    "spin_rdm",
    "spin_rdm_batch",
    "orbital_occupancy_rdm",
    "occupancy_amplitudes",
    "combine_rdm",
    "occupancy_rdm",
    "trace_distance",
    "trace_distance_batch",
    "von_neumann_entropy",
    "entropy_batch",
    "nm_measure",
    "bath_correlation",
    "long_time_mean_estimate",
    "angle_scan",
]

log = logging.getLogger("symbreak.observables")

EIG_FLOOR = -1e-9


@dataclass
class ReducedDensityMatrix:
    """Density matrix on a reduced space, with a label naming that space."""

    matrix: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.complex128)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidSpecError(f"density matrix must be square, got {m.shape}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def validate(
        self,
        hermit_tol: float = 1e-10,
        trace_tol: float = 1e-9,
        eig_floor: float = EIG_FLOOR,
    ) -> "ReducedDensityMatrix":
        """Assert hermiticity, unit trace, and near-positivity; returns self."""
        m = self.matrix
        defect = float(np.max(np.abs(m - m.conj().T)))
        if defect > hermit_tol:
            raise InvalidStateError(
                f"rdm '{self.label}': hermiticity defect {defect:.3e}"
            )
        tr = float(np.trace(m).real)
        if abs(tr - 1.0) > trace_tol:
            raise InvalidStateError(f"rdm '{self.label}': trace {tr} != 1")
        lo = float(np.min(np.linalg.eigvalsh(m)))
        if lo < eig_floor:
            raise InvalidStateError(
                f"rdm '{self.label}': eigenvalue {lo:.3e} below floor {eig_floor}"
            )
        return self


def _as_matrix(rho) -> np.ndarray:
    if isinstance(rho, ReducedDensityMatrix):
        return rho.matrix
    return np.asarray(rho, dtype=np.complex128)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def spin_rdm(state: engine.PureState) -> ReducedDensityMatrix:
    """2x2 spin density matrix of a spin (x) bath pure state.

    rho_ab = sum_q psi_{a,q} conj(psi_{b,q}) over the bath index q, with
    spin-major amplitude ordering.
    """
    if not state.basis_tag.startswith("spin_"):
        raise InvalidSpecError(
            f"spin_rdm needs a spin_* tagged state, got {state.basis_tag!r}"
        )
    if state.dim % 2:
        raise InvalidSpecError(f"state dim {state.dim} is not 2 * bath_dim")
    mat = state.amplitudes.reshape(2, -1)
    rho = mat @ mat.conj().T
    return ReducedDensityMatrix(rho, "spin")


def spin_rdm_batch(states: np.ndarray) -> np.ndarray:
    """Spin RDMs for a (n_t, 2 * bath_dim) batch of state vectors."""
    n_t = states.shape[0]
    mat = states.reshape(n_t, 2, -1)
    return np.einsum("taq,tbq->tab", mat, mat.conj())


def occupancy_amplitudes(
    orbitals: np.ndarray, system_sites: tuple[int, int]
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(a, b, s, p) per orbital column: amplitudes on the two tracked
    sites, the overlap with the normalized neither-class ket, and the
    total weight on the remaining sites.

    The neither-class ket is the uniform superposition of all sites
    other than the tracked pair, normalized to one. Cauchy-Schwarz then
    gives |s|^2 <= p for every orbital, which is what keeps the
    per-orbital occupancy matrix positive semidefinite.
    """
    s1, s2 = system_sites
    n_rest = orbitals.shape[0] - 2
    a = orbitals[s1, :]
    b = orbitals[s2, :]
    s = (orbitals.sum(axis=0) - a - b) / np.sqrt(n_rest)
    p = (np.abs(orbitals) ** 2).sum(axis=0) - np.abs(a) ** 2 - np.abs(b) ** 2
    return a, b, s, p.real


def orbital_occupancy_rdm(
    orbital, system_sites: tuple[int, int]
) -> ReducedDensityMatrix:
    """4x4 two-site occupancy matrix of a single orbital.

    Classes: 0 = both tracked sites occupied (impossible for one
    particle: zero row and column), 1 = first site only, 2 = second site
    only, 3 = neither. Diagonal entries are incoherent class weights;
    off-diagonal entries are coherent products of class amplitudes, with
    the neither class represented by its normalized uniform ket. The
    result is positive semidefinite by construction: it is a rank-one
    amplitude product plus a nonnegative remainder on the neither class.
    """
    amps = orbital.amplitudes if isinstance(orbital, engine.PureState) else orbital
    amps = np.asarray(amps, dtype=np.complex128)
    if amps.ndim != 1:
        raise InvalidSpecError(f"expected a single orbital, got shape {amps.shape}")
    s1, s2 = system_sites
    if not (0 <= s1 < amps.size and 0 <= s2 < amps.size) or s1 == s2:
        raise InvalidSpecError(f"bad tracked sites {system_sites}")
    a, b, s, p = occupancy_amplitudes(amps[:, None], system_sites)
    rho = np.zeros((4, 4), dtype=np.complex128)
    rho[1, 1] = a[0] * np.conj(a[0])
    rho[1, 2] = a[0] * np.conj(b[0])
    rho[1, 3] = a[0] * np.conj(s[0])
    rho[2, 1] = np.conj(rho[1, 2])
    rho[2, 2] = b[0] * np.conj(b[0])
    rho[2, 3] = b[0] * np.conj(s[0])
    rho[3, 1] = np.conj(rho[1, 3])
    rho[3, 2] = np.conj(rho[2, 3])
    rho[3, 3] = p[0]
    return ReducedDensityMatrix(rho, "occupancy")


def combine_rdm(rho1, rho2) -> ReducedDensityMatrix:
    """Fold two 4x4 occupancy matrices into one.

    Applies the combination tensor pairwise; the result is renormalized
    to unit trace when the raw trace drifts by more than 1e-12 (the fold
    does not preserve trace exactly beyond the first pair), and the
    renormalization is logged.
    """
    m1, m2 = _as_matrix(rho1), _as_matrix(rho2)
    if m1.shape != (4, 4) or m2.shape != (4, 4):
        raise InvalidSpecError(
            f"occupancy combination needs 4x4 inputs, got {m1.shape}, {m2.shape}"
        )
    b = combination_tensor()
    out = np.einsum("ipq,jrs,pr,qs->ij", b, b, m1, m2, optimize=True)
    tr = float(np.trace(out).real)
    if abs(tr - 1.0) > 1e-12:
        out /= tr
        log.debug("combine_rdm renormalized trace %.15g", tr)
    return ReducedDensityMatrix(out, "occupancy")


def occupancy_rdm(
    ensemble: engine.OrbitalEnsemble, system_sites: tuple[int, int]
) -> ReducedDensityMatrix:
    """Two-site occupancy matrix of an orbital ensemble.

    Left fold of :func:`combine_rdm` over the per-orbital matrices in
    stored column order.
    """
    if ensemble.basis_tag != "site":
        raise InvalidSpecError(
            f"occupancy reduction needs site-basis orbitals, got {ensemble.basis_tag!r}"
        )
    s1, s2 = system_sites
    if not (0 <= s1 < ensemble.dim and 0 <= s2 < ensemble.dim) or s1 == s2:
        raise InvalidSpecError(f"bad tracked sites {system_sites}")
    a, b, s, p = occupancy_amplitudes(ensemble.orbitals, system_sites)
    rhos, n_renorm = fold_occupancy_amplitudes(
        a[None, :], b[None, :], s[None, :], p[None, :]
    )
    if n_renorm:
        log.debug("occupancy_rdm renormalized %d fold steps", n_renorm)
    return ReducedDensityMatrix(rhos[0], "occupancy")


# ---------------------------------------------------------------------------
# scalar diagnostics
# ---------------------------------------------------------------------------


def trace_distance(rho1, rho2) -> float:
    """Trace distance (1/2) * sum |eig(rho1 - rho2)| of Hermitian inputs."""
    m1, m2 = _as_matrix(rho1), _as_matrix(rho2)
    if m1.shape != m2.shape:
        raise InvalidSpecError(f"shape mismatch: {m1.shape} vs {m2.shape}")
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(m1 - m2))))


def trace_distance_batch(rhos1: np.ndarray, rhos2: np.ndarray) -> np.ndarray:
    """Trace distances for stacked (n_t, d, d) Hermitian pairs."""
    if rhos1.shape != rhos2.shape:
        raise InvalidSpecError(f"shape mismatch: {rhos1.shape} vs {rhos2.shape}")
    return 0.5 * np.sum(np.abs(np.linalg.eigvalsh(rhos1 - rhos2)), axis=-1)


def _entropy_from_eigs(lam: np.ndarray, floor: float, label: str) -> np.ndarray:
    lo = float(np.min(lam))
    if lo < floor:
        raise InvalidStateError(
            f"{label}: eigenvalue {lo:.3e} below floor {floor}; not a state"
        )
    lam = np.clip(lam, 0.0, 1.0)
    terms = np.where(lam > 0.0, lam * np.log2(lam, where=lam > 0.0), 0.0)
    return np.maximum(-np.sum(terms, axis=-1), 0.0)


def von_neumann_entropy(rho, floor: float = EIG_FLOOR) -> float:
    """Entropy -sum lambda log2 lambda in bits.

    Eigenvalues in [floor, 0) are clamped to zero; anything below the
    floor raises, since that is no longer roundoff.
    """
    lam = np.linalg.eigvalsh(_as_matrix(rho))
    return float(_entropy_from_eigs(lam, floor, "von_neumann_entropy"))


def entropy_batch(rhos: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    """Entropies for stacked (n_t, d, d) density matrices."""
    lam = np.linalg.eigvalsh(rhos)
    return _entropy_from_eigs(lam, floor, "entropy_batch")


def nm_measure(series: TimeSeries, t_start: float, dt: float) -> float:
    """Summed positive increments of a sampled series over a window.

    Discrete reading of the information-backflow integral: increments
    whose *both* endpoints fall inside [t_start, t_start + dt] contribute
    max(D_{i+1} - D_i, 0). Windows that share a boundary sample therefore
    add exactly. The window must lie inside the sampled range.
    """
    if dt <= 0.0:
        raise InvalidSpecError(f"window length must be positive, got {dt}")
    t_stop = t_start + dt
    if t_start < series.times[0] - 1e-12 or t_stop > series.times[-1] + 1e-12:
        raise InvalidSpecError(
            f"window [{t_start}, {t_stop}] outside sampled range "
            f"[{series.times[0]}, {series.times[-1]}]"
        )
    mask = (series.times >= t_start) & (series.times <= t_stop)
    vals = series.values[mask]
    if vals.size < 2:
        return 0.0
    return float(np.sum(np.clip(np.diff(vals), 0.0, None)))


# ---------------------------------------------------------------------------
# correlation and dephased estimates
# ---------------------------------------------------------------------------


def bath_correlation(
    decomp: engine.SpectralDecomposition,
    operator: np.ndarray,
    state: engine.PureState,
    times: np.ndarray,
    variant: str = "state_overlap",
) -> TimeSeries:
    """|<B(0)|B(t)>| correlation of the joining operator.

    Default reading: normalize b = B psi0 and return |<b|e^{-iHt}|b>|.
    The Heisenberg-picture reading |Tr B(t) B| / Tr B^2 is available as
    ``variant="hilbert_schmidt"`` and ignores the state.
    """
    operator = np.asarray(operator)
    if operator.shape != (decomp.dim, decomp.dim):
        raise InvalidSpecError(
            f"operator shape {operator.shape} does not match dim {decomp.dim}"
        )
    times = np.asarray(times, dtype=np.float64)
    v, lam = decomp.eigenvectors, decomp.eigenvalues

    if variant == "state_overlap":
        b = operator @ state.amplitudes
        norm = np.linalg.norm(b)
        scale = np.linalg.norm(operator) * max(state.norm(), 1e-300)
        if norm <= 1e-12 * scale:
            raise UndefinedCorrelationError(
                "joining operator annihilates the state; correlation undefined"
            )
        w = np.abs(v.conj().T @ (b / norm)) ** 2
        vals = np.abs(np.exp(-1j * np.outer(times, lam)) @ w)
    elif variant == "hilbert_schmidt":
        bt = v.conj().T @ operator @ v
        w = np.abs(bt) ** 2
        total = float(np.sum(w))
        if total <= 0.0:
            raise UndefinedCorrelationError("operator is zero; correlation undefined")
        z = np.exp(1j * np.outer(times, lam))
        vals = np.abs(np.einsum("tl,lk,tk->t", z, w, z.conj())) / total
    else:
        raise InvalidSpecError(
            f"variant must be state_overlap or hilbert_schmidt, got {variant!r}"
        )
    return TimeSeries(times, vals, "bath_corr")


def _reduce_density(rho: np.ndarray, subsystem: str) -> np.ndarray:
    if subsystem == "spin":
        d = rho.shape[0]
        if d % 2:
            raise InvalidSpecError(f"dim {d} is not 2 * bath_dim")
        m = d // 2
        return np.einsum("aqbq->ab", rho.reshape(2, m, 2, m))
    if subsystem == "none":
        return rho
    raise InvalidSpecError(f"subsystem must be 'spin' or 'none', got {subsystem!r}")


def long_time_mean_estimate(
    decomp: engine.SpectralDecomposition,
    state1: engine.PureState,
    state2: engine.PureState,
    subsystem: str = "spin",
    dephase_blocks: bool = False,
) -> float:
    """Trace distance between the dephased, reduced initial states.

    Dephasing in the energy eigenbasis is the infinite-time average of
    the evolved density matrix, so this is the late-time plateau
    estimate; it lower-bounds the time-averaged trace distance of the
    evolved pair.
    """
    ests = []
    for st in (state1, state2):
        rho = np.outer(st.amplitudes, st.amplitudes.conj())
        rho_inf = engine.dephase(decomp, rho, blocks=dephase_blocks)
        ests.append(_reduce_density(rho_inf, subsystem))
    return trace_distance(ests[0], ests[1])


def angle_scan(
    decomp: engine.SpectralDecomposition,
    thetas: np.ndarray,
    bath_state: np.ndarray,
    dephase_blocks: bool = False,
) -> TimeSeries:
    """Dephased-estimate profile over initial spin orientations.

    theta parametrizes a rotation from +x (theta = 0) toward +z
    (theta = pi/2) in the x-z plane; each scan point uses the orthogonal
    spin pair along that axis over a shared bath state, so theta = pi/2
    reproduces the standard spin-up/down preparation.
    """
    thetas = np.asarray(thetas, dtype=np.float64)
    bath = np.asarray(bath_state, dtype=np.complex128)
    if bath.ndim != 1:
        raise InvalidSpecError(f"bath state must be a vector, got {bath.shape}")
    if 2 * bath.size != decomp.dim:
        raise InvalidSpecError(
            f"bath dim {bath.size} does not match half of {decomp.dim}"
        )
    vals = np.empty(thetas.size)
    for i, theta in enumerate(thetas):
        half = 0.5 * (np.pi / 2.0 - theta)
        spin_a = np.array([np.cos(half), np.sin(half)])
        spin_b = np.array([-np.sin(half), np.cos(half)])
        st_a = engine.PureState(np.kron(spin_a, bath), "spin_site")
        st_b = engine.PureState(np.kron(spin_b, bath), "spin_site")
        vals[i] = long_time_mean_estimate(
            decomp, st_a, st_b, "spin", dephase_blocks=dephase_blocks
        )
    return TimeSeries(thetas, vals, "dephased_estimate")
