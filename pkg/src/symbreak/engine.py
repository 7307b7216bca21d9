"""Exact diagonalization, spectral propagation, and state preparation.

All dynamics run through a dense Hermitian eigendecomposition: a state
is pushed to the eigenbasis once and any later time is a phase rotation,
so arbitrarily late times (1e11 and beyond) cost the same as t = 1.

Occupation-number bases use fermionic statistics. A basis state is a
bitstring with bit i set when site i is occupied, states sorted by
integer value; the matrix element of a hop j -> i picks up
(-1)**(number of occupied sites strictly between i and j), evaluated on
the source configuration, which together with ascending-order Slater
determinants gives a consistent sign convention.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from ._kernels import fock_hopping_matrix
from .errors import InvalidSpecError, NumericalFailureError

log = logging.getLogger("symbreak.engine")

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]])
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]])

BASIS_TAGS = ("site", "spin_site", "spin_fock")


def spin_bath_matrix(a: np.ndarray, b: np.ndarray, k: float) -> np.ndarray:
    """sigma_x (x) 1 + 1 (x) A + k sigma_z (x) B on the spin (x) bath space."""
    n = a.shape[0]
    if a.shape != (n, n) or b.shape != (n, n):
        raise InvalidSpecError(f"A and B must be square and congruent, got {a.shape}, {b.shape}")
    out = np.kron(PAULI_X, np.eye(n)) + np.kron(np.eye(2), a)
    if k != 0.0:
        out += k * np.kron(PAULI_Z, b)
    return out


# ---------------------------------------------------------------------------
# spectral decomposition and propagation
# ---------------------------------------------------------------------------


@dataclass
class SpectralDecomposition:
    """Eigenvalues (ascending) and eigenvector columns of a Hermitian matrix."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @property
    def spectral_range(self) -> float:
        return float(self.eigenvalues[-1] - self.eigenvalues[0])

    def reconstruct(self) -> np.ndarray:
        """V diag(lambda) V^dagger."""
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.conj().T

    def reconstruction_error(self, h: np.ndarray) -> float:
        return float(np.max(np.abs(self.reconstruct() - h)))

    def unitarity_defect(self) -> float:
        v = self.eigenvectors
        return float(np.max(np.abs(v.conj().T @ v - np.eye(self.dim))))


def hermiticity_defect(h: np.ndarray) -> float:
    return float(np.max(np.abs(h - h.conj().T)))


def diagonalize(h: np.ndarray, hermit_tol: float = 1e-12) -> SpectralDecomposition:
    """Eigendecomposition of a Hermitian matrix.

    Rejects inputs whose asymmetry exceeds ``hermit_tol * max|h|`` and
    wraps eigensolver non-convergence in a numerical-failure error.
    """
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise InvalidSpecError(f"expected a square matrix, got shape {h.shape}")
    scale = float(np.max(np.abs(h))) if h.size else 0.0
    defect = hermiticity_defect(h)
    if defect > hermit_tol * max(scale, 1e-300):
        raise InvalidSpecError(
            f"matrix is not Hermitian: max asymmetry {defect:.3e} "
            f"(tolerance {hermit_tol * scale:.3e})"
        )
    try:
        eigenvalues, eigenvectors = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"eigensolver failed: {exc}") from exc
    return SpectralDecomposition(eigenvalues, eigenvectors)


@dataclass
class PureState:
    """State vector with a tag naming its basis convention.

    Tags: ``site`` (single particle on lattice sites), ``spin_site``
    (spin (x) single-particle bath, spin-major), ``spin_fock`` (spin (x)
    occupation-number bath, spin-major).
    """

    amplitudes: np.ndarray
    basis_tag: str

    def __post_init__(self) -> None:
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        object.__setattr__(self, "amplitudes", amps)
        if amps.ndim != 1:
            raise InvalidSpecError(f"amplitudes must be 1d, got shape {amps.shape}")
        if self.basis_tag not in BASIS_TAGS:
            raise InvalidSpecError(
                f"basis_tag must be one of {BASIS_TAGS}, got {self.basis_tag!r}"
            )

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @classmethod
    def normalized(cls, amplitudes, basis_tag: str) -> "PureState":
        amps = np.asarray(amplitudes, dtype=np.complex128)
        n = np.linalg.norm(amps)
        if n == 0.0:
            raise InvalidSpecError("cannot normalize the zero vector")
        return cls(amps / n, basis_tag)


@dataclass
class OrbitalEnsemble:
    """Orthonormal single-particle orbitals, one per column."""

    orbitals: np.ndarray
    basis_tag: str = "site"

    def __post_init__(self) -> None:
        orbs = np.asarray(self.orbitals, dtype=np.complex128)
        object.__setattr__(self, "orbitals", orbs)
        if orbs.ndim != 2 or orbs.shape[1] < 1:
            raise InvalidSpecError(f"orbitals must be (dim, n_orb), got {orbs.shape}")

    @property
    def n_orbitals(self) -> int:
        return self.orbitals.shape[1]

    @property
    def dim(self) -> int:
        return self.orbitals.shape[0]

    def gram_defect(self) -> float:
        """Max deviation of the orbital Gram matrix from the identity."""
        g = self.orbitals.conj().T @ self.orbitals
        return float(np.max(np.abs(g - np.eye(self.n_orbitals))))


def evolve(decomp: SpectralDecomposition, state: PureState, t: float) -> PureState:
    """Propagate a pure state to time t: V exp(-i lambda t) V^dagger psi."""
    if state.dim != decomp.dim:
        raise InvalidSpecError(
            f"state dim {state.dim} does not match decomposition dim {decomp.dim}"
        )
    coeff = decomp.eigenvectors.conj().T @ state.amplitudes
    coeff *= np.exp(-1j * decomp.eigenvalues * t)
    return PureState(decomp.eigenvectors @ coeff, state.basis_tag)


def evolve_orbitals(
    decomp: SpectralDecomposition, ensemble: OrbitalEnsemble, t: float
) -> OrbitalEnsemble:
    """Propagate every orbital of an ensemble to time t."""
    if ensemble.dim != decomp.dim:
        raise InvalidSpecError(
            f"orbital dim {ensemble.dim} does not match decomposition dim {decomp.dim}"
        )
    coeff = decomp.eigenvectors.conj().T @ ensemble.orbitals
    coeff *= np.exp(-1j * decomp.eigenvalues * t)[:, None]
    return OrbitalEnsemble(decomp.eigenvectors @ coeff, ensemble.basis_tag)


# ---------------------------------------------------------------------------
# occupation-number basis
# ---------------------------------------------------------------------------


@dataclass
class FockBasis:
    """Fixed particle number occupation basis over bitstring states.

    ``states`` holds one integer per basis state, bit i set when site i
    is occupied, sorted ascending.
    """

    n_sites: int
    n_particles: int
    states: np.ndarray

    @classmethod
    def build(cls, n_sites: int, n_particles: int) -> "FockBasis":
        if n_sites < 1 or n_sites > 62:
            raise InvalidSpecError(f"n_sites must be in [1, 62], got {n_sites}")
        if not 0 <= n_particles <= n_sites:
            raise InvalidSpecError(
                f"n_particles={n_particles} outside [0, {n_sites}]"
            )
        states = np.array(
            sorted(
                sum(1 << i for i in sites)
                for sites in combinations(range(n_sites), n_particles)
            ),
            dtype=np.int64,
        )
        return cls(n_sites, n_particles, states)

    def __len__(self) -> int:
        return self.states.size

    def index_of(self, state: int) -> int:
        idx = int(np.searchsorted(self.states, state))
        if idx >= len(self) or self.states[idx] != state:
            raise InvalidSpecError(f"bitstring {state:#x} is not in the basis")
        return idx

    def occupation_vector(self, index: int) -> np.ndarray:
        bits = int(self.states[index])
        return np.array([(bits >> i) & 1 for i in range(self.n_sites)], dtype=np.uint8)

    def occupied_sites(self, index: int) -> tuple[int, ...]:
        bits = int(self.states[index])
        return tuple(i for i in range(self.n_sites) if (bits >> i) & 1)


def lift_to_fock(mat: np.ndarray, basis: FockBasis) -> np.ndarray:
    """Second-quantized one-body operator sum_ij mat_ij c_i^dag c_j.

    Diagonal entries of ``mat`` contribute occupation terms, off-diagonal
    entries hops with the fermionic sign convention of the module
    docstring.
    """
    mat = np.asarray(mat, dtype=np.float64)
    if mat.shape != (basis.n_sites, basis.n_sites):
        raise InvalidSpecError(
            f"operator shape {mat.shape} does not match n_sites={basis.n_sites}"
        )
    hop = mat.copy()
    np.fill_diagonal(hop, 0.0)
    out = fock_hopping_matrix(hop, basis.states, basis.n_sites)
    diag = np.diag(mat)
    if np.any(diag != 0.0):
        occ = (basis.states[:, None] >> np.arange(basis.n_sites)[None, :]) & 1
        out[np.diag_indices(len(basis))] += occ @ diag
    return out


def build_many_body_hamiltonian(
    a: np.ndarray, b: np.ndarray, k: float, basis: FockBasis
) -> np.ndarray:
    """sigma_x (x) 1 + 1 (x) Q(A) + k sigma_z (x) Q(B) at fixed particle number.

    Q lifts a one-body matrix to the occupation basis; the result is
    block structured over spin (spin-major ordering) and conserves
    particle number exactly by construction.
    """
    qa = lift_to_fock(a, basis)
    qb = lift_to_fock(b, basis) if k != 0.0 else None
    m = len(basis)
    out = np.kron(PAULI_X, np.eye(m)) + np.kron(np.eye(2), qa)
    if qb is not None:
        out += k * np.kron(PAULI_Z, qb)
    return out


def slater_amplitudes(orbitals: np.ndarray, basis: FockBasis) -> np.ndarray:
    """Determinant expansion of a filled-orbital state over a Fock basis.

    ``orbitals`` is (n_sites, n_particles) with orthonormal columns; the
    amplitude on a basis state with occupied sites s_1 < ... < s_n is
    det(orbitals[[s_1..s_n], :]). The result is normalized.
    """
    n = basis.n_particles
    if orbitals.shape != (basis.n_sites, n):
        raise InvalidSpecError(
            f"orbitals shape {orbitals.shape} does not match basis "
            f"({basis.n_sites} sites, {n} particles)"
        )
    if n == 0:
        return np.ones(1, dtype=np.complex128)
    occ = (basis.states[:, None] >> np.arange(basis.n_sites)[None, :]) & 1
    rows = np.nonzero(occ)[1].reshape(len(basis), n)
    minors = orbitals[rows, :]
    amps = np.linalg.det(minors.astype(np.complex128))
    norm = np.linalg.norm(amps)
    if norm == 0.0:
        raise NumericalFailureError("degenerate orbital set: zero Slater state")
    return amps / norm


# ---------------------------------------------------------------------------
# initial-state preparation
# ---------------------------------------------------------------------------


def prepare_initial_pair_2d(
    decomp_pre: SpectralDecomposition, spec
) -> tuple[OrbitalEnsemble, OrbitalEnsemble]:
    """Half-filled initial ensembles for the planar quench.

    Input is the decomposition of the *disconnected* Hamiltonian. Both
    ensembles share the lowest floor(n_sites/2) - 1 bath orbitals; one
    adds the dimer's symmetric (in-phase) orbital, the other the
    antisymmetric one. Bath orbitals are obtained from the bath block
    directly so accidental dimer-bath degeneracies cannot mix sectors.
    """
    if not spec.is_planar:
        raise InvalidSpecError("prepare_initial_pair_2d needs a planar spec")
    n = spec.n_sites
    if decomp_pre.dim != n:
        raise InvalidSpecError(
            f"decomposition dim {decomp_pre.dim} does not match n_sites={n}"
        )
    h = decomp_pre.reconstruct()
    s1, s2 = spec.system_sites
    others = [i for i in range(n) if i not in (s1, s2)]
    scale = max(float(np.max(np.abs(h))), 1e-300)
    cross = max(
        float(np.max(np.abs(h[np.ix_([s1, s2], others)]))),
        float(np.max(np.abs(h[np.ix_(others, [s1, s2])]))),
    )
    if cross > 1e-9 * scale:
        raise InvalidSpecError(
            "decomposition does not describe a disconnected Hamiltonian "
            f"(system-bath coupling {cross:.3e}); quench with the joined "
            "builder happens later"
        )

    bath_vals, bath_vecs = np.linalg.eigh(h[np.ix_(others, others)])
    n_fill = n // 2 - 1
    if n_fill < 1:
        raise InvalidSpecError(f"lattice too small to fill: n_sites={n}")
    gap = bath_vals[n_fill] - bath_vals[n_fill - 1]
    if gap < 1e-12 * max(bath_vals[-1] - bath_vals[0], 1e-300):
        log.info(
            "degenerate bath level at the filling edge (gap %.3e); "
            "keeping the lowest-index orbitals",
            gap,
        )

    bath = np.zeros((n, n_fill), dtype=np.complex128)
    bath[others, :] = bath_vecs[:, :n_fill]
    dimer_plus = np.zeros(n, dtype=np.complex128)
    dimer_plus[s1] = dimer_plus[s2] = 1.0 / np.sqrt(2.0)
    dimer_minus = np.zeros(n, dtype=np.complex128)
    dimer_minus[s1] = 1.0 / np.sqrt(2.0)
    dimer_minus[s2] = -1.0 / np.sqrt(2.0)

    ens_plus = OrbitalEnsemble(np.column_stack([bath, dimer_plus]), "site")
    ens_minus = OrbitalEnsemble(np.column_stack([bath, dimer_minus]), "site")
    return ens_plus, ens_minus


def prepare_initial_pair_connected(
    bath_decomp: SpectralDecomposition,
    mode: str = "single_particle",
    basis: FockBasis | None = None,
    filling: float = 0.25,
) -> tuple[PureState, PureState]:
    """Spin up/down pair over a filled bath for the connected quench.

    ``bath_decomp`` is the decomposition of the bath matrix alone (the
    pre-quench bath, whose eigenstates define the filling). In
    ``single_particle`` mode the bath holds one particle in its lowest
    orbital; in ``many_body`` mode the lowest ``round(n_sites * filling)``
    orbitals (half-up rounding) fill a Slater state and ``basis`` must
    match that particle count.
    """
    n = bath_decomp.dim
    if mode == "single_particle":
        phi = bath_decomp.eigenvectors[:, 0]
        up = np.concatenate([phi, np.zeros(n)]).astype(np.complex128)
        down = np.concatenate([np.zeros(n), phi]).astype(np.complex128)
        return PureState(up, "spin_site"), PureState(down, "spin_site")

    if mode != "many_body":
        raise InvalidSpecError(f"mode must be single_particle or many_body, got {mode!r}")
    if basis is None:
        raise InvalidSpecError("many_body mode requires a FockBasis")
    if basis.n_sites != n:
        raise InvalidSpecError(
            f"basis has {basis.n_sites} sites but the bath has {n}"
        )
    n_fill = int(np.floor(n * filling + 0.5))
    if basis.n_particles != n_fill:
        raise InvalidSpecError(
            f"basis holds {basis.n_particles} particles but filling "
            f"{filling} of {n} sites asks for {n_fill}"
        )
    if not 1 <= n_fill <= n:
        raise InvalidSpecError(f"filling {filling} of {n} sites is empty or overfull")
    gap = bath_decomp.eigenvalues[n_fill] - bath_decomp.eigenvalues[n_fill - 1] \
        if n_fill < n else np.inf
    if gap < 1e-12 * max(bath_decomp.spectral_range, 1e-300):
        log.info(
            "degenerate bath level at the filling edge (gap %.3e); "
            "keeping the lowest-index orbitals",
            gap,
        )
    amps = slater_amplitudes(bath_decomp.eigenvectors[:, :n_fill], basis)
    m = len(basis)
    up = np.concatenate([amps, np.zeros(m)]).astype(np.complex128)
    down = np.concatenate([np.zeros(m), amps]).astype(np.complex128)
    return PureState(up, "spin_fock"), PureState(down, "spin_fock")


# ---------------------------------------------------------------------------
# dephasing
# ---------------------------------------------------------------------------


def dephase(
    decomp: SpectralDecomposition,
    rho: np.ndarray,
    blocks: bool = False,
    degeneracy_tol: float = 1e-10,
) -> np.ndarray:
    """Long-time average of a density matrix under the given Hamiltonian.

    Removes eigenbasis coherences: by default per computed eigenvector
    (rho -> sum_l |l><l| rho |l><l|); with ``blocks=True`` coherences
    inside degenerate manifolds (eigenvalue gaps below ``degeneracy_tol``
    times the spectral range) survive.
    """
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (decomp.dim, decomp.dim):
        raise InvalidSpecError(
            f"density matrix shape {rho.shape} does not match dim {decomp.dim}"
        )
    v = decomp.eigenvectors
    w = v.conj().T @ rho @ v
    if not blocks:
        w = np.diag(np.diag(w))
    else:
        lam = decomp.eigenvalues
        tol = degeneracy_tol * max(decomp.spectral_range, 1e-300)
        same = np.abs(lam[:, None] - lam[None, :]) <= tol
        w = np.where(same, w, 0.0)
    return v @ w @ v.conj().T
