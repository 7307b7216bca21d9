"""Model construction: lattices, random symmetry-breaking terms, Hamiltonians.

Two families are covered. The planar family is a single-particle
tight-binding model on a torus (periodic in both directions) or strip
(periodic in x only), with a two-site system dimer embedded in the
lattice; the quench connects the dimer to the rest. The fully-connected
family is a spin-1/2 system attached to a complete-graph bath through a
random coupling on an m-site subset; the quench switches that coupling
on.

Every bond carries weight ``1 + g * r_ij`` where ``r`` is a symmetric
random matrix with zero diagonal and entries uniform in (-1, 1), so
``g = 0`` recovers the fully symmetric model.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .errors import InvalidSpecError, ResourceLimitError

DEFAULT_MAX_DIM = 50_000

_GEOMETRIES = ("torus", "strip", "fully_connected")


def max_matrix_dim() -> int:
    """Dimension cap for dense builders (env SYMBREAK_MAX_DIM overrides)."""
    raw = os.environ.get("SYMBREAK_MAX_DIM")
    if raw is None:
        return DEFAULT_MAX_DIM
    try:
        value = int(raw)
    except ValueError as exc:
        raise InvalidSpecError(f"SYMBREAK_MAX_DIM={raw!r} is not an integer") from exc
    if value < 1:
        raise InvalidSpecError("SYMBREAK_MAX_DIM must be positive")
    return value


@dataclass(frozen=True)
class LatticeSpec:
    """Geometry of one model instance.

    For planar geometries ``n_sites = lx * ly`` with row-major site
    indexing ``site = y * lx + x``; ``system_sites`` is the embedded
    dimer and must be a nearest-neighbor pair. For the fully-connected
    geometry ``n_sites`` is the bath size and ``m`` the size of the
    coupled subset; ``system_sites`` is unused (the system is a spin).
    """

    geometry: str
    n_sites: int
    lx: int = 0
    ly: int = 0
    m: int = 0
    system_sites: tuple[int, int] = (0, 1)

    def __post_init__(self) -> None:
        if self.geometry not in _GEOMETRIES:
            raise InvalidSpecError(
                f"geometry must be one of {_GEOMETRIES}, got {self.geometry!r}"
            )
        if self.geometry in ("torus", "strip"):
            if self.lx < 3 or self.ly < 3:
                raise InvalidSpecError(
                    f"planar lattices need lx, ly >= 3 (periodic wrap would "
                    f"duplicate bonds), got {self.lx}x{self.ly}"
                )
            if self.n_sites != self.lx * self.ly:
                raise InvalidSpecError(
                    f"n_sites={self.n_sites} != lx*ly={self.lx * self.ly}"
                )
            s1, s2 = self.system_sites
            if not (0 <= s1 < self.n_sites and 0 <= s2 < self.n_sites) or s1 == s2:
                raise InvalidSpecError(f"bad system sites {self.system_sites}")
            if s2 not in _neighbors(s1, self.lx, self.ly, self.geometry == "torus"):
                raise InvalidSpecError(
                    f"system sites {self.system_sites} are not nearest neighbors"
                )
        else:
            if self.n_sites < 2:
                raise InvalidSpecError("fully connected bath needs n_sites >= 2")
            if not 1 <= self.m <= self.n_sites:
                raise InvalidSpecError(
                    f"coupled subset size m={self.m} outside [1, {self.n_sites}]"
                )

    @classmethod
    def torus(cls, lx: int, ly: int, system_sites: tuple[int, int] = (0, 1)) -> "LatticeSpec":
        return cls("torus", lx * ly, lx=lx, ly=ly, system_sites=tuple(system_sites))

    @classmethod
    def strip(cls, lx: int, ly: int, system_sites: tuple[int, int] = (0, 1)) -> "LatticeSpec":
        return cls("strip", lx * ly, lx=lx, ly=ly, system_sites=tuple(system_sites))

    @classmethod
    def fully_connected(cls, n_sites: int, m: int) -> "LatticeSpec":
        return cls("fully_connected", n_sites, m=m)

    @property
    def is_planar(self) -> bool:
        return self.geometry in ("torus", "strip")


def _neighbors(site: int, lx: int, ly: int, wrap_y: bool) -> list[int]:
    """Nearest neighbors of a site, always wrapping x, optionally y."""
    x, y = site % lx, site // lx
    out = [y * lx + (x + 1) % lx, y * lx + (x - 1) % lx]
    if wrap_y:
        out.append(((y + 1) % ly) * lx + x)
        out.append(((y - 1) % ly) * lx + x)
    else:
        if y + 1 < ly:
            out.append((y + 1) * lx + x)
        if y - 1 >= 0:
            out.append((y - 1) * lx + x)
    return out


def sample_symmetric_uniform(n: int, seed: int) -> np.ndarray:
    """Symmetric n x n matrix, zero diagonal, entries uniform in (-1, 1).

    Deterministic in ``seed``; the upper triangle is drawn and mirrored.
    """
    if n < 1:
        raise InvalidSpecError(f"matrix size must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    rows, cols = np.triu_indices(n, k=1)
    out = np.zeros((n, n))
    out[rows, cols] = rng.uniform(-1.0, 1.0, size=rows.size)
    out += out.T
    return out


@dataclass(frozen=True)
class SymBreakTerm:
    """Bond disorder r (symmetric, zero diagonal, |entries| < 1) at strength g."""

    r: np.ndarray
    g: float
    seed: int | None = None

    def __post_init__(self) -> None:
        r = np.asarray(self.r, dtype=np.float64)
        object.__setattr__(self, "r", r)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise InvalidSpecError(f"r must be square, got {r.shape}")
        if not np.array_equal(r, r.T):
            raise InvalidSpecError("r must be symmetric")
        if np.any(np.diag(r) != 0.0):
            raise InvalidSpecError("r must have zero diagonal")
        if np.any(np.abs(r) >= 1.0):
            raise InvalidSpecError("r entries must lie in (-1, 1)")
        if not np.isfinite(self.g) or self.g < 0.0:
            raise InvalidSpecError(f"g must be finite and >= 0, got {self.g}")

    @classmethod
    def sample(cls, n: int, g: float, seed: int) -> "SymBreakTerm":
        return cls(sample_symmetric_uniform(n, seed), g, seed)


@dataclass(frozen=True)
class CouplingTerm:
    """System-bath coupling r' on the m-site subset at strength k in [0, 1]."""

    r_prime: np.ndarray
    k: float
    seed: int | None = None

    def __post_init__(self) -> None:
        rp = np.asarray(self.r_prime, dtype=np.float64)
        object.__setattr__(self, "r_prime", rp)
        if rp.ndim != 2 or rp.shape[0] != rp.shape[1]:
            raise InvalidSpecError(f"r' must be square, got {rp.shape}")
        if not np.array_equal(rp, rp.T):
            raise InvalidSpecError("r' must be symmetric")
        if np.any(np.diag(rp) != 0.0):
            raise InvalidSpecError("r' must have zero diagonal")
        if np.any(np.abs(rp) >= 1.0):
            raise InvalidSpecError("r' entries must lie in (-1, 1)")
        if not 0.0 <= self.k <= 1.0:
            raise InvalidSpecError(f"k must lie in [0, 1], got {self.k}")

    @classmethod
    def sample(cls, m: int, k: float, seed: int) -> "CouplingTerm":
        return cls(sample_symmetric_uniform(m, seed), k, seed)

    @property
    def m(self) -> int:
        return self.r_prime.shape[0]


@dataclass(frozen=True)
class HamiltonianPair:
    """Hamiltonians before and after the quench, on the same space."""

    pre_quench: np.ndarray
    post_quench: np.ndarray

    def __post_init__(self) -> None:
        pre = np.asarray(self.pre_quench)
        post = np.asarray(self.post_quench)
        if pre.shape != post.shape or pre.ndim != 2:
            raise InvalidSpecError(
                f"pre/post shapes differ: {pre.shape} vs {post.shape}"
            )

    @property
    def dim(self) -> int:
        return self.pre_quench.shape[0]


# ---------------------------------------------------------------------------
# planar builders
# ---------------------------------------------------------------------------


def build_2d_hamiltonian(spec: LatticeSpec, sym: SymBreakTerm) -> np.ndarray:
    """Single-particle hopping matrix of the joined planar lattice.

    Every nearest-neighbor bond (i, j) carries ``1 + g * r_ij``. The
    torus wraps both directions, the strip only x.
    """
    if not spec.is_planar:
        raise InvalidSpecError("build_2d_hamiltonian needs a torus or strip spec")
    n = spec.n_sites
    if sym.r.shape != (n, n):
        raise InvalidSpecError(
            f"sym-break matrix shape {sym.r.shape} does not match n_sites={n}"
        )
    h = np.zeros((n, n))
    wrap_y = spec.geometry == "torus"
    for site in range(n):
        for nb in _neighbors(site, spec.lx, spec.ly, wrap_y):
            if nb > site:
                h[site, nb] = h[nb, site] = 1.0 + sym.g * sym.r[site, nb]
    return h


def disconnect_system(h: np.ndarray, spec: LatticeSpec) -> np.ndarray:
    """Copy of ``h`` with all system-bath bonds removed.

    The bond inside the system dimer survives; every bond from either
    system site to the rest of the lattice is zeroed.
    """
    if not spec.is_planar:
        raise InvalidSpecError("disconnect_system needs a torus or strip spec")
    h = np.asarray(h)
    if h.shape != (spec.n_sites, spec.n_sites):
        raise InvalidSpecError(
            f"matrix shape {h.shape} does not match n_sites={spec.n_sites}"
        )
    s1, s2 = spec.system_sites
    others = [i for i in range(spec.n_sites) if i not in (s1, s2)]
    out = h.copy()
    out[np.ix_([s1, s2], others)] = 0.0
    out[np.ix_(others, [s1, s2])] = 0.0
    return out


def hamiltonian_pair_2d(spec: LatticeSpec, sym: SymBreakTerm) -> HamiltonianPair:
    """Pre-quench (dimer cut out) and post-quench (joined) planar pair."""
    post = build_2d_hamiltonian(spec, sym)
    return HamiltonianPair(disconnect_system(post, spec), post)


def translation_permutation(spec: LatticeSpec, axis: str) -> np.ndarray:
    """Permutation matrix shifting the lattice by one site along x or y."""
    if not spec.is_planar:
        raise InvalidSpecError("translations are defined for planar lattices")
    if axis not in ("x", "y"):
        raise InvalidSpecError(f"axis must be 'x' or 'y', got {axis!r}")
    n, lx, ly = spec.n_sites, spec.lx, spec.ly
    perm = np.zeros((n, n))
    for site in range(n):
        x, y = site % lx, site // lx
        if axis == "x":
            target = y * lx + (x + 1) % lx
        else:
            target = ((y + 1) % ly) * lx + x
        perm[target, site] = 1.0
    return perm


# ---------------------------------------------------------------------------
# fully-connected builders
# ---------------------------------------------------------------------------


def bath_matrix(
    spec: LatticeSpec, sym: SymBreakTerm, include_onsite: bool = False
) -> np.ndarray:
    """Complete-graph bath hopping matrix A_ij = 1 + g * r_ij (i != j).

    The i = j term of the defining sum only shifts the spectrum by the
    identity (r has zero diagonal), so it is off by default and opt-in
    via ``include_onsite``.
    """
    if spec.is_planar:
        raise InvalidSpecError("bath_matrix needs a fully_connected spec")
    n = spec.n_sites
    if sym.r.shape != (n, n):
        raise InvalidSpecError(
            f"sym-break matrix shape {sym.r.shape} does not match n_sites={n}"
        )
    a = 1.0 + sym.g * sym.r
    np.fill_diagonal(a, 1.0 if include_onsite else 0.0)
    return a


def coupling_matrix(spec: LatticeSpec, coupling: CouplingTerm) -> np.ndarray:
    """Coupling operator B: r' on the m-site subset, embedded in the bath."""
    if spec.is_planar:
        raise InvalidSpecError("coupling_matrix needs a fully_connected spec")
    if coupling.m != spec.m:
        raise InvalidSpecError(
            f"coupling size {coupling.m} does not match spec m={spec.m}"
        )
    b = np.zeros((spec.n_sites, spec.n_sites))
    b[: spec.m, : spec.m] = coupling.r_prime
    return b


def build_connected_hamiltonian(
    spec: LatticeSpec,
    sym: SymBreakTerm,
    coupling: CouplingTerm,
    mode: str = "single_particle",
    n_particles: int | None = None,
    include_onsite: bool = False,
    max_dim: int | None = None,
) -> HamiltonianPair:
    """Spin-1/2 plus complete-graph bath, before (k = 0) and after the quench.

    ``single_particle`` mode works in the one-particle sector, dimension
    2 * n_sites with spin-major ordering. ``many_body`` mode lifts the
    bath to a fixed particle number ``n_particles`` (dimension
    2 * C(n_sites, n_particles)); dimensions above the cap (default
    50000, env SYMBREAK_MAX_DIM) are refused.
    """
    if spec.is_planar:
        raise InvalidSpecError("build_connected_hamiltonian needs a fully_connected spec")
    a = bath_matrix(spec, sym, include_onsite)
    b = coupling_matrix(spec, coupling)
    cap = max_dim if max_dim is not None else max_matrix_dim()

    if mode == "single_particle":
        dim = 2 * spec.n_sites
        if dim > cap:
            raise ResourceLimitError(f"dimension {dim} exceeds cap {cap}")
        pre = engine.spin_bath_matrix(a, b, 0.0)
        post = engine.spin_bath_matrix(a, b, coupling.k)
        return HamiltonianPair(pre, post)

    if mode == "many_body":
        if n_particles is None:
            raise InvalidSpecError("many_body mode requires n_particles")
        basis = engine.FockBasis.build(spec.n_sites, n_particles)
        dim = 2 * len(basis)
        if dim > cap:
            raise ResourceLimitError(
                f"dimension {dim} = 2 * C({spec.n_sites}, {n_particles}) "
                f"exceeds cap {cap}"
            )
        pre = engine.build_many_body_hamiltonian(a, b, 0.0, basis)
        post = engine.build_many_body_hamiltonian(a, b, coupling.k, basis)
        return HamiltonianPair(pre, post)

    raise InvalidSpecError(f"mode must be single_particle or many_body, got {mode!r}")


def joining_operator(
    spec: LatticeSpec,
    sym: SymBreakTerm | None = None,
    coupling: CouplingTerm | None = None,
    mode: str = "single_particle",
    n_particles: int | None = None,
) -> np.ndarray:
    """Operator switched on by the quench, in the propagation space.

    Planar: the difference between joined and disconnected Hamiltonians
    (the reinstated system-bath bonds). Fully connected: the bare bath
    coupling operator B lifted with an identity spin factor; note this
    is B itself, not k * sigma_z (x) B.
    """
    if spec.is_planar:
        if sym is None:
            raise InvalidSpecError("planar joining operator needs the sym-break term")
        post = build_2d_hamiltonian(spec, sym)
        return post - disconnect_system(post, spec)

    if coupling is None:
        raise InvalidSpecError("connected joining operator needs the coupling term")
    b = coupling_matrix(spec, coupling)
    if mode == "single_particle":
        return np.kron(np.eye(2), b)
    if mode == "many_body":
        if n_particles is None:
            raise InvalidSpecError("many_body mode requires n_particles")
        basis = engine.FockBasis.build(spec.n_sites, n_particles)
        from ._kernels import fock_hopping_matrix

        bq = fock_hopping_matrix(b, basis.states, basis.n_sites)
        return np.kron(np.eye(2), bq)
    raise InvalidSpecError(f"mode must be single_particle or many_body, got {mode!r}")
