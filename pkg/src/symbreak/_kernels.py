"""Hot numerical kernels with numba and pure-numpy backends.

Two operations dominate run time at scale and get both backends:

* the pairwise occupancy-combination fold, applied once per orbital per
  time sample when reducing an orbital ensemble to a two-site occupancy
  density matrix, and
* second-quantized hopping-matrix assembly over occupation bitstrings.

The backend is chosen once at import from the environment variable
``SYMBREAK_BACKEND``: ``numba`` (require the jit path), ``numpy`` (force
the fallback), or ``auto`` (default: numba when importable). Every public
function also takes an explicit ``backend=`` override so the two paths
can be compared in the same process (see ``benchmarks/bench_kernels.py``).

Combination-tensor convention (rows and columns of the 4x4 occupancy
matrices): index 0 = both tracked sites occupied, 1 = first site only,
2 = second site only, 3 = neither. The pairwise combination is

    out[i, j] = sum_{(p,q) in B_i} sum_{(r,s) in B_j} w_pq w_rs
                rho1[p, r] * rho2[q, s]

with the weight table ``_B_ENTRIES`` below; note the (0, 0) entry of
class 0 carries weight 2 because the defining sum visits it twice. After
every fold step the trace is renormalized to 1 whenever it deviates by
more than ``_TRACE_TOL``, and the number of renormalizations is reported
back to the caller.
"""
from __future__ import annotations

import os

import numpy as np

_TRACE_TOL = 1e-12

# (class, p, q, weight): ket-side entries of the combination tensor.
# class 0 <- (1,2), (2,1), (0,0) twice, (0,k) and (k,0) for all k
# class 1 <- (1,1), (1,3), (3,1)
# class 2 <- (2,2), (2,3), (3,2)
# class 3 <- (3,3)
_B_ENTRIES = (
    (0, 1, 2, 1.0),
    (0, 2, 1, 1.0),
    (0, 0, 0, 2.0),
    (0, 0, 1, 1.0),
    (0, 0, 2, 1.0),
    (0, 0, 3, 1.0),
    (0, 1, 0, 1.0),
    (0, 2, 0, 1.0),
    (0, 3, 0, 1.0),
    (1, 1, 1, 1.0),
    (1, 1, 3, 1.0),
    (1, 3, 1, 1.0),
    (2, 2, 2, 1.0),
    (2, 2, 3, 1.0),
    (2, 3, 2, 1.0),
    (3, 3, 3, 1.0),
)

_B_I = np.array([e[0] for e in _B_ENTRIES], dtype=np.int64)
_B_P = np.array([e[1] for e in _B_ENTRIES], dtype=np.int64)
_B_Q = np.array([e[2] for e in _B_ENTRIES], dtype=np.int64)
_B_W = np.array([e[3] for e in _B_ENTRIES], dtype=np.float64)


def combination_tensor() -> np.ndarray:
    """Dense (4, 4, 4) combination tensor B[class, p, q]."""
    b = np.zeros((4, 4, 4))
    for i, p, q, w in _B_ENTRIES:
        b[i, p, q] += w
    return b


def _resolve_backend(backend: str | None) -> str:
    choice = backend if backend is not None else _ACTIVE_BACKEND
    if choice not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {choice!r}")
    if choice == "numba" and not _HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is unavailable")
    return choice


def active_backend() -> str:
    """Backend selected at import time ('numba' or 'numpy')."""
    return _ACTIVE_BACKEND


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

_HAVE_NUMBA = False
if os.environ.get("SYMBREAK_BACKEND", "auto") != "numpy":
    try:
        import numba as nb

        _HAVE_NUMBA = True
    except ImportError:
        _HAVE_NUMBA = False

if _HAVE_NUMBA:

    @nb.njit(cache=True)
    def _fold_step_nb(acc, rho, out, bi, bp, bq, bw):
        for i in range(4):
            for j in range(4):
                out[i, j] = 0.0 + 0.0j
        n = bi.size
        for e1 in range(n):
            i = bi[e1]
            p = bp[e1]
            q = bq[e1]
            w1 = bw[e1]
            for e2 in range(n):
                j = bi[e2]
                r = bp[e2]
                s = bq[e2]
                out[i, j] += (w1 * bw[e2]) * acc[p, r] * rho[q, s]

    @nb.njit(cache=True)
    def _fold_amplitudes_nb(a, b, s, p, bi, bp, bq, bw):
        n_t, n_orb = a.shape
        out = np.empty((n_t, 4, 4), np.complex128)
        acc = np.empty((4, 4), np.complex128)
        tmp = np.empty((4, 4), np.complex128)
        cur = np.empty((4, 4), np.complex128)
        n_renorm = 0
        for t in range(n_t):
            _assemble_nb(a[t, 0], b[t, 0], s[t, 0], p[t, 0], acc)
            for c in range(1, n_orb):
                _assemble_nb(a[t, c], b[t, c], s[t, c], p[t, c], cur)
                _fold_step_nb(acc, cur, tmp, bi, bp, bq, bw)
                tr = (tmp[0, 0] + tmp[1, 1] + tmp[2, 2] + tmp[3, 3]).real
                if abs(tr - 1.0) > _TRACE_TOL:
                    for i in range(4):
                        for j in range(4):
                            tmp[i, j] /= tr
                    n_renorm += 1
                acc[:, :] = tmp
            out[t] = acc
        return out, n_renorm

    @nb.njit(cache=True)
    def _assemble_nb(a, b, s, p, out):
        out[0, 0] = 0.0
        out[0, 1] = 0.0
        out[0, 2] = 0.0
        out[0, 3] = 0.0
        out[1, 0] = 0.0
        out[2, 0] = 0.0
        out[3, 0] = 0.0
        out[1, 1] = a * np.conj(a)
        out[1, 2] = a * np.conj(b)
        out[1, 3] = a * np.conj(s)
        out[2, 1] = b * np.conj(a)
        out[2, 2] = b * np.conj(b)
        out[2, 3] = b * np.conj(s)
        out[3, 1] = s * np.conj(a)
        out[3, 2] = s * np.conj(b)
        out[3, 3] = p + 0.0j

    @nb.njit(cache=True)
    def _fold_chain_nb(rhos, bi, bp, bq, bw):
        n_orb, n_t = rhos.shape[0], rhos.shape[1]
        out = np.empty((n_t, 4, 4), np.complex128)
        acc = np.empty((4, 4), np.complex128)
        tmp = np.empty((4, 4), np.complex128)
        n_renorm = 0
        for t in range(n_t):
            acc[:, :] = rhos[0, t]
            for c in range(1, n_orb):
                _fold_step_nb(acc, rhos[c, t], tmp, bi, bp, bq, bw)
                tr = (tmp[0, 0] + tmp[1, 1] + tmp[2, 2] + tmp[3, 3]).real
                if abs(tr - 1.0) > _TRACE_TOL:
                    for i in range(4):
                        for j in range(4):
                            tmp[i, j] /= tr
                    n_renorm += 1
                acc[:, :] = tmp
            out[t] = acc
        return out, n_renorm

    @nb.njit(cache=True)
    def _popcount_nb(x):
        count = 0
        while x:
            x &= x - 1
            count += 1
        return count

    @nb.njit(cache=True)
    def _fock_hopping_nb(mat, states, n_sites):
        n = states.size
        out = np.zeros((n, n), np.float64)
        for col in range(n):
            bits = states[col]
            for j in range(n_sites):
                if not (bits >> j) & 1:
                    continue
                for i in range(n_sites):
                    if i == j or (bits >> i) & 1:
                        continue
                    w = mat[i, j]
                    if w == 0.0:
                        continue
                    target = (bits ^ (np.int64(1) << j)) | (np.int64(1) << i)
                    lo = min(i, j) + 1
                    hi = max(i, j)
                    mask = (np.int64(1) << hi) - (np.int64(1) << lo)
                    sign = -1.0 if _popcount_nb(bits & mask) & 1 else 1.0
                    row = np.searchsorted(states, target)
                    out[row, col] += sign * w
        return out


_ACTIVE_BACKEND = {
    "auto": "numba" if _HAVE_NUMBA else "numpy",
    "numba": "numba",
    "numpy": "numpy",
}.get(os.environ.get("SYMBREAK_BACKEND", "auto"))
if _ACTIVE_BACKEND is None:
    raise RuntimeError(
        f"SYMBREAK_BACKEND={os.environ['SYMBREAK_BACKEND']!r} not recognised "
        "(use auto, numba, or numpy)"
    )
if _ACTIVE_BACKEND == "numba" and not _HAVE_NUMBA:
    raise RuntimeError("SYMBREAK_BACKEND=numba but numba failed to import")


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def _assemble_np(a, b, s, p):
    """Per-orbital occupancy matrices from amplitude arrays.

    a, b, s: complex (n_t, n_orb) amplitudes on the two tracked sites and
    the coherent bath sum; p: real (n_t, n_orb) bath weight. Returns
    (n_t, n_orb, 4, 4).
    """
    n_t, n_orb = a.shape
    out = np.zeros((n_t, n_orb, 4, 4), np.complex128)
    ac, bc, sc = np.conj(a), np.conj(b), np.conj(s)
    out[..., 1, 1] = a * ac
    out[..., 1, 2] = a * bc
    out[..., 1, 3] = a * sc
    out[..., 2, 1] = b * ac
    out[..., 2, 2] = b * bc
    out[..., 2, 3] = b * sc
    out[..., 3, 1] = s * ac
    out[..., 3, 2] = s * bc
    out[..., 3, 3] = p
    return out

def _fold_step_np(acc, rho):
    """One pairwise combination, vectorized over leading axes."""
    b = combination_tensor()
    return np.einsum("ipq,jrs,...pr,...qs->...ij", b, b, acc, rho, optimize=True)


def _renorm_np(rhos):
    tr = np.trace(rhos, axis1=-2, axis2=-1).real
    mask = np.abs(tr - 1.0) > _TRACE_TOL
    if np.any(mask):
        rhos[mask] /= tr[mask, None, None]
    return int(np.count_nonzero(mask))


def _fold_chain_np(rhos):
    """Left fold over axis 0 of (n_orb, n_t, 4, 4), renormalizing each step."""
    acc = rhos[0].copy()
    n_renorm = 0
    for c in range(1, rhos.shape[0]):
        acc = _fold_step_np(acc, rhos[c])
        n_renorm += _renorm_np(acc)
    return acc, n_renorm


def _fold_amplitudes_np(a, b, s, p):
    rhos = _assemble_np(a, b, s, p)
    return _fold_chain_np(np.moveaxis(rhos, 1, 0))


def _fock_hopping_np(mat, states, n_sites):
    n = states.size
    index = {int(s): k for k, s in enumerate(states)}
    out = np.zeros((n, n))
    for col in range(n):
        bits = int(states[col])
        occupied = [j for j in range(n_sites) if (bits >> j) & 1]
        for j in occupied:
            for i in range(n_sites):
                if i == j or (bits >> i) & 1:
                    continue
                w = mat[i, j]
                if w == 0.0:
                    continue
                target = (bits ^ (1 << j)) | (1 << i)
                lo, hi = min(i, j) + 1, max(i, j)
                mask = (1 << hi) - (1 << lo)
                sign = -1.0 if bin(bits & mask).count("1") & 1 else 1.0
                out[index[target], col] += sign * w
    return out


# ---------------------------------------------------------------------------
# public dispatchers
# ---------------------------------------------------------------------------


def fold_occupancy_amplitudes(a, b, s, p, backend: str | None = None):
    """Combined occupancy matrices for a time batch of orbital amplitudes.

    Parameters
    ----------
    a, b, s : complex (n_t, n_orb)
        Orbital amplitudes on the two tracked sites and the coherent sum
        over the remaining sites.
    p : real (n_t, n_orb)
        Total orbital weight on the remaining sites.

    Returns
    -------
    rhos : complex (n_t, 4, 4)
        Left fold of the pairwise combination over orbitals, in stored
        order.
    n_renorm : int
        Number of fold steps whose trace needed renormalization.
    """
    a = np.ascontiguousarray(a, np.complex128)
    b = np.ascontiguousarray(b, np.complex128)
    s = np.ascontiguousarray(s, np.complex128)
    p = np.ascontiguousarray(p, np.float64)
    if _resolve_backend(backend) == "numba":
        return _fold_amplitudes_nb(a, b, s, p, _B_I, _B_P, _B_Q, _B_W)
    return _fold_amplitudes_np(a, b, s, p)


def fold_rdm_chain(rhos, backend: str | None = None):
    """Left fold of the pairwise combination over axis 0 of (n_orb, n_t, 4, 4).

    Returns (combined (n_t, 4, 4), n_renorm).
    """
    rhos = np.ascontiguousarray(rhos, np.complex128)
    if rhos.ndim != 4 or rhos.shape[2:] != (4, 4) or rhos.shape[0] < 1:
        raise ValueError(f"expected (n_orb, n_t, 4, 4), got {rhos.shape}")
    if rhos.shape[0] == 1:
        return rhos[0].copy(), 0
    if _resolve_backend(backend) == "numba":
        return _fold_chain_nb(rhos, _B_I, _B_P, _B_Q, _B_W)
    return _fold_chain_np(rhos)


def fock_hopping_matrix(mat, states, n_sites: int, backend: str | None = None):
    """Single-particle hopping matrix lifted to an occupation-number basis.

    ``mat[i, j]`` multiplies the move of a particle from site j to site i
    (creation at i, annihilation at j). The sign convention is
    (-1)**(number of occupied sites strictly between i and j), evaluated
    on the source configuration. ``states`` must be sorted ascending.
    """
    mat = np.ascontiguousarray(mat, np.float64)
    states = np.ascontiguousarray(states, np.int64)
    if _resolve_backend(backend) == "numba":
        return _fock_hopping_nb(mat, states, n_sites)
    return _fock_hopping_np(mat, states, n_sites)
