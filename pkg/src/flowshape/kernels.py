"""Element-level assembly kernels with numba and pure-numpy backends.

The numba backend compiles tight per-element loops; the numpy backend
expresses the same contractions as einsums.  Selection:

    FLOWSHAPE_NUMBA=0   force the numpy path
    FLOWSHAPE_NUMBA=1   force numba (raises if unavailable)
    unset               use numba when importable

Array conventions, batched over elements e and quadrature points q:

    qw    (e, q)           quadrature weight including the element area
    PHIV  (q, 12, 2)       local velocity basis values (reference level)
    DEPS  (e, q, 12, 2, 2) transformed symmetric-gradient of each basis field
    GPHI  (e, q, 12, 2, 2) transformed full gradient of each basis field

Local velocity dof i corresponds to scalar node i // 2, component i % 2.
"""

from __future__ import annotations

import os

import numpy as np

_env = os.environ.get("FLOWSHAPE_NUMBA", "").strip()
if _env == "0":
    NUMBA_ENABLED = False
else:
    try:
        import numba

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        if _env == "1":
            raise
        NUMBA_ENABLED = False


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------


def _visc_np(qw, gdet, nu, nup, Dv, DEPS, want_tangent):
    w = qw * gdet
    S = nu[..., None, None] * Dv
    r = np.einsum("eq,eqab,eqiab->ei", w, S, DEPS, optimize=True)
    if not want_tangent:
        return r, None
    dvd = np.einsum("eqab,eqiab->eqi", Dv, DEPS, optimize=True)
    A = np.einsum("eq,eqiab,eqjab->eij", w * nu, DEPS, DEPS, optimize=True)
    A += np.einsum("eq,eqi,eqj->eij", 2.0 * w * nup, dvd, dvd, optimize=True)
    return r, A


def _conv_np(qw, v, bv, NiT, PHIV, GPHI, want_tangent):
    # residual  -sum_q w (v x bv) : GPHI_i,   bv = N^{-T} v
    r = -np.einsum("eq,eqa,eqb,eqiab->ei", qw, v, bv, GPHI, optimize=True)
    if not want_tangent:
        return r, None
    # tangent   -sum_q w [(phi_j x bv) + (v x N^{-T}phi_j)] : GPHI_i
    bphi = np.einsum("eqab,qjb->eqja", NiT, PHIV, optimize=True)
    A = -np.einsum("eq,qja,eqb,eqiab->eij", qw, PHIV, bv, GPHI, optimize=True)
    A -= np.einsum("eq,eqa,eqjb,eqiab->eij", qw, v, bphi, GPHI, optimize=True)
    return r, A


def _wmass_np(qw, W, PHIV):
    return np.einsum("eq,qia,eqab,qjb->eij", qw, PHIV, W, PHIV, optimize=True)


def _load_np(qw, vec, PHIV, mat, GT):
    r = 0.0
    if vec is not None:
        r = np.einsum("eq,eqa,qia->ei", qw, vec, PHIV, optimize=True)
    if mat is not None:
        r = r + np.einsum("eq,eqab,eqiab->ei", qw, mat, GT, optimize=True)
    return r


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------

if NUMBA_ENABLED:
    from numba import njit

    @njit(cache=True)
    def _visc_nb(qw, gdet, nu, nup, Dv, DEPS, want_tangent):
        ne, nq = qw.shape
        r = np.zeros((ne, 12))
        A = np.zeros((ne, 12, 12))
        dvd = np.empty(12)
        for e in range(ne):
            for q in range(nq):
                w = qw[e, q] * gdet[e, q]
                wnu = w * nu[e, q]
                wnup = 2.0 * w * nup[e, q]
                for i in range(12):
                    acc = 0.0
                    for a in range(2):
                        for b in range(2):
                            acc += Dv[e, q, a, b] * DEPS[e, q, i, a, b]
                    dvd[i] = acc
                    r[e, i] += wnu * acc
                if want_tangent:
                    for i in range(12):
                        for j in range(12):
                            acc = 0.0
                            for a in range(2):
                                for b in range(2):
                                    acc += DEPS[e, q, i, a, b] * DEPS[e, q, j, a, b]
                            A[e, i, j] += wnu * acc + wnup * dvd[i] * dvd[j]
        return r, A

    @njit(cache=True)
    def _conv_nb(qw, v, bv, NiT, PHIV, GPHI, want_tangent):
        ne, nq = qw.shape
        r = np.zeros((ne, 12))
        A = np.zeros((ne, 12, 12))
        bphi = np.empty((12, 2))
        for e in range(ne):
            for q in range(nq):
                w = qw[e, q]
                for j in range(12):
                    for a in range(2):
                        bphi[j, a] = (
                            NiT[e, q, a, 0] * PHIV[q, j, 0]
                            + NiT[e, q, a, 1] * PHIV[q, j, 1]
                        )
                for i in range(12):
                    acc = 0.0
                    for a in range(2):
                        for b in range(2):
                            acc += v[e, q, a] * bv[e, q, b] * GPHI[e, q, i, a, b]
                    r[e, i] -= w * acc
                    if want_tangent:
                        for j in range(12):
                            accj = 0.0
                            for a in range(2):
                                for b in range(2):
                                    accj += (
                                        PHIV[q, j, a] * bv[e, q, b]
                                        + v[e, q, a] * bphi[j, b]
                                    ) * GPHI[e, q, i, a, b]
                            A[e, i, j] -= w * accj
        return r, A

    @njit(cache=True)
    def _wmass_nb(qw, W, PHIV):
        ne, nq = qw.shape
        A = np.zeros((ne, 12, 12))
        for e in range(ne):
            for q in range(nq):
                w = qw[e, q]
                for i in range(12):
                    for j in range(12):
                        acc = 0.0
                        for a in range(2):
                            for b in range(2):
                                acc += PHIV[q, i, a] * W[e, q, a, b] * PHIV[q, j, b]
                        A[e, i, j] += w * acc
        return A

    @njit(cache=True)
    def _load_nb(qw, vec, PHIV, mat, GT, use_vec, use_mat):
        ne, nq = qw.shape
        r = np.zeros((ne, 12))
        for e in range(ne):
            for q in range(nq):
                w = qw[e, q]
                for i in range(12):
                    acc = 0.0
                    if use_vec:
                        acc += vec[e, q, 0] * PHIV[q, i, 0] + vec[e, q, 1] * PHIV[q, i, 1]
                    if use_mat:
                        for a in range(2):
                            for b in range(2):
                                acc += mat[e, q, a, b] * GT[e, q, i, a, b]
                    r[e, i] += w * acc
        return r


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def visc_kernel(qw, gdet, nu, nup, Dv, DEPS, want_tangent=True):
    """Viscous residual and tangent: integral of g S(Dv):D_i and S'(Dv)D_j:D_i."""
    if NUMBA_ENABLED:
        r, A = _visc_nb(qw, gdet, nu, nup, Dv, DEPS, want_tangent)
        return r, (A if want_tangent else None)
    return _visc_np(qw, gdet, nu, nup, Dv, DEPS, want_tangent)


def conv_kernel(qw, v, bv, NiT, PHIV, GPHI, want_tangent=True):
    """Convection residual and linearization in the transformed weak form."""
    if NUMBA_ENABLED:
        r, A = _conv_nb(qw, v, bv, NiT, PHIV, GPHI, want_tangent)
        return r, (A if want_tangent else None)
    return _conv_np(qw, v, bv, NiT, PHIV, GPHI, want_tangent)


def wmass_kernel(qw, W, PHIV):
    """Weighted vector mass matrix phi_i . W phi_j."""
    if NUMBA_ENABLED:
        return _wmass_nb(qw, W, PHIV)
    return _wmass_np(qw, W, PHIV)


def load_kernel(qw, vec, PHIV, mat=None, GT=None):
    """Generic load: integral of vec . phi_i plus mat : GT_i."""
    if NUMBA_ENABLED:
        ne, nq = qw.shape
        zvec = vec if vec is not None else np.zeros((ne, nq, 2))
        zmat = mat if mat is not None else np.zeros((ne, nq, 2, 2))
        zGT = GT if GT is not None else np.zeros((ne, nq, 12, 2, 2))
        return _load_nb(qw, zvec, PHIV, zmat, zGT, vec is not None, mat is not None)
    return _load_np(qw, vec, PHIV, mat, GT)
