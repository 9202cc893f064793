# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled subsystem vector field for small dense active sets.

Same contract as ``_field_py.active_field``: pivoted Householder QR of J'
for the tangent projection, partial-pivoting LU of B = J A' for the
constraint-restoring term. Raises through the status code returned to the
Python wrapper so that exception types stay defined in one place.

All scratch space comes from one malloc'd block per call; matrices are
row-major with explicit leading dimensions.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, fabs, sqrt
from libc.stdlib cimport free, malloc

cnp.import_array()

DEF OK = 0
DEF RANK_DEFICIENT = 1
DEF ILL_CONDITIONED = 2


cdef int _tangent_projection(const double* J, const double* grad, double* out, Py_ssize_t k, Py_ssize_t n,
                             double* W, double* V, double* vn, double rank_tol, double* ratio) noexcept nogil:
    """out <- (I - Q1 Q1') grad where J' = Q R P'.  W is n x k, V is k x n."""
    cdef Py_ssize_t i, j, c, piv
    cdef double norm, best, alpha, s, vnorm2, r00 = 0.0, tmp

    for i in range(n):
        for j in range(k):
            W[i * k + j] = J[j * n + i]
    for i in range(k * n):
        V[i] = 0.0
    ratio[0] = 1.0

    for j in range(k):
        # column pivoting on remaining norms
        piv = j
        best = -1.0
        for c in range(j, k):
            norm = 0.0
            for i in range(j, n):
                norm += W[i * k + c] * W[i * k + c]
            if norm > best:
                best = norm
                piv = c
        if piv != j:
            for i in range(n):
                tmp = W[i * k + j]
                W[i * k + j] = W[i * k + piv]
                W[i * k + piv] = tmp
        norm = sqrt(best)
        if j == 0:
            r00 = norm
            if r00 == 0.0:
                ratio[0] = 0.0
                return RANK_DEFICIENT
        if norm <= rank_tol * r00:
            ratio[0] = norm / r00
            return RANK_DEFICIENT
        alpha = -norm if W[j * k + j] >= 0.0 else norm
        for i in range(j, n):
            V[j * n + i] = W[i * k + j]
        V[j * n + j] -= alpha
        vnorm2 = 0.0
        for i in range(j, n):
            vnorm2 += V[j * n + i] * V[j * n + i]
        vn[j] = vnorm2
        # apply reflector to the remaining columns
        for c in range(j, k):
            s = 0.0
            for i in range(j, n):
                s += V[j * n + i] * W[i * k + c]
            s = 2.0 * s / vnorm2
            for i in range(j, n):
                W[i * k + c] -= s * V[j * n + i]
        if j == k - 1:
            ratio[0] = norm / r00

    for i in range(n):
        out[i] = grad[i]
    # out <- Q' grad
    for j in range(k):
        s = 0.0
        for i in range(j, n):
            s += V[j * n + i] * out[i]
        s = 2.0 * s / vn[j]
        for i in range(j, n):
            out[i] -= s * V[j * n + i]
    for i in range(k):
        out[i] = 0.0
    # out <- Q out
    for j in range(k - 1, -1, -1):
        s = 0.0
        for i in range(j, n):
            s += V[j * n + i] * out[i]
        s = 2.0 * s / vn[j]
        for i in range(j, n):
            out[i] -= s * V[j * n + i]
    return OK


cdef int _lu_factor(double* M, Py_ssize_t* perm, Py_ssize_t k) noexcept nogil:
    cdef Py_ssize_t i, j, c, piv
    cdef double best, tmp, f
    for i in range(k):
        perm[i] = i
    for j in range(k):
        piv = j
        best = fabs(M[j * k + j])
        for i in range(j + 1, k):
            if fabs(M[i * k + j]) > best:
                best = fabs(M[i * k + j])
                piv = i
        if best == 0.0:
            return ILL_CONDITIONED
        if piv != j:
            for c in range(k):
                tmp = M[j * k + c]
                M[j * k + c] = M[piv * k + c]
                M[piv * k + c] = tmp
            c = perm[j]
            perm[j] = perm[piv]
            perm[piv] = c
        for i in range(j + 1, k):
            f = M[i * k + j] / M[j * k + j]
            M[i * k + j] = f
            for c in range(j + 1, k):
                M[i * k + c] -= f * M[j * k + c]
    return OK


cdef void _lu_solve(const double* LU, const Py_ssize_t* perm, const double* rhs, double* x,
                    Py_ssize_t k) noexcept nogil:
    cdef Py_ssize_t i, c
    cdef double s
    for i in range(k):
        s = rhs[perm[i]]
        for c in range(i):
            s -= LU[i * k + c] * x[c]
        x[i] = s
    for i in range(k - 1, -1, -1):
        s = x[i]
        for c in range(i + 1, k):
            s -= LU[i * k + c] * x[c]
        x[i] = s / LU[i * k + i]


cdef int _field(const double* grad, const double* a_mat, const double* j_mat, const double* g_vec,
                double* h, Py_ssize_t n, Py_ssize_t k, double kappa1, double kappa2,
                double rank_tol, double cond_max, double* work, Py_ssize_t* perm, double* info) noexcept nogil:
    cdef Py_ssize_t i, j, l
    cdef double s, norm_b, norm_inv, col
    cdef int status
    cdef double* W = work
    cdef double* V = W + n * k
    cdef double* vn = V + k * n
    cdef double* proj = vn + k
    cdef double* B = proj + n
    cdef double* e = B + k * k
    cdef double* x = e + k

    status = _tangent_projection(j_mat, grad, proj, k, n, W, V, vn, rank_tol, info)
    if status != OK:
        return status

    for i in range(k):
        for j in range(k):
            s = 0.0
            for l in range(n):
                s += j_mat[i * n + l] * a_mat[j * n + l]
            B[i * k + j] = s
    norm_b = 0.0
    for j in range(k):
        col = 0.0
        for i in range(k):
            col += fabs(B[i * k + j])
        if col > norm_b:
            norm_b = col

    if _lu_factor(B, perm, k) != OK:
        info[0] = INFINITY
        return ILL_CONDITIONED

    # exact 1-norm of B^-1 column by column (k is small)
    for i in range(k):
        e[i] = 0.0
    norm_inv = 0.0
    for j in range(k):
        e[j] = 1.0
        _lu_solve(B, perm, e, x, k)
        e[j] = 0.0
        col = 0.0
        for i in range(k):
            col += fabs(x[i])
        if col > norm_inv:
            norm_inv = col
    info[0] = norm_b * norm_inv
    if not (info[0] <= cond_max):
        return ILL_CONDITIONED

    _lu_solve(B, perm, g_vec, x, k)
    for l in range(n):
        s = 0.0
        for i in range(k):
            s += a_mat[i * n + l] * x[i]
        h[l] = -kappa1 * s - kappa2 * proj[l]
    return OK


def active_field(const double[::1] grad, const double[:, ::1] a_mat, const double[:, ::1] j_mat, const double[::1] g_vec,
                 double kappa1, double kappa2, double rank_tol=1e-10, double cond_max=1e12):
    """Return ``(h, status, info)``; ``status`` 0 ok, 1 rank deficient, 2 ill conditioned."""
    cdef Py_ssize_t n = grad.shape[0], k = j_mat.shape[0]
    cdef Py_ssize_t i
    cdef double info = 1.0
    cdef int status
    cdef cnp.ndarray[cnp.float64_t, ndim=1] h_arr = np.empty(n)
    cdef double* h = <double*> cnp.PyArray_DATA(h_arr)
    cdef double* work
    cdef Py_ssize_t* perm

    if k == 0:
        for i in range(n):
            h[i] = -kappa2 * grad[i]
        return h_arr, OK, 1.0
    if k > n:
        return h_arr, RANK_DEFICIENT, 0.0
    if a_mat.shape[0] != k or a_mat.shape[1] != n or j_mat.shape[1] != n or g_vec.shape[0] != k:
        raise ValueError("inconsistent operand shapes")

    work = <double*> malloc((2 * n * k + k + n + k * k + 2 * k) * sizeof(double))
    perm = <Py_ssize_t*> malloc(k * sizeof(Py_ssize_t))
    if work == NULL or perm == NULL:
        free(work)
        free(perm)
        raise MemoryError()
    with nogil:
        status = _field(&grad[0], &a_mat[0, 0], &j_mat[0, 0], &g_vec[0], h, n, k, kappa1, kappa2,
                        rank_tol, cond_max, work, perm, &info)
    free(work)
    free(perm)
    return h_arr, status, info
