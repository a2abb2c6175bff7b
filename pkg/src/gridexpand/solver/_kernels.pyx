# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops for the ADMM solver.

Provides a sparse LDL' factorization of the (permuted) reduced ADMM system and
a routine that advances the ADMM iterates by a fixed number of steps without
returning to the interpreter.  ``_kernels_py`` mirrors this interface.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


cdef class LDLFactor:
    """LDL' factorization of a symmetric positive definite sparse matrix.

    Parameters
    ----------
    upper : scipy.sparse.csc_matrix
        Upper triangle (diagonal included) of ``K[perm][:, perm]``.
    perm : ndarray of int
        Fill-reducing permutation applied before factorization.
    """

    cdef public int n
    cdef public cnp.ndarray Lp, Li, Lx, D, perm
    cdef cnp.ndarray _work

    def __init__(self, upper, perm):
        cdef int n = upper.shape[0]
        self.n = n
        self.perm = np.ascontiguousarray(perm, dtype=np.intc)
        Ap = np.ascontiguousarray(upper.indptr, dtype=np.intc)
        Ai = np.ascontiguousarray(upper.indices, dtype=np.intc)
        Ax = np.ascontiguousarray(upper.data, dtype=np.float64)
        parent = np.empty(n, dtype=np.intc)
        lnz = np.empty(n, dtype=np.intc)
        flag = np.empty(n, dtype=np.intc)
        self.Lp = np.empty(n + 1, dtype=np.intc)
        _symbolic(n, Ap, Ai, self.Lp, parent, lnz, flag)
        nnz = int(self.Lp[n])
        self.Li = np.empty(max(nnz, 1), dtype=np.intc)
        self.Lx = np.empty(max(nnz, 1), dtype=np.float64)
        self.D = np.empty(n, dtype=np.float64)
        y = np.zeros(n, dtype=np.float64)
        pattern = np.empty(n, dtype=np.intc)
        k = _numeric(n, Ap, Ai, Ax, self.Lp, parent, lnz, self.Li, self.Lx,
                     self.D, y, pattern, flag)
        if k != n:
            raise ZeroDivisionError(f"zero pivot at column {k}")
        self._work = np.empty(n, dtype=np.float64)

    @property
    def nnz(self):
        return int(self.Lp[self.n])

    def solve(self, b):
        x = np.array(b, dtype=np.float64, copy=True)
        self._solve_inplace(x)
        return x

    cdef void _solve_inplace(self, double[::1] x):
        _ldl_solve(self.n, self.Lp, self.Li, self.Lx, self.D, self.perm,
                   self._work, x)


cdef void _symbolic(int n, int[::1] Ap, int[::1] Ai, int[::1] Lp,
                    int[::1] parent, int[::1] lnz, int[::1] flag) noexcept nogil:
    cdef int k, p, i
    for k in range(n):
        parent[k] = -1
        flag[k] = k
        lnz[k] = 0
        for p in range(Ap[k], Ap[k + 1]):
            i = Ai[p]
            if i < k:
                while flag[i] != k:
                    if parent[i] == -1:
                        parent[i] = k
                    lnz[i] += 1
                    flag[i] = k
                    i = parent[i]
    Lp[0] = 0
    for k in range(n):
        Lp[k + 1] = Lp[k] + lnz[k]


cdef int _numeric(int n, int[::1] Ap, int[::1] Ai, double[::1] Ax,
                  int[::1] Lp, int[::1] parent, int[::1] lnz, int[::1] Li,
                  double[::1] Lx, double[::1] D, double[::1] Y,
                  int[::1] pattern, int[::1] flag) noexcept nogil:
    cdef int k, p, p2, i, top, ln
    cdef double yi, l_ki
    for k in range(n):
        Y[k] = 0.0
        top = n
        flag[k] = k
        lnz[k] = 0
        for p in range(Ap[k], Ap[k + 1]):
            i = Ai[p]
            if i > k:
                continue
            Y[i] += Ax[p]
            ln = 0
            while flag[i] != k:
                pattern[ln] = i
                ln += 1
                flag[i] = k
                i = parent[i]
            while ln > 0:
                top -= 1
                ln -= 1
                pattern[top] = pattern[ln]
        D[k] = Y[k]
        Y[k] = 0.0
        while top < n:
            i = pattern[top]
            yi = Y[i]
            Y[i] = 0.0
            p2 = Lp[i] + lnz[i]
            for p in range(Lp[i], p2):
                Y[Li[p]] -= Lx[p] * yi
            l_ki = yi / D[i]
            D[k] -= l_ki * yi
            Li[p2] = k
            Lx[p2] = l_ki
            lnz[i] += 1
            top += 1
        if D[k] == 0.0:
            return k
    return n


cdef void _ldl_solve(int n, int[::1] Lp, int[::1] Li, double[::1] Lx,
                     double[::1] D, int[::1] perm, double[::1] work,
                     double[::1] x) noexcept nogil:
    cdef int j, p
    for j in range(n):
        work[j] = x[perm[j]]
    for j in range(n):
        for p in range(Lp[j], Lp[j + 1]):
            work[Li[p]] -= Lx[p] * work[j]
    for j in range(n):
        work[j] /= D[j]
    for j in range(n - 1, -1, -1):
        for p in range(Lp[j], Lp[j + 1]):
            work[j] -= Lx[p] * work[Li[p]]
    for j in range(n):
        x[perm[j]] = work[j]


cdef inline void _csr_matvec(int nrows, int[::1] indptr, int[::1] indices,
                             double[::1] data, double[::1] v,
                             double[::1] out) noexcept nogil:
    cdef int r, p
    cdef double acc
    for r in range(nrows):
        acc = 0.0
        for p in range(indptr[r], indptr[r + 1]):
            acc += data[p] * v[indices[p]]
        out[r] = acc


def admm_steps(LDLFactor factor, A, AT, double[::1] q, double[::1] l,
               double[::1] u, double[::1] rho, double sigma, double alpha,
               double[::1] x, double[::1] z, double[::1] y,
               double[::1] dx, double[::1] dy, int nsteps):
    """Advance ``(x, z, y)`` in place by ``nsteps`` relaxed ADMM iterations.

    ``A`` and ``AT`` are CSR matrices of the constraint matrix and its
    transpose.  On return ``dx``/``dy`` hold the change made by the final
    step, which the driver uses for infeasibility certificates.
    """
    cdef int n = x.shape[0]
    cdef int m = z.shape[0]
    cdef int[::1] Ap = np.ascontiguousarray(A.indptr, dtype=np.intc)
    cdef int[::1] Aj = np.ascontiguousarray(A.indices, dtype=np.intc)
    cdef double[::1] Ax = np.ascontiguousarray(A.data, dtype=np.float64)
    cdef int[::1] Tp = np.ascontiguousarray(AT.indptr, dtype=np.intc)
    cdef int[::1] Tj = np.ascontiguousarray(AT.indices, dtype=np.intc)
    cdef double[::1] Tx = np.ascontiguousarray(AT.data, dtype=np.float64)
    cdef double[::1] w = np.empty(m, dtype=np.float64)
    cdef double[::1] rhs = np.empty(n, dtype=np.float64)
    cdef double[::1] zt = np.empty(m, dtype=np.float64)
    cdef int[::1] Lp = factor.Lp
    cdef int[::1] Li = factor.Li
    cdef double[::1] Lx = factor.Lx
    cdef double[::1] D = factor.D
    cdef int[::1] perm = factor.perm
    cdef double[::1] work = np.empty(n, dtype=np.float64)
    cdef int it, i
    cdef double xt, zh, znew, ynew
    with nogil:
        for it in range(nsteps):
            for i in range(m):
                w[i] = rho[i] * z[i] - y[i]
            _csr_matvec(n, Tp, Tj, Tx, w, rhs)
            for i in range(n):
                rhs[i] += sigma * x[i] - q[i]
            _ldl_solve(n, Lp, Li, Lx, D, perm, work, rhs)
            _csr_matvec(m, Ap, Aj, Ax, rhs, zt)
            for i in range(n):
                xt = alpha * rhs[i] + (1.0 - alpha) * x[i]
                dx[i] = xt - x[i]
                x[i] = xt
            for i in range(m):
                zh = alpha * zt[i] + (1.0 - alpha) * z[i]
                znew = zh + y[i] / rho[i]
                if znew < l[i]:
                    znew = l[i]
                elif znew > u[i]:
                    znew = u[i]
                ynew = y[i] + rho[i] * (zh - znew)
                dy[i] = ynew - y[i]
                y[i] = ynew
                z[i] = znew
