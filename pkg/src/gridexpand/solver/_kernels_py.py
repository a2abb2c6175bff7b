"""Pure-Python fallback for the compiled ADMM kernels.

Same interface as the Cython ``_kernels`` module; the factorization is
delegated to SuperLU and the iteration loop runs in numpy.
"""
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

BACKEND = "python"


class LDLFactor:
    """Factorization of a symmetric positive definite matrix.

    Accepts the same arguments as the compiled class (upper triangle of the
    permuted matrix plus the permutation) so the driver is backend-agnostic.
    """

    def __init__(self, upper, perm):
        upper = sp.csc_matrix(upper)
        self.n = upper.shape[0]
        self.perm = np.asarray(perm, dtype=np.intc)
        full = upper + sp.triu(upper, k=1).T
        self._lu = splu(sp.csc_matrix(full), permc_spec="NATURAL",
                        diag_pivot_thresh=0.0)

    @property
    def nnz(self):
        return int(self._lu.L.nnz)

    def solve(self, b):
        b = np.asarray(b, dtype=np.float64)
        out = np.empty_like(b)
        out[self.perm] = self._lu.solve(b[self.perm])
        return out


def admm_steps(factor, A, AT, q, l, u, rho, sigma, alpha, x, z, y, dx, dy,
               nsteps):
    for _ in range(nsteps):
        rhs = AT @ (rho * z - y) + sigma * x - q
        xt = factor.solve(rhs)
        zt = A @ xt
        xn = alpha * xt + (1.0 - alpha) * x
        dx[:] = xn - x
        x[:] = xn
        zh = alpha * zt + (1.0 - alpha) * z
        znew = np.clip(zh + y / rho, l, u)
        yn = y + rho * (zh - znew)
        dy[:] = yn - y
        y[:] = yn
        z[:] = znew
