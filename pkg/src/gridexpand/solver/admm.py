"""Operator-splitting QP solver with active-set polishing.

Problems are handed over in the concave-maximization form used throughout the
package::

    maximize    0.5 x'Hx + c'x + offset
    subject to  row_lower <= A x <= row_upper
                var_lower <=   x <= var_upper

with H negative semidefinite.  Internally the solver works on the equivalent
minimization ``0.5 x'Px + q'x`` with ``P = -H`` and ``q = -c`` and stacks the
finite variable bounds below the constraint rows.

The iteration is the relaxed ADMM splitting on the reduced system
``(P + sigma I + A' diag(rho) A)``, after Ruiz equilibration.  Once residuals
are small the active set is guessed from the iterates and the equality
constrained KKT system is solved exactly (with primal-dual active set
corrections), which yields duals accurate to round-off.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.sparse.linalg import splu

from . import backend as _backend

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
PRIMAL_INFEASIBLE = "primal_infeasible"
DUAL_INFEASIBLE = "dual_infeasible"
ITERATION_LIMIT = "iteration_limit"


class NotConcaveError(ValueError):
    """Raised when the quadratic term is not negative semidefinite."""


@dataclass(frozen=True)
class SolverSettings:
    """Tuning knobs for :func:`solve_qp`.

    ``eps_abs``/``eps_rel`` are the acceptance tolerances of the returned
    solution; everything else only affects speed.
    """

    max_iterations: int = 50000
    eps_abs: float = 1e-8
    eps_rel: float = 1e-6
    polish: bool = True
    eps_infeasible: float = 1e-6
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    adaptive_rho: bool = True
    scaling_iterations: int = 15
    check_interval: int = 25
    polish_trigger: float = 1e-3
    polish_passes: int = 30
    polish_delta: float = 1e-7
    polish_refine: int = 50
    backend: str | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        for name in ("eps_abs", "eps_rel", "eps_infeasible", "rho", "sigma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.alpha < 2:
            raise ValueError("alpha must lie in (0, 2)")
        if self.check_interval < 1:
            raise ValueError("check_interval must be >= 1")


@dataclass
class QpSolution:
    """Result of a QP solve, expressed in the maximization convention.

    ``row_duals`` are nonnegative on binding upper bounds and nonpositive on
    binding lower bounds (free on equalities); ``bound_duals`` follow the same
    rule for the variable bounds, so a binding ``x >= 0`` has a nonpositive
    entry.  ``certificate`` holds the infeasibility ray when one was found.
    """

    status: str
    x: np.ndarray
    row_duals: np.ndarray
    bound_duals: np.ndarray
    objective: float
    iterations: int
    residuals: dict = field(default_factory=dict)
    polished: bool = False
    certificate: np.ndarray | None = None

    @property
    def optimal(self):
        return self.status == OPTIMAL


def _check_concave(H):
    H = sp.csc_matrix(H)
    if H.nnz == 0:
        return
    asym = abs(H - H.T)
    if asym.nnz and asym.max() > 1e-12 * max(1.0, abs(H).max()):
        raise NotConcaveError("quadratic matrix is not symmetric")
    off = H - sp.diags(H.diagonal())
    if off.count_nonzero() == 0:
        if np.any(H.diagonal() > 0):
            raise NotConcaveError("positive curvature on the diagonal")
        return
    dense = H.toarray()
    w = np.linalg.eigvalsh(dense)
    if w.max() > 1e-10 * max(1.0, abs(w).max()):
        raise NotConcaveError("quadratic matrix has a positive eigenvalue")


def _inf_norm(v):
    return float(np.max(np.abs(v))) if v.size else 0.0


def _finite_inf_norm(v):
    v = v[np.isfinite(v)]
    return _inf_norm(v)


def _equilibrate(P, A, q, iterations, d0=None):
    """Ruiz equilibration of the KKT matrix ``[[P, A'], [A, 0]]``.

    ``d0`` is an initial column scaling (variable units) applied first.
    """
    n = P.shape[0]
    m = A.shape[0]
    D = np.ones(n) if d0 is None else np.asarray(d0, dtype=float).copy()
    E = np.ones(m)
    Dm = sp.diags(D)
    P = sp.csc_matrix(Dm @ sp.csc_matrix(P) @ Dm)
    A = sp.csc_matrix(sp.csc_matrix(A) @ Dm)
    q = D * q
    for _ in range(iterations):
        col_p = abs(P).max(axis=0).toarray().ravel() if P.nnz else np.zeros(n)
        col_a = abs(A).max(axis=0).toarray().ravel() if A.nnz else np.zeros(n)
        row_a = abs(A).max(axis=1).toarray().ravel() if A.nnz else np.zeros(m)
        dn = np.maximum(col_p, col_a)
        dn = np.where(dn < 1e-4, 1.0, np.minimum(dn, 1e4))
        em = np.where(row_a < 1e-4, 1.0, np.minimum(row_a, 1e4))
        dn = 1.0 / np.sqrt(dn)
        em = 1.0 / np.sqrt(em)
        Dm = sp.diags(dn)
        P = sp.csc_matrix(Dm @ P @ Dm)
        A = sp.csc_matrix(sp.diags(em) @ A @ Dm)
        q = dn * q
        D *= dn
        E *= em
    mean_p = abs(P).max(axis=0).toarray().mean() if P.nnz else 0.0
    cost = max(mean_p, _inf_norm(q))
    cost = 1.0 if cost < 1e-4 else min(cost, 1e4)
    c = 1.0 / cost
    return P * c, A, q * c, D, E, c


class QpWorkspace:
    """Reusable solver state for one problem structure.

    Row bounds may be changed between solves with :meth:`update_bounds`;
    the factorization is kept, which is what makes warm-started enumeration
    over many plans cheap.
    """

    def __init__(self, qp, settings=None):
        self.settings = settings or SolverSettings()
        self.kernels = (_backend.load(self.settings.backend)
                        if self.settings.backend else _backend.kernels)
        _check_concave(qp.hessian)
        self.qp = qp
        n = qp.num_variables
        self.n = n
        self.m_rows = qp.num_rows
        bounded = np.flatnonzero(np.isfinite(qp.var_lower) | np.isfinite(qp.var_upper))
        self.bounded = bounded
        eye = sp.csr_matrix((np.ones(bounded.size), (np.arange(bounded.size), bounded)),
                            shape=(bounded.size, n))
        A = sp.vstack([sp.csr_matrix(qp.A), eye]).tocsc()
        A.eliminate_zeros()
        self.A = A
        self.AT_orig = sp.csr_matrix(A.T)
        self.P = sp.csc_matrix(-sp.csc_matrix(qp.hessian))
        self.q = -np.asarray(qp.c, dtype=float)
        self.m = A.shape[0]
        self.l = np.concatenate([qp.row_lower, qp.var_lower[bounded]]).astype(float)
        self.u = np.concatenate([qp.row_upper, qp.var_upper[bounded]]).astype(float)

        Ps, As, qs, D, E, c = _equilibrate(self.P, self.A, self.q,
                                           self.settings.scaling_iterations,
                                           getattr(qp, "var_scale", None))
        self.Ps = Ps
        self.As_csr = sp.csr_matrix(As)
        self.AsT_csr = sp.csr_matrix(As.T)
        self.qs = qs
        self.D, self.E, self.c = D, E, c
        self._scale_bounds()
        self._init_rho()
        self.x = np.zeros(n)
        self.z = np.zeros(self.m)
        self.y = np.zeros(self.m)
        self._perm = None
        self._factor()

    # ------------------------------------------------------------ setup
    def _scale_bounds(self):
        self.ls = self.E * self.l
        self.us = self.E * self.u
        self.eq = np.isclose(self.l, self.u, rtol=0.0, atol=1e-12) & np.isfinite(self.l)

    def _init_rho(self):
        s = self.settings
        self.rho_base = s.rho
        self.rho_vec = self._rho_vector(s.rho)

    def _rho_vector(self, rho):
        vec = np.full(self.m, float(rho))
        vec[self.eq] = 1e3 * rho
        free = ~np.isfinite(self.l) & ~np.isfinite(self.u)
        vec[free] = 1e-6
        return vec

    def _factor(self):
        s = self.settings
        K = (self.Ps + s.sigma * sp.eye(self.n, format="csc")
             + self.AsT_csr @ sp.diags(self.rho_vec) @ self.As_csr)
        K = sp.csc_matrix(K)
        if self._perm is None:
            self._perm = reverse_cuthill_mckee(sp.csr_matrix(K), symmetric_mode=True)
        perm = self._perm
        Kp = K[perm][:, perm]
        upper = sp.triu(Kp, format="csc")
        upper.sort_indices()
        self.factor = self.kernels.LDLFactor(upper, perm.astype(np.intc))

    def update_bounds(self, row_lower=None, row_upper=None):
        """Replace the constraint row bounds (unscaled, QP row order)."""
        k = self.m_rows
        if row_lower is not None:
            self.l[:k] = row_lower
        if row_upper is not None:
            self.u[:k] = row_upper
        old_eq = self.eq
        self._scale_bounds()
        if not np.array_equal(old_eq, self.eq):
            self.rho_vec = self._rho_vector(self.rho_base)
            self._factor()

    def reset(self):
        """Return to the initial step size (refactoring if it changed)."""
        if self.rho_base != self.settings.rho:
            self._init_rho()
            self._factor()
        self.x[:] = 0.0
        self.z[:] = 0.0
        self.y[:] = 0.0

    # ------------------------------------------------------------ helpers
    def _unscaled(self):
        x = self.D * self.x
        z = self.z / self.E
        y = self.E * self.y / self.c
        return x, z, y

    def _set_warm(self, x, y):
        x = np.asarray(x, dtype=float)
        self.x = x / self.D
        if y is None:
            self.y = np.zeros(self.m)
        else:
            self.y = self.c * np.asarray(y, dtype=float) / self.E
        self.z = np.clip(self.As_csr @ self.x, self.ls, self.us)

    def _objective(self, x):
        qp = self.qp
        return float(0.5 * x @ (qp.hessian @ x) + np.dot(qp.c, x) + qp.offset)

    def _split_duals(self, y):
        k = self.m_rows
        row = y[:k].copy()
        bnd = np.zeros(self.n)
        bnd[self.bounded] = y[k:]
        return row, bnd

    def kkt_check(self, x, y):
        """Unscaled residuals of a candidate primal-dual pair and a verdict."""
        s = self.settings
        A, l, u = self.A, self.l, self.u
        Ax = A @ x
        proj = np.clip(Ax, l, u)
        prim = _inf_norm(Ax - proj)
        eps_prim = s.eps_abs + s.eps_rel * max(_inf_norm(Ax), _inf_norm(proj))
        Px = self.P @ x
        ATy = self.AT_orig @ y
        dual_vec = Px + self.q + ATy
        dual = _inf_norm(dual_vec)
        eps_dual = s.eps_abs + s.eps_rel * max(_inf_norm(Px), _inf_norm(ATy),
                                               _inf_norm(self.q))
        ypos = np.maximum(y, 0.0)
        yneg = np.minimum(y, 0.0)
        ynorm = _inf_norm(y)
        sign = 0.0
        bad_up = (ypos > 0) & ~np.isfinite(u)
        bad_lo = (yneg < 0) & ~np.isfinite(l)
        if bad_up.any():
            sign = max(sign, float(ypos[bad_up].max()))
        if bad_lo.any():
            sign = max(sign, float(-yneg[bad_lo].min()))
        eps_sign = s.eps_abs + s.eps_rel * ynorm
        up = (ypos > 0) & np.isfinite(u)
        lo = (yneg < 0) & np.isfinite(l)
        compl_scaled = 0.0
        compl = 0.0
        support = 0.0
        if up.any():
            prod = ypos[up] * np.abs(u[up] - Ax[up])
            compl = max(compl, float(prod.max()))
            compl_scaled = max(compl_scaled, float(np.max(
                prod / ((1.0 + np.abs(u[up])) * (1.0 + ypos[up])))))
            support += float(np.dot(u[up], ypos[up]))
        if lo.any():
            prod = -yneg[lo] * np.abs(Ax[lo] - l[lo])
            compl = max(compl, float(prod.max()))
            compl_scaled = max(compl_scaled, float(np.max(
                prod / ((1.0 + np.abs(l[lo])) * (1.0 - yneg[lo])))))
            support += float(np.dot(l[lo], yneg[lo]))
        pobj = float(0.5 * x @ Px + self.q @ x)
        gap = abs(float(x @ Px) + float(self.q @ x) + support)
        eps_gap = s.eps_rel * (1.0 + abs(pobj))
        res = {
            "primal": prim, "dual": dual, "gap": gap,
            "complementarity": compl, "complementarity_scaled": compl_scaled,
            "dual_sign": sign,
            "eps_primal": eps_prim, "eps_dual": eps_dual, "eps_gap": eps_gap,
        }
        ok = (prim <= eps_prim and dual <= eps_dual and sign <= eps_sign
              and compl_scaled <= s.eps_rel and gap <= eps_gap)
        return ok, res

    # ------------------------------------------------------------ polish
    def _polish(self):
        s = self.settings
        n = self.n
        Ps, As = self.Ps, self.As_csr
        ls, us = self.ls, self.us
        x0, y0 = self.x, self.y
        lower = ((self.z - ls < -y0) & np.isfinite(ls)) | self.eq
        upper = ((us - self.z < y0) & np.isfinite(us)) & ~self.eq
        lower &= ~upper
        seen = set()
        for _ in range(s.polish_passes):
            key = (lower.tobytes(), upper.tobytes())
            if key in seen:
                break
            seen.add(key)
            act = np.flatnonzero(lower | upper)
            b = np.where(lower[act], ls[act], us[act])
            Aact = As[act]
            k = act.size
            delta = s.polish_delta
            K0 = sp.bmat([[Ps, Aact.T], [Aact, None]], format="csc")
            reg = sp.diags(np.concatenate([np.full(n, delta), np.full(k, -delta)]))
            try:
                lu = splu(sp.csc_matrix(K0 + reg))
            except RuntimeError as exc:
                log.debug("polish factorization failed: %s", exc)
                return None
            rhs = np.concatenate([-self.qs, b])
            sol = np.concatenate([x0, y0[act]])
            rnorm = np.inf
            for _it in range(s.polish_refine):
                r = rhs - K0 @ sol
                new = _inf_norm(r)
                if new <= 1e-14 * max(1.0, _inf_norm(rhs)) or new >= rnorm * 0.999:
                    break
                rnorm = new
                sol = sol + lu.solve(r)
            if not np.all(np.isfinite(sol)):
                log.debug("polish produced non-finite values")
                return None
            xp = sol[:n]
            y = np.zeros(self.m)
            y[act] = sol[n:]
            Ax = As @ xp
            ftol = 1e-9 * (1.0 + np.abs(np.where(np.isfinite(ls), ls, 0.0)))
            utol = 1e-9 * (1.0 + np.abs(np.where(np.isfinite(us), us, 0.0)))
            stol = 1e-9 * (1.0 + _inf_norm(y))
            inactive = ~(lower | upper)
            add_lo = inactive & (Ax < ls - ftol)
            add_up = inactive & (Ax > us + utol)
            drop_lo = lower & ~self.eq & (y > stol)
            drop_up = upper & (y < -stol)
            log.debug("polish pass %d: active %d add %d drop %d residual %.2e", _, k,
                      int(add_lo.sum() + add_up.sum()), int(drop_lo.sum() + drop_up.sum()), new)
            if not (add_lo.any() or add_up.any() or drop_lo.any() or drop_up.any()):
                return xp, y
            lower = (lower | add_lo) & ~drop_lo
            upper = (upper | add_up) & ~drop_up
            x0 = xp
            y0 = y
        return None

    def _try_polish(self):
        res = self._polish()
        if res is None:
            return None
        xs, ys = res
        x = self.D * xs
        y = self.E * ys / self.c
        ok, resid = self.kkt_check(x, y)
        if not ok:
            log.debug("polish rejected: %s", resid)
            return None
        return x, y, resid

    # ------------------------------------------------------------ infeasibility
    def _primal_infeasible(self, dy):
        eps = self.settings.eps_infeasible
        dy_u = self.E * dy
        norm = _inf_norm(dy_u)
        if norm < 1e-12:
            return False
        if _inf_norm(self.AT_orig @ dy_u) > eps * norm:
            return False
        pos = np.maximum(dy_u, 0.0)
        neg = np.minimum(dy_u, 0.0)
        if np.any((pos > eps * norm) & ~np.isfinite(self.u)):
            return False
        if np.any((neg < -eps * norm) & ~np.isfinite(self.l)):
            return False
        uu = np.where(np.isfinite(self.u), self.u, 0.0)
        ll = np.where(np.isfinite(self.l), self.l, 0.0)
        return float(uu @ pos + ll @ neg) < -eps * norm

    def _dual_infeasible(self, dx):
        eps = self.settings.eps_infeasible
        dx_u = self.D * dx
        norm = _inf_norm(dx_u)
        if norm < 1e-12:
            return False
        if _inf_norm(self.P @ dx_u) > eps * norm:
            return False
        if float(self.q @ dx_u) >= -eps * norm:
            return False
        Adx = self.A @ dx_u
        fin_u = np.isfinite(self.u)
        fin_l = np.isfinite(self.l)
        if np.any(fin_u & (Adx > eps * norm)):
            return False
        if np.any(fin_l & (Adx < -eps * norm)):
            return False
        return True

    # ------------------------------------------------------------ main loop
    def solve(self, warm_start=None):
        """Run the solver; ``warm_start`` is ``(x, y_all)`` or ``(x, None)``.

        ``y_all`` is the stacked dual vector (rows then bounded variables) as
        stored in :attr:`QpSolution.residuals` ``["y_all"]``.
        """
        s = self.settings
        k = self.kernels
        if warm_start is not None:
            self._set_warm(*warm_start)
        dx = np.zeros(self.n)
        dy = np.zeros(self.m)
        it = 0
        next_polish = 0
        checks = 0
        while it < s.max_iterations:
            steps = min(s.check_interval, s.max_iterations - it)
            k.admm_steps(self.factor, self.As_csr, self.AsT_csr, self.qs,
                         self.ls, self.us, self.rho_vec, s.sigma, s.alpha,
                         self.x, self.z, self.y, dx, dy, steps)
            it += steps
            checks += 1
            if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
                break
            x, z, y = self._unscaled()
            Ax = self.A @ x
            prim = _inf_norm(Ax - z)
            Px = self.P @ x
            ATy = self.AT_orig @ y
            dual = _inf_norm(Px + self.q + ATy)
            prim_scale = max(_inf_norm(Ax), _finite_inf_norm(z))
            dual_scale = max(_inf_norm(Px), _inf_norm(ATy), _inf_norm(self.q))
            eps_prim = s.eps_abs + s.eps_rel * prim_scale
            eps_dual = s.eps_abs + s.eps_rel * dual_scale
            converged = prim <= eps_prim and dual <= eps_dual
            rel_p = prim / max(prim_scale, 1e-30)
            rel_d = dual / max(dual_scale, 1e-30)

            if self._primal_infeasible(dy):
                return self._infeasible(PRIMAL_INFEASIBLE, it, self.E * dy)
            if self._dual_infeasible(dx):
                return self._infeasible(DUAL_INFEASIBLE, it, self.D * dx)

            near = rel_p < s.polish_trigger and rel_d < s.polish_trigger
            if s.polish and (converged or (near and checks >= next_polish)):
                out = self._try_polish()
                if out is not None:
                    xp, yp, resid = out
                    return self._finish(xp, yp, it, resid, polished=True)
                next_polish = checks + 4
            if converged:
                ok, resid = self.kkt_check(x, y)
                if ok:
                    return self._finish(x, y, it, resid, polished=False)
            if s.adaptive_rho:
                self._adapt_rho()
        x, z, y = self._unscaled()
        _, resid = self.kkt_check(x, y)
        return self._finish(x, y, it, resid, polished=False, status=ITERATION_LIMIT)

    def _adapt_rho(self):
        Ax = self.As_csr @ self.x
        prim = _inf_norm(Ax - self.z) / max(_inf_norm(Ax), _finite_inf_norm(self.z), 1e-30)
        Px = self.Ps @ self.x
        ATy = self.AsT_csr @ self.y
        dual = _inf_norm(Px + self.qs + ATy) / max(_inf_norm(Px), _inf_norm(ATy),
                                                   _inf_norm(self.qs), 1e-30)
        if prim <= 0 or dual <= 0:
            return
        new = float(np.clip(self.rho_base * np.sqrt(prim / dual), 1e-6, 1e6))
        if new > 5 * self.rho_base or new < 0.2 * self.rho_base:
            self.rho_base = new
            self.rho_vec = self._rho_vector(new)
            self._factor()

    def _finish(self, x, y, it, resid, polished, status=OPTIMAL):
        row, bnd = self._split_duals(y)
        resid = dict(resid)
        resid["y_all"] = y.copy()
        # keep the workspace iterate in sync with the returned point
        self._set_warm(x, y)
        return QpSolution(status=status, x=x.copy(), row_duals=row,
                          bound_duals=bnd, objective=self._objective(x),
                          iterations=it, residuals=resid, polished=polished)

    def _infeasible(self, status, it, ray):
        x, z, y = self._unscaled()
        row, bnd = self._split_duals(y)
        return QpSolution(status=status, x=x, row_duals=row, bound_duals=bnd,
                          objective=float("nan"), iterations=it,
                          residuals={}, polished=False, certificate=ray.copy())


def solve_qp(qp, settings=None, warm_start=None):
    """Solve a concave QP to optimality.

    Parameters
    ----------
    qp : QuadraticProgram
    settings : SolverSettings, optional
    warm_start : tuple, optional
        ``(x, y_all)`` from a previous :class:`QpSolution`.

    Returns
    -------
    QpSolution
    """
    ws = QpWorkspace(qp, settings)
    return ws.solve(warm_start)


__all__ = [
    "SolverSettings", "QpSolution", "QpWorkspace", "solve_qp",
    "NotConcaveError", "OPTIMAL", "PRIMAL_INFEASIBLE", "DUAL_INFEASIBLE",
    "ITERATION_LIMIT",
]
