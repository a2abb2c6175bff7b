import time

import numpy as np
import pytest
import scipy.sparse as sp

from gridexpand.model import apply_policy
from gridexpand.qp import ExpansionPlan, QuadraticProgram, build_centralized, build_lower_level
from gridexpand.solver import (OPTIMAL, PRIMAL_INFEASIBLE, NotConcaveError, QpWorkspace,
                               SolverSettings, available, solve_qp)

from oracles import active_set_oracle, micro_system

MICRO_INSTANCES = 24


def _qp(H, c, A, rl, ru, vl, vu):
    return QuadraticProgram(sp.csc_matrix(np.atleast_2d(H)), np.asarray(c, float),
                            sp.csr_matrix(np.atleast_2d(A)), np.asarray(rl, float),
                            np.asarray(ru, float), np.asarray(vl, float), np.asarray(vu, float))


def test_scalar_analytic():
    # maximize 260x - 0.02x^2 with 0 <= x <= 1000
    qp = _qp([[-0.04]], [260.0], np.zeros((0, 1)), [], [], [0.0], [1000.0])
    sol = solve_qp(qp)
    assert sol.status == OPTIMAL
    assert sol.x[0] == pytest.approx(1000.0, rel=1e-9)
    assert sol.bound_duals[0] == pytest.approx(260.0 - 0.04 * 1000.0, rel=1e-7)


def test_infeasible_certificate():
    qp = _qp([[0.0]], [0.0], [[1.0]], [1.0], [np.inf], [-np.inf], [0.0])
    sol = solve_qp(qp)
    assert sol.status == PRIMAL_INFEASIBLE
    assert sol.certificate is not None


def test_rejects_convex_objective():
    qp = _qp([[1.0]], [0.0], np.zeros((0, 1)), [], [], [0.0], [1.0])
    with pytest.raises(NotConcaveError):
        solve_qp(qp)


def test_micro_instances_match_active_set_oracle():
    rng = np.random.default_rng(20240611)
    t0 = time.perf_counter()
    expanded = 0
    for i in range(MICRO_INSTANCES):
        system, policy = micro_system(rng, two_nodes=bool(i % 2))
        eff = apply_policy(system, policy)
        if i % 4 == 3:
            qp, ix = build_lower_level(system, eff, ExpansionPlan((rng.uniform(0.0, 20.0),)))
        else:
            qp, ix = build_centralized(system, eff)
        x_ref, f_ref = active_set_oracle(qp)
        sol = solve_qp(qp)
        assert sol.status == OPTIMAL
        assert sol.objective == pytest.approx(f_ref, rel=1e-6), f"instance {i}"
        expanded += bool(np.any(x_ref[np.r_[ix.g_e_plus, ix.g_r_plus]] > 1e-6))
    assert time.perf_counter() - t0 < 60.0
    assert expanded > 0  # the sample exercises capacity expansion


def test_strong_duality(three_node):
    system, _, eff = three_node
    qp, _ = build_centralized(system, eff)
    sol = solve_qp(qp)
    assert sol.residuals["gap"] <= 1e-6 * (1.0 + abs(sol.objective))


def test_cvxpy_reference_three_node(three_node):
    cp = pytest.importorskip("cvxpy")
    system, _, eff = three_node
    qp, _ = build_centralized(system, eff)
    x = cp.Variable(qp.num_variables)
    H = -qp.hessian.toarray()
    d = np.diag(H)
    assert np.count_nonzero(H - np.diag(d)) == 0
    obj = -0.5 * cp.sum(cp.multiply(d, cp.square(x))) + qp.c @ x + qp.offset
    A = qp.A.toarray()
    cons = []
    eq = qp.row_lower == qp.row_upper
    if eq.any():
        cons.append(A[eq] @ x == qp.row_upper[eq])
    up = ~eq & np.isfinite(qp.row_upper)
    lo = ~eq & np.isfinite(qp.row_lower)
    if up.any():
        cons.append(A[up] @ x <= qp.row_upper[up])
    if lo.any():
        cons.append(A[lo] @ x >= qp.row_lower[lo])
    fl = np.isfinite(qp.var_lower)
    cons.append(x[np.flatnonzero(fl)] >= qp.var_lower[fl])
    prob = cp.Problem(cp.Maximize(obj), cons)
    prob.solve(solver=cp.CLARABEL)
    sol = solve_qp(qp)
    assert sol.objective == pytest.approx(prob.value, rel=1e-6)


@pytest.mark.skipif("compiled" not in available(), reason="compiled kernels not built")
def test_backends_agree(nordic):
    system, _, eff = nordic
    qp, _ = build_centralized(system, eff)
    a = solve_qp(qp, SolverSettings(backend="compiled"))
    b = solve_qp(qp, SolverSettings(backend="python"))
    assert a.status == b.status == OPTIMAL
    assert a.objective == pytest.approx(b.objective, rel=1e-9)


def test_workspace_reuse_and_warm_start(three_node):
    system, _, eff = three_node
    qp, _ = build_lower_level(system, eff, ExpansionPlan.zero(system))
    ws = QpWorkspace(qp)
    cold = ws.solve()
    warm = ws.solve((cold.x, cold.residuals["y_all"]))
    assert warm.status == OPTIMAL
    assert warm.objective == pytest.approx(cold.objective, rel=1e-9)
    assert warm.iterations <= cold.iterations


def test_pure_python_fallback_selected_by_environment():
    import os
    import subprocess
    import sys
    env = dict(os.environ, GRIDEXPAND_PURE_PYTHON="1")
    r = subprocess.run([sys.executable, "-c",
                        "from gridexpand.solver import BACKEND; print(BACKEND)"],
                       capture_output=True, text=True, env=env)
    assert r.returncode == 0 and r.stdout.strip() == "python"
