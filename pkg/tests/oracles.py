"""Independent reference solvers used by the tests.

``active_set_oracle`` solves a small QP by enumerating candidate active sets
and solving each equality-constrained KKT system densely; the best point
that is primal feasible with correctly signed multipliers is optimal.  It
shares no code with the ADMM solver.
"""
import itertools

import numpy as np

from gridexpand.model import (ConventionalUnit, EnergySystem, Line, PolicySet,
                              RenewableUnit)


def dense_form(qp):
    """``min 0.5 x'Px + q'x  s.t.  G x <= h, E x = b`` from a QuadraticProgram."""
    P = -qp.hessian.toarray()
    q = -np.asarray(qp.c, float)
    A = qp.A.toarray()
    n = qp.num_variables
    G, h, E, b = [], [], [], []
    for i in range(A.shape[0]):
        lo, hi = qp.row_lower[i], qp.row_upper[i]
        if lo == hi:
            E.append(A[i]); b.append(hi)
            continue
        if np.isfinite(hi):
            G.append(A[i]); h.append(hi)
        if np.isfinite(lo):
            G.append(-A[i]); h.append(-lo)
    eye = np.eye(n)
    for j in range(n):
        if np.isfinite(qp.var_upper[j]):
            G.append(eye[j]); h.append(qp.var_upper[j])
        if np.isfinite(qp.var_lower[j]):
            G.append(-eye[j]); h.append(-qp.var_lower[j])
    G = np.array(G).reshape(-1, n)
    E = np.array(E).reshape(-1, n)
    return P, q, G, np.array(h, float), E, np.array(b, float)


def active_set_oracle(qp, tol=1e-9):
    """Return ``(x, objective)`` of the QP in its maximization sense."""
    P, q, G, h, E, b = dense_form(qp)
    n, me, mi = P.shape[0], E.shape[0], G.shape[0]
    hscale = 1.0 + np.abs(h)
    best = None
    for k in range(0, n - me + 1):
        for W in itertools.combinations(range(mi), k):
            W = list(W)
            C = np.vstack([E, G[W]])
            m = C.shape[0]
            K = np.zeros((n + m, n + m))
            K[:n, :n] = P
            K[:n, n:] = C.T
            K[n:, :n] = C
            rhs = np.concatenate([-q, b, h[W]])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            if not np.all(np.isfinite(sol)):
                continue
            x, mu = sol[:n], sol[n + me:]
            if np.any(G @ x - h > tol * hscale):
                continue
            if np.any(mu < -tol * (1.0 + np.abs(mu).max(initial=0.0))):
                continue
            val = qp.objective(x)
            if best is None or val > best[1]:
                best = (x, val)
    if best is None:
        raise RuntimeError("oracle found no KKT point")
    return best


def micro_system(rng, two_nodes):
    """Random instance with at most two nodes and two periods.

    One node: two periods with ramp limits.  Two nodes: one period, one
    line, renewable capacity at the first node only.
    """
    if two_nodes:
        nodes, T = ("a", "b"), 1
    else:
        nodes, T = ("a",), 2
    N = len(nodes)
    dur = rng.uniform(10.0, 100.0, T)
    intercept = rng.uniform(60.0, 300.0, (1, T, N))
    slope = rng.uniform(0.01, 0.2, (1, T, N))
    avail = rng.uniform(0.1, 0.9, (1, T, N))
    ramp = rng.uniform(0.3, 0.9) if T == 2 else 1.0
    conv = tuple(ConventionalUnit(n, "p", "gas", rng.uniform(0.0, 80.0),
                                  rng.uniform(10.0, 80.0), rng.uniform(0.0, 500.0),
                                  rng.uniform(200.0, 4000.0), ramp, ramp)
                 for n in nodes)
    vre = (RenewableUnit("a", "p", "wind", rng.uniform(0.0, 40.0), rng.uniform(0.0, 500.0),
                         rng.uniform(200.0, 4000.0)),)
    lines = ()
    if two_nodes:
        lines = (Line("a", "b", rng.uniform(0.0, 30.0), rng.uniform(0.0, 100.0),
                      rng.uniform(50.0, 2000.0)),)
    system = EnergySystem(
        nodes=nodes, producers=("p",), conventional_techs=("gas",),
        renewable_techs=("wind",), scenarios=("s",), probabilities=[1.0],
        periods=tuple(f"t{t}" for t in range(T)), durations=dur,
        intercept=intercept, slope=slope, availability={"wind": avail},
        lines=lines, conventional_units=conv, renewable_units=vre, name="micro")
    policy = PolicySet(carbon_tax={"gas": rng.uniform(0.0, 30.0)},
                       vre_incentive={n: rng.uniform(0.0, 0.5) for n in nodes},
                       teb=rng.choice([1e3, 1e5, 1e9]),
                       geb={"p": rng.choice([5e3, 5e4, 1e9])})
    return system, policy
