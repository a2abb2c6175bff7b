"""Compare the compiled and pure-Python solver kernels.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--plans 64]

Times three workloads per backend: one planner solve of each packaged
system and a warm-started run of market solves over consecutive plans of
the Nordic {0, 9000} grid.  Objectives are compared across backends.
"""
import argparse
import statistics
import time

from gridexpand import bilevel, io
from gridexpand.equilibrium import MarketSolver, output_factors
from gridexpand.model import apply_policy
from gridexpand.qp import ExpansionPlan, build_centralized
from gridexpand.solver import QpWorkspace, SolverSettings, available


def _load(name):
    system, policy = io.load_system(io.packaged(name))
    return system, apply_policy(system, policy)


def bench_central(name, backend, repeat):
    system, eff = _load(name)
    qp, _ = build_centralized(system, eff)
    settings = SolverSettings(backend=backend)
    times, obj, its = [], None, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        sol = QpWorkspace(qp, settings).solve()
        times.append(time.perf_counter() - t0)
        obj, its = sol.objective, sol.iterations
    return statistics.median(times), obj, its


def bench_market_run(backend, plans, repeat):
    system, eff = _load("nordic5_synth.cfg")
    grid = bilevel.PlanGrid.uniform(system, [0, 9000])
    settings = SolverSettings(backend=backend)
    times, total = [], 0.0
    for _ in range(repeat):
        solver = MarketSolver(system, eff, settings)
        t0 = time.perf_counter()
        total = 0.0
        for i in range(plans):
            plan = ExpansionPlan(grid.plan_at(i))
            out = solver.solve(plan)
            total += output_factors(system, eff, plan, out).welfare
        times.append(time.perf_counter() - t0)
    return statistics.median(times), total, None


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--plans", type=int, default=64)
    args = ap.parse_args(argv)

    backends = available()
    if "compiled" not in backends:
        print("compiled kernels not built; only the pure-Python backend is available")
    workloads = [
        ("central 3-node", lambda b: bench_central("illustrative_3node.cfg", b, args.repeat)),
        ("central nordic", lambda b: bench_central("nordic5_synth.cfg", b, args.repeat)),
        (f"market x{args.plans} nordic",
         lambda b: bench_market_run(b, args.plans, max(1, args.repeat // 2))),
    ]
    print(f"{'workload':<22}{'backend':<10}{'median s':>10}{'speedup':>9}  value")
    for label, fn in workloads:
        res = {b: fn(b) for b in backends}
        base = res["python"][0]
        for b in backends:
            t, val, its = res[b]
            extra = f" ({its} it)" if its is not None else ""
            print(f"{label:<22}{b:<10}{t:>10.4f}{base / t:>8.1f}x  {val:.10g}{extra}")
        vals = [res[b][1] for b in backends]
        spread = (max(vals) - min(vals)) / max(1.0, abs(vals[0]))
        print(f"{'':<22}{'rel. diff':<10}{spread:>10.1e}")


if __name__ == "__main__":
    main()
