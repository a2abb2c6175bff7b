import dataclasses
import itertools
import time

import pytest

from gridexpand import bilevel, equilibrium, io
from gridexpand.model import apply_policy
from gridexpand.qp import ExpansionPlan

from builders import two_lines

EXACT_ON_GRID = 1e7 / 15000.0  # teb / I^l of the 3-node fixture: the planner spends it all on one line


def _sequential_best(system, eff, grid_levels):
    """Cold solve of every in-budget plan; ties to the smaller plan."""
    best = None
    for levels in itertools.product(*grid_levels):
        cost = sum(ln.investment * v for ln, v in zip(system.lines, levels))
        if cost > eff.teb * (1 + 1e-12) + 1e-9:
            continue
        plan = ExpansionPlan(levels)
        out = equilibrium.solve_market(system, eff, plan)
        w = equilibrium.output_factors(system, eff, plan, out).welfare
        if best is None or w > best[1] + 1e-9 * abs(best[1]):
            best = (levels, w)
    return best


def test_grid_counts(nordic):
    system = nordic[0]
    grid = bilevel.PlanGrid.uniform(system, [0, 3000, 6000, 9000])
    assert grid.count == 4 ** 10 == 1_048_576
    n = sum(1 for _ in bilevel.candidate_plans(system, grid, float("inf")))
    assert n == 1_048_576


def test_singleton_grid(three_node):
    system = three_node[0]
    plans = list(bilevel.candidate_plans(system, bilevel.PlanGrid.uniform(system, [0]), 0.0))
    assert plans == [ExpansionPlan.zero(system)]


def test_budget_pruning():
    system = two_lines(investment=1.0)
    grid = bilevel.PlanGrid.uniform(system, [0, 100])
    plans = [p.levels for p in bilevel.candidate_plans(system, grid, 150.0)]
    assert plans == [(0.0, 0.0), (0.0, 100.0), (100.0, 0.0)]


def test_grid_parse_and_order(three_node):
    system = three_node[0]
    g = bilevel.PlanGrid.parse(system, "0,1;0,2,3;0")
    assert g.sizes == (2, 3, 1)
    assert [g.plan_at(i) for i in range(g.count)] == list(itertools.product(*g.levels))
    for bad in ("1,2", "0,2,1", "0,1;0,1", "0,-1"):
        with pytest.raises(ValueError):
            bilevel.PlanGrid.parse(system, bad)


def test_enum_matches_sequential(three_node):
    system, policy, _ = three_node
    eff = apply_policy(system, policy.replace(teb=1e12, geb={"G1": 1e12, "G2": 1e12}))
    grid = bilevel.PlanGrid.uniform(system, [0, 1])
    sol = bilevel.solve_bilevel_enum(system, eff, grid, keep_log=True)
    levels, w = _sequential_best(system, eff, grid.levels)
    assert sol.plan.levels == levels
    assert sol.welfare == pytest.approx(w, rel=1e-9)
    assert sol.generated == 8 and sol.solved == 8 and len(sol.log) == 8


def test_zero_budget_gives_zero_plan(three_node):
    system, policy, _ = three_node
    eff = apply_policy(system, policy.replace(teb=0.0))
    grid = bilevel.PlanGrid.uniform(system, [0, 10, 20])
    sol = bilevel.solve_bilevel_enum(system, eff, grid)
    market = equilibrium.solve_market(system, eff, ExpansionPlan.zero(system))
    assert sol.plan == ExpansionPlan.zero(system)
    assert sol.welfare == pytest.approx(
        equilibrium.output_factors(system, eff, None, market).welfare, rel=1e-9)
    exact = bilevel.solve_bilevel_exact(system, eff)
    assert exact.plan == ExpansionPlan.zero(system)
    assert exact.welfare == pytest.approx(sol.welfare, rel=1e-6)


def test_exact_equals_centralized(three_node):
    system, _, eff = three_node
    t0 = time.perf_counter()
    sol = bilevel.solve_bilevel_exact(system, eff)
    assert time.perf_counter() - t0 < 10.0
    central = equilibrium.solve_centralized(system, eff)
    assert sol.welfare == pytest.approx(central.objective, rel=1e-5)
    assert sol.central_welfare == pytest.approx(central.objective, rel=1e-9)


def test_exact_optimum_on_grid(three_node):
    system, _, eff = three_node
    exact = bilevel.solve_bilevel_exact(system, eff)
    assert exact.plan.levels == pytest.approx((0.0, 0.0, EXACT_ON_GRID), rel=1e-7)
    grid = bilevel.PlanGrid.uniform(system, [0.0, EXACT_ON_GRID])
    enum = bilevel.solve_bilevel_enum(system, eff, grid)
    assert enum.welfare == pytest.approx(exact.welfare, rel=1e-6)
    off = bilevel.PlanGrid.uniform(system, [0.0, 300.0])
    worse = bilevel.solve_bilevel_enum(system, eff, off)
    assert worse.welfare <= exact.welfare * (1 + 1e-6)
    assert worse.welfare < exact.welfare


def test_grid_cap(nordic):
    system, _, eff = nordic
    grid = bilevel.PlanGrid.uniform(system, [0, 1, 2, 3, 4])
    with pytest.raises(ValueError):
        bilevel.solve_bilevel_enum(system, eff, grid)


def test_nordic_reduced_grid(nordic):
    system, policy, _ = nordic
    # budget lifted so that every plan of the grid is solved
    eff = apply_policy(system, policy.replace(teb=1e12))
    grid = bilevel.PlanGrid.uniform(system, [0, 9000])
    t0 = time.perf_counter()
    enum = bilevel.solve_bilevel_enum(system, eff, grid)
    elapsed = time.perf_counter() - t0
    assert enum.generated == 1024 and enum.pruned == 0 and enum.solved == 1024
    assert not enum.failed
    assert elapsed < 600.0
    exact = bilevel.solve_bilevel_exact(system, eff)
    assert enum.welfare <= exact.welfare * (1 + 1e-6)


def test_nordic_budget_pruned(nordic):
    system, _, eff = nordic
    grid = bilevel.PlanGrid.uniform(system, [0, 9000])
    enum = bilevel.solve_bilevel_enum(system, eff, grid)
    assert enum.generated == 1024
    assert enum.solved + enum.pruned == 1024 and enum.pruned > 0
    exact = bilevel.solve_bilevel_exact(system, eff)
    assert enum.welfare <= exact.welfare * (1 + 1e-6)


def _serialized(sol):
    return io.to_json_text(sol).encode()


def test_workers_deterministic(nordic):
    system, _, eff = nordic
    grid = bilevel.PlanGrid.uniform(system, [0, 9000])
    one = bilevel.solve_bilevel_enum(system, eff, grid, workers=1, block_size=16,
                                     keep_log=True)
    three = bilevel.solve_bilevel_enum(system, eff, grid, workers=3, block_size=16,
                                       keep_log=True)
    assert one.plan == three.plan
    assert _serialized(one) == _serialized(three)


def test_kill_and_resume(tmp_path, three_node):
    system, policy, _ = three_node
    eff = apply_policy(system, policy.replace(teb=1e12))
    grid = bilevel.PlanGrid.uniform(system, [0, 100, 400])
    ref = bilevel.solve_bilevel_enum(system, eff, grid, block_size=4, keep_log=True)
    ck = tmp_path / "enum.ckpt"
    with pytest.raises(bilevel.EnumerationInterrupted):
        bilevel.solve_bilevel_enum(system, eff, grid, block_size=4, checkpoint=ck,
                                   stop_after_blocks=2)
    # simulate a crash mid-block: a dangling candidate line after the last block marker
    with open(ck, "a", encoding="utf-8") as fh:
        fh.write("cand 999 1.0,2.0,3.0 optimal 1e30 0.5 1.0\n")
    assert len(bilevel.read_checkpoint(ck)) == 2
    with pytest.raises(bilevel.EnumerationInterrupted):
        bilevel.solve_bilevel_enum(system, eff, grid, block_size=4, checkpoint=ck,
                                   stop_after_blocks=3, workers=2)
    resumed = bilevel.solve_bilevel_enum(system, eff, grid, block_size=4, checkpoint=ck,
                                         keep_log=True)
    assert resumed.plan == ref.plan
    assert _serialized(resumed) == _serialized(ref)


def test_checkpoint_rejects_other_inputs(tmp_path, three_node):
    system, policy, _ = three_node
    eff = apply_policy(system, policy)
    grid = bilevel.PlanGrid.uniform(system, [0, 100])
    ck = tmp_path / "enum.ckpt"
    bilevel.solve_bilevel_enum(system, eff, grid, block_size=2, checkpoint=ck)
    other = apply_policy(system, dataclasses.replace(policy, teb=2e7))
    with pytest.raises(ValueError):
        bilevel.solve_bilevel_enum(system, other, grid, block_size=2, checkpoint=ck)


def test_teb_invariance_small_geb(three_node):
    system, policy, _ = three_node
    welfare = []
    for teb in (1e5, 1e8):
        eff = apply_policy(system, policy.replace(teb=teb, geb={"G1": 1e6, "G2": 1e6}))
        grid = bilevel.PlanGrid.uniform(system, [0, 3, 6])
        welfare.append(bilevel.solve_bilevel_enum(system, eff, grid).welfare)
    assert welfare[0] == pytest.approx(welfare[1], rel=1e-6)
