import numpy as np
import pytest

from gridexpand import equilibrium
from gridexpand.model import PolicySet, apply_policy
from gridexpand.qp import (BuildError, ExpansionPlan, build_centralized, build_lower_level,
                           expected_variable_count, read_qp_text, write_qp_text)

from builders import single_node


def _count_by_hand(system, central=True):
    # independent count: walk every decision the model defines
    n = 0
    for _s in system.scenarios:
        for _t in system.periods:
            n += len(system.nodes)                       # consumption
            n += len(system.conventional_units)          # conventional output
            n += len(system.renewable_units)             # renewable output
            n += len(system.lines)                       # flows
    n += len(system.lines) if central else 0             # line expansion
    n += sum(1 for u in system.conventional_units if u.expandable)
    n += len(system.renewable_units)
    return n


def test_degenerate_single_node_layout():
    system = single_node()
    qp, ix = build_centralized(system, apply_policy(system, PolicySet.zero()))
    assert qp.num_variables == 3
    kinds = sorted(ix.row_kind(k) for k in range(ix.num_rows))
    assert kinds == ["balance", "conv_cap", "geb"]


def test_three_node_variable_count(three_node):
    system, _, eff = three_node
    qp, ix = build_centralized(system, eff)
    assert qp.num_variables == 51
    assert _count_by_hand(system) == 51 == expected_variable_count(system)
    lq, _ = build_lower_level(system, eff, ExpansionPlan.zero(system))
    assert lq.num_variables == _count_by_hand(system, central=False) == 48


def test_nordic_variable_count(nordic):
    system, _, eff = nordic
    qp, _ = build_centralized(system, eff)
    assert qp.num_variables == _count_by_hand(system) == expected_variable_count(system)


def test_lower_level_is_projection(three_node):
    system, _, eff = three_node
    cq, cix = build_centralized(system, eff)
    lq, lix = build_lower_level(system, eff, ExpansionPlan.zero(system))
    rng = np.random.default_rng(3)
    xl = rng.uniform(0.0, 50.0, lq.num_variables)
    xc = np.zeros(cq.num_variables)
    for k, name in enumerate(lix.var_names):
        xc[cix.var_index(name)] = xl[k]
    # with l+ = 0 the two objectives differ only by line maintenance on installed capacity
    line_maint = sum(ln.maintenance * ln.capacity for ln in system.lines)
    assert cq.objective(xc) == pytest.approx(lq.objective(xl) - line_maint, rel=1e-12)
    # rows other than the transmission budget coincide coefficient by coefficient
    for k, name in enumerate(lix.row_names):
        j = cix.row_index(name)
        a = lq.A.getrow(k).toarray().ravel()
        b = cq.A.getrow(j).toarray().ravel()
        for v, vname in enumerate(lix.var_names):
            assert a[v] == b[cix.var_index(vname)]
    assert "teb" not in {ix[0] for ix in lix.row_names}


def test_plan_sets_flow_bounds(nordic):
    system, _, eff = nordic
    k = system.line_index("SE", "NO")
    levels = [0.0] * len(system.lines)
    levels[k] = 3000.0
    qp, ix = build_lower_level(system, eff, ExpansionPlan(tuple(levels)))
    rows = ix.rows["flow_up"][:, :, k]
    expect = system.durations * (system.lines[k].capacity + 3000.0)
    np.testing.assert_allclose(qp.row_upper[rows], np.broadcast_to(expect, rows.shape))
    other = ix.rows["flow_up"][:, :, (k + 1) % len(system.lines)]
    np.testing.assert_allclose(qp.row_upper[other],
                               np.broadcast_to(system.durations * 1500.0, other.shape))


def test_zero_budgets_give_zero_expansion(three_node):
    system, policy, _ = three_node
    eff = apply_policy(system, policy.replace(teb=0.0, geb={}))
    out = equilibrium.solve_centralized(system, eff)
    assert np.all(out.plan.as_array() == 0.0)
    assert np.all(np.abs(out.g_e_plus) < 1e-6)
    assert np.all(np.abs(out.g_r_plus) < 1e-6)


def test_nesting_identity(three_node):
    system, _, eff = three_node
    central = equilibrium.solve_centralized(system, eff)
    market = equilibrium.solve_market(system, eff, central.plan)
    line_cost = central.plan.maintenance_cost(system) + central.plan.investment_cost(system)
    assert market.objective - line_cost == pytest.approx(central.objective, rel=1e-6)


def test_ramp_rows_only_after_first_period(three_node):
    system, _, eff = three_node
    _, ix = build_centralized(system, eff)
    assert np.all(ix.rows["ramp_up"][:, 0] == -1)
    assert np.all(ix.rows["ramp_up"][:, 1] >= 0)


def test_plan_validation(three_node):
    system, _, eff = three_node
    with pytest.raises(BuildError):
        ExpansionPlan((1.0, -1.0, 0.0))
    with pytest.raises(BuildError):
        ExpansionPlan.from_mapping(system, {("1", "9"): 5.0})
    plan = ExpansionPlan.from_mapping(system, {("3", "2"): 5.0})
    assert plan.levels[system.line_index("2", "3")] == 5.0


def test_qp_text_round_trip(tmp_path, three_node):
    system, _, eff = three_node
    qp, _ = build_centralized(system, eff)
    path = tmp_path / "model.qp"
    write_qp_text(qp, path)
    back = read_qp_text(path)
    assert (back.hessian != qp.hessian).nnz == 0
    assert (back.A != qp.A).nnz == 0
    np.testing.assert_array_equal(back.c, qp.c)
    np.testing.assert_array_equal(back.row_lower, qp.row_lower)
    np.testing.assert_array_equal(back.row_upper, qp.row_upper)
    assert back.offset == qp.offset
