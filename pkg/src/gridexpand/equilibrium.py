"""Market equilibrium for a fixed transmission plan and its verification.

Dual convention
---------------
Multipliers follow the minimization form of the market program,
``grad(-objective) + sum(dual * grad(row)) = 0``, with every inequality
written as ``row <= 0`` and every capacity/ramp/flow/budget multiplier
nonnegative.  Under this convention the balance multiplier ``theta`` equals
``P_s`` times the inverse-demand price wherever consumption is positive;
``price = theta / P_s`` is stored alongside.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import qp as qpmod
from .model import EffectiveParameters, EnergySystem, apply_policy
from .qp import ExpansionPlan, build_centralized, build_lower_level, flow_row_bounds
from .solver import QpWorkspace, SolverSettings

log = logging.getLogger(__name__)


class SolveError(RuntimeError):
    """A market or planner program did not reach a certified optimum."""

    def __init__(self, message, status=None, residuals=None):
        super().__init__(message)
        self.status = status
        self.residuals = residuals or {}


@dataclass(eq=False)
class MarketOutcome:
    """Primal decisions and multipliers of a solved market (or planner) program.

    Array shapes follow the unit ordering of the system: ``g_e`` is
    ``(S, T, Ue)``, ``g_r`` is ``(S, T, Ur)``, flows are ``(S, T, L)`` and
    positive from the lower- to the higher-indexed node of each line.
    """

    plan: ExpansionPlan
    q: np.ndarray
    g_e: np.ndarray
    g_r: np.ndarray
    f: np.ndarray
    g_e_plus: np.ndarray
    g_r_plus: np.ndarray
    theta: np.ndarray
    beta_e: np.ndarray
    beta_r: np.ndarray
    beta_up: np.ndarray
    beta_down: np.ndarray
    beta_f1: np.ndarray
    beta_f2: np.ndarray
    beta_g: np.ndarray
    lambda_q: np.ndarray
    lambda_e: np.ndarray
    lambda_r: np.ndarray
    lambda_e_plus: np.ndarray
    lambda_r_plus: np.ndarray
    objective: float
    centralized: bool = False
    beta_teb: float = 0.0
    lambda_l_plus: np.ndarray | None = None
    status: str = "optimal"
    iterations: int = 0
    solver_residuals: dict = field(default_factory=dict)
    warm_start: tuple | None = None

    @property
    def lambda_f(self):
        # flows only exist for ordered pairs, so this multiplier is identically zero
        return np.zeros_like(self.f)

    @property
    def l_plus(self):
        return self.plan.as_array()

    def price(self, system):
        """Nodal prices in EUR/MWh (``theta / P_s``)."""
        return self.theta / system.probabilities[:, None, None]


@dataclass
class OutputFactors:
    welfare: float
    vre_share: float
    total_generation: float
    zero_generation: bool = False


@dataclass
class KktReport:
    """Residuals of the market optimality system.

    ``stationarity``, ``complementarity``, ``primal`` and ``dual_sign`` map a
    condition family to its largest scaled residual; ``raw`` holds the
    unscaled residual arrays, entry by entry.
    """

    stationarity: dict
    complementarity: dict
    primal: dict
    dual_sign: dict
    raw: dict
    tolerance: float

    @property
    def worst(self):
        vals = [v for d in (self.stationarity, self.complementarity, self.primal,
                            self.dual_sign) for v in d.values()]
        return max(vals) if vals else 0.0

    @property
    def passed(self):
        return self.worst <= self.tolerance

    def violations(self):
        out = []
        for group, d in (("stationarity", self.stationarity),
                         ("complementarity", self.complementarity),
                         ("primal", self.primal), ("dual_sign", self.dual_sign)):
            for name, v in d.items():
                if v > self.tolerance:
                    out.append(f"{group}.{name} = {v:.3e}")
        return out

    def max_raw(self, name):
        a = self.raw[name]
        return float(np.max(np.abs(a))) if a.size else 0.0


# ------------------------------------------------------------------ assembly
def _take(vec, idx):
    out = np.zeros(idx.shape)
    mask = idx >= 0
    out[mask] = vec[idx[mask]]
    return out


def _assemble_outcome(system, effective, plan, qp, sol, centralized):
    """Translate a QP solution into named decisions and multipliers."""
    ix = qp.index
    x, y, bd = sol.x, sol.row_duals, sol.bound_duals
    rows = ix.rows
    if centralized:
        lp = _take(x, ix.l_plus)
        # drop round-off left by the regularized polish step
        plan = ExpansionPlan(tuple(np.where(lp > 1e-9, lp, 0.0)))
    lam_l = -_take(bd, ix.l_plus) if centralized else None
    teb = float(y[rows["teb"][0]]) if centralized and rows["teb"][0] >= 0 else 0.0
    objective = sol.objective + (qp.constant - qp.offset)
    return MarketOutcome(
        plan=plan,
        q=_take(x, ix.q), g_e=_take(x, ix.g_e), g_r=_take(x, ix.g_r), f=_take(x, ix.f),
        g_e_plus=_take(x, ix.g_e_plus), g_r_plus=_take(x, ix.g_r_plus),
        theta=_take(y, rows["balance"]),
        beta_e=_take(y, rows["conv_cap"]), beta_r=_take(y, rows["vre_cap"]),
        beta_up=_take(y, rows["ramp_up"]), beta_down=_take(y, rows["ramp_down"]),
        beta_f1=_take(y, rows["flow_up"]), beta_f2=_take(y, rows["flow_lo"]),
        beta_g=_take(y, rows["geb"]),
        lambda_q=-_take(bd, ix.q), lambda_e=-_take(bd, ix.g_e),
        lambda_r=-_take(bd, ix.g_r), lambda_e_plus=-_take(bd, ix.g_e_plus),
        lambda_r_plus=-_take(bd, ix.g_r_plus),
        objective=float(objective), centralized=centralized, beta_teb=teb,
        lambda_l_plus=lam_l, status=sol.status, iterations=sol.iterations,
        solver_residuals={k: v for k, v in sol.residuals.items() if k != "y_all"},
        warm_start=(sol.x, sol.residuals.get("y_all")),
    )


def _require_optimal(sol, what):
    if not sol.optimal:
        raise SolveError(f"{what} ended with status {sol.status}", sol.status, sol.residuals)


class MarketSolver:
    """Reusable market solver for one system and policy.

    Only the flow-row bounds depend on the plan, so one factorized
    workspace serves every plan; successive solves are warm-started.
    """

    def __init__(self, system, effective, settings=None):
        self.system = system
        self.effective = effective
        self.settings = settings or SolverSettings()
        self.qp, _ = build_lower_level(system, effective, ExpansionPlan.zero(system))
        self.workspace = QpWorkspace(self.qp, self.settings)
        self._last = None

    def reset(self):
        self.workspace.reset()
        self._last = None

    def solve(self, plan, warm_start=True):
        if not isinstance(plan, ExpansionPlan):
            plan = ExpansionPlan(tuple(plan))
        if len(plan) != len(self.system.lines):
            raise qpmod.BuildError(f"plan has {len(plan)} entries for "
                                   f"{len(self.system.lines)} lines")
        lo, hi = flow_row_bounds(self.qp, plan)
        self.workspace.update_bounds(lo, hi)
        qp = self.qp.with_row_bounds(lo, hi)
        if not warm_start or self._last is None:
            self.workspace.reset()
        sol = self.workspace.solve(self._last if warm_start else None)
        if not sol.optimal and warm_start and self._last is not None:
            log.debug("warm-started solve failed (%s); retrying cold", sol.status)
            self.workspace.reset()
            sol = self.workspace.solve(None)
        _require_optimal(sol, "market program")
        self._last = (sol.x, sol.residuals["y_all"])
        return _assemble_outcome(self.system, self.effective, plan, qp, sol, False)


def solve_market(system: EnergySystem, effective: EffectiveParameters, plan,
                 settings: SolverSettings | None = None) -> MarketOutcome:
    """Perfect-competition market outcome for a fixed transmission plan."""
    return MarketSolver(system, effective, settings).solve(plan, warm_start=False)


def solve_centralized(system, effective, settings=None, include_constants=True):
    """Solve the planner program; the returned outcome carries the optimal plan.

    ``objective`` always includes the maintenance of pre-installed capacity.
    """
    qp, _ = build_centralized(system, effective, include_constants=include_constants)
    ws = QpWorkspace(qp, settings)
    sol = ws.solve()
    _require_optimal(sol, "planner program")
    return _assemble_outcome(system, effective, None, qp, sol, True)


# ------------------------------------------------------------------ factors
def output_factors(system, effective, plan, outcome) -> OutputFactors:
    """Welfare, VRE share and total generation of an outcome.

    Welfare counts the maintenance of installed and added line capacity and
    the investment in the plan, so it is comparable between the market and
    the planner programs.
    """
    if plan is None:
        plan = outcome.plan
    P = system.probabilities
    ge = float(np.sum(P[:, None, None] * outcome.g_e))
    gr = float(np.sum(P[:, None, None] * outcome.g_r))
    total = ge + gr
    if outcome.centralized:
        welfare = outcome.objective
    else:
        welfare = (outcome.objective - plan.maintenance_cost(system)
                   - plan.investment_cost(system))
    zero = not total > 1e-12 * max(1.0, abs(ge) + abs(gr))
    share = 0.0 if zero else min(max(gr / total, 0.0), 1.0)
    return OutputFactors(welfare=float(welfare), vre_share=share,
                         total_generation=0.0 if zero else total, zero_generation=zero)


# ------------------------------------------------------------------ KKT check
def _scaled(res, *terms):
    scale = 1.0 + np.max(np.abs(np.stack(terms)), axis=0) if terms else 1.0
    return np.abs(res) / scale


def _maxv(a):
    return float(np.max(a)) if np.size(a) else 0.0


def kkt_residuals(system: EnergySystem, effective: EffectiveParameters, plan,
                  outcome: MarketOutcome, tol: float = 1e-6) -> KktReport:
    """Evaluate the optimality system of the market (or planner) program.

    Everything is recomputed from the system data and the outcome; nothing
    is taken from the solver.  Each residual is divided by one plus the
    magnitude of the largest term entering it.
    """
    o = outcome
    if plan is None:
        plan = o.plan
    S, T, N = system.shape
    P = system.probabilities
    dur = system.durations
    conv, vre = system.conventional_units, system.renewable_units
    node_e = np.array([system.nodes.index(u.node) for u in conv], dtype=int)
    node_r = np.array([system.nodes.index(u.node) for u in vre], dtype=int)
    prod_e = np.array([system.producers.index(u.producer) for u in conv], dtype=int)
    prod_r = np.array([system.producers.index(u.producer) for u in vre], dtype=int)
    oriented = list(system.oriented_lines())
    li = np.array([i for _, i, _ in oriented], dtype=int)
    lj = np.array([j for _, _, j in oriented], dtype=int)
    Ge = np.array([u.installed for u in conv])
    Gr = np.array([u.installed for u in vre])
    Rup = np.array([u.ramp_up for u in conv])
    Rdn = np.array([u.ramp_down for u in conv])
    expandable = np.array([u.expandable for u in conv], dtype=bool)
    Ie = np.array([u.investment for u in conv])
    Me = np.array([u.maintenance for u in conv])
    Mr = np.array([u.maintenance for u in vre])
    Ir_eff = np.asarray(effective.vre_investment, dtype=float)
    Ceff = np.asarray(effective.conv_marginal_cost, dtype=float)
    Lbar = np.array([ln.capacity for ln in system.lines])
    lplus = plan.as_array()
    A = (np.stack([system.availability[u.tech][:, :, node_r[k]] for k, u in enumerate(vre)],
                  axis=-1) if vre else np.zeros((S, T, 0)))
    Tt = dur[None, :, None]
    Ps = P[:, None, None]

    theta = o.theta
    cap_e = Ge + np.where(expandable, o.g_e_plus, 0.0)
    cap_r = Gr + o.g_r_plus
    cap_l = Lbar + lplus
    raw, st, cp, pr, sg = {}, {}, {}, {}, {}

    # stationarity: consumption
    marg = Ps * (system.intercept - system.slope * o.q / Tt)
    r = -marg + theta - o.lambda_q
    raw["q"] = r
    st["q"] = _maxv(_scaled(r, marg, theta, o.lambda_q))

    # stationarity: conventional output
    th_e = theta[:, :, node_e]
    cost = Ps * Ceff[None, None, :] * np.ones_like(o.g_e)
    up_next = np.zeros_like(o.beta_up)
    up_next[:, :-1] = o.beta_up[:, 1:]
    dn_next = np.zeros_like(o.beta_down)
    dn_next[:, :-1] = o.beta_down[:, 1:]
    r = cost - th_e + o.beta_e + o.beta_up - up_next - o.beta_down + dn_next - o.lambda_e
    raw["g_e"] = r
    st["g_e"] = _maxv(_scaled(r, cost, th_e, o.beta_e, o.beta_up, up_next, o.beta_down,
                              dn_next, o.lambda_e))

    # stationarity: renewable output
    th_r = theta[:, :, node_r]
    r = -th_r + o.beta_r - o.lambda_r
    raw["g_r"] = r
    st["g_r"] = _maxv(_scaled(r, th_r, o.beta_r, o.lambda_r))

    # stationarity: flows (balance coefficient +1 at the sending node)
    th_i, th_j = theta[:, :, li], theta[:, :, lj]
    r = th_i - th_j + o.beta_f1 - o.beta_f2
    raw["f"] = r
    st["f"] = _maxv(_scaled(r, th_i, th_j, o.beta_f1, o.beta_f2))

    # stationarity: conventional expansion
    bg_e = o.beta_g[prod_e] if conv else np.zeros(0)
    sum_cap = np.sum(o.beta_e * Tt, axis=(0, 1))
    sum_ramp = np.sum((o.beta_up * Rup + o.beta_down * Rdn) * Tt, axis=(0, 1))
    lin = Me + Ie
    r = lin + bg_e * Ie - sum_cap - sum_ramp - o.lambda_e_plus
    r = np.where(expandable, r, 0.0)
    raw["g_e_plus"] = r
    st["g_e_plus"] = _maxv(np.where(expandable, _scaled(r, lin, bg_e * Ie, sum_cap,
                                                        sum_ramp, o.lambda_e_plus), 0.0))

    # stationarity: renewable expansion
    bg_r = o.beta_g[prod_r] if vre else np.zeros(0)
    sum_vre = np.sum(o.beta_r * Tt * A, axis=(0, 1))
    lin = Mr + Ir_eff
    r = lin + bg_r * Ir_eff - sum_vre - o.lambda_r_plus
    raw["g_r_plus"] = r
    st["g_r_plus"] = _maxv(_scaled(r, lin, bg_r * Ir_eff, sum_vre, o.lambda_r_plus))

    if o.centralized:
        Ml = np.array([ln.maintenance for ln in system.lines])
        Il = np.array([ln.investment for ln in system.lines])
        mult = 2.0 if system.budget_double_count else 1.0
        sum_f = np.sum((o.beta_f1 + o.beta_f2) * Tt, axis=(0, 1))
        lam = o.lambda_l_plus if o.lambda_l_plus is not None else np.zeros_like(lplus)
        r = Ml + Il + o.beta_teb * mult * Il - sum_f - lam
        raw["l_plus"] = r
        st["l_plus"] = _maxv(_scaled(r, Ml + Il, o.beta_teb * mult * Il, sum_f, lam))

    # primal feasibility and complementarity
    bal = o.q.copy()
    if conv:
        np.subtract.at(bal, (slice(None), slice(None), node_e), o.g_e)
    if vre:
        np.subtract.at(bal, (slice(None), slice(None), node_r), o.g_r)
    if oriented:
        np.add.at(bal, (slice(None), slice(None), li), o.f)
        np.subtract.at(bal, (slice(None), slice(None), lj), o.f)
    raw["balance"] = bal
    flow_mag = np.zeros_like(o.q)
    if oriented:
        np.add.at(flow_mag, (slice(None), slice(None), li), np.abs(o.f))
    pr["balance"] = _maxv(np.abs(bal) / (1.0 + np.maximum(o.q, flow_mag)))

    def pair(name, dual, slack, bound):
        """Feasibility of ``slack >= 0`` and ``dual * slack = 0``."""
        bound = np.abs(bound)
        raw[f"slack_{name}"] = slack
        pr[name] = _maxv(np.maximum(-slack, 0.0) / (1.0 + bound))
        prod = dual * slack
        raw[f"compl_{name}"] = prod
        cp[name] = _maxv(np.abs(prod) / ((1.0 + np.abs(dual)) * (1.0 + bound)))
        sg[name] = _maxv(np.maximum(-dual, 0.0) / (1.0 + np.max(np.abs(dual), initial=0.0)))

    bnd = Tt * cap_e
    pair("conv_cap", o.beta_e, bnd - o.g_e, bnd)
    bnd = Tt * A * cap_r
    pair("vre_cap", o.beta_r, bnd - o.g_r, bnd)
    if T > 1:
        d = o.g_e[:, 1:] - o.g_e[:, :-1]
        bnd = dur[None, 1:, None] * Rup * cap_e
        pair("ramp_up", o.beta_up[:, 1:], bnd - d, bnd + np.abs(o.g_e[:, 1:]))
        bnd = dur[None, 1:, None] * Rdn * cap_e
        pair("ramp_down", o.beta_down[:, 1:], bnd + d, bnd + np.abs(o.g_e[:, 1:]))
        sg["ramp_first"] = _maxv(np.abs(o.beta_up[:, :1])) + _maxv(np.abs(o.beta_down[:, :1]))
    bnd = Tt * cap_l
    pair("flow_up", o.beta_f1, bnd - o.f, bnd)
    pair("flow_lo", o.beta_f2, bnd + o.f, bnd)
    spend = np.zeros(len(system.producers))
    np.add.at(spend, prod_e, np.where(expandable, Ie * o.g_e_plus, 0.0))
    np.add.at(spend, prod_r, Ir_eff * o.g_r_plus)
    pair("geb", o.beta_g, effective.geb - spend, np.maximum(effective.geb, spend))
    if o.centralized:
        Il = np.array([ln.investment for ln in system.lines])
        mult = 2.0 if system.budget_double_count else 1.0
        spend_l = mult * float(Il @ lplus)
        pair("teb", np.array([o.beta_teb]), np.array([effective.teb - spend_l]),
             np.array([max(effective.teb, spend_l)]))
        pair("nonneg_l_plus", o.lambda_l_plus, lplus, np.zeros_like(lplus))
    pair("nonneg_q", o.lambda_q, o.q, np.zeros_like(o.q))
    pair("nonneg_g_e", o.lambda_e, o.g_e, np.zeros_like(o.g_e))
    pair("nonneg_g_r", o.lambda_r, o.g_r, np.zeros_like(o.g_r))
    pair("nonneg_g_e_plus", np.where(expandable, o.lambda_e_plus, 0.0),
         np.where(expandable, o.g_e_plus, 0.0), np.zeros_like(o.g_e_plus))
    pair("nonneg_g_r_plus", o.lambda_r_plus, o.g_r_plus, np.zeros_like(o.g_r_plus))
    return KktReport(stationarity=st, complementarity=cp, primal=pr, dual_sign=sg,
                     raw=raw, tolerance=tol)


def market_for_policy(system, policy, plan, settings=None):
    """Convenience wrapper: apply a policy and solve the market."""
    eff = apply_policy(system, policy)
    return solve_market(system, eff, plan, settings)
