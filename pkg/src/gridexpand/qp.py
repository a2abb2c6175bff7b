"""Assembly of the planning models as sparse concave QPs.

Two programs are built from the same system description:

* the centralized planner, which chooses line expansions jointly with
  generation expansion and dispatch;
* the market (lower-level) program for a fixed transmission plan, which
  drops the transmission cost terms and the transmission budget row.

Both share one variable and row layout so that solutions can be compared
coefficient by coefficient.  Variables and rows are addressed by name
through :class:`DecisionIndexMap`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .model import EffectiveParameters, EnergySystem

ROW_KINDS = ("balance", "vre_cap", "conv_cap", "ramp_up", "ramp_down",
             "flow_up", "flow_lo", "teb", "geb")
VAR_KINDS = ("q", "g_e", "g_r", "f", "l_plus", "g_e_plus", "g_r_plus")


class BuildError(ValueError):
    """Raised when a program cannot be built from the given inputs."""


@dataclass(frozen=True, eq=False)
class ExpansionPlan:
    """Capacity added to each line (MW), in ``system.lines`` order."""

    levels: tuple

    def __post_init__(self):
        lv = tuple(float(v) for v in self.levels)
        if any(not np.isfinite(v) or v < 0 for v in lv):
            raise BuildError("expansion levels must be finite and >= 0")
        object.__setattr__(self, "levels", lv)

    @classmethod
    def zero(cls, system):
        return cls((0.0,) * len(system.lines))

    @classmethod
    def from_mapping(cls, system, mapping):
        """Build from ``{(a, b): MW}``; unlisted lines get 0."""
        levels = [0.0] * len(system.lines)
        for key, v in dict(mapping).items():
            a, b = key
            try:
                k = system.line_index(a, b)
            except KeyError:
                raise BuildError(f"plan references unknown line {a}-{b}") from None
            levels[k] = v
        return cls(tuple(levels))

    def as_array(self):
        return np.array(self.levels, dtype=float)

    def investment_cost(self, system):
        """Investment spent on the plan, charged once per line."""
        return float(sum(ln.investment * v for ln, v in zip(system.lines, self.levels)))

    def maintenance_cost(self, system):
        """Maintenance on the installed plus added line capacity."""
        return float(sum(ln.maintenance * (ln.capacity + v)
                         for ln, v in zip(system.lines, self.levels)))

    def __eq__(self, other):
        return isinstance(other, ExpansionPlan) and self.levels == other.levels

    def __hash__(self):
        return hash(self.levels)

    def __len__(self):
        return len(self.levels)


@dataclass(eq=False)
class DecisionIndexMap:
    """Bijection between flat indices and named decisions / rows.

    Index arrays per family hold ``-1`` where a decision or row does not
    exist (e.g. no expansion variable for a non-expandable unit, no ramp row
    for the first period).

    Attributes
    ----------
    q : (S, T, N) int array
    g_e : (S, T, Ue) int array, one column per conventional unit
    g_r : (S, T, Ur) int array, one column per renewable unit
    f : (S, T, L) int array, flow from the lower- to the higher-indexed node
    l_plus : (L,) int array, -1 in the market program
    g_e_plus : (Ue,) int array
    g_r_plus : (Ur,) int array
    rows : dict of int arrays keyed by row kind
    """

    system: EnergySystem
    q: np.ndarray
    g_e: np.ndarray
    g_r: np.ndarray
    f: np.ndarray
    l_plus: np.ndarray
    g_e_plus: np.ndarray
    g_r_plus: np.ndarray
    rows: dict
    var_names: list = field(default_factory=list)
    row_names: list = field(default_factory=list)

    def __post_init__(self):
        self._var_lookup = {name: k for k, name in enumerate(self.var_names)}
        self._row_lookup = {name: k for k, name in enumerate(self.row_names)}
        if len(self._var_lookup) != len(self.var_names):
            raise BuildError("duplicate variable names")
        if len(self._row_lookup) != len(self.row_names):
            raise BuildError("duplicate row names")

    @property
    def num_variables(self):
        return len(self.var_names)

    @property
    def num_rows(self):
        return len(self.row_names)

    def var_name(self, k):
        return self.var_names[k]

    def var_index(self, name):
        return self._var_lookup[tuple(name)]

    def row_name(self, k):
        return self.row_names[k]

    def row_index(self, name):
        return self._row_lookup[tuple(name)]

    def row_kind(self, k):
        return self.row_names[k][0]


@dataclass(eq=False)
class QuadraticProgram:
    """``maximize 0.5 x'Hx + c'x + offset`` subject to row and variable bounds.

    ``constant`` is the part of the objective that does not depend on ``x``
    (maintenance of pre-installed capacity).  It is folded into ``offset``
    unless the program was built with ``include_constants=False``; reports
    always add it back.

    ``var_scale`` holds a typical unit per variable (period hours for energy
    variables, 1 for capacities); the solver uses it as its starting column
    scaling.  It does not change the problem.
    """

    hessian: sp.csc_matrix
    c: np.ndarray
    A: sp.csr_matrix
    row_lower: np.ndarray
    row_upper: np.ndarray
    var_lower: np.ndarray
    var_upper: np.ndarray
    offset: float = 0.0
    constant: float = 0.0
    index: DecisionIndexMap | None = None
    sense: str = "maximize"
    var_scale: np.ndarray | None = None

    @property
    def num_variables(self):
        return self.c.shape[0]

    @property
    def num_rows(self):
        return self.A.shape[0]

    def objective(self, x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ (self.hessian @ x) + self.c @ x + self.offset)

    def with_row_bounds(self, row_lower, row_upper):
        return QuadraticProgram(self.hessian, self.c, self.A, np.asarray(row_lower, float),
                                np.asarray(row_upper, float), self.var_lower,
                                self.var_upper, self.offset, self.constant, self.index,
                                self.sense, self.var_scale)


class _Builder:
    """Accumulates named variables, objective terms and constraint triplets."""

    def __init__(self):
        self.var_names = []
        self.lin = []
        self.quad = []
        self.lo = []
        self.hi = []
        self.row_names = []
        self.rlo = []
        self.rhi = []
        self.ri = []
        self.cj = []
        self.vals = []

    def var(self, name, lin=0.0, quad=0.0, lo=0.0, hi=np.inf):
        self.var_names.append(name)
        self.lin.append(lin)
        self.quad.append(quad)
        self.lo.append(lo)
        self.hi.append(hi)
        return len(self.var_names) - 1

    def row(self, name, terms, lo, hi):
        """Add a row unless every coefficient is zero; returns its index or -1."""
        terms = [(j, v) for j, v in terms if j >= 0 and v != 0.0]
        if not terms:
            return -1
        k = len(self.row_names)
        self.row_names.append(name)
        self.rlo.append(lo)
        self.rhi.append(hi)
        for j, v in terms:
            self.ri.append(k)
            self.cj.append(j)
            self.vals.append(v)
        return k


def _check_effective(system, effective):
    if not isinstance(effective, EffectiveParameters):
        raise BuildError("effective parameters expected")
    if effective.system is not system:
        if (len(effective.conv_marginal_cost) != len(system.conventional_units)
                or len(effective.vre_investment) != len(system.renewable_units)
                or len(effective.geb) != len(system.producers)):
            raise BuildError("effective parameters do not match the system")
    if np.any(effective.conv_marginal_cost < 0) or np.any(effective.vre_investment < 0):
        raise BuildError("effective costs must be nonnegative")


def _build(system: EnergySystem, effective: EffectiveParameters, plan, include_constants):
    _check_effective(system, effective)
    S, T, N = system.shape
    sc, per, nodes = system.scenarios, system.periods, system.nodes
    conv, vre, lines = system.conventional_units, system.renewable_units, system.lines
    Ue, Ur, L = len(conv), len(vre), len(lines)
    P, dur = system.probabilities, system.durations
    central = plan is None
    b = _Builder()

    # --- variables -----------------------------------------------------
    q = np.full((S, T, N), -1)
    g_e = np.full((S, T, Ue), -1)
    g_r = np.full((S, T, Ur), -1)
    f = np.full((S, T, L), -1)
    l_plus = np.full(L, -1)
    g_e_plus = np.full(Ue, -1)
    g_r_plus = np.full(Ur, -1)
    oriented = list(system.oriented_lines())

    for s in range(S):
        for t in range(T):
            for n in range(N):
                q[s, t, n] = b.var(
                    ("q", sc[s], per[t], nodes[n]),
                    lin=P[s] * system.intercept[s, t, n],
                    quad=-P[s] * system.slope[s, t, n] / dur[t])
            for k, u in enumerate(conv):
                g_e[s, t, k] = b.var(("g_e", sc[s], per[t], u.node, u.producer, u.tech),
                                     lin=-P[s] * effective.conv_marginal_cost[k])
            for k, u in enumerate(vre):
                g_r[s, t, k] = b.var(("g_r", sc[s], per[t], u.node, u.producer, u.tech))
            for k, i, j in oriented:
                f[s, t, k] = b.var(("f", sc[s], per[t], nodes[i], nodes[j]),
                                   lo=-np.inf, hi=np.inf)
    if central:
        for k, i, j in oriented:
            ln = lines[k]
            l_plus[k] = b.var(("l_plus", nodes[i], nodes[j]),
                              lin=-(ln.maintenance + ln.investment))
    for k, u in enumerate(conv):
        if u.expandable:
            g_e_plus[k] = b.var(("g_e_plus", u.node, u.producer, u.tech),
                                lin=-(u.maintenance + u.investment))
    for k, u in enumerate(vre):
        g_r_plus[k] = b.var(("g_r_plus", u.node, u.producer, u.tech),
                            lin=-(u.maintenance + effective.vre_investment[k]))

    constant = -sum(u.maintenance * u.installed for u in conv)
    constant -= sum(u.maintenance * u.installed for u in vre)
    if central:
        constant -= sum(ln.maintenance * ln.capacity for ln in lines)

    # --- rows ------------------------------------------------------------
    rows = {
        "balance": np.full((S, T, N), -1),
        "vre_cap": np.full((S, T, Ur), -1),
        "conv_cap": np.full((S, T, Ue), -1),
        "ramp_up": np.full((S, T, Ue), -1),
        "ramp_down": np.full((S, T, Ue), -1),
        "flow_up": np.full((S, T, L), -1),
        "flow_lo": np.full((S, T, L), -1),
        "teb": np.full(1, -1),
        "geb": np.full(len(system.producers), -1),
    }
    conv_at = [[k for k, u in enumerate(conv) if nodes.index(u.node) == n] for n in range(N)]
    vre_at = [[k for k, u in enumerate(vre) if nodes.index(u.node) == n] for n in range(N)]
    out_of = [[k for k, i, j in oriented if i == n] for n in range(N)]
    into = [[k for k, i, j in oriented if j == n] for n in range(N)]
    extra = plan.as_array() if plan is not None else np.zeros(L)
    if plan is not None and len(plan) != L:
        raise BuildError(f"plan has {len(plan)} entries for {L} lines")
    avail = {r: system.availability[r] for r in system.renewable_techs}

    for s in range(S):
        for t in range(T):
            Tt = dur[t]
            for n in range(N):
                terms = [(q[s, t, n], 1.0)]
                terms += [(g_e[s, t, k], -1.0) for k in conv_at[n]]
                terms += [(g_r[s, t, k], -1.0) for k in vre_at[n]]
                terms += [(f[s, t, k], 1.0) for k in out_of[n]]
                terms += [(f[s, t, k], -1.0) for k in into[n]]
                rows["balance"][s, t, n] = b.row(
                    ("balance", sc[s], per[t], nodes[n]), terms, 0.0, 0.0)
            for k, u in enumerate(vre):
                a = avail[u.tech][s, t, nodes.index(u.node)]
                rows["vre_cap"][s, t, k] = b.row(
                    ("vre_cap", sc[s], per[t], u.node, u.producer, u.tech),
                    [(g_r[s, t, k], 1.0), (g_r_plus[k], -Tt * a)],
                    -np.inf, Tt * a * u.installed)
            for k, u in enumerate(conv):
                rows["conv_cap"][s, t, k] = b.row(
                    ("conv_cap", sc[s], per[t], u.node, u.producer, u.tech),
                    [(g_e[s, t, k], 1.0), (g_e_plus[k], -Tt)],
                    -np.inf, Tt * u.installed)
            if t >= 1:
                for k, u in enumerate(conv):
                    key = (sc[s], per[t], u.node, u.producer, u.tech)
                    # a full-capacity ramp limit is implied by the capacity rows
                    if u.ramp_up < 1.0:
                        rows["ramp_up"][s, t, k] = b.row(
                            ("ramp_up",) + key,
                            [(g_e[s, t, k], 1.0), (g_e[s, t - 1, k], -1.0),
                             (g_e_plus[k], -Tt * u.ramp_up)],
                            -np.inf, Tt * u.ramp_up * u.installed)
                    if u.ramp_down < 1.0:
                        rows["ramp_down"][s, t, k] = b.row(
                            ("ramp_down",) + key,
                            [(g_e[s, t - 1, k], 1.0), (g_e[s, t, k], -1.0),
                             (g_e_plus[k], -Tt * u.ramp_down)],
                            -np.inf, Tt * u.ramp_down * u.installed)
            for k, i, j in oriented:
                key = (sc[s], per[t], nodes[i], nodes[j])
                cap = lines[k].capacity + extra[k]
                rows["flow_up"][s, t, k] = b.row(
                    ("flow_up",) + key, [(f[s, t, k], 1.0), (l_plus[k], -Tt)],
                    -np.inf, Tt * cap)
                rows["flow_lo"][s, t, k] = b.row(
                    ("flow_lo",) + key, [(f[s, t, k], -1.0), (l_plus[k], -Tt)],
                    -np.inf, Tt * cap)
    if central:
        mult = 2.0 if system.budget_double_count else 1.0
        rows["teb"][0] = b.row(("teb",), [(l_plus[k], mult * ln.investment)
                                          for k, ln in enumerate(lines)],
                               -np.inf, effective.teb)
    for p, prod in enumerate(system.producers):
        terms = [(g_e_plus[k], u.investment) for k, u in enumerate(conv) if u.producer == prod]
        terms += [(g_r_plus[k], effective.vre_investment[k])
                  for k, u in enumerate(vre) if u.producer == prod]
        rows["geb"][p] = b.row(("geb", prod), terms, -np.inf, effective.geb[p])

    n = len(b.var_names)
    m = len(b.row_names)
    A = sp.csr_matrix((b.vals, (b.ri, b.cj)), shape=(m, n))
    A.sum_duplicates()
    H = sp.diags(np.array(b.quad, dtype=float), format="csc")
    scale = np.ones(n)
    for arr in (q, g_e, g_r, f):
        for t in range(T):
            v = arr[:, t].ravel()
            scale[v[v >= 0]] = dur[t]
    index = DecisionIndexMap(system=system, q=q, g_e=g_e, g_r=g_r, f=f, l_plus=l_plus,
                             g_e_plus=g_e_plus, g_r_plus=g_r_plus, rows=rows,
                             var_names=b.var_names, row_names=b.row_names)
    return QuadraticProgram(
        hessian=H, c=np.array(b.lin, dtype=float), A=A,
        row_lower=np.array(b.rlo, dtype=float), row_upper=np.array(b.rhi, dtype=float),
        var_lower=np.array(b.lo, dtype=float), var_upper=np.array(b.hi, dtype=float),
        offset=constant if include_constants else 0.0, constant=float(constant),
        index=index, var_scale=scale)


def build_centralized(system, effective, include_constants=True):
    """Planner program: transmission, generation expansion and dispatch.

    Returns
    -------
    (QuadraticProgram, DecisionIndexMap)
    """
    qp = _build(system, effective, None, include_constants)
    return qp, qp.index


def build_lower_level(system, effective, plan: ExpansionPlan, include_constants=True):
    """Market program for a fixed transmission plan.

    Line capacities enter the flow rows as ``T_t (L + plan)`` bounds, there is
    no transmission budget row and no transmission cost in the objective.
    """
    if not isinstance(plan, ExpansionPlan):
        plan = ExpansionPlan(tuple(plan))
    qp = _build(system, effective, plan, include_constants)
    return qp, qp.index


def flow_row_bounds(qp: QuadraticProgram, plan: ExpansionPlan):
    """Row bounds of a market program re-targeted to another plan.

    Only the flow rows change between plans, so workspaces can be reused.
    """
    system = qp.index.system
    hi = qp.row_upper.copy()
    extra = plan.as_array()
    rows = qp.index.rows
    for k, ln in enumerate(system.lines):
        cap = ln.capacity + extra[k]
        for key in ("flow_up", "flow_lo"):
            idx = rows[key][:, :, k]
            hi[idx] = system.durations[None, :] * cap
    return qp.row_lower, hi


def expected_variable_count(system, central=True):
    """Closed-form variable count from set sizes."""
    S, T, N = system.shape
    L = len(system.lines)
    Ue = len(system.conventional_units)
    Ur = len(system.renewable_units)
    n_exp = sum(1 for u in system.conventional_units if u.expandable)
    return S * T * (N + Ue + Ur + L) + (L if central else 0) + n_exp + Ur


# ---------------------------------------------------------------- text dump
_MAGIC = "gridexpand-qp 1"


def _fmt(v):
    return repr(float(v))


def write_qp_text(qp: QuadraticProgram, path):
    """Write a QP in a plain-text sparse format.

    Layout (one item per line, whitespace separated)::

        gridexpand-qp 1
        <n> <m> <nnz_H> <nnz_A> <sense>
        offset <value>
        <nnz_H lines "i j value" of the quadratic matrix H>
        <nnz_A lines "i j value" of the constraint matrix A>
        <n lines "c_j var_lower_j var_upper_j">
        <m lines "row_lower_i row_upper_i">

    Indices are zero-based; infinities are written as ``inf``/``-inf``.
    """
    H = sp.coo_matrix(qp.hessian)
    A = sp.coo_matrix(qp.A)
    lines = [_MAGIC,
             f"{qp.num_variables} {qp.num_rows} {H.nnz} {A.nnz} {qp.sense}",
             f"offset {_fmt(qp.offset)}"]
    lines += [f"{i} {j} {_fmt(v)}" for i, j, v in zip(H.row, H.col, H.data)]
    lines += [f"{i} {j} {_fmt(v)}" for i, j, v in zip(A.row, A.col, A.data)]
    lines += [f"{_fmt(c)} {_fmt(lo)} {_fmt(hi)}"
              for c, lo, hi in zip(qp.c, qp.var_lower, qp.var_upper)]
    lines += [f"{_fmt(lo)} {_fmt(hi)}" for lo, hi in zip(qp.row_lower, qp.row_upper)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_qp_text(path) -> QuadraticProgram:
    with open(path, encoding="utf-8") as fh:
        it = iter(fh.read().splitlines())
    if next(it).strip() != _MAGIC:
        raise ValueError("not a gridexpand QP dump")
    n, m, nh, na, sense = next(it).split()
    n, m, nh, na = int(n), int(m), int(nh), int(na)
    offset = float(next(it).split()[1])

    def triplets(count):
        rows = np.empty(count, dtype=int)
        cols = np.empty(count, dtype=int)
        vals = np.empty(count)
        for k in range(count):
            i, j, v = next(it).split()
            rows[k], cols[k], vals[k] = int(i), int(j), float(v)
        return rows, cols, vals

    hr, hc, hv = triplets(nh)
    ar, ac, av = triplets(na)
    cols = np.array([next(it).split() for _ in range(n)], dtype=float).reshape(n, 3)
    rb = np.array([next(it).split() for _ in range(m)], dtype=float).reshape(m, 2)
    return QuadraticProgram(
        hessian=sp.csc_matrix((hv, (hr, hc)), shape=(n, n)),
        c=cols[:, 0].copy(), A=sp.csr_matrix((av, (ar, ac)), shape=(m, n)),
        row_lower=rb[:, 0].copy(), row_upper=rb[:, 1].copy(),
        var_lower=cols[:, 1].copy(), var_upper=cols[:, 2].copy(),
        offset=offset, sense=sense)
