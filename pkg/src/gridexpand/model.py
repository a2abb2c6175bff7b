"""Domain model: energy system description, policies and validation.

All monetary values are euros, energies MWh, capacities MW.  Per-period
quantities (demand curves, availability) are stored as arrays indexed
``[scenario, period, node]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np


def _frozen_array(values, ndim=None):
    arr = np.array(values, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Line:
    """Undirected transmission corridor between two nodes."""

    a: str
    b: str
    capacity: float
    maintenance: float
    investment: float

    @property
    def key(self):
        return (self.a, self.b)


@dataclass(frozen=True)
class ConventionalUnit:
    """Conventional capacity of one technology owned by one producer at a node.

    ``ramp_up`` and ``ramp_down`` are fractions of total capacity per hour.
    Non-expandable units (e.g. hydro) get no expansion decision at all.
    """

    node: str
    producer: str
    tech: str
    installed: float
    operational_cost: float
    maintenance: float
    investment: float
    ramp_up: float = 1.0
    ramp_down: float = 1.0
    expandable: bool = True

    @property
    def key(self):
        return (self.node, self.producer, self.tech)


@dataclass(frozen=True)
class RenewableUnit:
    """Variable renewable capacity of one producer at a node (always expandable)."""

    node: str
    producer: str
    tech: str
    installed: float
    maintenance: float
    investment: float

    @property
    def key(self):
        return (self.node, self.producer, self.tech)


@dataclass(frozen=True, eq=False)
class EnergySystem:
    """Immutable multi-node market description.

    ``intercept`` and ``slope`` describe the inverse demand ``price =
    intercept - slope * q / T_t`` per (scenario, period, node);
    ``availability`` maps each renewable technology to an array of the same
    shape with values in [0, 1].

    ``budget_double_count`` switches the transmission budget row to charge
    both directed copies of every line (literal reading of the budget sum).
    """

    nodes: tuple
    producers: tuple
    conventional_techs: tuple
    renewable_techs: tuple
    scenarios: tuple
    probabilities: np.ndarray
    periods: tuple
    durations: np.ndarray
    intercept: np.ndarray
    slope: np.ndarray
    availability: Mapping[str, np.ndarray]
    lines: tuple = ()
    conventional_units: tuple = ()
    renewable_units: tuple = ()
    budget_double_count: bool = False
    name: str = ""

    def __post_init__(self):
        set_ = object.__setattr__
        for attr in ("nodes", "producers", "conventional_techs", "renewable_techs",
                     "scenarios", "periods", "lines", "conventional_units",
                     "renewable_units"):
            set_(self, attr, tuple(getattr(self, attr)))
        set_(self, "probabilities", _frozen_array(self.probabilities, 1))
        set_(self, "durations", _frozen_array(self.durations, 1))
        set_(self, "intercept", _frozen_array(self.intercept, 3))
        set_(self, "slope", _frozen_array(self.slope, 3))
        set_(self, "availability", MappingProxyType(
            {r: _frozen_array(v, 3) for r, v in dict(self.availability).items()}))

    @property
    def shape(self):
        """``(|S|, |T|, |N|)``."""
        return (len(self.scenarios), len(self.periods), len(self.nodes))

    def node_index(self, node):
        return self.nodes.index(node)

    def line_index(self, a, b):
        for k, ln in enumerate(self.lines):
            if (ln.a, ln.b) == (a, b) or (ln.a, ln.b) == (b, a):
                return k
        raise KeyError(f"no line between {a!r} and {b!r}")

    def oriented_lines(self):
        """Yield ``(k, n_idx, m_idx)`` with ``n_idx < m_idx`` in node order."""
        for k, ln in enumerate(self.lines):
            i, j = self.nodes.index(ln.a), self.nodes.index(ln.b)
            yield (k, i, j) if i < j else (k, j, i)

    def replace(self, **changes):
        fields = {f: getattr(self, f) for f in self.__dataclass_fields__}
        fields.update(changes)
        return EnergySystem(**fields)

    def __reduce__(self):
        fields = {f: getattr(self, f) for f in self.__dataclass_fields__}
        fields["availability"] = dict(self.availability)
        return (_rebuild, (EnergySystem, fields))


@dataclass(frozen=True)
class PolicySet:
    """Carbon taxes, VRE incentives and investment budgets.

    Missing entries in the mappings are read as zero.
    """

    carbon_tax: Mapping[str, float] = field(default_factory=dict)
    vre_incentive: Mapping[str, float] = field(default_factory=dict)
    teb: float = 0.0
    geb: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "carbon_tax", MappingProxyType({k: float(v) for k, v in dict(self.carbon_tax).items()}))
        set_(self, "vre_incentive", MappingProxyType({k: float(v) for k, v in dict(self.vre_incentive).items()}))
        set_(self, "geb", MappingProxyType({k: float(v) for k, v in dict(self.geb).items()}))
        set_(self, "teb", float(self.teb))

    def tax(self, tech):
        return self.carbon_tax.get(tech, 0.0)

    def incentive(self, node):
        return self.vre_incentive.get(node, 0.0)

    def budget(self, producer):
        return self.geb.get(producer, 0.0)

    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def uniform(cls, system, *, tax=0.0, incentive=0.0, teb=0.0, geb=0.0):
        """Same tax for every conventional tech, incentive for every node and
        budget for every producer."""
        return cls(carbon_tax={e: tax for e in system.conventional_techs},
                   vre_incentive={n: incentive for n in system.nodes},
                   teb=teb, geb={i: geb for i in system.producers})

    def replace(self, **changes):
        kw = dict(carbon_tax=self.carbon_tax, vre_incentive=self.vre_incentive,
                  teb=self.teb, geb=self.geb)
        kw.update(changes)
        return PolicySet(**kw)

    def __eq__(self, other):
        if not isinstance(other, PolicySet):
            return NotImplemented
        return (dict(self.carbon_tax) == dict(other.carbon_tax)
                and dict(self.vre_incentive) == dict(other.vre_incentive)
                and self.teb == other.teb and dict(self.geb) == dict(other.geb))

    __hash__ = None

    def __reduce__(self):
        return (_rebuild, (PolicySet, dict(carbon_tax=dict(self.carbon_tax),
                                           vre_incentive=dict(self.vre_incentive),
                                           teb=self.teb, geb=dict(self.geb))))


def _rebuild(cls, fields):
    return cls(**fields)


@dataclass(frozen=True, eq=False)
class EffectiveParameters:
    """Costs after applying a policy.

    ``conv_marginal_cost[k]`` is ``C + D^e`` of ``system.conventional_units[k]``
    and ``vre_investment[k]`` is ``(1 - sigma_n) I^r`` of
    ``system.renewable_units[k]``.
    """

    system: EnergySystem
    policy: PolicySet
    conv_marginal_cost: np.ndarray
    vre_investment: np.ndarray
    teb: float
    geb: np.ndarray


@dataclass
class ValidationReport:
    issues: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.issues

    def add(self, location, message):
        self.issues.append((location, message))

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return "valid"
        return "\n".join(f"{loc}: {msg}" for loc, msg in self.issues)


def validate_system(system: EnergySystem) -> ValidationReport:
    """Check the invariants every builder relies on.

    Violations are collected rather than raised.
    """
    rep = ValidationReport()
    S, T, N = len(system.scenarios), len(system.periods), len(system.nodes)
    for label, seq in (("nodes", system.nodes), ("producers", system.producers),
                       ("scenarios", system.scenarios), ("periods", system.periods),
                       ("conventional_techs", system.conventional_techs),
                       ("renewable_techs", system.renewable_techs)):
        if len(set(seq)) != len(seq):
            rep.add(label, "duplicate identifiers")
    if N == 0:
        rep.add("nodes", "at least one node is required")
    if T == 0:
        rep.add("periods", "at least one period is required")
    if S == 0:
        rep.add("scenarios", "at least one scenario is required")

    p = system.probabilities
    if p.shape != (S,):
        rep.add("probabilities", f"expected {S} entries, got {p.shape[0]}")
    else:
        if np.any(~np.isfinite(p)) or np.any(p <= 0):
            rep.add("probabilities", "every probability must be positive")
        total = float(np.sum(p))
        if abs(total - 1.0) > 1e-12:
            rep.add("probabilities", f"probabilities sum to {total:.12g}, not 1")
    d = system.durations
    if d.shape != (T,):
        rep.add("durations", f"expected {T} entries, got {d.shape[0]}")
    elif np.any(~np.isfinite(d)) or np.any(d <= 0):
        rep.add("durations", "period durations must be positive")

    for label, arr in (("intercept", system.intercept), ("slope", system.slope)):
        if arr.shape != (S, T, N):
            rep.add(label, f"expected shape {(S, T, N)}, got {arr.shape}")
            continue
        bad = np.argwhere(~np.isfinite(arr) | (arr <= 0))
        for s, t, n in bad[:10]:
            rep.add(f"{label}[{system.scenarios[s]},{system.periods[t]},{system.nodes[n]}]",
                    f"nonpositive {label} {arr[s, t, n]!r}")

    for r in system.renewable_techs:
        if r not in system.availability:
            rep.add(f"availability.{r}", "missing availability series")
            continue
        arr = system.availability[r]
        if arr.shape != (S, T, N):
            rep.add(f"availability.{r}", f"expected shape {(S, T, N)}, got {arr.shape}")
        elif np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
            rep.add(f"availability.{r}", "availability must lie in [0, 1]")
    for r in system.availability:
        if r not in system.renewable_techs:
            rep.add(f"availability.{r}", "unknown renewable technology")

    nodes = set(system.nodes)
    seen = set()
    for k, ln in enumerate(system.lines):
        loc = f"lines[{k}]"
        if ln.a not in nodes or ln.b not in nodes:
            rep.add(loc, f"unknown node in line {ln.a}-{ln.b}")
        if ln.a == ln.b:
            rep.add(loc, "self-loop")
        pair = frozenset((ln.a, ln.b))
        if pair in seen:
            rep.add(loc, f"duplicate line {ln.a}-{ln.b}")
        seen.add(pair)
        for attr in ("capacity", "maintenance", "investment"):
            v = getattr(ln, attr)
            if not np.isfinite(v) or v < 0:
                rep.add(f"{loc}.{attr}", f"must be finite and >= 0, got {v!r}")

    producers = set(system.producers)
    keys = set()
    for k, u in enumerate(system.conventional_units):
        loc = f"conventional_units[{k}]"
        if u.node not in nodes:
            rep.add(loc, f"unknown node {u.node!r}")
        if u.producer not in producers:
            rep.add(loc, f"unknown producer {u.producer!r}")
        if u.tech not in system.conventional_techs:
            rep.add(loc, f"unknown conventional tech {u.tech!r}")
        if u.key in keys:
            rep.add(loc, f"duplicate unit {u.key}")
        keys.add(u.key)
        for attr in ("installed", "operational_cost", "maintenance", "investment"):
            v = getattr(u, attr)
            if not np.isfinite(v) or v < 0:
                rep.add(f"{loc}.{attr}", f"must be finite and >= 0, got {v!r}")
        for attr in ("ramp_up", "ramp_down"):
            v = getattr(u, attr)
            if not (0 <= v <= 1):
                rep.add(f"{loc}.{attr}", f"must lie in [0, 1], got {v!r}")
    keys = set()
    for k, u in enumerate(system.renewable_units):
        loc = f"renewable_units[{k}]"
        if u.node not in nodes:
            rep.add(loc, f"unknown node {u.node!r}")
        if u.producer not in producers:
            rep.add(loc, f"unknown producer {u.producer!r}")
        if u.tech not in system.renewable_techs:
            rep.add(loc, f"unknown renewable tech {u.tech!r}")
        if u.key in keys:
            rep.add(loc, f"duplicate unit {u.key}")
        keys.add(u.key)
        for attr in ("installed", "maintenance", "investment"):
            v = getattr(u, attr)
            if not np.isfinite(v) or v < 0:
                rep.add(f"{loc}.{attr}", f"must be finite and >= 0, got {v!r}")
    return rep


def validate_policy(system: EnergySystem, policy: PolicySet) -> ValidationReport:
    rep = ValidationReport()
    for e, v in policy.carbon_tax.items():
        if e not in system.conventional_techs:
            rep.add(f"policy.carbon_tax.{e}", "unknown conventional tech")
        if not np.isfinite(v) or v < 0:
            rep.add(f"policy.carbon_tax.{e}", f"must be >= 0, got {v!r}")
    for n, v in policy.vre_incentive.items():
        if n not in system.nodes:
            rep.add(f"policy.vre_incentive.{n}", "unknown node")
        if not (0 <= v <= 1):
            rep.add(f"policy.vre_incentive.{n}", f"must lie in [0, 1], got {v!r}")
    if not (policy.teb >= 0):
        rep.add("policy.teb", f"must be >= 0, got {policy.teb!r}")
    for i, v in policy.geb.items():
        if i not in system.producers:
            rep.add(f"policy.geb.{i}", "unknown producer")
        if not (v >= 0):
            rep.add(f"policy.geb.{i}", f"must be >= 0, got {v!r}")
    return rep


def apply_policy(system: EnergySystem, policy: PolicySet) -> EffectiveParameters:
    """Fold taxes and incentives into effective costs."""
    conv = np.array([u.operational_cost + policy.tax(u.tech)
                     for u in system.conventional_units], dtype=float)
    vre = np.array([(1.0 - policy.incentive(u.node)) * u.investment
                    for u in system.renewable_units], dtype=float)
    geb = np.array([policy.budget(i) for i in system.producers], dtype=float)
    for a in (conv, vre, geb):
        a.setflags(write=False)
    return EffectiveParameters(system=system, policy=policy, conv_marginal_cost=conv,
                               vre_investment=vre, teb=policy.teb, geb=geb)
