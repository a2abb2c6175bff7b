"""On-disk formats: system configs, hourly series and result files.

System config (TOML)
--------------------
::

    schema = "gridexpand-system/1"

    [system]
    name = "example"
    nodes = ["1", "2"]
    producers = ["G1"]
    conventional_techs = ["gas"]
    renewable_techs = ["wind"]
    budget_double_count = false          # optional

    [[scenarios]]                        # ordered
    id = "s1"
    probability = 1.0

    [[periods]]                          # ordered
    id = "t1"
    duration = 6.0                       # hours

    [[lines]]
    a = "1"
    b = "2"
    capacity = 100.0                     # MW
    maintenance = 10.0                   # EUR/MW per horizon
    investment = 1000.0                  # EUR/MW

    [[conventional_units]]
    node = "1"
    producer = "G1"
    tech = "gas"
    installed = 50.0
    operational_cost = 40.0
    maintenance = 10.0
    investment = 500.0
    ramp_up = 1.0                        # optional, default 1
    ramp_down = 1.0                      # optional, default 1
    expandable = true                    # optional, default true

    [[renewable_units]]
    node = "2"
    producer = "G1"
    tech = "wind"
    installed = 20.0
    maintenance = 5.0
    investment = 900.0

    [demand.intercept]                   # per node: [scenario][period]
    "1" = [[200.0]]
    "2" = [[200.0]]
    [demand.slope]
    "1" = [[0.05]]
    "2" = [[0.05]]
    [availability.wind]
    "1" = [[0.0]]
    "2" = [[0.4]]

    [policy]                             # optional; missing fields are zero
    teb = 0.0
    carbon_tax = { gas = 0.0 }
    vre_incentive = { "1" = 0.0, "2" = 0.0 }
    geb = { G1 = 0.0 }

Hourly series (CSV)
-------------------
Header ``hour,<node>:<kind>,...`` followed by 8760 rows; ``hour`` runs
1..8760.  Comma separated, ``.`` decimal, LF line endings, UTF-8.

Results
-------
JSON documents carry a ``"type"`` field naming the record type; floats are
written with 12 significant digits.  CSV exports have one header row.
"""
from __future__ import annotations

import csv
import io as _io
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import (ConventionalUnit, EnergySystem, Line, PolicySet, RenewableUnit,
                    validate_policy, validate_system)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

log = logging.getLogger(__name__)

SCHEMA = "gridexpand-system/1"
SIG_DIGITS = 12
HOURS_PER_YEAR = 8760


class ConfigError(ValueError):
    """Invalid input file; ``errors`` lists ``(location, message)`` pairs."""

    def __init__(self, errors, path=None):
        self.errors = list(errors)
        self.path = str(path) if path is not None else None
        head = f"{self.path}: " if self.path else ""
        super().__init__(head + "; ".join(f"{loc}: {msg}" for loc, msg in self.errors))


# ------------------------------------------------------------------ config
def _get(doc, key, errors, loc, kind=None, default=...):
    if key not in doc:
        if default is ...:
            errors.append((f"{loc}.{key}" if loc else key, "missing field"))
            return None
        return default
    v = doc[key]
    if kind is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            errors.append((f"{loc}.{key}", f"expected a number, got {v!r}"))
            return None
        return float(v)
    if kind is str and not isinstance(v, str):
        errors.append((f"{loc}.{key}", f"expected a string, got {v!r}"))
        return None
    if kind is bool and not isinstance(v, bool):
        errors.append((f"{loc}.{key}", f"expected true/false, got {v!r}"))
        return None
    if kind is list and not isinstance(v, list):
        errors.append((f"{loc}.{key}", f"expected a list, got {v!r}"))
        return None
    return v


def _node_table(doc, nodes, S, T, errors, loc):
    """``{node: [[...]*T]*S}`` -> array ``(S, T, N)``."""
    out = np.full((S, T, len(nodes)), np.nan)
    if not isinstance(doc, dict):
        errors.append((loc, "expected a table keyed by node"))
        return out
    for key in doc:
        if key not in nodes:
            errors.append((f"{loc}.{key}", "unknown node"))
    for n, node in enumerate(nodes):
        if node not in doc:
            errors.append((f"{loc}.{node}", "missing values"))
            continue
        try:
            arr = np.array(doc[node], dtype=float)
        except (TypeError, ValueError):
            errors.append((f"{loc}.{node}", "values must be numbers"))
            continue
        if arr.shape != (S, T):
            errors.append((f"{loc}.{node}", f"expected {S}x{T} values (scenario x period), "
                                            f"got shape {arr.shape}"))
            continue
        out[:, :, n] = arr
    return out


def parse_config(doc, path=None):
    """Turn a parsed TOML document into ``(EnergySystem, PolicySet)``."""
    errors = []
    schema = doc.get("schema")
    if schema != SCHEMA:
        raise ConfigError([("schema", f"unrecognized schema {schema!r} (expected {SCHEMA!r})")],
                          path)
    sysdoc = doc.get("system")
    if not isinstance(sysdoc, dict):
        raise ConfigError([("system", "missing [system] section")], path)
    names = {}
    for key in ("nodes", "producers", "conventional_techs", "renewable_techs"):
        v = _get(sysdoc, key, errors, "system", list, default=[] if key.endswith("techs") else ...)
        if v is not None and not all(isinstance(x, str) for x in v):
            errors.append((f"system.{key}", "identifiers must be strings"))
            v = [str(x) for x in v]
        names[key] = tuple(v or ())
    nodes = names["nodes"]

    scen, probs = [], []
    for k, row in enumerate(doc.get("scenarios", [])):
        scen.append(_get(row, "id", errors, f"scenarios[{k}]", str))
        probs.append(_get(row, "probability", errors, f"scenarios[{k}]", float))
    per, durs = [], []
    for k, row in enumerate(doc.get("periods", [])):
        per.append(_get(row, "id", errors, f"periods[{k}]", str))
        durs.append(_get(row, "duration", errors, f"periods[{k}]", float))
    if not scen:
        errors.append(("scenarios", "at least one scenario is required"))
    if not per:
        errors.append(("periods", "at least one period is required"))

    lines = []
    for k, row in enumerate(doc.get("lines", [])):
        loc = f"lines[{k}]"
        vals = [_get(row, "a", errors, loc, str), _get(row, "b", errors, loc, str)]
        vals += [_get(row, f, errors, loc, float) for f in ("capacity", "maintenance",
                                                             "investment")]
        if None not in vals:
            lines.append(Line(*vals))
    conv = []
    for k, row in enumerate(doc.get("conventional_units", [])):
        loc = f"conventional_units[{k}]"
        vals = [_get(row, f, errors, loc, str) for f in ("node", "producer", "tech")]
        vals += [_get(row, f, errors, loc, float) for f in ("installed", "operational_cost",
                                                             "maintenance", "investment")]
        vals += [_get(row, f, errors, loc, float, default=1.0) for f in ("ramp_up",
                                                                          "ramp_down")]
        vals.append(_get(row, "expandable", errors, loc, bool, default=True))
        if None not in vals:
            conv.append(ConventionalUnit(*vals))
    vre = []
    for k, row in enumerate(doc.get("renewable_units", [])):
        loc = f"renewable_units[{k}]"
        vals = [_get(row, f, errors, loc, str) for f in ("node", "producer", "tech")]
        vals += [_get(row, f, errors, loc, float) for f in ("installed", "maintenance",
                                                             "investment")]
        if None not in vals:
            vre.append(RenewableUnit(*vals))

    S, T = len(scen), len(per)
    demand = doc.get("demand", {})
    if "intercept" not in demand or "slope" not in demand:
        errors.append(("demand", "tables [demand.intercept] and [demand.slope] are required"))
    intercept = _node_table(demand.get("intercept", {}), nodes, S, T, errors, "demand.intercept")
    slope = _node_table(demand.get("slope", {}), nodes, S, T, errors, "demand.slope")
    availability = {}
    for r, tab in doc.get("availability", {}).items():
        availability[r] = _node_table(tab, nodes, S, T, errors, f"availability.{r}")
    double = _get(sysdoc, "budget_double_count", errors, "system", bool, default=False)
    if errors:
        raise ConfigError(errors, path)

    system = EnergySystem(
        nodes=nodes, producers=names["producers"],
        conventional_techs=names["conventional_techs"],
        renewable_techs=names["renewable_techs"], scenarios=tuple(scen),
        probabilities=np.array(probs), periods=tuple(per), durations=np.array(durs),
        intercept=intercept, slope=slope, availability=availability,
        lines=tuple(lines), conventional_units=tuple(conv), renewable_units=tuple(vre),
        budget_double_count=bool(double), name=str(sysdoc.get("name", "")))
    policy = _parse_policy(doc.get("policy"), errors)
    rep = validate_system(system)
    errors.extend(rep.issues)
    if not errors:
        errors.extend(validate_policy(system, policy).issues)
    if errors:
        raise ConfigError(errors, path)
    return system, policy


def _parse_policy(doc, errors):
    if doc is None:
        log.warning("no [policy] section; all policy parameters set to zero")
        return PolicySet()
    out = {}
    for key in ("carbon_tax", "vre_incentive", "geb"):
        tab = doc.get(key)
        if tab is None:
            log.warning("policy.%s missing; set to zero", key)
            out[key] = {}
            continue
        if not isinstance(tab, dict):
            errors.append((f"policy.{key}", "expected a table"))
            out[key] = {}
            continue
        vals = {}
        for k, v in tab.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                errors.append((f"policy.{key}.{k}", f"expected a number, got {v!r}"))
            else:
                vals[k] = float(v)
        out[key] = vals
    teb = doc.get("teb")
    if teb is None:
        log.warning("policy.teb missing; set to zero")
        teb = 0.0
    elif isinstance(teb, bool) or not isinstance(teb, (int, float)):
        errors.append(("policy.teb", f"expected a number, got {teb!r}"))
        teb = 0.0
    return PolicySet(teb=float(teb), **out)


def load_system(path):
    """Read and validate a system config.

    Raises
    ------
    ConfigError
        With located messages for parse, schema and validation problems.
    """
    path = Path(path)
    raw = path.read_bytes()
    try:
        doc = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError([("parse", str(exc))], path) from None
    return parse_config(doc, path)


def _canon_float(v):
    v = float(v)
    return int(v) if v.is_integer() and abs(v) < 2**53 else v


def config_document(system: EnergySystem, policy: PolicySet | None = None):
    """Canonical TOML document for a system and policy."""
    policy = policy or PolicySet()
    nodes = system.nodes

    def table(arr):
        return {node: [[float(arr[s, t, n]) for t in range(arr.shape[1])]
                       for s in range(arr.shape[0])] for n, node in enumerate(nodes)}

    doc = {
        "schema": SCHEMA,
        "system": {
            "name": system.name,
            "nodes": list(nodes), "producers": list(system.producers),
            "conventional_techs": list(system.conventional_techs),
            "renewable_techs": list(system.renewable_techs),
            "budget_double_count": bool(system.budget_double_count),
        },
        "scenarios": [{"id": s, "probability": float(p)}
                      for s, p in zip(system.scenarios, system.probabilities)],
        "periods": [{"id": t, "duration": float(d)}
                    for t, d in zip(system.periods, system.durations)],
        "lines": [{"a": ln.a, "b": ln.b, "capacity": float(ln.capacity),
                   "maintenance": float(ln.maintenance), "investment": float(ln.investment)}
                  for ln in system.lines],
        "conventional_units": [
            {"node": u.node, "producer": u.producer, "tech": u.tech,
             "installed": float(u.installed), "operational_cost": float(u.operational_cost),
             "maintenance": float(u.maintenance), "investment": float(u.investment),
             "ramp_up": float(u.ramp_up), "ramp_down": float(u.ramp_down),
             "expandable": bool(u.expandable)} for u in system.conventional_units],
        "renewable_units": [
            {"node": u.node, "producer": u.producer, "tech": u.tech,
             "installed": float(u.installed), "maintenance": float(u.maintenance),
             "investment": float(u.investment)} for u in system.renewable_units],
        "demand": {"intercept": table(system.intercept), "slope": table(system.slope)},
        "availability": {r: table(system.availability[r]) for r in system.renewable_techs},
        "policy": {
            "teb": float(policy.teb),
            "carbon_tax": {e: float(policy.tax(e)) for e in system.conventional_techs},
            "vre_incentive": {n: float(policy.incentive(n)) for n in nodes},
            "geb": {i: float(policy.budget(i)) for i in system.producers},
        },
    }
    if not doc["lines"]:
        del doc["lines"]
    if not doc["conventional_units"]:
        del doc["conventional_units"]
    if not doc["renewable_units"]:
        del doc["renewable_units"]
    if not doc["availability"]:
        del doc["availability"]
    return doc


def dumps_system(system, policy=None):
    return tomli_w.dumps(config_document(system, policy))


def save_system(system, policy, path):
    Path(path).write_text(dumps_system(system, policy), encoding="utf-8", newline="\n")


# ------------------------------------------------------------------ hourly CSV
def load_hourly_csv(path):
    """Read ``hour,<node>:<kind>,...`` columns into :class:`HourlySeries`.

    Leap-year files (8784 rows) are truncated to 8760 hours.
    """
    from .repdays import SERIES_KINDS, HourlySeries

    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError([("header", "empty file")], path) from None
        header = [h.strip() for h in header]
        if not header or header[0] != "hour":
            raise ConfigError([("header", "first column must be 'hour'")], path)
        cols = header[1:]
        seen = set()
        keys = []
        errors = []
        for c, name in enumerate(cols, start=2):
            if name in seen:
                errors.append((f"column {c}", f"duplicate column {name!r}"))
            seen.add(name)
            node, sep, kind = name.partition(":")
            if not sep or not node or kind not in SERIES_KINDS:
                errors.append((f"column {c}", f"expected '<node>:<kind>' with kind in "
                                              f"{SERIES_KINDS}, got {name!r}"))
            keys.append((node, kind))
        if errors:
            raise ConfigError(errors, path)
        data = []
        for r, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ConfigError([(f"row {r}", f"expected {len(header)} cells, "
                                                f"got {len(row)}")], path)
            vals = []
            for c, cell in enumerate(row):
                cell = cell.strip()
                if cell == "":
                    raise ConfigError([(f"row {r}, column {c + 1}", "empty value")], path)
                try:
                    v = float(cell)
                except ValueError:
                    raise ConfigError([(f"row {r}, column {c + 1}",
                                        f"non-numeric value {cell!r}")], path) from None
                if not math.isfinite(v):
                    raise ConfigError([(f"row {r}, column {c + 1}",
                                        f"non-finite value {cell!r}")], path)
                vals.append(v)
            data.append(vals)
    if len(data) not in (HOURS_PER_YEAR, HOURS_PER_YEAR + 24):
        raise ConfigError([("rows", f"expected {HOURS_PER_YEAR} data rows, "
                                    f"got {len(data)}")], path)
    arr = np.array(data, dtype=float)
    hours = arr[:, 0]
    if not np.array_equal(hours, np.arange(1, len(data) + 1)):
        bad = int(np.flatnonzero(hours != np.arange(1, len(data) + 1))[0])
        raise ConfigError([(f"row {bad + 2}", "hour index must run 1..N contiguously")], path)
    if len(data) > HOURS_PER_YEAR:
        log.info("%s: truncating leap year to %d hours", path, HOURS_PER_YEAR)
        arr = arr[:HOURS_PER_YEAR]
    return [HourlySeries(node=node, kind=kind, values=arr[:, c + 1])
            for c, (node, kind) in enumerate(keys)]


def write_hourly_csv(series, path):
    series = list(series)
    cols = [f"{s.node}:{s.kind}" for s in series]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour"] + cols)
        vals = np.column_stack([s.values for s in series])
        for h in range(vals.shape[0]):
            w.writerow([h + 1] + [fmt_float(v) for v in vals[h]])


# ------------------------------------------------------------------ results
def fmt_float(v):
    """12-significant-digit text for a float (``inf``/``nan`` spelled out)."""
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, f".{SIG_DIGITS}g")


def round_sig(v):
    v = float(v)
    if not math.isfinite(v):
        return v
    return float(format(v, f".{SIG_DIGITS}g"))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = round_sig(obj)
        if not math.isfinite(v):
            return fmt_float(v)
        return v
    return obj


def _key(*parts):
    return "(" + ",".join(str(p) for p in parts) + ")"


def outcome_record(system, outcome):
    """Primal and dual blocks keyed by ``(s,t,n,...)`` string tuples."""
    S, T, N = system.shape
    sc, per, nodes = system.scenarios, system.periods, system.nodes
    conv, vre = system.conventional_units, system.renewable_units
    oriented = list(system.oriented_lines())

    def stn(arr):
        return {_key(sc[s], per[t], nodes[n]): arr[s, t, n]
                for s in range(S) for t in range(T) for n in range(N)}

    def unit(arr, units):
        return {_key(sc[s], per[t], u.node, u.producer, u.tech): arr[s, t, k]
                for s in range(S) for t in range(T) for k, u in enumerate(units)}

    def flow(arr):
        return {_key(sc[s], per[t], nodes[i], nodes[j]): arr[s, t, k]
                for s in range(S) for t in range(T) for k, i, j in oriented}

    def cap(arr, units):
        return {_key(u.node, u.producer, u.tech): arr[k] for k, u in enumerate(units)}

    lines = {_key(nodes[i], nodes[j]): outcome.plan.levels[k] for k, i, j in oriented}
    rec = {
        "type": "MarketOutcome",
        "centralized": outcome.centralized,
        "objective": outcome.objective,
        "status": outcome.status,
        "primal": {
            "q": stn(outcome.q), "g_e": unit(outcome.g_e, conv),
            "g_r": unit(outcome.g_r, vre), "f": flow(outcome.f),
            "l_plus": lines,
            "g_e_plus": cap(outcome.g_e_plus, conv), "g_r_plus": cap(outcome.g_r_plus, vre),
        },
        "dual": {
            "theta": stn(outcome.theta), "price": stn(outcome.price(system)),
            "beta_e": unit(outcome.beta_e, conv), "beta_r": unit(outcome.beta_r, vre),
            "beta_up": unit(outcome.beta_up, conv), "beta_down": unit(outcome.beta_down, conv),
            "beta_f1": flow(outcome.beta_f1), "beta_f2": flow(outcome.beta_f2),
            "lambda_f": flow(outcome.lambda_f),
            "beta_g": {_key(p): outcome.beta_g[k] for k, p in enumerate(system.producers)},
            "beta_teb": outcome.beta_teb,
            "lambda_q": stn(outcome.lambda_q), "lambda_e": unit(outcome.lambda_e, conv),
            "lambda_r": unit(outcome.lambda_r, vre),
            "lambda_e_plus": cap(outcome.lambda_e_plus, conv),
            "lambda_r_plus": cap(outcome.lambda_r_plus, vre),
        },
    }
    if outcome.lambda_l_plus is not None:
        rec["dual"]["lambda_l_plus"] = {_key(nodes[i], nodes[j]): outcome.lambda_l_plus[k]
                                        for k, i, j in oriented}
    return rec


def outcome_from_record(system, rec):
    """Inverse of :func:`outcome_record` (used by ``verify-kkt``)."""
    from .equilibrium import MarketOutcome
    from .qp import ExpansionPlan

    S, T, N = system.shape
    sc, per, nodes = system.scenarios, system.periods, system.nodes
    conv, vre = system.conventional_units, system.renewable_units
    oriented = list(system.oriented_lines())
    L = len(system.lines)
    errors = []

    def fetch(block, name, keys, shape):
        out = np.zeros(shape)
        tab = rec.get(block, {}).get(name)
        if tab is None:
            errors.append((f"{block}.{name}", "missing"))
            return out
        for idx, key in keys:
            if key not in tab:
                errors.append((f"{block}.{name}.{key}", "missing"))
                continue
            try:
                out[idx] = float(tab[key])
            except (TypeError, ValueError):
                errors.append((f"{block}.{name}.{key}", f"not a number: {tab[key]!r}"))
        return out

    k_stn = [((s, t, n), _key(sc[s], per[t], nodes[n]))
             for s in range(S) for t in range(T) for n in range(N)]
    k_e = [((s, t, k), _key(sc[s], per[t], u.node, u.producer, u.tech))
           for s in range(S) for t in range(T) for k, u in enumerate(conv)]
    k_r = [((s, t, k), _key(sc[s], per[t], u.node, u.producer, u.tech))
           for s in range(S) for t in range(T) for k, u in enumerate(vre)]
    k_f = [((s, t, k), _key(sc[s], per[t], nodes[i], nodes[j]))
           for s in range(S) for t in range(T) for k, i, j in oriented]
    k_ce = [(k, _key(u.node, u.producer, u.tech)) for k, u in enumerate(conv)]
    k_cr = [(k, _key(u.node, u.producer, u.tech)) for k, u in enumerate(vre)]
    k_l = [(k, _key(nodes[i], nodes[j])) for k, i, j in oriented]
    k_p = [(k, _key(p)) for k, p in enumerate(system.producers)]
    Ue, Ur = len(conv), len(vre)
    central = bool(rec.get("centralized", False))
    plan = ExpansionPlan(tuple(np.maximum(fetch("primal", "l_plus", k_l, L), 0.0)))
    out = MarketOutcome(
        plan=plan,
        q=fetch("primal", "q", k_stn, (S, T, N)),
        g_e=fetch("primal", "g_e", k_e, (S, T, Ue)),
        g_r=fetch("primal", "g_r", k_r, (S, T, Ur)),
        f=fetch("primal", "f", k_f, (S, T, L)),
        g_e_plus=fetch("primal", "g_e_plus", k_ce, Ue),
        g_r_plus=fetch("primal", "g_r_plus", k_cr, Ur),
        theta=fetch("dual", "theta", k_stn, (S, T, N)),
        beta_e=fetch("dual", "beta_e", k_e, (S, T, Ue)),
        beta_r=fetch("dual", "beta_r", k_r, (S, T, Ur)),
        beta_up=fetch("dual", "beta_up", k_e, (S, T, Ue)),
        beta_down=fetch("dual", "beta_down", k_e, (S, T, Ue)),
        beta_f1=fetch("dual", "beta_f1", k_f, (S, T, L)),
        beta_f2=fetch("dual", "beta_f2", k_f, (S, T, L)),
        beta_g=fetch("dual", "beta_g", k_p, len(system.producers)),
        lambda_q=fetch("dual", "lambda_q", k_stn, (S, T, N)),
        lambda_e=fetch("dual", "lambda_e", k_e, (S, T, Ue)),
        lambda_r=fetch("dual", "lambda_r", k_r, (S, T, Ur)),
        lambda_e_plus=fetch("dual", "lambda_e_plus", k_ce, Ue),
        lambda_r_plus=fetch("dual", "lambda_r_plus", k_cr, Ur),
        objective=float(rec.get("objective", float("nan"))),
        centralized=central,
        beta_teb=float(rec.get("dual", {}).get("beta_teb", 0.0)),
        lambda_l_plus=fetch("dual", "lambda_l_plus", k_l, L) if central else None,
        status=str(rec.get("status", "optimal")),
    )
    if errors:
        raise ConfigError(errors)
    return out


def _records(obj, system=None):
    """Return ``(json_document, csv_header, csv_rows)`` for a result object."""
    from .bilevel import BilevelSolution
    from .equilibrium import KktReport, MarketOutcome, OutputFactors
    from .repdays import ClusterResult
    from .sweep import SweepReport

    if isinstance(obj, SweepReport):
        return obj.to_dict(), obj.csv_header(), obj.csv_rows()
    if isinstance(obj, BilevelSolution):
        doc = obj.to_dict()
        header = ["field", "value"]
        rows = [[k, v] for k, v in doc.items() if not isinstance(v, (dict, list))]
        rows += [[f"plan{_key(*k.strip('()').split(','))}", v]
                 for k, v in doc["plan"].items()]
        return doc, header, rows
    if isinstance(obj, MarketOutcome):
        if system is None:
            raise TypeError("writing a MarketOutcome needs the system")
        doc = outcome_record(system, obj)
        rows = []
        for block in ("primal", "dual"):
            for name, tab in doc[block].items():
                if isinstance(tab, dict):
                    rows += [[block, name, k, v] for k, v in tab.items()]
                else:
                    rows.append([block, name, "", tab])
        return doc, ["block", "name", "key", "value"], rows
    if isinstance(obj, OutputFactors):
        doc = {"type": "OutputFactors", "welfare": obj.welfare, "vre_share": obj.vre_share,
               "total_generation": obj.total_generation,
               "zero_generation": obj.zero_generation}
        return doc, list(doc)[1:], [list(doc.values())[1:]]
    if isinstance(obj, KktReport):
        doc = {"type": "KktReport", "tolerance": obj.tolerance, "passed": obj.passed,
               "worst": obj.worst, "stationarity": obj.stationarity,
               "complementarity": obj.complementarity, "primal": obj.primal,
               "dual_sign": obj.dual_sign, "violations": obj.violations()}
        rows = [[g, k, v] for g in ("stationarity", "complementarity", "primal", "dual_sign")
                for k, v in doc[g].items()]
        return doc, ["group", "condition", "scaled_residual"], rows
    if isinstance(obj, ClusterResult):
        doc = obj.to_dict()
        return doc, obj.csv_header(), obj.csv_rows()
    if isinstance(obj, dict):
        return obj, None, None
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def to_json_text(obj, system=None):
    doc, _, _ = _records(obj, system)
    return json.dumps(_jsonable(doc), indent=2, sort_keys=False) + "\n"


def to_csv_text(obj, system=None):
    _, header, rows = _records(obj, system)
    if header is None:
        raise TypeError("no CSV schema for this object")
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else
                    ("true" if v is True else "false" if v is False else v) for v in row])
    return buf.getvalue()


def write_results(obj, path, fmt=None, system=None):
    """Serialize a result object as JSON or CSV.

    ``fmt`` defaults to the file suffix.  Filesystem errors propagate
    unchanged.
    """
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if fmt == "json":
        text = to_json_text(obj, system)
    elif fmt == "csv":
        text = to_csv_text(obj, system)
    else:
        raise ValueError(f"unknown format {fmt!r} (json or csv)")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_csv_rows(path, header, rows):
    """Write plain rows with the same float formatting as the result files."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(buf.getvalue())


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


@dataclass
class PackagedData:
    """Locations of the fixtures shipped with the package."""

    root: Path

    def path(self, name):
        p = self.root / name
        if not p.exists():
            raise FileNotFoundError(p)
        return p


def packaged(name):
    """Path of a packaged fixture such as ``"illustrative_3node.cfg"``."""
    return PackagedData(Path(__file__).resolve().parent / "data").path(name)
