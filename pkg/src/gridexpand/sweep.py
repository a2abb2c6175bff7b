"""Policy sensitivity runs: univariate and full-factorial designs.

Design files are TOML::

    schema = "gridexpand-design/1"
    name = "table3"
    mode = "full_factorial"          # or "univariate"
    solver = "centralized"           # bilevel_exact, bilevel_enum
    grid = "0,3000,6000,9000"        # bilevel_enum only

    [fixed]                          # values of axes not being swept
    teb = 1e7
    geb = 1e6                        # scalar (every producer) or table
    carbon_tax = 0.0                 # scalar multiplies [base].carbon_tax
    incentive = 0.0                  # scalar (every node) or table

    [base]
    carbon_tax = { coal = 1.0 }      # default: 1 for every conventional tech

    [axes]
    teb = [1e5, 1e6]
    carbon_tax = [{ coal = 8.0 }, { coal = 70.0 }]

In univariate mode each axis is varied alone with the others at their
``fixed`` values; ``by = ["geb"]`` repeats those sweeps for every value of
the listed axes.  Full-factorial mode takes the Cartesian product of all
axes in the order written.

Deltas against the baseline (every policy parameter zero) are given in
percentage points for the VRE share and in percent for welfare and
generation; column names carry ``_pp`` and ``_pct`` to say which.
"""
from __future__ import annotations

import itertools
import logging
import math
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from . import bilevel, equilibrium
from .equilibrium import SolveError, output_factors
from .model import PolicySet, apply_policy, validate_policy

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

AXES = ("teb", "geb", "carbon_tax", "incentive")
MODES = ("univariate", "full_factorial")
SOLVERS = ("centralized", "bilevel_exact", "bilevel_enum")
DESIGN_SCHEMA = "gridexpand-design/1"


@dataclass
class SweepDesign:
    """Axes, mode and solver of a sensitivity run."""

    axes: dict
    mode: str = "univariate"
    solver: str = "centralized"
    fixed: dict = field(default_factory=dict)
    base_tax: dict | None = None
    by: tuple = ()
    grid: str | None = None
    name: str = ""

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if not self.axes:
            raise ValueError("a design needs at least one axis")
        for name, values in self.axes.items():
            if name not in AXES:
                raise ValueError(f"unknown axis {name!r}; expected one of {AXES}")
            if not list(values):
                raise ValueError(f"axis {name!r} is empty")
        for name in list(self.fixed) + list(self.by):
            if name not in AXES:
                raise ValueError(f"unknown axis {name!r}")
        for name in self.by:
            if name not in self.axes:
                raise ValueError(f"'by' axis {name!r} has no values")
        if self.mode == "univariate":
            swept = [a for a in self.axes if a not in self.by]
            need = {a for a in AXES if a not in self.by}
            if len(swept) == 1:
                need -= set(swept)
            missing = sorted(need - set(self.fixed))
            if missing:
                raise ValueError(f"univariate design needs fixed values for {missing}")
        if self.solver == "bilevel_enum" and not self.grid:
            raise ValueError("bilevel_enum needs a grid")

    def points(self):
        """Ordered list of ``(label, {axis: value})`` design points."""
        pts = []
        if self.mode == "full_factorial":
            names = list(self.axes)
            for combo in itertools.product(*(self.axes[a] for a in names)):
                pts.append(("*", dict(zip(names, combo))))
            return pts
        by = list(self.by)
        outer = itertools.product(*(self.axes[a] for a in by)) if by else [()]
        for combo in outer:
            pinned = dict(zip(by, combo))
            for a, values in self.axes.items():
                if a in pinned:
                    continue
                for v in values:
                    point = {k: v0 for k, v0 in self.fixed.items()}
                    point.update(pinned)
                    point[a] = v
                    pts.append((a, point))
        return pts

    def to_dict(self):
        doc = {"schema": DESIGN_SCHEMA, "name": self.name, "mode": self.mode,
               "solver": self.solver}
        if self.grid:
            doc["grid"] = self.grid
        if self.by:
            doc["by"] = list(self.by)
        if self.fixed:
            doc["fixed"] = dict(self.fixed)
        if self.base_tax:
            doc["base"] = {"carbon_tax": dict(self.base_tax)}
        doc["axes"] = {k: list(v) for k, v in self.axes.items()}
        return doc


def design_from_dict(doc):
    schema = doc.get("schema")
    if schema != DESIGN_SCHEMA:
        raise ValueError(f"unknown design schema {schema!r}; expected {DESIGN_SCHEMA!r}")
    base = doc.get("base", {}).get("carbon_tax")
    return SweepDesign(axes=dict(doc.get("axes", {})), mode=doc.get("mode", "univariate"),
                       solver=doc.get("solver", "centralized"),
                       fixed=dict(doc.get("fixed", {})), base_tax=base,
                       by=tuple(doc.get("by", ())), grid=doc.get("grid"),
                       name=doc.get("name", ""))


def load_design(path):
    with open(path, "rb") as fh:
        return design_from_dict(tomllib.load(fh))


def dumps_design(design):
    import tomli_w

    return tomli_w.dumps(design.to_dict())


# ------------------------------------------------------------------ policies
def _per_key(value, keys, what):
    if isinstance(value, dict):
        unknown = set(value) - set(keys)
        if unknown:
            raise ValueError(f"{what}: unknown keys {sorted(unknown)}")
        return {k: float(value.get(k, 0.0)) for k in keys}
    if isinstance(value, (list, tuple)):
        if len(value) != len(keys):
            raise ValueError(f"{what}: expected {len(keys)} values, got {len(value)}")
        return {k: float(v) for k, v in zip(keys, value)}
    return {k: float(value) for k in keys}


def point_policy(system, point, base_tax=None):
    """PolicySet for one design point; absent axes are zero."""
    techs = system.conventional_techs
    tax = point.get("carbon_tax", 0.0)
    if isinstance(tax, (dict, list, tuple)):
        taxes = _per_key(tax, techs, "carbon_tax")
    else:
        base = _per_key(base_tax if base_tax is not None else 1.0, techs, "base carbon_tax")
        taxes = {e: float(tax) * base[e] for e in techs}
    return PolicySet(
        carbon_tax=taxes,
        vre_incentive=_per_key(point.get("incentive", 0.0), system.nodes, "incentive"),
        teb=float(point.get("teb", 0.0)),
        geb=_per_key(point.get("geb", 0.0), system.producers, "geb"))


def _label(value):
    if isinstance(value, dict):
        return "{" + ",".join(f"{k}={value[k]!r}" for k in value) + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(repr(v) for v in value) + "]"
    return repr(value)


# ------------------------------------------------------------------ records
@dataclass
class SweepRecord:
    index: int
    axis: str
    point: dict
    policy: PolicySet | None
    status: str = "optimal"
    welfare: float = math.nan
    vre_share: float = math.nan
    total_generation: float = math.nan
    plan: tuple = ()
    iterations: int = 0
    message: str = ""

    @property
    def ok(self):
        return self.status == "optimal"


@dataclass
class DeltaRow:
    index: int
    axis: str
    vre_share_pp: float
    welfare_pct: float
    generation_pct: float
    generation_defined: bool = True


@dataclass(eq=False)
class SweepReport:
    """Records of a sweep plus the all-zero-policy baseline."""

    design: SweepDesign
    records: list
    baseline: SweepRecord
    system_name: str = ""

    @property
    def complete(self):
        return self.baseline.ok and all(r.ok for r in self.records)

    @property
    def failed(self):
        return [r for r in [self.baseline] + self.records if not r.ok]

    def deltas(self, decimals=None):
        return compare_to_baseline(self, decimals)

    def _row(self, r, d):
        pt = r.point
        return [r.index, r.axis,
                _label(pt.get("teb", "")) if "teb" in pt else "",
                _label(pt["geb"]) if "geb" in pt else "",
                _label(pt["carbon_tax"]) if "carbon_tax" in pt else "",
                _label(pt["incentive"]) if "incentive" in pt else "",
                r.status, r.welfare, r.vre_share, r.total_generation,
                d.welfare_pct if d else 0.0, d.vre_share_pp if d else 0.0,
                (d.generation_pct if d.generation_defined else "undefined") if d else 0.0,
                ";".join(repr(v) for v in r.plan), r.iterations]

    def csv_header(self):
        return ["point", "axis", "teb", "geb", "carbon_tax", "incentive", "status",
                "welfare", "vre_share", "total_generation", "welfare_delta_pct",
                "vre_share_delta_pp", "generation_delta_pct", "plan", "iterations"]

    def csv_rows(self):
        deltas = {d.index: d for d in compare_to_baseline(self)}
        rows = [self._row(self.baseline, deltas.get(self.baseline.index))]
        rows += [self._row(r, deltas.get(r.index)) for r in self.records]
        return rows

    def long_rows(self):
        """``(point, axis, parameter_value, factor, value)`` for plotting."""
        out = []
        deltas = {d.index: d for d in compare_to_baseline(self)}
        for r in [self.baseline] + self.records:
            value = _label(r.point[r.axis]) if r.axis in r.point else ""
            d = deltas.get(r.index)
            for factor, v in (("welfare", r.welfare), ("vre_share", r.vre_share),
                              ("total_generation", r.total_generation),
                              ("welfare_delta_pct", d.welfare_pct if d else math.nan),
                              ("vre_share_delta_pp", d.vre_share_pp if d else math.nan),
                              ("generation_delta_pct", d.generation_pct if d else math.nan)):
                out.append([r.index, r.axis, value, factor, v])
        return out

    def to_dict(self):
        deltas = {d.index: d for d in compare_to_baseline(self)}

        def rec(r):
            d = deltas.get(r.index)
            return {"point": r.index, "axis": r.axis,
                    "parameters": {k: v for k, v in r.point.items()},
                    "status": r.status, "welfare": r.welfare, "vre_share": r.vre_share,
                    "total_generation": r.total_generation, "plan": list(r.plan),
                    "iterations": r.iterations, "message": r.message,
                    "delta": None if d is None else {
                        "welfare_pct": d.welfare_pct, "vre_share_pp": d.vre_share_pp,
                        "generation_pct": d.generation_pct if d.generation_defined else None}}

        return {"type": "SweepReport", "system": self.system_name,
                "design": self.design.to_dict(), "complete": self.complete,
                "baseline": rec(self.baseline),
                "records": [rec(r) for r in self.records]}


# ------------------------------------------------------------------ deltas
def _pct(x, x0):
    return 100.0 * (x - x0) / abs(x0)


def compare_to_baseline(report: SweepReport, decimals=None):
    """Per-record deltas against the baseline record.

    VRE share deltas are percentage points (difference of shares times 100);
    welfare and generation deltas are percent of the baseline value.  A zero
    baseline generation leaves the generation delta undefined (nan, flagged).
    """
    b = report.baseline
    if b is None or not b.ok:
        raise ValueError("report has no usable baseline")

    def rnd(v):
        return round(v, decimals) if decimals is not None and math.isfinite(v) else v

    out = []
    for r in [b] + list(report.records):
        if not r.ok:
            continue
        gen_ok = b.total_generation != 0
        out.append(DeltaRow(
            index=r.index, axis=r.axis,
            vre_share_pp=rnd(100.0 * (r.vre_share - b.vre_share)),
            welfare_pct=rnd(_pct(r.welfare, b.welfare)) if b.welfare != 0 else math.nan,
            generation_pct=rnd(_pct(r.total_generation, b.total_generation))
            if gen_ok else math.nan,
            generation_defined=gen_ok))
    return out


def delta_difference(a: DeltaRow, b: DeltaRow, factor, decimals=None):
    """Difference between two records' deltas of one factor (pp or %)."""
    v = getattr(a, factor) - getattr(b, factor)
    return round(v, decimals) if decimals is not None else v


def report_from_absolutes(baseline, points, design=None):
    """Build a report from known output factors (no solving).

    ``baseline`` and each entry of ``points`` are ``(welfare, vre_share,
    total_generation)`` triples.
    """
    design = design or SweepDesign(axes={"teb": [0.0]}, mode="full_factorial",
                                   name="absolutes")
    base = SweepRecord(0, "baseline", {}, None, welfare=float(baseline[0]),
                       vre_share=float(baseline[1]), total_generation=float(baseline[2]))
    recs = [SweepRecord(i + 1, "*", {}, None, welfare=float(w), vre_share=float(v),
                        total_generation=float(g))
            for i, (w, v, g) in enumerate(points)]
    return SweepReport(design, recs, base)


# ------------------------------------------------------------------ running
def _solve_point(system, design, index, axis, point, policy, settings):
    rec = SweepRecord(index, axis, point, policy)
    rep = validate_policy(system, policy)
    if not rep.ok:
        rec.status = "invalid"
        rec.message = str(rep)
        return rec
    eff = apply_policy(system, policy)
    try:
        if design.solver == "centralized":
            out = equilibrium.solve_centralized(system, eff, settings)
            fac = output_factors(system, eff, out.plan, out)
            plan, iters = out.plan, out.iterations
        elif design.solver == "bilevel_exact":
            sol = bilevel.solve_bilevel_exact(system, eff, settings)
            fac, plan, iters = sol.factors, sol.plan, sol.outcome.iterations
        else:
            grid = bilevel.PlanGrid.parse(system, design.grid)
            sol = bilevel.solve_bilevel_enum(system, eff, grid, settings)
            fac, plan, iters = sol.factors, sol.plan, sol.solved
    except (SolveError, bilevel.EquivalenceError) as exc:
        rec.status = "failed"
        rec.message = str(exc)
        return rec
    rec.welfare = fac.welfare
    rec.vre_share = fac.vre_share
    rec.total_generation = fac.total_generation
    rec.plan = tuple(float(v) for v in plan.levels)
    rec.iterations = int(iters)
    return rec


def run_sweep(system, design: SweepDesign, settings=None, workers=1, progress=None):
    """Solve every design point and the baseline with identical settings.

    Failures are recorded per point (``status != "optimal"``) and make the
    report incomplete rather than raising.
    """
    jobs = [(0, "baseline", {}, PolicySet.zero())]
    for i, (axis, point) in enumerate(design.points(), start=1):
        jobs.append((i, axis, point, point_policy(system, point, design.base_tax)))
    args = [(system, design, i, axis, point, pol, settings) for i, axis, point, pol in jobs]
    results = {}
    if workers > 1 and len(args) > 1:
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            futures = [pool.submit(_solve_point, *a) for a in args]
            for fut in futures:
                rec = fut.result()
                results[rec.index] = rec
                if progress:
                    progress(len(results), len(args))
    else:
        for a in args:
            rec = _solve_point(*a)
            results[rec.index] = rec
            if progress:
                progress(len(results), len(args))
    ordered = [results[i] for i in sorted(results)]
    for r in ordered:
        if not r.ok:
            log.warning("point %d (%s) %s: %s", r.index, r.axis, r.status, r.message)
    return SweepReport(design, ordered[1:], ordered[0], system.name)


__all__ = ["SweepDesign", "SweepRecord", "SweepReport", "DeltaRow", "run_sweep",
           "compare_to_baseline", "delta_difference", "report_from_absolutes",
           "load_design", "dumps_design", "design_from_dict", "point_policy"]
