"""Transmission planning on top of the market equilibrium.

Two routes:

* ``solve_bilevel_exact``: under perfect competition the market outcome
  for a plan is the welfare-maximizing dispatch, so the planner program
  gives the optimal plan directly; the market is then re-solved at that plan
  and both welfare values must agree.
* ``solve_bilevel_enum``: every plan of a discrete grid is fixed in turn and
  the market is solved; the best welfare wins.

Enumeration work is split into blocks of consecutive candidates in
lexicographic order.  Each block starts from a cold solver and warm-starts
inside the block, so results do not depend on how blocks are scheduled
across processes or resumed from a checkpoint.

Checkpoint format (UTF-8 text, one record per line)::

    # gridexpand-enum-checkpoint 1
    # fingerprint <sha1 of inputs>
    cand <index> <l_1,...,l_L> <status> <welfare> <vre_share> <generation>
    block <b> done <solved> <pruned> <failed>

Floats are written with ``repr`` so a resumed run reproduces every value
exactly.  Candidate lines of a block without its ``done`` line are ignored.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import logging
import math
import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path


from . import equilibrium
from .equilibrium import MarketSolver, SolveError, output_factors
from .qp import ExpansionPlan
from .solver import SolverSettings

log = logging.getLogger(__name__)

DEFAULT_MAX_CANDIDATES = 2 ** 20
DEFAULT_BLOCK_SIZE = 64
TIE_RTOL = 1e-9
_CKPT_MAGIC = "# gridexpand-enum-checkpoint 1"


class EnumerationInterrupted(RuntimeError):
    """Raised when an enumeration stops early; the checkpoint stays valid."""


class EquivalenceError(RuntimeError):
    """Planner and market welfare disagree at the planner's optimal plan."""

    def __init__(self, central, market):
        super().__init__(f"planner welfare {central!r} != market welfare {market!r}")
        self.central = central
        self.market = market


@dataclass(frozen=True)
class PlanGrid:
    """Candidate expansion levels (MW) per line, in ``system.lines`` order."""

    levels: tuple

    def __post_init__(self):
        lv = tuple(tuple(float(v) for v in line) for line in self.levels)
        for k, line in enumerate(lv):
            if not line:
                raise ValueError(f"line {k}: empty level list")
            if line[0] != 0.0:
                raise ValueError(f"line {k}: levels must include 0 as the first entry")
            if any(b <= a for a, b in zip(line, line[1:])):
                raise ValueError(f"line {k}: levels must be strictly increasing")
            if any(not math.isfinite(v) or v < 0 for v in line):
                raise ValueError(f"line {k}: levels must be finite and >= 0")
        object.__setattr__(self, "levels", lv)

    @classmethod
    def uniform(cls, system, levels):
        return cls(tuple(tuple(levels) for _ in system.lines))

    @classmethod
    def parse(cls, system, spec):
        """``"0,3000,6000"`` (same for every line) or ``"0,10;0,20;..."``."""
        parts = [p for p in spec.split(";")]
        if len(parts) == 1:
            vals = [float(v) for v in parts[0].split(",") if v.strip()]
            return cls.uniform(system, vals)
        if len(parts) != len(system.lines):
            raise ValueError(f"grid lists {len(parts)} lines, system has {len(system.lines)}")
        return cls(tuple(tuple(float(v) for v in p.split(",") if v.strip()) for p in parts))

    @property
    def sizes(self):
        return tuple(len(x) for x in self.levels)

    @property
    def count(self):
        """Number of plans before budget pruning."""
        return math.prod(self.sizes)

    def plan_at(self, index):
        """Plan number ``index`` in lexicographic order (last line fastest)."""
        digits = []
        for size in reversed(self.sizes):
            index, r = divmod(index, size)
            digits.append(r)
        return tuple(self.levels[k][d] for k, d in enumerate(reversed(digits)))

    def spec(self):
        return ";".join(",".join(repr(v) for v in line) for line in self.levels)


def _plan_cost(system, levels):
    mult = 2.0 if system.budget_double_count else 1.0
    return mult * sum(ln.investment * v for ln, v in zip(system.lines, levels))


def _within_budget(system, levels, teb):
    return _plan_cost(system, levels) <= teb * (1.0 + 1e-12) + 1e-9


def candidate_plans(system, grid: PlanGrid, teb):
    """Plans of the grid in lexicographic order, skipping those over budget."""
    if len(grid.levels) != len(system.lines):
        raise ValueError("grid must list levels for every line")
    for levels in itertools.product(*grid.levels):
        if _within_budget(system, levels, teb):
            yield ExpansionPlan(levels)


@dataclass
class CandidateRecord:
    index: int
    levels: tuple
    status: str
    welfare: float
    vre_share: float
    generation: float

    def line(self):
        lv = ",".join(repr(float(v)) for v in self.levels)
        return (f"cand {self.index} {lv} {self.status} {self.welfare!r} "
                f"{self.vre_share!r} {self.generation!r}")

    @classmethod
    def parse(cls, text):
        _, idx, lv, status, w, v, g = text.split()
        return cls(int(idx), tuple(float(x) for x in lv.split(",")) if lv else (), status,
                   float(w), float(v), float(g))


@dataclass
class BlockResult:
    block: int
    records: list
    pruned: int

    @property
    def solved(self):
        return sum(1 for r in self.records if r.status == "optimal")

    @property
    def failed(self):
        return sum(1 for r in self.records if r.status != "optimal")


@dataclass(eq=False)
class BilevelSolution:
    """Best plan with its market outcome and enumeration statistics."""

    plan: ExpansionPlan
    outcome: object
    factors: object
    mode: str
    generated: int = 1
    pruned: int = 0
    solved: int = 1
    failed: list = field(default_factory=list)
    log: list | None = None
    central_welfare: float | None = None
    system: object = None

    @property
    def welfare(self):
        return self.factors.welfare

    def to_dict(self):
        nodes = self.system.nodes if self.system is not None else None
        if nodes is not None:
            plan = {f"({nodes[i]},{nodes[j]})": self.plan.levels[k]
                    for k, i, j in self.system.oriented_lines()}
        else:
            plan = {f"({k})": v for k, v in enumerate(self.plan.levels)}
        doc = {
            "type": "BilevelSolution", "mode": self.mode,
            "welfare": self.factors.welfare, "vre_share": self.factors.vre_share,
            "total_generation": self.factors.total_generation,
            "zero_generation": self.factors.zero_generation,
            "generated": self.generated, "pruned": self.pruned, "solved": self.solved,
            "failed": len(self.failed),
            "plan": plan,
        }
        if self.central_welfare is not None:
            doc["central_welfare"] = self.central_welfare
        if self.log is not None:
            doc["candidates"] = [{"index": r.index, "plan": list(r.levels),
                                  "status": r.status, "welfare": r.welfare,
                                  "vre_share": r.vre_share, "generation": r.generation}
                                 for r in self.log]
        return doc


# ------------------------------------------------------------------ exact
def solve_bilevel_exact(system, effective, settings=None, rtol=1e-5) -> BilevelSolution:
    """Optimal plan from the planner program, confirmed by the market."""
    central = equilibrium.solve_centralized(system, effective, settings)
    plan = central.plan
    market = equilibrium.solve_market(system, effective, plan, settings)
    factors = output_factors(system, effective, plan, market)
    cw = central.objective
    if abs(factors.welfare - cw) > rtol * max(1.0, abs(cw)):
        raise EquivalenceError(cw, factors.welfare)
    return BilevelSolution(plan=plan, outcome=market, factors=factors, mode="exact",
                           central_welfare=cw, system=system)


# ------------------------------------------------------------------ enumeration
def _solve_block(system, effective, grid, settings, teb, block, start, stop):
    solver = None
    records = []
    pruned = 0
    for idx in range(start, stop):
        levels = grid.plan_at(idx)
        if not _within_budget(system, levels, teb):
            pruned += 1
            continue
        if solver is None:
            solver = MarketSolver(system, effective, settings)
        plan = ExpansionPlan(levels)
        try:
            out = solver.solve(plan, warm_start=True)
        except SolveError as exc:
            records.append(CandidateRecord(idx, levels, str(exc.status), math.nan,
                                           math.nan, math.nan))
            solver.reset()
            continue
        fac = output_factors(system, effective, plan, out)
        records.append(CandidateRecord(idx, levels, "optimal", fac.welfare,
                                       fac.vre_share, fac.total_generation))
    return BlockResult(block, records, pruned)


def fingerprint(system, effective, grid, settings, block_size):
    from .io import config_document

    doc = config_document(system, effective.policy)
    payload = json.dumps({"system": doc, "grid": grid.spec(), "block": block_size,
                          "settings": repr(settings)}, sort_keys=True)
    return hashlib.sha1(payload.encode("utf-8")).hexdigest()


def read_checkpoint(path, expect_fingerprint=None):
    """Completed blocks of a checkpoint file as ``{block: BlockResult}``."""
    done = {}
    pending = []
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _CKPT_MAGIC:
        raise ValueError(f"{path}: not an enumeration checkpoint")
    for ln in lines[1:]:
        if ln.startswith("# fingerprint "):
            fp = ln.split()[2]
            if expect_fingerprint is not None and fp != expect_fingerprint:
                raise ValueError(f"{path}: checkpoint belongs to different inputs")
        elif ln.startswith("cand "):
            pending.append(CandidateRecord.parse(ln))
        elif ln.startswith("block "):
            parts = ln.split()
            b, pruned = int(parts[1]), int(parts[4])
            done[b] = BlockResult(b, pending, pruned)
            pending = []
    return done


def _write_block(fh, res):
    text = "".join(r.line() + "\n" for r in res.records)
    text += f"block {res.block} done {res.solved} {res.pruned} {res.failed}\n"
    fh.write(text)
    fh.flush()
    os.fsync(fh.fileno())


def _open_checkpoint(path, fp, done):
    """Rewrite the checkpoint with only completed blocks and return a handle."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_CKPT_MAGIC + "\n")
        fh.write(f"# fingerprint {fp}\n")
        for b in sorted(done):
            _write_block(fh, done[b])
    os.replace(tmp, path)
    return open(path, "a", encoding="utf-8", newline="\n")


def _better(rec, best):
    if best is None:
        return True
    tol = TIE_RTOL * max(1.0, abs(best.welfare))
    if rec.welfare > best.welfare + tol:
        return True
    if rec.welfare >= best.welfare - tol:
        return rec.levels < best.levels
    return False


def solve_bilevel_enum(system, effective, grid: PlanGrid, settings=None, *, workers=1,
                       block_size=DEFAULT_BLOCK_SIZE, checkpoint=None,
                       max_candidates=DEFAULT_MAX_CANDIDATES, stop_after_blocks=None,
                       keep_log=False, progress=None) -> BilevelSolution:
    """Enumerate grid plans, solve the market for each, keep the best.

    Parameters
    ----------
    workers : int
        Processes used for blocks; results are identical for any value.
    checkpoint : path, optional
        Completed blocks found there are reused; new blocks are appended.
    max_candidates : int or None
        Refuse grids with more plans than this (before pruning).
    stop_after_blocks : int, optional
        Stop with :class:`EnumerationInterrupted` after this many new blocks.
    progress : callable, optional
        Called with ``(blocks_done, blocks_total)``.
    """
    settings = settings or SolverSettings()
    if len(grid.levels) != len(system.lines):
        raise ValueError("grid must list levels for every line")
    total = grid.count
    if max_candidates is not None and total > max_candidates:
        raise ValueError(f"grid has {total} plans, above the cap of {max_candidates}")
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    teb = effective.teb
    nblocks = -(-total // block_size)
    fp = fingerprint(system, effective, grid, settings, block_size)
    done = {}
    fh = None
    if checkpoint is not None:
        if Path(checkpoint).exists():
            done = read_checkpoint(checkpoint, fp)
            log.info("resuming: %d of %d blocks already done", len(done), nblocks)
        fh = _open_checkpoint(checkpoint, fp, done)
    todo = [b for b in range(nblocks) if b not in done]
    limit = len(todo) if stop_after_blocks is None else min(stop_after_blocks, len(todo))
    args = [(system, effective, grid, settings, teb, b, b * block_size,
             min(total, (b + 1) * block_size)) for b in todo[:limit]]
    try:
        if workers > 1 and len(args) > 1:
            ctx = mp.get_context("fork")
            with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
                futures = [pool.submit(_solve_block, *a) for a in args]
                for fut in futures:
                    res = fut.result()
                    done[res.block] = res
                    if fh is not None:
                        _write_block(fh, res)
                    if progress:
                        progress(len(done), nblocks)
        else:
            for a in args:
                res = _solve_block(*a)
                done[res.block] = res
                if fh is not None:
                    _write_block(fh, res)
                if progress:
                    progress(len(done), nblocks)
    finally:
        if fh is not None:
            fh.close()
    if len(done) < nblocks:
        raise EnumerationInterrupted(f"stopped after {len(done)} of {nblocks} blocks")

    best = None
    records = []
    pruned = 0
    failed = []
    for b in range(nblocks):
        res = done[b]
        pruned += res.pruned
        for rec in res.records:
            records.append(rec)
            if rec.status != "optimal":
                failed.append(rec)
                continue
            if _better(rec, best):
                best = rec
    if best is None:
        raise SolveError("every candidate plan failed", "all_failed")
    plan = ExpansionPlan(best.levels)
    outcome = equilibrium.solve_market(system, effective, plan, settings)
    factors = output_factors(system, effective, plan, outcome)
    solved = sum(1 for r in records if r.status == "optimal")
    return BilevelSolution(plan=plan, outcome=outcome, factors=factors, mode="enum",
                           generated=total, pruned=pruned, solved=solved, failed=failed,
                           log=records if keep_log else None, system=system)


def default_workers():
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (
        os.cpu_count() or 1)


def brute_force_best(system, effective, grid, settings=None):
    """Sequential reference: every plan solved cold, best by welfare then plan."""
    best = None
    for plan in candidate_plans(system, grid, effective.teb):
        out = equilibrium.solve_market(system, effective, plan, settings)
        w = output_factors(system, effective, plan, out).welfare
        rec = CandidateRecord(0, plan.levels, "optimal", w, 0.0, 0.0)
        if _better(rec, best):
            best = rec
    return ExpansionPlan(best.levels), best.welfare


__all__ = ["PlanGrid", "BilevelSolution", "candidate_plans", "solve_bilevel_enum",
           "solve_bilevel_exact", "EnumerationInterrupted", "EquivalenceError",
           "read_checkpoint", "brute_force_best", "default_workers"]
