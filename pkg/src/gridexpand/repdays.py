"""Representative days from hourly annual series.

Pipeline: normalize each hourly series, cut the year into 365 daily
profiles, cluster days on the concatenated (unweighted) profiles of every
node and series kind, pick one representative day per cluster and per
(node, kind), and aggregate the representatives into scenarios (one per
cluster) made of equal-length periods.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

SERIES_KINDS = ("demand", "wind", "solar")
DAYS = 365
HOURS = 24
LINKAGES = ("ward", "single", "complete", "average")


@dataclass(frozen=True, eq=False)
class HourlySeries:
    """One hourly annual series.

    ``basis`` is the normalization divisor (annual maximum for demand,
    installed capacity for wind/solar) once the series is normalized.
    """

    node: str
    kind: str
    values: np.ndarray
    basis: float | None = None
    normalized: bool = False

    def __post_init__(self):
        if self.kind not in SERIES_KINDS:
            raise ValueError(f"unknown series kind {self.kind!r}")
        v = np.array(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("hourly values must be one-dimensional")
        if v.size == DAYS * HOURS + HOURS:
            v = v[:DAYS * HOURS]
        if v.size != DAYS * HOURS:
            raise ValueError(f"expected {DAYS * HOURS} hourly values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("hourly values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def key(self):
        return (self.node, self.kind)

    def days(self):
        """``(365, 24)`` view of the series."""
        return self.values.reshape(DAYS, HOURS)


def normalize_series(raw: HourlySeries, basis: float | None = None) -> HourlySeries:
    """Scale a series to [0, 1].

    Demand is divided by its annual maximum, wind/solar by the installed
    capacity given as ``basis`` (or already stored on the series).  A series
    that is already normalized is returned unchanged.
    """
    if raw.normalized:
        return raw
    if raw.kind == "demand":
        b = float(np.max(raw.values)) if basis is None else float(basis)
    else:
        b = raw.basis if basis is None else basis
        if b is None:
            raise ValueError(f"{raw.node}:{raw.kind} needs the installed capacity as basis")
        b = float(b)
    if not b > 0:
        raise ValueError(f"{raw.node}:{raw.kind}: normalization basis must be > 0, got {b!r}")
    vals = raw.values / b
    if np.any(vals < 0) or np.any(vals > 1 + 1e-12):
        raise ValueError(f"{raw.node}:{raw.kind}: values fall outside [0, basis]")
    return HourlySeries(raw.node, raw.kind, np.clip(vals, 0.0, 1.0), basis=b, normalized=True)


def day_features(series) -> np.ndarray:
    """Concatenate daily profiles of the given series into a ``365 x d`` matrix."""
    series = list(series)
    if not series:
        raise ValueError("no series given")
    return np.hstack([s.days() for s in series])


@dataclass(eq=False)
class ClusterResult:
    """Day-to-cluster assignment and cluster weights.

    Clusters are numbered by their earliest member day.  ``representatives``
    maps ``(cluster, node, kind)`` to a day index (0-based) once
    :func:`select_representatives` has run.
    """

    labels: np.ndarray
    counts: np.ndarray
    linkage: str = "ward"
    representatives: dict = field(default_factory=dict)

    @property
    def k(self):
        return int(self.counts.size)

    @property
    def fractions(self):
        n = int(self.counts.sum())
        return [Fraction(int(c), n) for c in self.counts]

    @property
    def weights(self):
        return np.array([float(f) for f in self.fractions])

    def members(self, c):
        return np.flatnonzero(self.labels == c)

    def to_dict(self):
        return {
            "type": "ClusterResult", "linkage": self.linkage, "k": self.k,
            "weights": [{"cluster": c, "count": int(n), "weight": float(w),
                         "fraction": str(f)}
                        for c, (n, w, f) in enumerate(zip(self.counts, self.weights,
                                                          self.fractions))],
            "labels": [int(x) for x in self.labels],
            "representatives": [{"cluster": c, "node": n, "kind": k, "day": int(d)}
                                for (c, n, k), d in sorted(self.representatives.items())],
        }

    def csv_header(self):
        return ["cluster", "count", "weight", "node", "kind", "representative_day"]

    def csv_rows(self):
        rows = []
        for c in range(self.k):
            reps = sorted((n, k, d) for (cc, n, k), d in self.representatives.items() if cc == c)
            if not reps:
                rows.append([c, int(self.counts[c]), float(self.weights[c]), "", "", ""])
            for n, k, d in reps:
                rows.append([c, int(self.counts[c]), float(self.weights[c]), n, k, int(d)])
        return rows


def _pairwise(X, squared):
    sq = np.einsum("ij,ij->i", X, X)
    D = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(D, 0.0, out=D)
    # exact zeros on identical rows regardless of round-off
    D[np.equal(X[:, None, :], X[None, :, :]).all(axis=2)] = 0.0
    return D if squared else np.sqrt(D)


def agglomerate(X, k, linkage="ward"):
    """Agglomerative clustering cut at ``k`` clusters.

    Lance-Williams updates on a dense distance matrix (squared Euclidean for
    Ward, Euclidean otherwise).  The pair merged at each step is the first
    minimum in row-major order, i.e. ties go to the smallest indices.

    Returns
    -------
    labels : ndarray of int
        Cluster of each row, clusters numbered by their first member.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"linkage must be one of {LINKAGES}")
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    D = _pairwise(X, squared=(linkage == "ward"))
    np.fill_diagonal(D, np.inf)
    size = np.ones(n)
    active = np.ones(n, dtype=bool)
    owner = np.arange(n)
    for _ in range(n - k):
        flat = int(np.argmin(D))
        i, j = divmod(flat, n)
        if i > j:
            i, j = j, i
        ni, nj = size[i], size[j]
        di, dj, dij = D[i], D[j], D[i, j]
        if linkage == "ward":
            nk = size
            new = ((ni + nk) * di + (nj + nk) * dj - nk * dij) / (ni + nj + nk)
        elif linkage == "single":
            new = np.minimum(di, dj)
        elif linkage == "complete":
            new = np.maximum(di, dj)
        else:
            new = (ni * di + nj * dj) / (ni + nj)
        new[~active] = np.inf
        new[i] = np.inf
        D[i, :] = new
        D[:, i] = new
        D[j, :] = np.inf
        D[:, j] = np.inf
        active[j] = False
        size[i] = ni + nj
        owner[owner == j] = i
    roots = np.unique(owner)
    remap = {r: c for c, r in enumerate(sorted(roots))}
    return np.array([remap[r] for r in owner], dtype=int)


def cluster_days(features, k, linkage="ward") -> ClusterResult:
    """Hierarchical clustering of daily profiles.

    Parameters
    ----------
    features : (365, d) array
        One row per day (see :func:`day_features`).
    k : int
        Number of clusters, ``1 <= k <= 365``.
    linkage : {"ward", "single", "complete", "average"}
    """
    X = np.asarray(features, dtype=float)
    if X.ndim != 2:
        raise ValueError("features must be a 2-d array")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    distinct = np.unique(X, axis=0).shape[0]
    if k > distinct:
        raise ValueError(f"k = {k} exceeds the number of distinct days ({distinct})")
    labels = agglomerate(X, k, linkage)
    counts = np.bincount(labels, minlength=k)
    return ClusterResult(labels=labels, counts=counts, linkage=linkage)


def medoid(days):
    """Index (into ``days``) of the row with least summed Euclidean distance."""
    D = _pairwise(np.asarray(days, dtype=float), squared=False)
    return int(np.argmin(D.sum(axis=1)))


def select_representatives(result: ClusterResult, series) -> ClusterResult:
    """Pick one representative day per cluster and per (node, kind).

    Within each cluster and each series, the representative is the member
    day closest to the cluster medoid in that series' 24-hour subspace,
    which is the medoid itself; ties go to the earliest day.
    """
    reps = {}
    for s in series:
        X = s.days()
        for c in range(result.k):
            members = result.members(c)
            reps[(c, s.node, s.kind)] = int(members[medoid(X[members])])
    return replace(result, representatives=reps)


@dataclass(eq=False)
class ScenarioStructure:
    """Scenario/period data derived from clustered days.

    Arrays are ``(S, T, N)``; ``availability`` maps a series kind (wind,
    solar) to capacity factors and ``demand_level`` holds the normalized
    block-mean demand.
    """

    scenarios: tuple
    probabilities: np.ndarray
    periods: tuple
    durations: np.ndarray
    nodes: tuple
    demand_level: np.ndarray
    intercept: np.ndarray
    slope: np.ndarray
    availability: dict


def block_means(day, periods_per_day):
    """Mean of a 24-hour profile over ``periods_per_day`` equal blocks."""
    if periods_per_day < 1 or HOURS % periods_per_day:
        raise ValueError(f"periods_per_day must divide {HOURS}, got {periods_per_day}")
    return np.asarray(day, dtype=float).reshape(periods_per_day, -1).mean(axis=1)


def build_scenarios(result: ClusterResult, series, periods_per_day, reference,
                    horizon_days=1.0) -> ScenarioStructure:
    """One scenario per cluster, each cut into equal periods.

    Parameters
    ----------
    result : ClusterResult
        With representatives selected.
    series : iterable of HourlySeries
        Normalized series; one ``demand`` series per node is required.
    periods_per_day : int
        Must divide 24.
    reference : dict
        ``{node: (intercept, slope)}`` inverse-demand curve at normalized
        demand 1.  A block at normalized level ``d`` keeps the intercept and
        gets slope ``slope / d``, so demanded quantity at any price scales
        with ``d``.
    horizon_days : float
        Number of days each period stands for; durations are
        ``24 / periods_per_day * horizon_days`` hours.
    """
    if periods_per_day < 1 or HOURS % periods_per_day:
        raise ValueError(f"periods_per_day must divide {HOURS}, got {periods_per_day}")
    series = list(series)
    if not result.representatives:
        raise ValueError("select representatives first")
    nodes = tuple(dict.fromkeys(s.node for s in series))
    S, T, N = result.k, periods_per_day, len(nodes)
    level = np.full((S, T, N), np.nan)
    avail = {}
    for s in series:
        if not s.normalized:
            raise ValueError(f"{s.node}:{s.kind} is not normalized")
        n = nodes.index(s.node)
        for c in range(S):
            day = s.days()[result.representatives[(c, s.node, s.kind)]]
            blocks = block_means(day, periods_per_day)
            if s.kind == "demand":
                level[c, :, n] = blocks
            else:
                avail.setdefault(s.kind, np.zeros((S, T, N)))[c, :, n] = blocks
    if np.any(np.isnan(level)):
        raise ValueError("every node needs a demand series")
    if np.any(level <= 0):
        raise ValueError("normalized demand must be positive in every period")
    intercept = np.empty((S, T, N))
    slope = np.empty((S, T, N))
    for n, node in enumerate(nodes):
        d0, s0 = reference[node]
        intercept[:, :, n] = d0
        slope[:, :, n] = s0 / level[:, :, n]
    hours = HOURS // periods_per_day
    return ScenarioStructure(
        scenarios=tuple(f"c{c + 1}" for c in range(S)), probabilities=result.weights,
        periods=tuple(f"p{t + 1}" for t in range(T)),
        durations=np.full(T, hours * float(horizon_days)), nodes=nodes,
        demand_level=level, intercept=intercept, slope=slope, availability=avail)


def representative_days(series, k, periods_per_day, reference, bases=None,
                        linkage="ward", horizon_days=1.0):
    """Run the full pipeline on raw hourly series.

    ``bases`` maps ``(node, kind)`` to the installed capacity used to
    normalize wind/solar series.
    """
    bases = bases or {}
    norm = [normalize_series(s, bases.get(s.key)) for s in series]
    result = cluster_days(day_features(norm), k, linkage)
    result = select_representatives(result, norm)
    return result, build_scenarios(result, norm, periods_per_day, reference, horizon_days)
