import time
from fractions import Fraction

import numpy as np
import pytest
from scipy.cluster.hierarchy import fcluster, linkage

from gridexpand import repdays
from gridexpand.repdays import HourlySeries

PLANTED = (145, 117, 103)


def planted_year(seed=0, sizes=PLANTED, noise=0.01):
    """Two nodes, demand and wind, three day shapes with the given memberships."""
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    rng.shuffle(labels)
    h = np.arange(24)
    shapes = {
        "demand": [0.5 + 0.3 * np.exp(-((h - c) / 3.0) ** 2) for c in (8, 13, 19)],
        "wind": [np.full(24, v) for v in (0.2, 0.5, 0.8)],
    }
    series = []
    for node in ("x", "y"):
        for kind, base in shapes.items():
            days = np.array([base[c] for c in labels]) + rng.normal(0, noise, (365, 24))
            series.append(HourlySeries(node, kind, np.clip(days, 0.01, 0.95).ravel(),
                                       basis=1.0, normalized=True))
    return series, labels


def _same_partition(a, b):
    pairs = {(x, y) for x, y in zip(a, b)}
    return len(pairs) == len(set(a)) == len(set(b))


def test_planted_weights_recovered():
    series, truth = planted_year()
    t0 = time.perf_counter()
    res = repdays.cluster_days(repdays.day_features(series), 3)
    res = repdays.select_representatives(res, series)
    assert time.perf_counter() - t0 < 5.0
    assert sorted(res.fractions, reverse=True) == [Fraction(n, 365) for n in PLANTED]
    assert sum(res.fractions) == 1
    assert _same_partition(res.labels, truth)


@pytest.mark.parametrize("method", ["ward", "average", "complete", "single"])
def test_matches_scipy_hierarchy(method):
    series, _ = planted_year(seed=4, noise=0.05)
    X = repdays.day_features(series)
    ours = repdays.cluster_days(X, 3, method).labels
    ref = fcluster(linkage(X, method=method), 3, criterion="maxclust")
    assert _same_partition(ours, ref)


def test_singleton_representative():
    series, _ = planted_year(seed=2)
    vals = [s.values.copy() for s in series]
    for v in vals:
        v[200 * 24:201 * 24] = 0.99  # one outlier day
    series = [HourlySeries(s.node, s.kind, v, basis=1.0, normalized=True)
              for s, v in zip(series, vals)]
    res = repdays.select_representatives(
        repdays.cluster_days(repdays.day_features(series), 4), series)
    c = int(res.labels[200])
    assert res.counts[c] == 1
    for s in series:
        assert res.representatives[(c, s.node, s.kind)] == 200


def test_exact_mean_day_is_representative():
    series, truth = planted_year(seed=5)
    vals = [s.values.copy() for s in series]
    members = np.flatnonzero(truth == 0)
    target = members[7]
    for v in vals:
        days = v.reshape(365, 24)
        others = members[members != target]
        # make the target day equal to the mean of the cluster including itself
        days[target] = days[others].mean(axis=0)
    series = [HourlySeries(s.node, s.kind, v, basis=1.0, normalized=True)
              for s, v in zip(series, vals)]
    res = repdays.select_representatives(
        repdays.cluster_days(repdays.day_features(series), 3), series)
    c = int(res.labels[target])
    for s in series:
        assert res.representatives[(c, s.node, s.kind)] == target


def test_representatives_per_series_independent():
    series, _ = planted_year(seed=6)
    res = repdays.cluster_days(repdays.day_features(series), 3)
    a = repdays.select_representatives(res, series)
    rng = np.random.default_rng(0)
    shuffled = [HourlySeries(s.node, s.kind, rng.permutation(s.values), basis=1.0,
                             normalized=True) if s.node == "y" else s for s in series]
    b = repdays.select_representatives(res, shuffled)
    for key, day in a.representatives.items():
        if key[1] == "x":
            assert b.representatives[key] == day


def test_trivial_cluster_counts():
    one = np.tile(np.linspace(0.1, 0.9, 24), (365, 1))
    res = repdays.cluster_days(one, 1)
    assert res.fractions == [Fraction(1)]
    with pytest.raises(ValueError):
        repdays.cluster_days(one, 2)
    X = np.random.default_rng(1).uniform(size=(365, 24))
    res = repdays.cluster_days(X, 365)
    assert set(res.fractions) == {Fraction(1, 365)}
    with pytest.raises(ValueError):
        repdays.cluster_days(X, 0)


def test_normalization():
    demand = np.full(8760, 500.0)
    demand[100] = 1000.0
    d = repdays.normalize_series(HourlySeries("n", "demand", demand))
    assert d.values.max() == 1.0 and d.values[100] == 1.0
    wind = np.random.default_rng(0).uniform(0.0, 450.0, 8760)
    w = repdays.normalize_series(HourlySeries("n", "wind", wind), basis=500.0)
    assert w.values.max() <= 0.9 and not np.any(w.values == 1.0)
    assert repdays.normalize_series(w) is w
    with pytest.raises(ValueError):
        repdays.normalize_series(HourlySeries("n", "wind", wind))
    with pytest.raises(ValueError):
        repdays.normalize_series(HourlySeries("n", "wind", wind), basis=100.0)


def test_leap_year_truncated():
    s = HourlySeries("n", "demand", np.ones(8784))
    assert s.values.size == 8760


def test_scenarios_from_clusters():
    series, _ = planted_year(seed=3)
    res = repdays.select_representatives(
        repdays.cluster_days(repdays.day_features(series), 3), series)
    ref = {"x": (200.0, 0.1), "y": (150.0, 0.2)}
    st = repdays.build_scenarios(res, series, 4, ref)
    assert st.durations.tolist() == [6.0] * 4
    assert st.probabilities.sum() == pytest.approx(1.0, abs=1e-15)
    st24 = repdays.build_scenarios(res, series, 24, ref)
    wind_x = next(s for s in series if s.key == ("x", "wind"))
    day = res.representatives[(0, "x", "wind")]
    np.testing.assert_array_equal(st24.availability["wind"][0, :, 0], wind_x.days()[day])
    with pytest.raises(ValueError):
        repdays.build_scenarios(res, series, 5, ref)


def test_constant_series_blocks():
    flat = [HourlySeries("n", "demand", np.full(8760, 0.6), basis=1.0, normalized=True),
            HourlySeries("n", "wind", np.full(8760, 0.3), basis=1.0, normalized=True)]
    res = repdays.select_representatives(repdays.cluster_days(repdays.day_features(flat), 1),
                                         flat)
    st = repdays.build_scenarios(res, flat, 4, {"n": (100.0, 0.5)})
    np.testing.assert_allclose(st.demand_level, 0.6)
    np.testing.assert_allclose(st.availability["wind"], 0.3)
    np.testing.assert_allclose(st.slope, 0.5 / 0.6)
