"""Regenerate the packaged example systems in src/gridexpand/data.

Both instances carry synthetic cost data.  The 3-node system uses the
demand curves and availabilities of the small illustrative case; the 5-node
system is built from a synthetic hourly year run through the
representative-day pipeline.

    python3 tools/make_fixtures.py
"""
from pathlib import Path

import numpy as np

from gridexpand import io, repdays
from gridexpand.model import ConventionalUnit, EnergySystem, Line, PolicySet, RenewableUnit

DATA = Path(__file__).resolve().parents[1] / "src" / "gridexpand" / "data"


def illustrative_3node():
    nodes = ("1", "2", "3")
    intercept = np.array([260.0, 260.0, 195.0])
    slope = np.array([0.04, 0.04, 0.0075])
    avail = np.array([0.5, 0.7, 0.3])
    S, T = 1, 2
    lines = tuple(Line(a, b, 1.0, 100.0, 15000.0) for a, b in (("1", "2"), ("1", "3"), ("2", "3")))
    installed = {"1": 3000.0, "2": 3000.0, "3": 11000.0}
    conv = []
    vre = []
    for n in nodes:
        for prod, cost in (("G1", 40.0), ("G2", 45.0)):
            conv.append(ConventionalUnit(n, prod, "gas", installed[n], cost, 3000.0, 60000.0,
                                         ramp_up=0.8, ramp_down=0.8))
            vre.append(RenewableUnit(n, prod, "wind", 200.0, 5000.0, 20000.0))
    system = EnergySystem(
        nodes=nodes, producers=("G1", "G2"), conventional_techs=("gas",),
        renewable_techs=("wind",), scenarios=("s1",), probabilities=[1.0],
        periods=("m1", "m2"), durations=[720.0, 720.0],
        intercept=np.broadcast_to(intercept, (S, T, 3)),
        slope=np.broadcast_to(slope, (S, T, 3)),
        availability={"wind": np.broadcast_to(avail, (S, T, 3))},
        lines=lines, conventional_units=tuple(conv), renewable_units=tuple(vre),
        name="illustrative_3node")
    policy = PolicySet(carbon_tax={"gas": 0.0}, vre_incentive={n: 0.0 for n in nodes},
                       teb=1e7, geb={"G1": 1e9, "G2": 1e9})
    return system, policy


NORDIC_NODES = ("FI", "SE", "NO", "DK", "BA")
PEAK = {"FI": 14000.0, "SE": 26000.0, "NO": 24000.0, "DK": 6000.0, "BA": 5000.0}
WIND_CAP = {"FI": 2500.0, "SE": 9000.0, "NO": 4000.0, "DK": 6000.0, "BA": 1200.0}
SOLAR_CAP = {"FI": 300.0, "SE": 1000.0, "NO": 150.0, "DK": 1500.0, "BA": 400.0}
# (tech, C, M, I) with annualized investment; hydro cannot be expanded
CONV_TECHS = {"coal": (30.0, 40000.0, 150000.0), "ccgt": (50.0, 20000.0, 80000.0),
              "ocgt": (80.0, 10000.0, 50000.0), "biomass": (60.0, 60000.0, 200000.0),
              "hydro": (5.0, 30000.0, 0.0)}
CONV_CAP = {  # node -> {tech: MW}
    "FI": {"coal": 2000.0, "ccgt": 1500.0, "ocgt": 1500.0, "biomass": 2000.0, "hydro": 3000.0},
    "SE": {"coal": 500.0, "ccgt": 1000.0, "ocgt": 1000.0, "biomass": 3000.0, "hydro": 16000.0},
    "NO": {"ccgt": 500.0, "ocgt": 500.0, "hydro": 31000.0},
    "DK": {"coal": 2500.0, "ccgt": 1500.0, "ocgt": 1500.0, "biomass": 1500.0},
    "BA": {"coal": 1500.0, "ccgt": 1500.0, "ocgt": 1500.0, "biomass": 500.0, "hydro": 1500.0},
}
VRE_COST = {"wind": (30000.0, 100000.0), "solar": (15000.0, 60000.0)}
OWNER = {"FI": "GenA", "SE": "GenB", "NO": "GenB", "DK": "GenA", "BA": "GenA"}
RAMP = {"coal": 0.3, "ccgt": 0.6, "ocgt": 1.0, "biomass": 0.4, "hydro": 1.0}


def synthetic_year(seed=20220101):
    """Hourly demand, wind and solar for five nodes with three day types."""
    rng = np.random.default_rng(seed)
    h = np.arange(24)
    day_type = np.empty(365, dtype=int)
    day_type[:59] = 0
    day_type[59:151] = 2
    day_type[151:243] = 1
    day_type[243:334] = 2
    day_type[334:] = 0
    shape = {  # day type -> (demand level, wind level, solar level)
        0: (0.92, 0.45, 0.05), 1: (0.62, 0.22, 0.45), 2: (0.75, 0.33, 0.22)}
    daily_demand = 0.85 + 0.15 * np.sin((h - 7) / 24 * 2 * np.pi)
    daily_solar = np.clip(np.sin((h - 6) / 12 * np.pi), 0, None)
    series = []
    for k, node in enumerate(NORDIC_NODES):
        lead = 0.02 * k
        dem, wind, sol = [], [], []
        for d in range(365):
            lv, wv, sv = shape[day_type[d]]
            dem.append((lv + lead + 0.02 * rng.standard_normal()) * daily_demand)
            w = wv + 0.08 * rng.standard_normal() + 0.03 * rng.standard_normal(24)
            wind.append(np.clip(w, 0.01, 0.85))
            sol.append(np.clip(sv * daily_solar * (1 + 0.1 * rng.standard_normal()), 0, 0.8))
        dem = np.concatenate(dem)
        dem = dem / dem.max() * PEAK[node]
        series.append(repdays.HourlySeries(node, "demand", np.round(dem, 1)))
        series.append(repdays.HourlySeries(node, "wind",
                                           np.round(np.concatenate(wind) * WIND_CAP[node], 1)))
        series.append(repdays.HourlySeries(node, "solar",
                                           np.round(np.concatenate(sol) * SOLAR_CAP[node], 1)))
    return series


def nordic5_synth(series=None):
    series = series if series is not None else synthetic_year()
    bases = {}
    for n in NORDIC_NODES:
        bases[(n, "wind")] = WIND_CAP[n]
        bases[(n, "solar")] = SOLAR_CAP[n]
    # price 180 at zero demand falling to 45 at peak demand
    reference = {n: (180.0, 135.0 / PEAK[n]) for n in NORDIC_NODES}
    result, st = repdays.representative_days(series, 3, 4, reference, bases,
                                             horizon_days=365.0)
    conv, vre = [], []
    for n in NORDIC_NODES:
        for tech, cap in CONV_CAP[n].items():
            c, m, inv = CONV_TECHS[tech]
            conv.append(ConventionalUnit(n, OWNER[n], tech, cap, c, m, inv,
                                         ramp_up=RAMP[tech], ramp_down=RAMP[tech],
                                         expandable=tech != "hydro"))
        vre.append(RenewableUnit(n, OWNER[n], "wind", WIND_CAP[n], *VRE_COST["wind"]))
        vre.append(RenewableUnit(n, OWNER[n], "solar", SOLAR_CAP[n], *VRE_COST["solar"]))
    pairs = [(a, b) for i, a in enumerate(NORDIC_NODES) for b in NORDIC_NODES[i + 1:]]
    lines = tuple(Line(a, b, 1500.0, 2000.0, 20000.0) for a, b in pairs)
    system = EnergySystem(
        nodes=NORDIC_NODES, producers=("GenA", "GenB"),
        conventional_techs=tuple(CONV_TECHS), renewable_techs=("wind", "solar"),
        scenarios=st.scenarios, probabilities=st.probabilities, periods=st.periods,
        durations=st.durations, intercept=st.intercept, slope=st.slope,
        availability=st.availability, lines=lines, conventional_units=tuple(conv),
        renewable_units=tuple(vre), name="nordic5_synth")
    policy = PolicySet(carbon_tax={"coal": 8.0, "ccgt": 3.0, "ocgt": 4.0, "biomass": 2.0,
                                   "hydro": 0.0},
                       vre_incentive={n: 0.05 for n in NORDIC_NODES},
                       teb=625e6, geb={"GenA": 3e9, "GenB": 3e9})
    return system, policy, result


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    system, policy = illustrative_3node()
    io.save_system(system, policy, DATA / "illustrative_3node.cfg")
    series = synthetic_year()
    io.write_hourly_csv(series, DATA / "nordic5_hourly.csv")
    system, policy, _ = nordic5_synth(io.load_hourly_csv(DATA / "nordic5_hourly.csv"))
    io.save_system(system, policy, DATA / "nordic5_synth.cfg")


if __name__ == "__main__":
    main()
