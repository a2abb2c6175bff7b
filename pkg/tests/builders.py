"""Hand-built systems for unit tests."""
import numpy as np

from gridexpand.model import ConventionalUnit, EnergySystem, Line, RenewableUnit


def single_node(installed=1.0, cost=10.0, intercept=260.0, slope=0.04, duration=1.0,
                expandable=True, vre=False, maintenance=0.0, investment=1000.0):
    """One node, one scenario, one period, one producer, one conventional unit."""
    conv = (ConventionalUnit("n", "p", "gas", installed, cost, maintenance, investment,
                             expandable=expandable),)
    ren = ()
    avail = {}
    if vre:
        ren = (RenewableUnit("n", "p", "wind", 0.0, 0.0, 1000.0),)
        avail = {"wind": np.full((1, 1, 1), 0.5)}
    return EnergySystem(
        nodes=("n",), producers=("p",), conventional_techs=("gas",),
        renewable_techs=("wind",) if vre else (), scenarios=("s",), probabilities=[1.0],
        periods=("t",), durations=[duration], intercept=np.full((1, 1, 1), intercept),
        slope=np.full((1, 1, 1), slope), availability=avail, conventional_units=conv,
        renewable_units=ren, name="single")


def two_lines(investment=1.0):
    """Three nodes on a path a-b-c, used for budget-pruning checks."""
    lines = (Line("a", "b", 10.0, 0.0, investment), Line("b", "c", 10.0, 0.0, investment))
    shape = (1, 1, 3)
    conv = tuple(ConventionalUnit(n, "p", "gas", 10.0, 20.0, 0.0, 100.0) for n in "abc")
    return EnergySystem(
        nodes=("a", "b", "c"), producers=("p",), conventional_techs=("gas",),
        renewable_techs=(), scenarios=("s",), probabilities=[1.0], periods=("t",),
        durations=[1.0], intercept=np.full(shape, 100.0), slope=np.full(shape, 0.1),
        availability={}, lines=lines, conventional_units=conv, name="path")
