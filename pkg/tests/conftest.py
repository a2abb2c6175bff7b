"""Shared fixtures.

Every optimal outcome assembled anywhere in the suite is checked against the
KKT system with the independent residual evaluator; a failure raises inside
the test that produced it.
"""
import pytest

from gridexpand import equilibrium, io
from gridexpand.model import apply_policy

KKT_TOL = 1e-6
KKT_LOG = {"checked": 0, "failed": []}
ACCEPTANCE = []  # (criterion, passed, detail) lines filled by test_acceptance

_assemble = equilibrium._assemble_outcome


class KktFailure(AssertionError):
    pass


def _checked_assemble(system, effective, plan, qp, sol, centralized):
    outcome = _assemble(system, effective, plan, qp, sol, centralized)
    rep = equilibrium.kkt_residuals(system, effective, outcome.plan, outcome, tol=KKT_TOL)
    KKT_LOG["checked"] += 1
    if not rep.passed:
        KKT_LOG["failed"].append((system.name, rep.violations()))
        raise KktFailure(f"KKT check failed on {system.name!r}: {rep.violations()}")
    return outcome


equilibrium._assemble_outcome = _checked_assemble


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for name, ok, detail in ACCEPTANCE:
            terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
        ok = not KKT_LOG["failed"]
        terminalreporter.write_line(
            f"{'PASS' if ok else 'FAIL'}  KKT verification (every solve in this run)  "
            f"checked={KKT_LOG['checked']}, failed={len(KKT_LOG['failed'])}")
    terminalreporter.write_line(
        f"KKT hook: {KKT_LOG['checked']} optimal solves checked in this process, "
        f"{len(KKT_LOG['failed'])} failed (tol {KKT_TOL:g})")


@pytest.fixture(scope="session")
def kkt_log():
    return KKT_LOG


@pytest.fixture(scope="session")
def three_node():
    system, policy = io.load_system(io.packaged("illustrative_3node.cfg"))
    return system, policy, apply_policy(system, policy)


@pytest.fixture(scope="session")
def nordic():
    system, policy = io.load_system(io.packaged("nordic5_synth.cfg"))
    return system, policy, apply_policy(system, policy)


@pytest.fixture(scope="session")
def three_node_central(three_node):
    system, policy, eff = three_node
    return equilibrium.solve_centralized(system, eff)
