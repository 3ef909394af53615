import math
import warnings

import numpy as np
import pytest

from forced_escape.model import Damping, DoubleWell, Pendulum, find_critical_point
from forced_escape.hetero import shoot_downhill, shoot_uphill


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion number and statement")
    config.addinivalue_line("markers", "invariant: module invariant or property test")


_CRITERIA = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for key, val in report.user_properties:
        if key == "criterion":
            n, text = val
            _CRITERIA[n] = (text, report.outcome, getattr(report, "duration", 0.0))


def pytest_runtest_makereport(item, call):
    m = item.get_closest_marker("criterion")
    if m is not None and ("criterion", tuple(m.args)) not in item.user_properties:
        item.user_properties.append(("criterion", tuple(m.args)))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        text, outcome, dur = _CRITERIA[n]
        verdict = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"criterion {n:>2}: {verdict:<5} {text}  ({dur:.1f} s)")


# ------------------------------------------------------------------ fixtures


@pytest.fixture(scope="session")
def dw():
    m = DoubleWell()
    return m, find_critical_point(m, [-0.8]), find_critical_point(m, [0.1]), find_critical_point(m, [0.8])


@pytest.fixture(scope="session")
def pend():
    m = Pendulum()
    qa = find_critical_point(m, [-1.4])
    qs = find_critical_point(m, [1.4])
    qb = find_critical_point(m, [4.5])
    return m, qa, qs, qb


def _orbits(system, gamma):
    m, qa, qs, qb = system
    d = Damping.scalar(gamma, 1)
    return d, shoot_uphill(m, d, qs, qa), shoot_downhill(m, d, qs, qb)


@pytest.fixture(scope="session")
def dw_orbits(dw):
    return _orbits(dw, 0.1)


@pytest.fixture(scope="session")
def dw_orbits_001(dw):
    return _orbits(dw, 0.01)


@pytest.fixture(scope="session")
def pend_orbits(pend):
    return _orbits(pend, 0.1)


@pytest.fixture(scope="session")
def pend_orbits_001(pend):
    return _orbits(pend, 0.01)


@pytest.fixture(scope="session")
def lj():
    from forced_escape.cluster import LJCluster, build_perfect_lattice

    c = LJCluster()
    return c, build_perfect_lattice(c)


@pytest.fixture(scope="session")
def lj_defect(lj):
    from forced_escape.cluster import make_defect

    c, qb = lj
    return make_defect(c, qb, seed=0, target_energy=-109.7064, max_attempts=200)


@pytest.fixture(scope="session")
def lj_saddle(lj, lj_defect):
    from forced_escape.cluster import find_saddle

    c, qb = lj
    return find_saddle(c, lj_defect.location, qb)


@pytest.fixture(scope="session")
def lj_orbit(lj, lj_defect, lj_saddle):
    from forced_escape.cluster import cluster_uphill_orbit

    c, _ = lj
    return cluster_uphill_orbit(c, lj_defect, lj_saddle.saddle, 1.0)


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield
