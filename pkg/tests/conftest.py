from __future__ import annotations

from collections import defaultdict

import pytest

from pwagrn.graph import ControlLaw, TransitionGraph
from pwagrn.io import example_path, load_example, read_json
from pwagrn.model import Factor, Network, StepPolynomial, Term
from pwagrn.sim import simulate


def negloop(n, gammas, signs, k0=0.0, k1=1.0, theta=0.5, cap=3.0) -> Network:
    """Ring where ``x_i`` is produced at rate ``k0 + k1 s^{signs[i]}(x_{i-1}, theta)``."""
    prod = []
    for i in range(n):
        terms = [Term(k1, (Factor((i - 1) % n, 1, signs[i]),))]
        if k0:
            terms.insert(0, Term(k0))
        prod.append(StepPolynomial(tuple(terms)))
    return Network(
        tuple(f"x{i + 1}" for i in range(n)),
        tuple((0.0, theta, cap) for _ in range(n)),
        tuple(prod),
        tuple(StepPolynomial.constant(g) for g in gammas),
        tuple(StepPolynomial() for _ in range(n)),
        0.0,
    )


def canonical_signs(n):
    """One repressor, the rest activators."""
    return (-1,) + (1,) * (n - 1)


@pytest.fixture(scope="session")
def ex1():
    return load_example("example1")


@pytest.fixture(scope="session")
def ex2():
    return load_example("example2")


@pytest.fixture(scope="session")
def toy():
    return load_example("toy")


@pytest.fixture(scope="session")
def ex2_uncontrolled(ex2):
    """Uncontrolled example-2 run from (0.95, 0.95, 0.1) under the default budget (a few seconds)."""
    return simulate(ex2, None, (0.95, 0.95, 0.1))


@pytest.fixture(scope="session")
def ex1_law():
    return ControlLaw.from_dict(read_json(example_path("example1_law.json")))


@pytest.fixture(scope="session")
def ex2_law():
    return ControlLaw.from_dict(read_json(example_path("example2_law.json")))


@pytest.fixture(scope="session")
def ex1_target(ex1):
    return TransitionGraph.from_dict(ex1, read_json(example_path("example1_target.json")))


@pytest.fixture(scope="session")
def ex2_target(ex2):
    return TransitionGraph.from_dict(ex2, read_json(example_path("example2_target.json")))


# one PASS/FAIL line per acceptance criterion, from tests marked ``criterion(k, title)``

_criteria: dict[int, str] = {}
_outcomes: dict[int, list[bool]] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _criteria[m.args[0]] = m.args[1]


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    num = getattr(report, "_criterion", None)
    if num is not None:
        _outcomes[num].append(report.passed)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    m = item.get_closest_marker("criterion")
    if m is not None:
        outcome.get_result()._criterion = m.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        runs = _outcomes.get(num, [])
        if not runs:
            status = "NOT RUN"
        else:
            status = "PASS" if all(runs) else "FAIL"
        terminalreporter.write_line(f"criterion {num}: {status}  {_criteria[num]}  ({sum(runs)}/{len(runs)} checks)")
