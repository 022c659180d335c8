import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from adjoint_lab.integrators import ODE
from adjoint_lab.semidisc import EvolutionProblem, build_ode

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=100, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

METHOD_NAMES = ["explicit_euler", "heun", "rk4", "implicit_midpoint"]

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def decay_ode(rate=1.0):
    return ODE(lambda t, y: -rate * y, lambda t, y: -rate * np.eye(len(y)), 1)


def square_ode():
    return ODE(lambda t, y: y**2, lambda t, y: np.diag(2 * y), 1)


def make_instance(name):
    """The three reference instances: heat and burgers with 9 unknowns, advection with 16."""
    if name == "heat":
        pr = EvolutionProblem("heat", nu=0.1)
        ode = build_ode(pr, 9)
    elif name == "burgers":
        pr = EvolutionProblem("burgers", nu=0.1)
        ode = build_ode(pr, 9)
    else:
        pr = EvolutionProblem("advection", bc="periodic", a=1.0)
        ode = build_ode(pr, 16)
    return pr, ode, ode.initial_state(pr.initial_condition)


@pytest.fixture
def record_criterion(request):
    """Record a PASS/FAIL line for the acceptance summary and echo it to stdout."""
    log = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(label, passed, detail=""):
        line = f"{label}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
        log.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_ACCEPTANCE_KEY, [])
    if log:
        terminalreporter.section("acceptance criteria")
        for line in log:
            terminalreporter.write_line(line)
