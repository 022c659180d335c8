import json

import numpy as np
import pytest

from adjoint_lab.diagrams import (DiagramReport, equilibrium_report, ill_conditioned_matrix,
                                  nonuniform_mass, upwind_operator, verify_conservation_uniqueness,
                                  verify_diagram_closure, verify_fully_discrete_commutation,
                                  verify_naturality, verify_precondition_identity,
                                  verify_semidiscrete_commutation)
from adjoint_lab.errors import SingularMatrixError
from adjoint_lab.integrators import ODE
from adjoint_lab.semidisc import EvolutionProblem

from conftest import METHOD_NAMES, make_instance

HEAT = EvolutionProblem("heat", nu=0.1)
BURGERS = EvolutionProblem("burgers", nu=0.1)


def two_rates():
    rates = np.array([1.0, 2.0])
    return ODE(lambda t, y: -rates * y, lambda t, y: np.diag(-rates), 2)


def test_report_json_shape():
    r = DiagramReport("x", 1e-14, 1e-13, 3, np.array([1e-14, 0.0]))
    d = r.to_json()
    assert {"name", "residual", "tolerance", "passed", "seed", "per_step"} <= set(d)
    assert d["passed"] is True
    json.dumps(d)
    assert not DiagramReport("y", 1.0, 0.5).passed
    assert not DiagramReport("z", 0.0, 0.5, extra_checks={"lower": False}).passed


@pytest.mark.parametrize("problem", [HEAT, BURGERS])
def test_semidiscrete_commutation_mass(problem):
    r = verify_semidiscrete_commutation(problem, 10, "mass")
    assert r.passed and r.max_residual <= 1e-13
    assert len(r.per_step) == 100


def test_semidiscrete_commutation_standard():
    r = verify_semidiscrete_commutation(HEAT, 10, "standard")
    assert r.max_residual <= 1e-11


def test_semidiscrete_commutation_periodic_advection():
    adv = EvolutionProblem("advection", bc="periodic", a=1.0)
    assert verify_semidiscrete_commutation(adv, 16, "mass").passed


def test_reports_are_deterministic():
    a = verify_semidiscrete_commutation(BURGERS, 8, "mass", seed=5)
    b = verify_semidiscrete_commutation(BURGERS, 8, "mass", seed=5)
    assert a.to_json() == b.to_json()


@pytest.mark.parametrize("name", METHOD_NAMES)
def test_fully_discrete_commutation_linear(name):
    _, ode, q0 = make_instance("heat")
    r = verify_fully_discrete_commutation(name, ode, q0, 0.0, 0.2, 20, tolerance=1e-13)
    assert r.passed, r.max_residual


def test_fully_discrete_commutation_burgers_rk4():
    _, ode, q0 = make_instance("burgers")
    r = verify_fully_discrete_commutation("rk4", ode, q0, 0.0, 0.2, 20)
    assert r.max_residual <= 1e-11 and len(r.per_step) == 21


def test_implicit_midpoint_commutation_tracks_stage_residual():
    _, ode, q0 = make_instance("burgers")
    r = verify_fully_discrete_commutation("implicit_midpoint", ode, q0, 0.0, 0.2, 20,
                                          tolerance=1e-9)
    assert r.passed and r.info["max_stage_residual"] <= 1e-12


@pytest.mark.parametrize("name", METHOD_NAMES)
def test_naturality(name):
    _, ode, q0 = make_instance("burgers")
    assert verify_naturality(name, ode, q0, 0.0, 0.2, 20).passed


def test_diagram_closure():
    r = verify_diagram_closure("rk4", BURGERS, 10, 20)
    assert r.passed and len(r.per_step) == 3


def test_precondition_identity_cases():
    ode = two_rates()
    r = verify_precondition_identity("explicit_euler", ode, np.eye(2), [1.0, 1.0], 0.0, 1.0, 10)
    assert r.max_residual == 0.0
    r = verify_precondition_identity("explicit_euler", ode, np.diag([2.0, 1.0]), [1.0, 1.0],
                                     0.0, 1.0, 10)
    assert r.max_residual <= 1e-13
    with pytest.raises(SingularMatrixError):
        verify_precondition_identity("rk4", ode, np.zeros((2, 2)), [1.0, 1.0], 0.0, 1.0, 10)


def test_precondition_identity_ill_conditioned_is_flagged():
    _, ode, q0 = make_instance("heat")
    P = ill_conditioned_matrix(ode.dim, 1e8)
    assert np.linalg.cond(P) == pytest.approx(1e8, rel=1e-3)
    r = verify_precondition_identity("rk4", ode, P, q0, 0.0, 0.2, 50)
    assert r.info["ill_conditioned"] and r.tolerance == 1e-6
    assert r.passed


@pytest.mark.parametrize("problem", ["heat", "advection", "burgers"])
def test_conservation_uniqueness(problem):
    _, ode, q0 = make_instance(problem)
    ratios = []
    for eps in (1e-2, 1e-4):
        r = verify_conservation_uniqueness("rk4", ode, q0, 0.0, 0.01, 10, eps)
        assert r.passed, r.info
        ratios.append(r.info["drift_over_eps"])
    assert max(ratios) / min(ratios) <= 10
    r0 = verify_conservation_uniqueness("rk4", ode, q0, 0.0, 0.01, 10, 0.0)
    assert r0.passed and r0.info["perturbed_drift"] <= 1e-12


def test_upwind_operator_rows_sum_to_zero():
    for a in (1.0, -0.5):
        K = upwind_operator(8, a)
        np.testing.assert_allclose(K.sum(axis=1), 0.0, atol=1e-13)


def test_equilibrium_nonuniform_mass():
    K = upwind_operator(16)
    r = equilibrium_report(K, nonuniform_mass(16))
    assert r.passed and r.max_residual <= 1e-14
    assert r.info["adjoint_residuals"]["standard"] > 0


def test_equilibrium_scalar_mass_residuals_coincide():
    K = upwind_operator(16)
    r = equilibrium_report(K, 0.25 * np.eye(16), method="rk4")
    res = r.info["adjoint_residuals"]
    assert res["standard"] == pytest.approx(res["mass"], abs=1e-15)
    assert r.info["mass_is_scalar"]


def test_equilibrium_reports_column_sums():
    # a non-circulant operator with zero row sums but nonzero column sums
    K = upwind_operator(6)
    K[2] *= 3.0
    r = equilibrium_report(K, nonuniform_mass(6))
    assert r.info["max_abs_row_sum"] <= 1e-12 and r.info["max_abs_col_sum"] > 0
    assert r.info["adjoint_residuals"]["mass"] > 0
