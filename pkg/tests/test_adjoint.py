import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adjoint_lab.adjoint import (AdjointSystem, dual_galerkin_adjoint_rhs, form_adjoint,
                                 form_variational, pairing_invariant, similarity_transform)
from adjoint_lab.diagrams import continuous_invariant_drift
from adjoint_lab.errors import DimensionError, SingularMatrixError
from adjoint_lab.pairings import DualityPairing
from adjoint_lab.semidisc import EvolutionProblem, assemble_galerkin

seeds = st.integers(0, 2**32 - 1)


def burgers(n_el=8):
    return assemble_galerkin(EvolutionProblem("burgers", nu=0.1), n_el)[1]


@given(seeds)
def test_mass_adjoint_is_dual_galerkin_system(seed):
    ode = burgers()
    rng = np.random.default_rng(seed)
    q, p = rng.standard_normal(ode.dim), rng.standard_normal(ode.dim)
    sys_m = form_adjoint(ode, DualityPairing.mass_induced(ode.mass))
    expected = dual_galerkin_adjoint_rhs(ode, 0.3, q, p)
    np.testing.assert_allclose(sys_m.adjoint_rhs(0.3, q, p), expected, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(-(sys_m.adjoint_operator(0.3, q) @ p), expected,
                               rtol=1e-11, atol=1e-11)


@given(seeds)
def test_standard_adjoint_maps_to_mass_adjoint(seed):
    ode = burgers()
    rng = np.random.default_rng(seed)
    q, p = rng.standard_normal(ode.dim), rng.standard_normal(ode.dim)
    sys_s = form_adjoint(ode, DualityPairing.standard(ode.dim))
    zdot = sys_s.adjoint_rhs(0.0, q, ode.mass.T @ p)
    np.testing.assert_allclose(zdot, ode.mass.T @ dual_galerkin_adjoint_rhs(ode, 0.0, q, p),
                               atol=1e-11)


@given(seeds)
def test_hamilton_equations_for_general_pairing(seed):
    ode = burgers(6)
    rng = np.random.default_rng(seed)
    P = np.eye(ode.dim) + 0.2 * rng.standard_normal((ode.dim, ode.dim)) / np.sqrt(ode.dim)
    pairing = DualityPairing.general(P)
    system = AdjointSystem(ode, pairing)
    q, p = rng.standard_normal(ode.dim), rng.standard_normal(ode.dim)
    gq, gp = system.hamiltonian_gradients(0.0, q, p)
    np.testing.assert_allclose(np.linalg.solve(P, gp), ode.rhs(0.0, q), atol=1e-10)
    np.testing.assert_allclose(-np.linalg.solve(P.T, gq), system.adjoint_rhs(0.0, q, p),
                               atol=1e-9)
    # Euclidean gradient of H in q by central differences
    eps = 1e-6
    fd = [(system.hamiltonian(0, q + eps * e, p) - system.hamiltonian(0, q - eps * e, p)) / (2 * eps)
          for e in np.eye(ode.dim)]
    np.testing.assert_allclose(gq, fd, rtol=1e-6, atol=1e-6)


def test_invariant_is_conserved_by_the_flow():
    ode = burgers()
    rng = np.random.default_rng(1)
    q0 = 0.5 * rng.standard_normal(ode.dim)
    for pairing in (DualityPairing.standard(ode.dim), DualityPairing.mass_induced(ode.mass)):
        drift, _, _ = continuous_invariant_drift(ode, q0, rng.standard_normal(ode.dim),
                                                 rng.standard_normal(ode.dim), 0.0, 0.2, pairing)
        assert drift <= 1e-8


def test_invariant_derivative_vanishes_pointwise():
    ode = burgers()
    rng = np.random.default_rng(2)
    q, dq, p = (rng.standard_normal(ode.dim) for _ in range(3))
    pairing = DualityPairing.mass_induced(ode.mass)
    system = AdjointSystem(ode, pairing)
    var = form_variational(ode)
    d = pairing.pair(system.adjoint_rhs(0, q, p), dq) + pairing.pair(p, var.variational_rhs(0, q, dq))
    assert abs(d) <= 1e-10 * np.abs(ode.linear).max() * np.linalg.norm(p) * np.linalg.norm(dq)


def test_augmented_rhs_stacks_state_and_variation():
    ode = burgers(5)
    var = form_variational(ode)
    q, dq = np.ones(ode.dim), np.arange(ode.dim, dtype=float)
    out = var.augmented_rhs(0.0, np.concatenate([q, dq]))
    np.testing.assert_allclose(out[:ode.dim], ode.rhs(0, q))
    np.testing.assert_allclose(out[ode.dim:], ode.jacobian(0, q) @ dq)


def test_similarity_transform_round_trip_and_errors():
    ode = burgers(6)
    z = np.random.default_rng(0).standard_normal(ode.dim)
    p = similarity_transform(z, ode.mass, "standard_to_mass")
    np.testing.assert_allclose(similarity_transform(p, ode.mass, "mass_to_standard"), z, atol=1e-13)
    with pytest.raises(SingularMatrixError):
        similarity_transform(np.ones(2), np.ones((2, 2)), "mass_to_standard")
    with pytest.raises(ValueError):
        similarity_transform(z, ode.mass, "sideways")


def test_form_adjoint_checks():
    ode = burgers(6)
    with pytest.raises(DimensionError):
        form_adjoint(ode, DualityPairing.standard(ode.dim + 1))
    with pytest.raises(ValueError, match="mass"):
        form_adjoint(ode, DualityPairing.mass_induced(2 * ode.mass))


def test_pairing_invariant_helper():
    std = DualityPairing.standard(2)
    assert pairing_invariant(std, [1.0, 2.0], [3.0, 4.0]) == 11.0
