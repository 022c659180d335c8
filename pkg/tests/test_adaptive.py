import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adjoint_lab.adaptive import (AdaptiveController, adaptive_backpropagate,
                                  constant_controller, integrate_adaptive_euler,
                                  state_ratio_controller, state_scaled_controller)
from adjoint_lab.integrators import AdaptiveEuler, get_method, integrate_forward, \
    variational_equivariance_residual

from conftest import decay_ode


def reference_recurrence(y0, h0, tf, alpha=0.1, h_max=1.0):
    # plain scalar loop for y' = -y with S = h (1 + a y0^2) / (1 + a y^2)
    y, s, h = y0, 0.0, h0
    c = 1 + alpha * y0 * y0
    ys, hs = [y], []
    while s < tf - 1e-12:
        h_next = min(max(h * c / (1 + alpha * y * y), 1e-8), h_max)
        step = tf - s if s + h >= tf - 1e-12 else h
        y = y - step * y
        s = tf if step != h else s + step
        ys.append(y)
        hs.append(step)
        h = h_next
    return np.array(ys), np.array(hs)


@pytest.mark.parametrize("h0", [0.1, 0.03])
def test_state_ratio_trajectory_matches_scalar_loop(h0):
    ode = decay_ode()
    b = integrate_adaptive_euler(state_ratio_controller(np.array([1.0])), ode.rhs, [1.0], 0.0, 1.0, h0)
    ys, hs = reference_recurrence(1.0, h0, 1.0)
    np.testing.assert_allclose(b.states[:, 0], ys, rtol=1e-14)
    np.testing.assert_allclose(b.info["step_sizes"], hs, rtol=1e-14)
    assert b.times[-1] == 1.0


def test_constant_controller_is_fixed_step_euler():
    ode = decay_ode()
    a = integrate_adaptive_euler(constant_controller(0.1), ode.rhs, [1.0], 0.0, 1.0, 0.1)
    b = integrate_forward(get_method("explicit_euler"), ode.rhs, [1.0], 0.0, 1.0, 10)
    np.testing.assert_allclose(a.states, b.states, rtol=1e-14)
    np.testing.assert_allclose(a.times, b.times, atol=1e-14)


def test_zero_field_stays_constant():
    zero = lambda t, y: np.zeros_like(y)
    b = integrate_adaptive_euler(state_ratio_controller(np.array([1.0, 2.0])), zero, [1.0, 2.0], 0.0, 1.0, 0.1)
    np.testing.assert_array_equal(b.states, np.tile([1.0, 2.0], (len(b.times), 1)))


@given(st.floats(-2, 2), st.floats(0.01, 0.5), st.floats(0, 1))
def test_controller_partials_match_finite_differences(y, h, s):
    for ctrl in (state_ratio_controller(np.array([1.0]), h_max=10.0),
                 state_scaled_controller(0.1, np.array([1.0]), h_max=10.0)):
        yv = np.array([y])
        Sy, Sh, Ss = ctrl.partials(yv, h, s)
        e = 1e-6
        assert Sy[0] == pytest.approx((ctrl(yv + e, h, s) - ctrl(yv - e, h, s)) / (2 * e), abs=1e-6)
        assert Sh == pytest.approx((ctrl(yv, h + e, s) - ctrl(yv, h - e, s)) / (2 * e), abs=1e-6)
        assert Ss == pytest.approx((ctrl(yv, h, s + e) - ctrl(yv, h, s - e)) / (2 * e), abs=1e-6)


def test_controller_clamps():
    ctrl = state_ratio_controller(np.array([10.0]), h_max=0.2)
    assert ctrl(np.array([0.0]), 0.1, 0.0) == 0.2
    assert ctrl.partials(np.array([0.0]), 0.1, 0.0)[1] == 0.0
    with pytest.raises(ValueError):
        AdaptiveController(lambda y, h, s: h, None, None, None, h_min=1.0, h_max=0.5)


def test_step_limit_raises():
    ode = decay_ode()
    with pytest.raises(RuntimeError, match="exceeded"):
        integrate_adaptive_euler(constant_controller(1e-3), ode.rhs, [1.0], 0.0, 1.0, 1e-3,
                                 max_steps=10)


def test_adaptive_adjoint_is_exact_gradient():
    # the gradient includes the dependence of every later step size on y0
    ode = decay_ode()
    ctrl = state_ratio_controller(np.array([1.0]))
    fwd = integrate_adaptive_euler(ctrl, ode.rhs, [1.0], 0.0, 1.0, 0.1)
    p = adaptive_backpropagate(ctrl, ode.rhs, ode.jacobian, fwd, [1.0])
    eps = 1e-7
    up = integrate_adaptive_euler(ctrl, ode.rhs, [1.0 + eps], 0.0, 1.0, 0.1).states[-1, 0]
    dn = integrate_adaptive_euler(ctrl, ode.rhs, [1.0 - eps], 0.0, 1.0, 0.1).states[-1, 0]
    assert p[0, 0] == pytest.approx((up - dn) / (2 * eps), rel=1e-6)


def test_equivariance_residuals():
    ode = decay_ode()
    const, _ = variational_equivariance_residual(AdaptiveEuler(constant_controller(0.1)), ode,
                                                 [1.0], [1.0], 0.0, 1.0, 0.1)
    assert const <= 1e-13
    ratio, series = variational_equivariance_residual(
        AdaptiveEuler(state_ratio_controller(np.array([1.0]))), ode, [1.0], [1.0], 0.0, 1.0, 0.1)
    assert ratio > 1e-3
    assert series[0] == 0.0
