"""Discrete gradients of terminal costs via the cotangent-lifted integrators.

The objective is ``J(q0) = C(Phi_N o ... o Phi_1 (q0))``.  Backpropagating
``p_N = DC(q_N)`` through the cotangent lift returns ``p_0 = dJ/dq0`` exactly
(up to roundoff), which the finite-difference oracles here check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .integrators import backpropagate, get_method, integrate_forward, integrate_variational
from .pairings import DualityPairing, PairingKind, as_vector


@dataclass(frozen=True)
class CostFunction:
    """Terminal cost ``C(q)`` and its gradient (a covector in the standard pairing)."""

    name: str
    value: Callable
    gradient: Callable


def half_squared_norm():
    return CostFunction("half_squared_norm",
                        lambda q: 0.5 * float(np.dot(q, q)),
                        lambda q: np.array(q, dtype=float))


def weighted_terminal(w):
    """Linear functional ``C(q) = w . q``."""
    w = as_vector(w, "w").copy()
    return CostFunction("weighted_terminal", lambda q: float(w @ q), lambda q: w.copy())


COSTS = {"half_squared_norm": half_squared_norm, "weighted_terminal": weighted_terminal}


@dataclass
class SensitivityResult:
    gradient: np.ndarray
    invariant_drift: float
    method_order_estimate: Optional[float] = None
    coordinates: str = "standard"
    info: dict = field(default_factory=dict)

    def to_json(self):
        return {"gradient": [float(x) for x in self.gradient],
                "invariant_drift": self.invariant_drift,
                "method_order_estimate": self.method_order_estimate,
                "coordinates": self.coordinates}


def _resolve(method):
    return get_method(method) if isinstance(method, str) else method


def discrete_gradient(method, ode, cost, q0, t0, tf, n_steps, pairing=None,
                      report_in="standard", seed=0):
    """Exact gradient of ``C(q_N)`` with respect to ``q0`` by cotangent backpropagation.

    ``pairing`` selects the coordinates the backward sweep runs in (default
    standard).  ``report_in="mass"`` returns ``M^-T dJ/dq0`` instead, i.e. the
    same covector expressed in the mass-induced pairing.  A random variation
    seeded by ``seed`` is carried along so the invariant drift comes from the
    very run that produced the gradient.
    """
    method = _resolve(method)
    if report_in not in ("standard", "mass"):
        raise ValueError(f"report_in must be 'standard' or 'mass', got {report_in!r}")
    q0 = as_vector(q0, "q0", ode.dim)
    if pairing is None:
        pairing = DualityPairing.standard(ode.dim)
    dq0 = np.random.default_rng(seed).standard_normal(ode.dim)
    fwd = integrate_variational(method, ode, q0, dq0, t0, tf, n_steps)
    z_N = np.asarray(cost.gradient(fwd.states[-1]), dtype=float)
    bundle = backpropagate(method, ode.rhs, ode.jacobian, fwd, pairing.from_standard(z_N),
                           pairing=pairing)
    grad = pairing.to_standard(bundle.adjoints[0])
    if report_in == "mass":
        mass = getattr(ode, "mass", None)
        if mass is None:
            raise ValueError("report_in='mass' needs an ODE with a mass matrix")
        grad = DualityPairing(PairingKind.MASS, mass).from_standard(grad)
    return SensitivityResult(grad, bundle.invariant_drift(), coordinates=report_in,
                             info={"method": method.name, "n_steps": int(n_steps),
                                   "pairing": pairing.kind.value,
                                   "cost_value": float(cost.value(fwd.states[-1]))})


def discrete_objective(method, ode, cost, q0, t0, tf, n_steps):
    fwd = integrate_forward(method, ode.rhs, q0, t0, tf, n_steps, ode.jacobian)
    return float(cost.value(fwd.states[-1]))


def fd_gradient_oracle(method, ode, cost, q0, t0, tf, n_steps, eps=1e-6):
    """Central differences of the fully discrete objective, one solve pair per component."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    method = _resolve(method)
    q0 = as_vector(q0, "q0", ode.dim)
    out = np.empty(ode.dim)
    for i in range(ode.dim):
        e = np.zeros(ode.dim)
        e[i] = eps
        out[i] = (discrete_objective(method, ode, cost, q0 + e, t0, tf, n_steps)
                  - discrete_objective(method, ode, cost, q0 - e, t0, tf, n_steps)) / (2 * eps)
    return out


def fd_directional_derivative(method, ode, cost, q0, t0, tf, n_steps, direction, eps=1e-6):
    method = _resolve(method)
    q0 = as_vector(q0, "q0", ode.dim)
    d = as_vector(direction, "direction", ode.dim)
    return (discrete_objective(method, ode, cost, q0 + eps * d, t0, tf, n_steps)
            - discrete_objective(method, ode, cost, q0 - eps * d, t0, tf, n_steps)) / (2 * eps)


def loglog_slope(hs, errors):
    hs, errors = np.asarray(hs, dtype=float), np.asarray(errors, dtype=float)
    if np.any(errors <= 0):
        raise ValueError("errors must be positive for a log-log fit")
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])


@dataclass
class OrderStudy:
    table: list
    slope: float
    reference_steps: int

    def to_json(self):
        return {"table": [{"n_steps": n, "h": h, "error": e} for n, h, e in self.table],
                "slope": self.slope, "reference_steps": self.reference_steps}


def adjoint_trajectory(method, ode, cost, q0, t0, tf, n_steps):
    """Standard-pairing adjoint series ``p_0 .. p_N`` for terminal cost ``C``."""
    method = _resolve(method)
    fwd = integrate_forward(method, ode.rhs, q0, t0, tf, n_steps, ode.jacobian)
    bundle = backpropagate(method, ode.rhs, ode.jacobian, fwd, cost.gradient(fwd.states[-1]))
    return bundle.times, bundle.adjoints


def adjoint_order_study(method, ode, cost, q0, t0, tf, step_counts, ref_factor=16):
    """Convergence of the discrete adjoint to a fine RK4 reference.

    The reference uses ``ref_factor * max(step_counts)`` steps, so every grid
    is a subgrid of the reference grid.  Error is ``max_n |p_n - p_ref(t_n)|_2``.
    """
    counts = [int(n) for n in step_counts]
    if len(counts) < 3:
        raise ValueError("an order study needs at least 3 step counts")
    if len(set(counts)) != len(counts) or min(counts) < 1:
        raise ValueError("step counts must be distinct positive integers")
    n_ref = ref_factor * max(counts)
    bad = [n for n in counts if n_ref % n]
    if bad:
        raise ValueError(f"step counts {bad} do not divide the reference count {n_ref}")
    q0 = as_vector(q0, "q0", ode.dim)
    _, p_ref = adjoint_trajectory(get_method("rk4"), ode, cost, q0, t0, tf, n_ref)
    table = []
    for n in counts:
        _, p = adjoint_trajectory(method, ode, cost, q0, t0, tf, n)
        err = float(np.max(np.linalg.norm(p - p_ref[:: n_ref // n], axis=1)))
        if not np.isfinite(err):
            raise FloatingPointError(f"adjoint blew up with {n} steps (h={(tf - t0) / n:.3g}); "
                                     "step size is likely outside the stability region")
        table.append((n, (tf - t0) / n, err))
    slope = loglog_slope([r[1] for r in table], [r[2] for r in table])
    return OrderStudy(table, slope, n_ref)
