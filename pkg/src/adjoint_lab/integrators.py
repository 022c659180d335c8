"""One-step integrators with tangent (variational) and cotangent (adjoint) lifts.

For a step map ``y_{n+1} = Phi(y_n)`` the tangent lift is the Jacobian-vector
product ``dy_{n+1} = T Phi dy_n`` and the cotangent lift runs backwards,
``p_n = (T Phi)^* p_{n+1}``.  Explicit Runge-Kutta cotangents are obtained by
transposing the stage computation in reverse order; the implicit midpoint
rule needs one transposed linear solve per step.  By construction
``pair(p_n, dy_n)`` is the same at every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConvergenceError, DimensionError
from .pairings import as_vector


class OneStepMethod:
    """Base class.  Subclasses implement :meth:`advance` and the two lifts.

    ``advance`` returns ``(y_next, stages)``; ``stages`` is whatever the
    lifts need to avoid recomputing the step (stage states, Newton data).
    """

    name = ""
    order = 0
    implicit = False

    def advance(self, rhs, t, y, h, jac=None):
        raise NotImplementedError

    def step(self, rhs, t, y, h, jac=None):
        return self.advance(rhs, t, y, h, jac)[0]

    def tangent_step(self, rhs, jac, t, y, dy, h, stages=None):
        raise NotImplementedError

    def _cotangent_standard(self, rhs, jac, t, y, p_next, h, stages):
        raise NotImplementedError

    def cotangent_step(self, rhs, jac, t, y, p_next, h, stages=None, pairing=None):
        """``p_n`` from ``p_{n+1}``; adjoint taken with respect to ``pairing`` (default standard)."""
        if pairing is None or pairing.is_standard:
            return self._cotangent_standard(rhs, jac, t, y, p_next, h, stages)
        z = self._cotangent_standard(rhs, jac, t, y, pairing.to_standard(p_next), h, stages)
        return pairing.from_standard(z)

    def __repr__(self):
        return f"{type(self).__name__}()"


class ExplicitRungeKutta(OneStepMethod):
    def __init__(self, name, a, b, c, order):
        self.name = name
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.order = order
        if np.any(np.triu(self.a) != 0):
            raise ValueError("explicit tableau must be strictly lower triangular")

    @property
    def n_stages(self):
        return len(self.b)

    def advance(self, rhs, t, y, h, jac=None):
        s = self.n_stages
        k = np.empty((s, len(y)))
        ys = np.empty((s, len(y)))
        for i in range(s):
            ys[i] = y + h * (self.a[i, :i] @ k[:i]) if i else y
            k[i] = rhs(t + self.c[i] * h, ys[i])
        return y + h * (self.b @ k), ys

    def tangent_step(self, rhs, jac, t, y, dy, h, stages=None):
        if stages is None:
            stages = self.advance(rhs, t, y, h)[1]
        s = self.n_stages
        dk = np.empty((s, len(y)))
        for i in range(s):
            dyi = dy + h * (self.a[i, :i] @ dk[:i]) if i else dy
            dk[i] = jac(t + self.c[i] * h, stages[i]) @ dyi
        return dy + h * (self.b @ dk)

    def _cotangent_standard(self, rhs, jac, t, y, p_next, h, stages):
        if stages is None:
            stages = self.advance(rhs, t, y, h)[1]
        s = self.n_stages
        kbar = h * self.b[:, None] * p_next[None, :]
        p = p_next.copy()
        for i in reversed(range(s)):
            ybar = jac(t + self.c[i] * h, stages[i]).T @ kbar[i]
            p += ybar
            if i:
                kbar[:i] += h * self.a[i, :i, None] * ybar[None, :]
        return p

    def __repr__(self):
        return f"ExplicitRungeKutta({self.name!r})"


def explicit_euler():
    return ExplicitRungeKutta("explicit_euler", [[0.0]], [1.0], [0.0], order=1)


def heun():
    return ExplicitRungeKutta("heun", [[0, 0], [1, 0]], [0.5, 0.5], [0, 1], order=2)


def rk4():
    a = [[0, 0, 0, 0], [0.5, 0, 0, 0], [0, 0.5, 0, 0], [0, 0, 1, 0]]
    return ExplicitRungeKutta("rk4", a, [1 / 6, 1 / 3, 1 / 3, 1 / 6], [0, 0.5, 0.5, 1], order=4)


@dataclass
class MidpointStage:
    state: np.ndarray
    residual: float
    iterations: int


class ImplicitMidpoint(OneStepMethod):
    """``y_{n+1} = y_n + h g(t + h/2, (y_n + y_{n+1})/2)`` solved by Newton on the midpoint stage."""

    name = "implicit_midpoint"
    order = 2
    implicit = True

    def __init__(self, tol=1e-12, max_iter=50):
        self.tol = tol
        self.max_iter = max_iter

    def advance(self, rhs, t, y, h, jac=None):
        if jac is None:
            raise ValueError("implicit midpoint needs a Jacobian")
        tm = t + 0.5 * h
        eye = np.eye(len(y))
        ymid = y.copy()
        for it in range(self.max_iter + 1):
            r = ymid - y - 0.5 * h * rhs(tm, ymid)
            res = float(np.max(np.abs(r))) if len(r) else 0.0
            if res <= self.tol * max(1.0, float(np.max(np.abs(ymid)))):
                return 2.0 * ymid - y, MidpointStage(ymid, res, it)
            if it == self.max_iter:
                break
            ymid = ymid - np.linalg.solve(eye - 0.5 * h * jac(tm, ymid), r)
            if not np.all(np.isfinite(ymid)):
                break
        raise ConvergenceError(
            f"Newton did not converge in {self.max_iter} iterations (residual {res:.3e})")

    def _stage_matrix(self, jac, t, h, stage):
        return np.eye(len(stage.state)) - 0.5 * h * jac(t + 0.5 * h, stage.state)

    def tangent_step(self, rhs, jac, t, y, dy, h, stages=None):
        if stages is None:
            stages = self.advance(rhs, t, y, h, jac)[1]
        dmid = np.linalg.solve(self._stage_matrix(jac, t, h, stages), dy)
        return 2.0 * dmid - dy

    def _cotangent_standard(self, rhs, jac, t, y, p_next, h, stages):
        if stages is None:
            stages = self.advance(rhs, t, y, h, jac)[1]
        mat = self._stage_matrix(jac, t, h, stages)
        try:
            w = np.linalg.solve(mat.T, p_next)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"singular transposed midpoint system: {exc}") from None
        return 2.0 * w - p_next

    def __repr__(self):
        return f"ImplicitMidpoint(tol={self.tol}, max_iter={self.max_iter})"


METHODS = {
    "explicit_euler": explicit_euler,
    "heun": heun,
    "rk4": rk4,
    "implicit_midpoint": ImplicitMidpoint,
}
_ALIASES = {"euler": "explicit_euler", "ee": "explicit_euler", "midpoint": "implicit_midpoint",
            "im": "implicit_midpoint"}


def get_method(name, **kwargs):
    key = str(name).lower().replace("-", "_")
    key = _ALIASES.get(key, key)
    if key not in METHODS:
        raise ValueError(f"unknown method {name!r}; valid: {sorted(METHODS)}")
    return METHODS[key](**kwargs)


# -- trajectories -------------------------------------------------------------

@dataclass
class TrajectoryBundle:
    times: np.ndarray
    states: np.ndarray
    variations: Optional[np.ndarray] = None
    adjoints: Optional[np.ndarray] = None
    invariant_series: Optional[np.ndarray] = None
    stages: Optional[list] = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        n = len(self.times)
        if n < 1 or self.states.shape[0] != n:
            raise DimensionError(f"{n} times but {self.states.shape[0]} states")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        for name in ("variations", "adjoints", "invariant_series"):
            arr = getattr(self, name)
            if arr is not None and len(arr) != n:
                raise DimensionError(f"{name} has length {len(arr)}, expected {n}")
        if self.stages is not None and len(self.stages) != n - 1:
            raise DimensionError(f"{len(self.stages)} stage records for {n - 1} steps")

    @property
    def n_steps(self):
        return len(self.times) - 1

    @property
    def step_size(self):
        return (self.times[-1] - self.times[0]) / self.n_steps

    def invariant_drift(self, relative=True):
        """Max deviation of the invariant series from its final value."""
        if self.invariant_series is None:
            raise ValueError("no invariant series recorded")
        inv = self.invariant_series
        drift = float(np.max(np.abs(inv - inv[-1])))
        if not relative:
            return drift
        scale = self.info.get("invariant_scale") or float(np.max(np.abs(inv)))
        return drift / scale if scale > 0 else drift


def _time_grid(t0, tf, n_steps):
    n_steps = int(n_steps)
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not tf > t0:
        raise ValueError("tf must exceed t0")
    return np.linspace(t0, tf, n_steps + 1)


def integrate_forward(method, ode_rhs, y0, t0, tf, n_steps, jac=None):
    times = _time_grid(t0, tf, n_steps)
    y = as_vector(y0, "y0").copy()
    h = (tf - t0) / int(n_steps)
    states = np.empty((len(times), len(y)))
    states[0] = y
    stages = []
    max_res = 0.0
    for n in range(len(times) - 1):
        try:
            y, st = method.advance(ode_rhs, times[n], y, h, jac)
        except ConvergenceError as exc:
            raise ConvergenceError(str(exc), step_index=n) from None
        if isinstance(st, MidpointStage):
            max_res = max(max_res, st.residual)
        if not np.all(np.isfinite(y)):
            raise FloatingPointError(f"step {n}: non-finite state with h={h:.3g}; "
                                     "step size is likely outside the stability region")
        states[n + 1] = y
        stages.append(st)
    info = {"method": method.name, "h": h}
    if method.implicit:
        info["max_stage_residual"] = max_res
    return TrajectoryBundle(times, states, stages=stages, info=info)


def integrate_variational(method, variational, y0, dy0, t0, tf, n_steps):
    # accepts a VariationalSystem or a bare ODE
    ode = getattr(variational, "ode", variational)
    fwd = integrate_forward(method, ode.rhs, y0, t0, tf, n_steps, ode.jacobian)
    h = fwd.step_size
    dys = np.empty_like(fwd.states)
    dys[0] = as_vector(dy0, "dy0", ode.dim)
    for n in range(fwd.n_steps):
        dys[n + 1] = method.tangent_step(ode.rhs, ode.jacobian, fwd.times[n], fwd.states[n],
                                         dys[n], h, fwd.stages[n])
    fwd.variations = dys
    return fwd


def backpropagate(method, ode_rhs, jac, forward, p_terminal, pairing=None, perturb=None):
    """Run the cotangent lift backwards from ``p_terminal`` along a stored forward trajectory.

    Returns a new bundle sharing the forward data with ``adjoints`` filled
    in, plus ``invariant_series`` when the forward bundle carries variations.
    ``perturb(n, p_n)`` is a test hook returning a modified ``p_n``.
    """
    if forward.states is None or forward.stages is None:
        raise ValueError("forward trajectory must store states and stages at every step")
    p = as_vector(p_terminal, "p_terminal", forward.states.shape[1]).copy()
    h = forward.step_size
    adj = np.empty_like(forward.states)
    adj[-1] = p
    for n in reversed(range(forward.n_steps)):
        p = method.cotangent_step(ode_rhs, jac, forward.times[n], forward.states[n], p, h,
                                  forward.stages[n], pairing=pairing)
        if perturb is not None:
            p = perturb(n, p)
        adj[n] = p
    out = TrajectoryBundle(forward.times, forward.states, forward.variations, adj,
                           stages=forward.stages, info=dict(forward.info))
    if forward.variations is not None:
        if pairing is None or pairing.is_standard:
            std = adj
        else:
            std = adj @ pairing.matrix
        out.invariant_series = np.einsum("ij,ij->i", std, forward.variations)
        out.info["invariant_scale"] = float(np.max(
            np.linalg.norm(std, axis=1) * np.linalg.norm(forward.variations, axis=1)))
    return out


def assemble_step_jacobian(method, rhs, jac, t, y, h, stages=None):
    """Dense ``T Phi`` at ``y``, one tangent step per basis vector."""
    if stages is None:
        stages = method.advance(rhs, t, y, h, jac)[1]
    eye = np.eye(len(y))
    return np.column_stack([method.tangent_step(rhs, jac, t, y, e, h, stages) for e in eye])


@dataclass(frozen=True)
class ODE:
    """Plain ``y' = rhs(t, y)`` with Jacobian, for problems that are not semi-discretizations."""

    rhs: object
    jacobian: object
    dim: int


class AdaptiveEuler:
    """Adaptive forward Euler driven by a differentiable step-size controller."""

    name = "adaptive_euler"
    order = 1

    def __init__(self, controller):
        self.controller = controller

    def __repr__(self):
        return f"AdaptiveEuler({self.controller!r})"


def variational_equivariance_residual(method, ode, y0, dy0, t0, tf, steps_or_h0):
    """Gap between the method's tangent lift and the method applied to the variational ODE.

    For a :class:`OneStepMethod` ``steps_or_h0`` is the step count; for
    :class:`AdaptiveEuler` it is the initial step size.  Returns
    ``(max_residual, per_step_series)`` in the max norm over the stacked
    state-plus-variation vector.
    """
    if isinstance(method, AdaptiveEuler):
        from .adaptive import adaptive_equivariance_residual
        return adaptive_equivariance_residual(method.controller, ode.rhs, ode.jacobian,
                                              y0, dy0, t0, tf, steps_or_h0)
    n = ode.dim
    y0 = as_vector(y0, "y0", n)
    dy0 = as_vector(dy0, "dy0", n)

    def aug_rhs(t, w):
        return np.concatenate([ode.rhs(t, w[:n]), ode.jacobian(t, w[:n]) @ w[n:]])

    def aug_jac(t, w):
        # the second-derivative block is dropped; Newton still converges to the same stage
        jq = ode.jacobian(t, w[:n])
        out = np.zeros((2 * n, 2 * n))
        out[:n, :n] = jq
        out[n:, n:] = jq
        return out

    lifted = integrate_variational(method, ode, y0, dy0, t0, tf, steps_or_h0)
    direct = integrate_forward(method, aug_rhs, np.concatenate([y0, dy0]), t0, tf, steps_or_h0,
                               aug_jac)
    a = np.hstack([lifted.states, lifted.variations])
    series = np.max(np.abs(a - direct.states), axis=1)
    return float(np.max(series)), series
