"""Executable checks that the adjoint constructions commute.

Each check returns a :class:`DiagramReport` with a max residual, the tolerance
it is judged against and a per-sample or per-step residual series.  Random
samples are drawn from ``np.random.default_rng(seed)`` so reports are
reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .adjoint import AdjointSystem, dual_galerkin_adjoint_rhs, form_adjoint
from .integrators import (assemble_step_jacobian, backpropagate, get_method, integrate_forward,
                          integrate_variational)
from .pairings import DualityPairing, as_matrix, as_vector
from .semidisc import SemiDiscreteODE, assemble_galerkin

DEFAULT_SEED = 20240611


@dataclass
class DiagramReport:
    """Outcome of one commutation check.

    ``passed`` requires ``max_residual <= tolerance`` and every entry of
    ``extra_checks`` (used where a check also needs a lower bound, e.g. the
    perturbed-lift drift).
    """

    name: str
    max_residual: float
    tolerance: float
    seed: int | None = None
    per_step: np.ndarray = field(default_factory=lambda: np.zeros(0))
    info: dict = field(default_factory=dict)
    extra_checks: dict = field(default_factory=dict)

    @property
    def passed(self):
        return bool(self.max_residual <= self.tolerance and all(self.extra_checks.values()))

    def to_json(self):
        return {"name": self.name, "residual": float(self.max_residual),
                "tolerance": float(self.tolerance), "passed": self.passed, "seed": self.seed,
                "per_step": [float(x) for x in np.ravel(self.per_step)],
                "extra_checks": {k: bool(v) for k, v in self.extra_checks.items()},
                "info": _jsonable(self.info)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _rel(a, b):
    scale = np.max(np.abs(b))
    err = np.max(np.abs(a - b))
    return float(err / scale) if scale > 0 else float(err)


def _resolve(method):
    return get_method(method) if isinstance(method, str) else method


# -- semi-discrete level ------------------------------------------------------

def verify_semidiscrete_commutation(problem, n_elements, pairing_choice="mass", n_samples=100,
                                    seed=DEFAULT_SEED, tolerance=None):
    """Adjoint-then-discretize versus discretize-then-adjoint for a Galerkin problem.

    (a) the adjoint of the assembled ODE under ``pairing_choice``; (b) the
    dual Galerkin system ``M^T p' = -K^T p - [D_q f]^T p`` assembled directly.
    For the standard pairing the covector is mapped by ``z = M^T p`` before
    comparing.  Residuals are relative max-norm differences per sample.
    """
    _, ode = assemble_galerkin(problem, n_elements)
    rng = np.random.default_rng(seed)
    if pairing_choice == "mass":
        system = form_adjoint(ode, DualityPairing.mass_induced(ode.mass))
        tol = 1e-13 if tolerance is None else tolerance
    elif pairing_choice == "standard":
        system = form_adjoint(ode, DualityPairing.standard(ode.dim))
        tol = 1e-11 if tolerance is None else tolerance
    else:
        raise ValueError(f"pairing_choice must be 'mass' or 'standard', got {pairing_choice!r}")
    res = np.empty(n_samples)
    for k in range(n_samples):
        t = rng.uniform(0.0, 1.0)
        q = rng.standard_normal(ode.dim)
        p = rng.standard_normal(ode.dim)
        pdot_b = dual_galerkin_adjoint_rhs(ode, t, q, p)
        if pairing_choice == "mass":
            pdot_a = -(system.adjoint_operator(t, q) @ p)
            res[k] = _rel(pdot_a, pdot_b)
        else:
            zdot = system.adjoint_rhs(t, q, ode.mass.T @ p)
            res[k] = _rel(zdot, ode.mass.T @ pdot_b)
    return DiagramReport(f"semidiscrete_commutation[{problem.name},{pairing_choice}]",
                         float(res.max()), tol, seed, res,
                         {"problem": problem.name, "n_elements": n_elements, "dim": ode.dim,
                          "n_samples": n_samples})


# -- fully discrete level -----------------------------------------------------

def verify_fully_discrete_commutation(method, ode, q0, t0, tf, n_steps, pairing=None,
                                      seed=DEFAULT_SEED, tolerance=1e-11):
    """Cotangent-lift backpropagation versus transposed assembled step Jacobians.

    Both trajectories are compared in standard coordinates, relative to the
    largest adjoint component.
    """
    method = _resolve(method)
    if pairing is None:
        pairing = DualityPairing.standard(ode.dim)
    rng = np.random.default_rng(seed)
    fwd = integrate_forward(method, ode.rhs, q0, t0, tf, n_steps, ode.jacobian)
    z_N = rng.standard_normal(ode.dim)
    lifted = backpropagate(method, ode.rhs, ode.jacobian, fwd, pairing.from_standard(z_N),
                           pairing=pairing)
    a = lifted.adjoints @ pairing.matrix if not pairing.is_standard else lifted.adjoints
    b = np.empty_like(a)
    b[-1] = z_N
    h = fwd.step_size
    for n in reversed(range(fwd.n_steps)):
        J = assemble_step_jacobian(method, ode.rhs, ode.jacobian, fwd.times[n], fwd.states[n],
                                   h, fwd.stages[n])
        b[n] = J.T @ b[n + 1]
    scale = float(np.max(np.abs(b)))
    per_step = np.max(np.abs(a - b), axis=1) / scale
    info = {"method": method.name, "n_steps": int(n_steps), "pairing": pairing.kind.value,
            "adjoint_scale": scale}
    if "max_stage_residual" in fwd.info:
        info["max_stage_residual"] = fwd.info["max_stage_residual"]
    return DiagramReport(f"fully_discrete_commutation[{method.name}]", float(per_step.max()),
                         tolerance, seed, per_step, info)


def verify_naturality(method, ode, q0, t0, tf, n_steps, seed=DEFAULT_SEED, tolerance=1e-11):
    """Standard discrete adjoint mapped by ``M^-T`` versus the mass-pairing discrete adjoint."""
    method = _resolve(method)
    std = DualityPairing.standard(ode.dim)
    mass = DualityPairing.mass_induced(ode.mass)
    rng = np.random.default_rng(seed)
    fwd = integrate_forward(method, ode.rhs, q0, t0, tf, n_steps, ode.jacobian)
    z_N = rng.standard_normal(ode.dim)
    z = backpropagate(method, ode.rhs, ode.jacobian, fwd, z_N, pairing=std).adjoints
    p = backpropagate(method, ode.rhs, ode.jacobian, fwd, mass.from_standard(z_N),
                      pairing=mass).adjoints
    mapped = np.array([mass.from_standard(zn) for zn in z])
    scale = float(np.max(np.abs(p)))
    per_step = np.max(np.abs(mapped - p), axis=1) / scale
    return DiagramReport(f"naturality[{method.name}]", float(per_step.max()), tolerance, seed,
                         per_step, {"method": method.name, "n_steps": int(n_steps)})


def verify_diagram_closure(method, problem, n_elements, n_steps, tf=0.2, seed=DEFAULT_SEED):
    """Both paths around the semi-discrete/fully-discrete diagram, within the larger tolerance."""
    semi = verify_semidiscrete_commutation(problem, n_elements, "mass", seed=seed)
    _, ode = assemble_galerkin(problem, n_elements)
    q0 = ode.initial_state(problem.initial_condition)
    nat = verify_naturality(method, ode, q0, 0.0, tf, n_steps, seed=seed)
    full = verify_fully_discrete_commutation(method, ode, q0, 0.0, tf, n_steps,
                                             pairing=DualityPairing.mass_induced(ode.mass),
                                             seed=seed)
    parts = [semi, nat, full]
    return DiagramReport("diagram_closure", max(r.max_residual for r in parts),
                         max(r.tolerance for r in parts), seed,
                         np.array([r.max_residual for r in parts]),
                         {"components": [r.name for r in parts]})


# -- preconditioning ----------------------------------------------------------

ILL_CONDITIONED = 1e6


def verify_precondition_identity(method, ode, P, q0, t0, tf, n_steps, seed=DEFAULT_SEED,
                                 tolerance=None):
    """Backpropagation under ``General(P)`` versus standard backpropagation of ``P^T p``.

    In exact arithmetic ``P^T p_n^L = z_n`` at every step.  When ``cond(P)``
    exceeds 1e6 the report is flagged ``ill_conditioned`` and the default
    tolerance is relaxed from 1e-12 to 1e-6, since the change of coordinates
    itself loses about ``cond(P) * eps`` relative accuracy.
    """
    method = _resolve(method)
    P = as_matrix(P, "P")
    general = DualityPairing.general(P)
    cond = float(np.linalg.cond(P))
    ill = cond > ILL_CONDITIONED
    tol = tolerance if tolerance is not None else (1e-6 if ill else 1e-12)
    rng = np.random.default_rng(seed)
    fwd = integrate_forward(method, ode.rhs, q0, t0, tf, n_steps, ode.jacobian)
    p_N = rng.standard_normal(ode.dim)
    pl = backpropagate(method, ode.rhs, ode.jacobian, fwd, p_N, pairing=general).adjoints
    z = backpropagate(method, ode.rhs, ode.jacobian, fwd, general.to_standard(p_N)).adjoints
    mapped = pl @ P
    per_step = np.max(np.abs(mapped - z), axis=1) / np.max(np.abs(z))
    return DiagramReport(f"precondition_identity[{method.name}]", float(per_step.max()), tol,
                         seed, per_step,
                         {"cond_P": cond, "ill_conditioned": ill,
                          "note": "identity is exact only in exact arithmetic" if ill else ""})


def ill_conditioned_matrix(dim, cond=1e8, seed=DEFAULT_SEED):
    """Symmetric ``Q diag(s) Q^T`` with singular values log-spaced from 1 to ``1/cond``."""
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((dim, dim)))
    return (q * np.logspace(0.0, -np.log10(cond), dim)) @ q.T


# -- uniqueness via conservation ----------------------------------------------

def verify_conservation_uniqueness(method, ode, q0, t0, tf, n_steps=10, eps=1e-4,
                                   seed=DEFAULT_SEED, pairing=None, lift_tolerance=1e-12,
                                   lower_constant=0.1):
    """True cotangent lift conserves the pairing; an eps-perturbed backward step does not.

    The residual is the true lift's relative drift.  The extra check requires
    the perturbed drift to reach ``lower_constant * eps`` (skipped for eps = 0,
    where the perturbed drift must itself stay under ``lift_tolerance``).
    """
    method = _resolve(method)
    rng = np.random.default_rng(seed)
    dq0 = rng.standard_normal(ode.dim)
    p_N = rng.standard_normal(ode.dim)
    dirs = rng.standard_normal((int(n_steps), ode.dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    fwd = integrate_variational(method, ode, q0, dq0, t0, tf, n_steps)
    true = backpropagate(method, ode.rhs, ode.jacobian, fwd, p_N, pairing=pairing)

    def perturb(n, p):
        return p + eps * np.linalg.norm(p) * dirs[n]

    bad = backpropagate(method, ode.rhs, ode.jacobian, fwd, p_N, pairing=pairing,
                        perturb=perturb)
    d_true, d_bad = true.invariant_drift(), bad.invariant_drift()
    if eps > 0:
        extra = {"perturbed_drift_lower_bound": d_bad >= lower_constant * eps}
    else:
        extra = {"perturbed_drift_zero": d_bad <= lift_tolerance}
    per_step = np.abs(true.invariant_series - true.invariant_series[-1]) / true.info["invariant_scale"]
    return DiagramReport(f"conservation_uniqueness[{method.name},eps={eps:g}]", d_true,
                         lift_tolerance, seed, per_step,
                         {"eps": eps, "lift_drift": d_true, "perturbed_drift": d_bad,
                          "drift_over_eps": d_bad / eps if eps > 0 else None,
                          "perturbed_series": bad.invariant_series},
                         extra)


# -- equilibrium preservation -------------------------------------------------

def upwind_operator(n, a=1.0):
    """Periodic first-order upwind advection matrix on ``n`` points (h = 1/n); rows sum to 0."""
    h = 1.0 / n
    eye = np.eye(n)
    if a >= 0:
        return (a / h) * (np.roll(eye, -1, axis=1) - eye)
    return (a / h) * (eye - np.roll(eye, 1, axis=1))


def nonuniform_mass(n, amplitude=0.5, seed=DEFAULT_SEED):
    """Diagonal mass ``diag(w)`` with weights ``1/n * (1 + amplitude * u)``, ``u`` in [-1, 1]."""
    u = np.random.default_rng(seed).uniform(-1.0, 1.0, n)
    return np.diag((1.0 + amplitude * u) / n)


def equilibrium_report(linear, mass, method="explicit_euler", h=1e-3,
                       pairings=("standard", "mass"), tolerance=1e-14):
    """Is the constant vector a fixed point of the state update and of each adjoint update?

    The state residual ``|Phi(1) - 1|`` is judged against ``tolerance``.  Adjoint
    residuals for each pairing are observations only, together with the row
    and column sums of ``K``.
    """
    method = _resolve(method)
    K = as_matrix(linear, "K")
    ode = SemiDiscreteODE(as_matrix(mass, "M"), K, name="equilibrium")
    ones = np.ones(ode.dim)
    y1, stages = method.advance(ode.rhs, 0.0, ones, h, ode.jacobian)
    state_res = float(np.max(np.abs(y1 - ones)))
    adjoint_res = {}
    for name in pairings:
        pr = DualityPairing.standard(ode.dim) if name == "standard" else \
            DualityPairing.mass_induced(ode.mass)
        p0 = method.cotangent_step(ode.rhs, ode.jacobian, 0.0, ones, ones, h, stages, pairing=pr)
        adjoint_res[name] = float(np.max(np.abs(p0 - ones)))
    info = {"method": method.name, "h": h, "adjoint_residuals": adjoint_res,
            "max_abs_row_sum": float(np.max(np.abs(K.sum(axis=1)))),
            "max_abs_col_sum": float(np.max(np.abs(K.sum(axis=0)))),
            "mass_is_diagonal": bool(np.allclose(ode.mass, np.diag(np.diag(ode.mass)))),
            "mass_is_scalar": bool(np.allclose(ode.mass, ode.mass[0, 0] * np.eye(ode.dim)))}
    return DiagramReport(f"equilibrium[{method.name}]", state_res, tolerance, None,
                         np.array([state_res]), info)


# -- continuous level ---------------------------------------------------------

def continuous_invariant_drift(ode, q0, dq0, p_terminal, t0, tf, pairing=None, rtol=1e-12,
                               atol=1e-14, n_eval=21):
    """Pairing of the exact (tightly integrated) adjoint and variational flows over time.

    State and variation are integrated forward together, the adjoint backward
    with a dense-output state.  Returns ``(relative_drift, times, series)``.
    """
    n = ode.dim
    pairing = pairing or DualityPairing.standard(n)
    system = AdjointSystem(ode, pairing)

    def fwd_rhs(t, w):
        return np.concatenate([ode.rhs(t, w[:n]), ode.jacobian(t, w[:n]) @ w[n:]])

    y0 = np.concatenate([as_vector(q0, "q0", n), as_vector(dq0, "dq0", n)])
    times = np.linspace(t0, tf, n_eval)
    fw = solve_ivp(fwd_rhs, (t0, tf), y0, method="DOP853", rtol=rtol, atol=atol,
                   dense_output=True, t_eval=times)
    bw = solve_ivp(lambda t, p: system.adjoint_rhs(t, fw.sol(t)[:n], p), (tf, t0),
                   as_vector(p_terminal, "p_terminal", n), method="DOP853", rtol=rtol,
                   atol=atol, t_eval=times[::-1])
    ps = bw.y.T[::-1]
    dqs = fw.y.T[:, n:]
    series = np.array([pairing.pair(p, d) for p, d in zip(ps, dqs)])
    scale = max(np.linalg.norm(pairing.to_standard(p)) * np.linalg.norm(d) for p, d in zip(ps, dqs))
    return float(np.max(np.abs(series - series[-1])) / scale), times, series
