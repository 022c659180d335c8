"""Method-of-lines semi-discretizations of 1-D semilinear PDEs on [0, 1].

Built-in problems (``u = u(t, x)``)::

    heat       u_t = nu u_xx
    advection  u_t = -a u_x
    burgers    u_t = nu u_xx - u u_x

Every discretization produces a :class:`SemiDiscreteODE` of the form
``M q' = K q + f(t, q)``; the sign of integration by parts is folded into
``K``.  Dirichlet boundary values are eliminated, leaving interior unknowns only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError
from .pairings import Factorized, as_matrix, as_vector

PROBLEMS = ("heat", "advection", "burgers")
BOUNDARY_CONDITIONS = ("dirichlet", "periodic")
DISCRETIZATIONS = ("galerkin", "fd")


# -- initial profiles ---------------------------------------------------------

def gaussian(center=0.5, width=0.1, amplitude=1.0):
    return lambda x: amplitude * np.exp(-((np.asarray(x) - center) / width) ** 2)


def sine(k=1, amplitude=1.0):
    return lambda x: amplitude * np.sin(k * math.pi * np.asarray(x))


def constant(value=1.0):
    return lambda x: np.full(np.shape(x), float(value))


PROFILES = {"gaussian": gaussian, "sine": sine, "constant": constant}


def profile_from_config(entry):
    """Build an initial profile from ``{"profile": name, **params}`` (or a bare name)."""
    if isinstance(entry, str):
        entry = {"profile": entry}
    if not isinstance(entry, dict) or "profile" not in entry:
        raise ConfigError("initial must be a profile name or an object with a 'profile' key")
    params = dict(entry)
    name = params.pop("profile")
    if name not in PROFILES:
        raise ConfigError(f"unknown initial profile {name!r}; valid: {sorted(PROFILES)}")
    try:
        return PROFILES[name](**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for profile {name!r}: {exc}") from None


# -- problem ------------------------------------------------------------------

@dataclass(frozen=True)
class EvolutionProblem:
    name: str
    bc: str = "dirichlet"
    nu: float = 0.0
    a: float = 0.0
    initial_condition: Callable = field(default_factory=sine, compare=False)

    def __post_init__(self):
        if self.name not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.name!r}; valid: {list(PROBLEMS)}")
        if self.bc not in BOUNDARY_CONDITIONS:
            raise ConfigError(f"unknown bc {self.bc!r}; valid: {list(BOUNDARY_CONDITIONS)}")
        if self.name == "heat" and not self.nu > 0:
            raise ConfigError("heat requires nu > 0")
        if self.name == "advection" and self.nu != 0:
            raise ConfigError("advection requires nu = 0")
        if self.name == "burgers" and self.nu < 0:
            raise ConfigError("burgers requires nu >= 0")

    @classmethod
    def from_config(cls, cfg):
        """Construct from a dict with keys problem, bc, nu, a, initial."""
        if "problem" not in cfg:
            raise ConfigError("problem config needs a 'problem' field")
        kwargs = {"name": cfg["problem"], "bc": cfg.get("bc", "dirichlet"),
                  "nu": float(cfg.get("nu", 0.0)), "a": float(cfg.get("a", 0.0))}
        if "initial" in cfg:
            kwargs["initial_condition"] = profile_from_config(cfg["initial"])
        return cls(**kwargs)


# -- the semi-discrete ODE ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class SemiDiscreteODE:
    """``M q' = K q + f(t, q)`` with Jacobian access.

    ``nonlinear`` and ``nonlinear_jacobian`` may be ``None`` for linear
    problems, in which case ``f = 0``.
    """

    mass: np.ndarray
    linear: np.ndarray
    nonlinear: Optional[Callable] = None
    nonlinear_jacobian: Optional[Callable] = None
    nodes: Optional[np.ndarray] = None
    name: str = ""
    _mass_lu: Factorized = field(init=False, repr=False)

    def __post_init__(self):
        m = as_matrix(self.mass, "mass")
        k = as_matrix(self.linear, "linear")
        if m.shape != k.shape:
            raise ValueError(f"mass {m.shape} and linear {k.shape} shapes differ")
        if (self.nonlinear is None) != (self.nonlinear_jacobian is None):
            raise ValueError("nonlinear and nonlinear_jacobian must be given together")
        m.setflags(write=False)
        k.setflags(write=False)
        object.__setattr__(self, "mass", m)
        object.__setattr__(self, "linear", k)
        object.__setattr__(self, "_mass_lu", Factorized(m, "mass"))

    @property
    def dim(self):
        return self.mass.shape[0]

    @property
    def is_linear(self):
        return self.nonlinear is None

    def f(self, t, q):
        if self.nonlinear is None:
            return np.zeros(self.dim)
        return self.nonlinear(t, q)

    def df(self, t, q):
        if self.nonlinear_jacobian is None:
            return np.zeros((self.dim, self.dim))
        return self.nonlinear_jacobian(t, q)

    def g(self, t, q):
        """Mass-form right-hand side ``K q + f(t, q)``."""
        return self.linear @ q + self.f(t, q)

    def mass_solve(self, b):
        return self._mass_lu.solve(b)

    def mass_solve_transpose(self, b):
        return self._mass_lu.solve_transpose(b)

    def rhs(self, t, q):
        return self.mass_solve(self.g(t, q))

    def jacobian(self, t, q):
        """Jacobian of :meth:`rhs`: ``M^-1 (K + D_q f)``."""
        return self.mass_solve(self.linear + self.df(t, q))

    def initial_state(self, profile):
        if self.nodes is None:
            raise ValueError("ODE has no node coordinates to sample a profile on")
        return as_vector(profile(self.nodes), "initial state")


@dataclass(frozen=True, eq=False)
class GalerkinDiscretization:
    """P1 finite elements on a uniform mesh of [0, 1].

    ``nodes`` holds the coordinates of the unknowns; ``dof_index`` maps
    each unknown to its global mesh node (0..n_elements).
    """

    n_elements: int
    bc: str
    nodes: np.ndarray
    dof_index: np.ndarray
    mass: np.ndarray
    stiffness: np.ndarray

    @property
    def h(self):
        return 1.0 / self.n_elements

    @property
    def mesh(self):
        """All mesh node coordinates, boundary nodes included."""
        return np.linspace(0.0, 1.0, self.n_elements + 1)

    def full_nodal(self, q):
        """Nodal values on all ``n_elements + 1`` mesh nodes (boundary zeros / wrap)."""
        u = np.zeros(self.n_elements + 1, dtype=np.result_type(q, float))
        u[self.dof_index] = q
        if self.bc == "periodic":
            u[-1] = u[0]
        return u

    def interpolate(self, q, x):
        """Evaluate the P1 function with coefficients ``q`` at points ``x``."""
        return np.interp(np.asarray(x, dtype=float), self.mesh, self.full_nodal(q))


# -- Galerkin assembly --------------------------------------------------------

_ELEM_MASS = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0          # times h
_ELEM_DIFF = np.array([[1.0, -1.0], [-1.0, 1.0]])              # times 1/h
_ELEM_ADV = np.array([[-0.5, 0.5], [-0.5, 0.5]])               # int phi_a phi_b'


def _dof_layout(n_elements, bc):
    if bc == "dirichlet":
        dofs = np.arange(1, n_elements)
        local = {int(g): i for i, g in enumerate(dofs)}
    else:
        dofs = np.arange(n_elements)
        local = {int(g): i for i, g in enumerate(dofs)}
        local[n_elements] = 0
    return dofs, local


def _assemble(n_elements, bc, elem):
    dofs, local = _dof_layout(n_elements, bc)
    out = np.zeros((len(dofs), len(dofs)))
    for e in range(n_elements):
        for a in range(2):
            ia = local.get(e + a)
            if ia is None:
                continue
            for b in range(2):
                ib = local.get(e + b)
                if ib is not None:
                    out[ia, ib] += elem[a, b]
    return out


def _galerkin_burgers(disc):
    """Exact element integrals of ``-int phi_j u u_x`` for P1 ``u``."""
    n = disc.n_elements
    _, local = _dof_layout(n, disc.bc)
    owners = [(e, a, local.get(e + a)) for e in range(n) for a in range(2)]

    def f(t, q):
        u = disc.full_nodal(q)
        qa, qb = u[:-1], u[1:]
        d = qb - qa
        loc = np.stack([-d * (2 * qa + qb) / 6.0, -d * (qa + 2 * qb) / 6.0], axis=1)
        out = np.zeros(len(q))
        for e, a, i in owners:
            if i is not None:
                out[i] += loc[e, a]
        return out

    def jac(t, q):
        u = disc.full_nodal(q)
        out = np.zeros((len(q), len(q)))
        for e in range(n):
            qa, qb = u[e], u[e + 1]
            d = qb - qa
            # rows: local test function, cols: local node
            loc = np.array([
                [(2 * qa + qb - 2 * d) / 6.0, -((2 * qa + qb) + d) / 6.0],
                [(qa + 2 * qb - d) / 6.0, -((qa + 2 * qb) + 2 * d) / 6.0],
            ])
            for a in range(2):
                ia = local.get(e + a)
                if ia is None:
                    continue
                for b in range(2):
                    ib = local.get(e + b)
                    if ib is not None:
                        out[ia, ib] += loc[a, b]
        return out

    return f, jac


def assemble_galerkin(problem, n_elements):
    """P1 Galerkin semi-discretization; returns ``(GalerkinDiscretization, SemiDiscreteODE)``."""
    n_elements = int(n_elements)
    if n_elements < 2:
        raise ValueError("n_elements must be >= 2")
    if problem.bc == "periodic" and n_elements < 3:
        raise ConfigError("periodic Galerkin assembly needs n_elements >= 3")
    if problem.name == "advection" and problem.bc == "dirichlet" and problem.a != 0:
        # both ends pinned over-determines first-order transport
        raise ConfigError("advection with dirichlet bc on both ends is not supported; use periodic")
    h = 1.0 / n_elements
    dofs, _ = _dof_layout(n_elements, problem.bc)
    mass = h * _assemble(n_elements, problem.bc, _ELEM_MASS)
    stiff = np.zeros_like(mass)
    if problem.nu:
        stiff -= (problem.nu / h) * _assemble(n_elements, problem.bc, _ELEM_DIFF)
    if problem.name == "advection" and problem.a:
        stiff -= problem.a * _assemble(n_elements, problem.bc, _ELEM_ADV)
    nodes = dofs * h
    disc = GalerkinDiscretization(n_elements, problem.bc, nodes, dofs, mass, stiff)
    f = jac = None
    if problem.name == "burgers":
        f, jac = _galerkin_burgers(disc)
    ode = SemiDiscreteODE(mass, stiff, f, jac, nodes=nodes,
                          name=f"galerkin-{problem.name}-{problem.bc}")
    return disc, ode


# -- finite differences -------------------------------------------------------

def _shifts(n, bc):
    """Matrices returning ``q_{j+1}`` and ``q_{j-1}`` (zero outside for Dirichlet)."""
    up = np.eye(n, k=1)
    down = np.eye(n, k=-1)
    if bc == "periodic":
        up[-1, 0] = 1.0
        down[0, -1] = 1.0
    return up, down


def assemble_finite_difference(problem, n_points):
    """Finite-difference semi-discretization with ``M = I``.

    ``n_points`` counts grid points including both boundary points for
    Dirichlet (spacing ``1/(n_points-1)``) and one period's worth of points
    for periodic (spacing ``1/n_points``).  Heat uses the centred 3-point
    Laplacian, advection first-order upwinding, Burgers the centred
    pointwise ``-q q_x``.
    """
    n_points = int(n_points)
    if n_points < 3:
        raise ValueError("n_points must be >= 3")
    if problem.bc == "dirichlet":
        h = 1.0 / (n_points - 1)
        n = n_points - 2
        nodes = np.arange(1, n_points - 1) * h
    else:
        h = 1.0 / n_points
        n = n_points
        nodes = np.arange(n_points) * h
    up, down = _shifts(n, problem.bc)
    eye = np.eye(n)
    k = np.zeros((n, n))
    if problem.nu:
        k += (problem.nu / h**2) * (up - 2 * eye + down)
    if problem.name == "advection" and problem.a:
        a = problem.a
        k += (a / h) * (down - eye) if a > 0 else (a / h) * (eye - up)
    f = jac = None
    if problem.name == "burgers":
        diff = (up - down) / (2 * h)

        def f(t, q):
            return -q * (diff @ q)

        def jac(t, q):
            return -np.diag(diff @ q) - q[:, None] * diff

    return SemiDiscreteODE(eye, k, f, jac, nodes=nodes, name=f"fd-{problem.name}-{problem.bc}")


def build_ode(problem, n, discretization="galerkin"):
    """Semi-discretize with ``n`` unknowns (coefficient-space dimension)."""
    n = int(n)
    if discretization not in DISCRETIZATIONS:
        raise ConfigError(f"unknown discretization {discretization!r}; valid: {list(DISCRETIZATIONS)}")
    if n < 1:
        raise ConfigError("n must be >= 1")
    if discretization == "galerkin":
        return assemble_galerkin(problem, n + 1 if problem.bc == "dirichlet" else n)[1]
    return assemble_finite_difference(problem, n + 2 if problem.bc == "dirichlet" else n)
