"""Semi-discrete adjoint and variational systems induced by a duality pairing.

For ``q' = F(t, q)`` with ``F = M^-1 (K q + f)`` and a pairing with matrix
``P`` the induced adjoint Hamiltonian is ``H(t, q, p) = pair(p, F(t, q))``
and Hamilton's equations read

    q' =  P^-1   grad_p H = F(t, q)
    p' = -P^-T   grad_q H = -[D_q F]^{*P} p.

For ``P = I`` this is ``z' = -(K + D_q f)^T M^-T z``; for ``P = M`` it is
``M^T p' = -(K + D_q f)^T p``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DimensionError
from .pairings import (DualityPairing, Factorized, PairingKind, as_matrix, as_vector,
                       operator_adjoint)


@dataclass(frozen=True, eq=False)
class AdjointSystem:
    ode: object
    pairing: DualityPairing

    def state_rhs(self, t, q):
        return self.ode.rhs(t, q)

    def adjoint_operator(self, t, q):
        """``[D_q F(t, q)]^{*P}`` as a dense matrix."""
        jac = self.ode.jacobian(t, q)
        if self.pairing.is_standard:
            return jac.T
        return operator_adjoint(self.pairing, DualityPairing.standard(self.ode.dim), jac, jac.T)

    def adjoint_rhs(self, t, q, p):
        p = as_vector(p, "p", self.ode.dim)
        if self.pairing.kind is PairingKind.MASS:
            # M^T p' = -(K + D_q f)^T p
            return -self.ode.mass_solve_transpose((self.ode.linear + self.ode.df(t, q)).T @ p)
        if self.pairing.is_standard:
            w = self.ode.mass_solve_transpose(p)
            return -((self.ode.linear + self.ode.df(t, q)).T @ w)
        return -(self.adjoint_operator(t, q) @ p)

    def hamiltonian(self, t, q, p):
        return self.pairing.pair(p, self.ode.rhs(t, q))

    def hamiltonian_gradients(self, t, q, p):
        """Euclidean gradients ``(grad_q H, grad_p H)``."""
        ptp = self.pairing.to_standard(p)
        grad_q = self.ode.jacobian(t, q).T @ ptp
        grad_p = self.pairing.matrix @ self.ode.rhs(t, q)
        return grad_q, grad_p

    def rhs(self, t, q, p):
        """Combined right-hand side ``(q', p')``."""
        return self.state_rhs(t, q), self.adjoint_rhs(t, q, p)


@dataclass(frozen=True, eq=False)
class VariationalSystem:
    ode: object

    def variational_rhs(self, t, q, dq):
        return self.ode.jacobian(t, q) @ as_vector(dq, "dq", self.ode.dim)

    def augmented_rhs(self, t, y):
        """Right-hand side of the stacked system ``(q, dq)``."""
        n = self.ode.dim
        q, dq = y[:n], y[n:]
        return np.concatenate([self.ode.rhs(t, q), self.ode.jacobian(t, q) @ dq])


def form_adjoint(ode, pairing):
    if pairing.dim != ode.dim:
        raise DimensionError(f"pairing dim {pairing.dim} != ode dim {ode.dim}")
    if pairing.kind is PairingKind.MASS and not np.array_equal(pairing.matrix, ode.mass):
        raise ValueError("mass-induced pairing matrix does not equal the ODE mass matrix")
    return AdjointSystem(ode, pairing)


def form_variational(ode):
    return VariationalSystem(ode)


def dual_galerkin_adjoint_rhs(ode, t, q, p):
    """Adjoint formed first and then semi-discretized with the dual Galerkin method.

    Assembled directly as ``M^T p' = -K^T p - [D_q f]^T p``, without going
    through any pairing machinery.
    """
    rhs = -(ode.linear.T @ p) - ode.df(t, q).T @ p
    return np.linalg.solve(ode.mass.T, rhs)


class Direction(str, Enum):
    STANDARD_TO_MASS = "standard_to_mass"
    MASS_TO_STANDARD = "mass_to_standard"


def similarity_transform(z, mass, direction):
    """Map adjoint coordinates between the standard and mass-induced systems.

    ``standard_to_mass`` returns ``p = M^-T z``; ``mass_to_standard`` returns
    ``z = M^T p``.
    """
    direction = Direction(direction)
    mass = as_matrix(mass, "M")
    z = as_vector(z, "z", mass.shape[0])
    lu = Factorized(mass, "M")
    if direction is Direction.MASS_TO_STANDARD:
        return mass.T @ z
    return lu.solve_transpose(z)


def pairing_invariant(pairing, p, dq):
    return pairing.pair(p, dq)
