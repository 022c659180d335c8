"""Duality pairings on coefficient space R^N and operator adjoints.

A pairing is stored by its defining matrix ``P`` so that
``pair(w, v) = w^T P v``.  The standard pairing has ``P = I``; the
mass-induced pairing uses the mass matrix of a Galerkin discretization.

The adjoint of ``B`` with respect to the pairing is the matrix ``B*`` with
``pair(B* w, v) = pair(w, B v)`` for all ``w, v``, i.e. ``B* = P^-T B^T P^T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, SingularMatrixError

# reciprocal condition numbers below this are treated as singular
RCOND_MIN = 1e-14


def as_vector(x, name="vector", dim=None):
    """Return ``x`` as a finite 1-D float array, optionally checking its length."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionError(f"{name} has dim {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def as_matrix(a, name="matrix", square=True):
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if square and arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def rcond(a):
    """Reciprocal 1-norm condition number (0 for exactly singular input)."""
    c = np.linalg.cond(a, 1)
    return 0.0 if not np.isfinite(c) else 1.0 / c


class Factorized:
    """Dense LU factorization of an invertible matrix with a conditioning gate."""

    def __init__(self, a, name="matrix"):
        a = as_matrix(a, name)
        rc = rcond(a)
        if rc < RCOND_MIN:
            raise SingularMatrixError(
                f"{name} is singular to working precision (rcond={rc:.3e})")
        self.matrix = a
        self.rcond = rc
        self._lu = sla.lu_factor(a)

    def solve(self, b):
        return sla.lu_solve(self._lu, b, check_finite=False)

    def solve_transpose(self, b):
        return sla.lu_solve(self._lu, b, trans=1, check_finite=False)


class PairingKind(str, Enum):
    STANDARD = "standard"
    MASS = "mass"
    GENERAL = "general"


@dataclass(frozen=True, eq=False)
class DualityPairing:
    """Nondegenerate bilinear form ``pair(w, v) = w^T P v`` on R^dim."""

    kind: PairingKind
    matrix: np.ndarray
    _factor: Factorized = field(init=False, repr=False)

    def __post_init__(self):
        kind = PairingKind(self.kind)
        mat = as_matrix(self.matrix, f"{kind.value} pairing matrix").copy()
        mat.setflags(write=False)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "_factor", Factorized(mat, f"{kind.value} pairing matrix"))

    @classmethod
    def standard(cls, dim):
        if int(dim) < 1:
            raise ValueError("dim must be positive")
        return cls(PairingKind.STANDARD, np.eye(int(dim)))

    @classmethod
    def mass_induced(cls, mass):
        return cls(PairingKind.MASS, mass)

    @classmethod
    def general(cls, p):
        return cls(PairingKind.GENERAL, p)

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def is_standard(self):
        return self.kind is PairingKind.STANDARD

    def pair(self, w, v):
        w = as_vector(w, "w")
        v = as_vector(v, "v")
        if w.shape[0] != self.dim or v.shape[0] != self.dim:
            raise DimensionError(
                f"pairing of dim {self.dim} applied to w of dim {w.shape[0]} "
                f"and v of dim {v.shape[0]}")
        if self.is_standard:
            return float(w @ v)
        return float(w @ (self.matrix @ v))

    def to_standard(self, p):
        """Covector in standard coordinates: ``P^T p`` (so ``pair(p, v) = (P^T p) . v``)."""
        if self.is_standard:
            return np.array(p, dtype=float)
        return self.matrix.T @ p

    def from_standard(self, z):
        """Inverse of :meth:`to_standard`: ``P^-T z``."""
        if self.is_standard:
            return np.array(z, dtype=float)
        return self._factor.solve_transpose(z)

    def adjoint(self, b):
        """Adjoint of the linear operator ``b`` with respect to this pairing."""
        b = as_matrix(b, "B")
        if b.shape[0] != self.dim:
            raise DimensionError(f"B has dim {b.shape[0]}, pairing has dim {self.dim}")
        if self.is_standard:
            return b.T.copy()
        return self._factor.solve_transpose(b.T @ self.matrix.T)


def pair(pairing, w, v):
    return pairing.pair(w, v)


def relating_operator(pairing_l, pairing_r):
    """The operator ``P`` with ``pair_L(w, v) = pair_R(w, P v)``, i.e. ``P_R^-1 P_L``."""
    if pairing_l.dim != pairing_r.dim:
        raise DimensionError(f"pairings have dims {pairing_l.dim} and {pairing_r.dim}")
    return pairing_r._factor.solve(pairing_l.matrix)


def operator_adjoint(pairing_l, pairing_r, b, b_adjoint_r=None):
    """Adjoint of ``b`` in pairing L, built from its adjoint in pairing R.

    Uses ``B^{*L} = P^{-*R} B^{*R} P^{*R}`` where ``P`` relates the two
    pairings.  ``b_adjoint_r`` defaults to ``pairing_r.adjoint(b)``.
    """
    b = as_matrix(b, "B")
    if b.shape[0] != pairing_l.dim:
        raise DimensionError(f"B has dim {b.shape[0]}, pairings have dim {pairing_l.dim}")
    if b_adjoint_r is None:
        b_adjoint_r = pairing_r.adjoint(b)
    b_adjoint_r = as_matrix(b_adjoint_r, "B adjoint (R)")
    p = relating_operator(pairing_l, pairing_r)
    p_star = pairing_r.adjoint(p)
    p_star_lu = Factorized(p_star, "relating operator P")
    return p_star_lu.solve(b_adjoint_r @ p_star)
