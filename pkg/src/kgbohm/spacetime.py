"""Minkowski-space primitives: 4-vectors, boosts, causal classification, and
flat spacelike hypersurfaces.

Conventions used throughout the package:

* metric signature (+, -, -, -), natural units hbar = c = 1;
* 4-vectors are plain numpy arrays with the time component first, and every
  function broadcasts over leading axes;
* transformations are active: a boost moves points, the scenario stays fixed.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np

from .errors import SpeedNotSubluminal

#: Diagonal of the metric tensor diag(+1, -1, -1, -1).
METRIC_SIGNS = np.array([1.0, -1.0, -1.0, -1.0])
METRIC_SIGNS.setflags(write=False)

#: The metric tensor as a 4x4 matrix.
METRIC = np.diag(METRIC_SIGNS)
METRIC.setflags(write=False)

_SUBLUMINAL_GUARD = 1e-12
_ORTHOGONALITY_TOL = 1e-12
_UNIT_NORMAL_TOL = 1e-12


def four_vector(c0, c1=0.0, c2=0.0, c3=0.0) -> np.ndarray:
    """Build a 4-vector (c0, c1, c2, c3), rejecting NaN and infinity."""
    v = np.array([c0, c1, c2, c3], dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("four-vector components must be finite")
    return v


def as_four_vectors(v) -> np.ndarray:
    """Coerce to a float array of 4-vectors with shape (..., 4)."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1:] != (4,):
        raise ValueError(f"expected trailing axis of length 4, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("four-vector components must be finite")
    return v


def lower_index(v) -> np.ndarray:
    """Lower the index: v_mu = g_{mu nu} v^nu."""
    return np.asarray(v, dtype=float) * METRIC_SIGNS


def minkowski_dot(a, b):
    """a^0 b^0 - a.b for the spatial part; broadcasts over leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return (a * b * METRIC_SIGNS).sum(axis=-1)


def norm_squared(v):
    """Minkowski norm squared v.v (positive for timelike vectors)."""
    return minkowski_dot(v, v)


class CausalClass(Enum):
    TIMELIKE = "timelike"
    LIGHTLIKE = "lightlike"
    SPACELIKE = "spacelike"


def causal_class(v, tol: float) -> CausalClass:
    """Classify v by the sign of v.v with a symmetric tolerance band."""
    if tol < 0:
        raise ValueError("tolerance must be nonnegative")
    n2 = float(norm_squared(np.asarray(v, dtype=float)))
    if n2 > tol:
        return CausalClass.TIMELIKE
    if n2 < -tol:
        return CausalClass.SPACELIKE
    return CausalClass.LIGHTLIKE


@dataclass(frozen=True)
class LorentzTransform:
    """A 4x4 matrix satisfying L^T g L = g."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (4, 4) or not np.all(np.isfinite(m)):
            raise ValueError("Lorentz matrix must be a finite 4x4 array")
        defect = np.abs(m.T @ METRIC @ m - METRIC).max()
        if defect > _ORTHOGONALITY_TOL:
            raise ValueError(f"matrix is not pseudo-orthogonal (defect {defect:.3e})")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "LorentzTransform":
        return cls(np.eye(4))

    def apply(self, v) -> np.ndarray:
        """Transform one or many 4-vectors: (L v)^mu = L^mu_nu v^nu."""
        return as_four_vectors(v) @ self.matrix.T

    def __matmul__(self, other: "LorentzTransform") -> "LorentzTransform":
        return LorentzTransform(self.matrix @ other.matrix)

    def inverse(self) -> "LorentzTransform":
        # L^{-1} = g L^T g for pseudo-orthogonal L
        return LorentzTransform(METRIC @ self.matrix.T @ METRIC)


def boost(beta) -> LorentzTransform:
    """Active boost with 3-velocity ``beta`` (|beta| < 1).

    Maps a particle at rest to one moving with velocity beta; in particular
    (1, 0, 0, 0) goes to (gamma, gamma*beta).
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (3,):
        raise ValueError("beta must be a 3-vector")
    b2 = float((beta * beta).sum())
    if np.sqrt(b2) >= 1.0 - _SUBLUMINAL_GUARD:
        raise SpeedNotSubluminal(f"|beta| = {np.sqrt(b2):.15g} is not subluminal")
    gamma = 1.0 / np.sqrt(1.0 - b2)
    m = np.eye(4)
    m[0, 0] = gamma
    m[0, 1:] = m[1:, 0] = gamma * beta
    if b2 > 0.0:
        m[1:, 1:] += (gamma - 1.0) * np.outer(beta, beta) / b2
    return LorentzTransform(m)


@dataclass(frozen=True)
class Hypersurface:
    """Flat spacelike hypersurface { x : n.x = offset } with unit
    future-oriented timelike normal n."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = four_vector(*np.asarray(self.normal, dtype=float))
        if abs(minkowski_dot(n, n) - 1.0) > _UNIT_NORMAL_TOL:
            raise ValueError("normal must be unit timelike (n.n = 1)")
        if n[0] <= 0.0:
            raise ValueError("normal must be future-oriented (n0 > 0)")
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))

    def signed_distance(self, x):
        """n.x - offset; positive on the future side. Broadcasts."""
        return minkowski_dot(np.asarray(x, dtype=float), self.normal) - self.offset

    @cached_property
    def triad(self) -> np.ndarray:
        """Orthonormal spacelike triad (3, 4) spanning the surface.

        Rows e_i satisfy n.e_i = 0 and e_i.e_j = -delta_ij; for the lab
        normal (1, 0, 0, 0) they are the spatial axes, otherwise the boost
        taking the lab normal to ``normal`` applied to the spatial axes.
        """
        spatial = self.normal[1:]
        if not spatial.any():
            e = np.eye(4)[1:]
        else:
            e = np.eye(4)[1:] @ boost(spatial / self.normal[0]).matrix.T
        e.setflags(write=False)
        return e

    def embed(self, u) -> np.ndarray:
        """Map adapted coordinates u (..., 3) to spacetime points on the surface."""
        u = np.asarray(u, dtype=float)
        return self.offset * self.normal + (u[..., :, None] * self.triad).sum(axis=-2)

    def coordinates(self, x) -> np.ndarray:
        """Adapted coordinates of x projected into the surface: u_i = -e_i.x."""
        x = np.asarray(x, dtype=float)
        return -((x[..., None, :] * self.triad) * METRIC_SIGNS).sum(axis=-1)


def signed_distance(sigma: Hypersurface, x):
    """n.x - offset for the surface ``sigma``; positive on the future side."""
    return sigma.signed_distance(x)
