"""Multi-particle Klein-Gordon wave functions as finite superpositions of
separable on-mass-shell plane-wave products.

A wave function is sum_k c_k prod_a exp(-i p_{k,a} . x_a) with every mode
4-momentum satisfying p.p = m^2. Restricting to this class keeps the free
wave equation satisfied exactly and makes every derivative analytic, so the
guidance dynamics never touches numerical differentiation. Wave packets are
represented by momentum-grid sums (see :func:`gaussian_packet_terms`).

All evaluation methods broadcast: a configuration is an array of shape
(..., n, 4) holding one spacetime point per particle slot, and results carry
the leading batch axes through.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AlreadySymmetrized,
    ArityMismatch,
    BadArity,
    EmptyExpansion,
    IndexOutOfRange,
    NonpositiveMass,
    TooManyTerms,
)
from .spacetime import METRIC_SIGNS, LorentzTransform

#: Hard cap on expansion size; superpositions beyond this are refused.
MAX_TERMS = 10**6

#: Symmetrization is refused above this particle count (n! term growth).
MAX_SYMMETRIZE_PARTICLES = 8

_MASS_SHELL_TOL = 1e-12


@dataclass(frozen=True)
class Mode:
    """One plane-wave factor exp(-i p.x) with p on the mass shell.

    ``frequency_sign`` selects the sign of the energy p0.
    """

    mass: float
    momentum: tuple[float, float, float]
    frequency_sign: int = 1

    def __post_init__(self):
        if self.mass <= 0.0 or not math.isfinite(self.mass):
            raise NonpositiveMass(f"mode mass must be positive, got {self.mass}")
        if self.frequency_sign not in (1, -1):
            raise ValueError("frequency_sign must be +1 or -1")
        p = tuple(float(c) for c in self.momentum)
        if len(p) != 3 or not all(math.isfinite(c) for c in p):
            raise ValueError("momentum must be a finite 3-vector")
        object.__setattr__(self, "momentum", p)
        object.__setattr__(self, "mass", float(self.mass))

    @property
    def energy(self) -> float:
        k2 = sum(c * c for c in self.momentum)
        return self.frequency_sign * math.sqrt(self.mass**2 + k2)

    @property
    def four_momentum(self) -> np.ndarray:
        return np.array([self.energy, *self.momentum])


@dataclass(frozen=True)
class ModeTerm:
    """One separable product term: coefficient times one mode per particle."""

    coefficient: complex
    modes: tuple[Mode, ...]

    def __post_init__(self):
        object.__setattr__(self, "coefficient", complex(self.coefficient))
        object.__setattr__(self, "modes", tuple(self.modes))
        if not self.modes:
            raise BadArity("a term needs at least one mode")
        masses = {m.mass for m in self.modes}
        if len(masses) > 1:
            raise ValueError(f"all modes of a term must share one mass, got {sorted(masses)}")


class WaveFunction:
    """Finite superposition of separable plane-wave products for n particles."""

    def __init__(self, mass: float, particles: int, terms, symmetrized: bool = False):
        if mass <= 0.0 or not math.isfinite(mass):
            raise NonpositiveMass(f"mass must be positive, got {mass}")
        if particles < 1:
            raise ValueError("particle count must be >= 1")
        terms = tuple(terms)
        if not terms:
            raise EmptyExpansion("wave function needs at least one term")
        if len(terms) > MAX_TERMS:
            raise TooManyTerms(f"{len(terms)} terms exceeds the cap of {MAX_TERMS}")
        for k, t in enumerate(terms):
            if len(t.modes) != particles:
                raise BadArity(
                    f"term {k} has {len(t.modes)} modes for {particles} particle(s)"
                )
            if any(m.mass != mass for m in t.modes):
                raise ValueError(f"term {k} carries a mode with a different mass")

        self._mass = float(mass)
        self._n = int(particles)
        self._terms = terms
        self._symmetrized = bool(symmetrized)

        coeffs = np.array([t.coefficient for t in terms], dtype=complex)
        momenta = np.array([[m.four_momentum for m in t.modes] for t in terms], dtype=float)
        self._init_arrays(coeffs, momenta)

    def _init_arrays(self, coeffs: np.ndarray, momenta: np.ndarray):
        self._coeffs = coeffs
        self._P = momenta                      # (T, n, 4) contravariant
        self._P_low = momenta * METRIC_SIGNS   # (T, n, 4) covariant
        self._p_dot_p = (momenta * self._P_low).sum(axis=-1)  # (T, n)
        self._max_coeff = float(np.abs(coeffs).max())
        for a in (self._coeffs, self._P, self._P_low, self._p_dot_p):
            a.setflags(write=False)

    @classmethod
    def _from_four_momenta(cls, mass, particles, coeffs, momenta, symmetrized=False,
                           check_shell=True):
        """Construct directly from packed arrays.

        With ``check_shell=False`` the mass-shell constraint is skipped; this
        is the deliberate backdoor used by the off-shell detector fixture.
        """
        self = object.__new__(cls)
        coeffs = np.asarray(coeffs, dtype=complex).copy()
        momenta = np.asarray(momenta, dtype=float).copy()
        if momenta.shape != (coeffs.shape[0], particles, 4):
            raise BadArity(f"momenta shape {momenta.shape} does not match "
                           f"({coeffs.shape[0]}, {particles}, 4)")
        if coeffs.shape[0] == 0:
            raise EmptyExpansion("wave function needs at least one term")
        if coeffs.shape[0] > MAX_TERMS:
            raise TooManyTerms(f"{coeffs.shape[0]} terms exceeds the cap of {MAX_TERMS}")
        if mass <= 0.0:
            raise NonpositiveMass(f"mass must be positive, got {mass}")
        if check_shell:
            shell = (momenta * momenta * METRIC_SIGNS).sum(axis=-1) - mass**2
            scale = 1.0 + np.abs(momenta[..., 0]) ** 2
            if np.abs(shell / scale).max() > 1e-10:
                raise ValueError("four-momenta are not on the mass shell")
        self._mass = float(mass)
        self._n = int(particles)
        self._terms = None  # not materialized for array-built functions
        self._symmetrized = bool(symmetrized)
        self._init_arrays(coeffs, momenta)
        return self

    # -- basic attributes -------------------------------------------------

    @property
    def mass(self) -> float:
        return self._mass

    @property
    def particles(self) -> int:
        return self._n

    n = particles

    @property
    def symmetrized(self) -> bool:
        return self._symmetrized

    @property
    def terms(self):
        return self._terms

    @property
    def coefficients(self) -> np.ndarray:
        return self._coeffs

    @property
    def four_momenta(self) -> np.ndarray:
        """(terms, particles, 4) array of contravariant mode momenta."""
        return self._P

    @property
    def default_node_threshold(self) -> float:
        """Density threshold below which a configuration counts as a node."""
        return 1e-12 * self._max_coeff**2

    def __repr__(self):
        return (f"WaveFunction(mass={self._mass:g}, particles={self._n}, "
                f"terms={len(self._coeffs)}, symmetrized={self._symmetrized})")

    # -- validation helpers ------------------------------------------------

    def _check_configuration(self, cfg) -> np.ndarray:
        x = np.asarray(cfg, dtype=float)
        if x.shape[-2:] != (self._n, 4):
            raise ArityMismatch(
                f"configuration shape {x.shape} does not end in ({self._n}, 4)"
            )
        return x

    def _check_particle(self, a: int) -> int:
        a = int(a)
        if not 0 <= a < self._n:
            raise IndexOutOfRange(f"particle index {a} outside 0..{self._n - 1}")
        return a

    # -- evaluation and analytic derivatives --------------------------------

    def _term_values(self, x: np.ndarray) -> np.ndarray:
        """c_k exp(-i p_k . x) for every term; shape (..., T).

        Only elementwise ops and fixed-axis reductions, so each batch row's
        result is independent of how the batch is split.
        """
        phase = (self._P_low * x[..., None, :, :]).sum(axis=(-2, -1))
        return self._coeffs * np.exp(-1j * phase)

    def evaluate(self, cfg):
        """psi at the configuration; complex, with batch axes preserved."""
        x = self._check_configuration(cfg)
        return self._term_values(x).sum(axis=-1)

    def density(self, cfg):
        """|psi|^2 at the configuration."""
        val = self.evaluate(cfg)
        return (val * val.conj()).real

    def gradient(self, cfg, a: int):
        """Contravariant derivative d_a^mu psi, shape (..., 4) complex."""
        x = self._check_configuration(cfg)
        a = self._check_particle(a)
        v = self._term_values(x)
        return (v[..., :, None] * (-1j * self._P[:, a, :])).sum(axis=-2)

    def gradient_all(self, cfg):
        """d_a^mu psi for every particle, shape (..., n, 4) complex."""
        x = self._check_configuration(cfg)
        v = self._term_values(x)
        return (v[..., :, None, None] * (-1j * self._P)).sum(axis=-3)

    def second_derivative(self, cfg, a: int, mu: int, nu: int):
        """d_a^mu d_a^nu psi (both indices contravariant), complex."""
        x = self._check_configuration(cfg)
        a = self._check_particle(a)
        if not (0 <= mu < 4 and 0 <= nu < 4):
            raise IndexOutOfRange(f"component indices ({mu}, {nu}) outside 0..3")
        v = self._term_values(x)
        fac = (-1j * self._P[:, a, mu]) * (-1j * self._P[:, a, nu])
        return (v * fac).sum(axis=-1)

    def hessian_all(self, cfg):
        """d_a^mu d_b^nu psi, shape (..., n, 4, n, 4) complex."""
        x = self._check_configuration(cfg)
        v = self._term_values(x)
        dp = -1j * self._P  # (T, n, 4)
        pair = dp[:, :, :, None, None] * dp[:, None, None, :, :]  # (T, n, 4, n, 4)
        return (v[..., :, None, None, None, None] * pair).sum(axis=-5)

    def box(self, cfg, a: int):
        """d_a^mu d_a_mu psi; equals -m^2 psi exactly on shell."""
        x = self._check_configuration(cfg)
        a = self._check_particle(a)
        v = self._term_values(x)
        return (v * (-self._p_dot_p[:, a])).sum(axis=-1)

    def box_all(self, cfg):
        """d_b^mu d_b_mu psi for every b, shape (..., n) complex."""
        x = self._check_configuration(cfg)
        v = self._term_values(x)
        return (v[..., :, None] * (-self._p_dot_p)).sum(axis=-2)

    def gradient_box_all(self, cfg):
        """d_a^mu (d_b^nu d_b_nu psi), shape (..., n, 4, n) complex."""
        x = self._check_configuration(cfg)
        v = self._term_values(x)
        fac = (-1j * self._P)[:, :, :, None] * (-self._p_dot_p)[:, None, None, :]
        return (v[..., :, None, None, None] * fac).sum(axis=-4)

    def kg_residual(self, cfg, a: int):
        """(d_a^mu d_a_mu + m^2) psi; vanishes identically on shell."""
        x = self._check_configuration(cfg)
        a = self._check_particle(a)
        v = self._term_values(x)
        return (v * (self._mass**2 - self._p_dot_p[:, a])).sum(axis=-1)

    # -- transformations -----------------------------------------------------

    def symmetrize(self) -> "WaveFunction":
        """Average each term over all permutations of its mode list.

        The result evaluates identically under any permutation of the
        configuration points. Refused for particle counts whose factorial
        growth would blow up the expansion.
        """
        if self._symmetrized:
            raise AlreadySymmetrized("wave function is already symmetrized")
        if self._n > MAX_SYMMETRIZE_PARTICLES:
            raise TooManyTerms(
                f"symmetrizing {self._n} particles would grow terms by {self._n}!"
            )
        perms = list(itertools.permutations(range(self._n)))
        if len(self._coeffs) * len(perms) > MAX_TERMS:
            raise TooManyTerms("symmetrized expansion would exceed the term cap")
        weight = 1.0 / len(perms)
        new_terms = []
        for coeff, term_modes in zip(self._coeffs, self._modes_per_term()):
            for perm in perms:
                new_terms.append(
                    ModeTerm(coeff * weight, tuple(term_modes[i] for i in perm))
                )
        return WaveFunction(self._mass, self._n, new_terms, symmetrized=True)

    def _modes_per_term(self) -> list[tuple[Mode, ...]]:
        """Mode tuples per term, reconstructed from arrays when needed."""
        if self._terms is not None:
            return [t.modes for t in self._terms]
        rebuilt = []
        for row in self._P:
            modes = tuple(
                Mode(self._mass, tuple(p[1:]), 1 if p[0] >= 0 else -1) for p in row
            )
            for m, p in zip(modes, row):
                if abs(m.energy - p[0]) > 1e-9 * (1.0 + abs(p[0])):
                    raise ValueError("cannot rebuild modes for off-shell momenta")
            rebuilt.append(modes)
        return rebuilt

    def boosted(self, transform: LorentzTransform) -> "WaveFunction":
        """Wave function with every mode momentum replaced by L p.

        Plane-wave phases are invariant, so the boosted function evaluated at
        boosted points equals the original at the original points.
        """
        momenta = self._P @ transform.matrix.T
        return WaveFunction._from_four_momenta(
            self._mass, self._n, self._coeffs, momenta, symmetrized=self._symmetrized
        )


def make_wavefunction(mass: float, particles: int, terms) -> WaveFunction:
    """Build a wave function from (coefficient, [(momentum3, sign), ...]) terms.

    Every supplied spatial momentum is completed to an on-shell 4-momentum
    with energy sign taken from the mode's ``sign`` entry.
    """
    built = []
    for coefficient, modes in terms:
        built.append(ModeTerm(
            coefficient,
            tuple(Mode(mass, tuple(momentum), int(sign)) for momentum, sign in modes),
        ))
    return WaveFunction(mass, particles, built)


def plane_wave(mass: float, momentum, frequency_sign: int = 1) -> WaveFunction:
    """Single-particle single plane wave with the given spatial momentum."""
    return make_wavefunction(mass, 1, [(1.0, [(tuple(momentum), frequency_sign)])])


def product_wavefunction(psi_a: WaveFunction, psi_b: WaveFunction) -> WaveFunction:
    """Tensor product: particles of ``psi_b`` appended after those of ``psi_a``."""
    if psi_a.mass != psi_b.mass:
        raise ValueError("product factors must share one mass")
    ta, tb = len(psi_a.coefficients), len(psi_b.coefficients)
    if ta * tb > MAX_TERMS:
        raise TooManyTerms("product expansion would exceed the term cap")
    coeffs = (psi_a.coefficients[:, None] * psi_b.coefficients[None, :]).reshape(-1)
    n = psi_a.particles + psi_b.particles
    momenta = np.concatenate(
        [
            np.repeat(psi_a.four_momenta, tb, axis=0),
            np.tile(psi_b.four_momenta, (ta, 1, 1)),
        ],
        axis=1,
    )
    return WaveFunction._from_four_momenta(psi_a.mass, n, coeffs, momenta)


def gaussian_packet_terms(mass: float, center, sigma: float, points_per_axis: int = 21,
                          span_sigmas: float = 4.0, axes=(0,)):
    """Single-particle Gaussian momentum profile discretized on a grid.

    Returns term tuples for :func:`make_wavefunction`: one positive-frequency
    mode per grid node within ``center +/- span_sigmas*sigma`` along each axis
    in ``axes``, weighted by Gaussian density times grid spacing.
    """
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    if points_per_axis < 2:
        raise ValueError("need at least 2 grid points per axis")
    center = np.asarray(center, dtype=float)
    if center.shape != (3,):
        raise ValueError("center must be a 3-vector")
    axes = tuple(sorted(set(int(a) for a in axes)))
    if not axes or any(a not in (0, 1, 2) for a in axes):
        raise ValueError("axes must name spatial components 0..2")

    grids = []
    for a in axes:
        k = np.linspace(center[a] - span_sigmas * sigma, center[a] + span_sigmas * sigma,
                        points_per_axis)
        grids.append(k)
    spacing = np.prod([g[1] - g[0] for g in grids])

    terms = []
    for combo in itertools.product(*grids):
        k = center.copy()
        for a, val in zip(axes, combo):
            k[a] = val
        w = np.exp(-((k - center) ** 2).sum() / (2.0 * sigma**2)) * spacing
        terms.append((w, [(tuple(k), 1)]))
    if len(terms) > MAX_TERMS:
        raise TooManyTerms("packet grid exceeds the term cap")
    return terms
