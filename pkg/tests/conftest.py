"""Shared fixtures and the independent two-mode closed-form oracle.

The oracle reimplements the two-mode observables (current, density, bands,
and the exactly integrable trajectory) from scratch so the package can be
checked against values it had no hand in computing.
"""
import numpy as np
import pytest
from scipy.optimize import brentq

import kgbohm as kb

G = np.array([1.0, -1.0, -1.0, -1.0])


@pytest.fixture(scope="session")
def plane_wave_psi():
    return kb.plane_wave(1.0, (1.0, 0.0, 0.0))


@pytest.fixture(scope="session")
def s2_psi():
    return kb.make_wavefunction(1.0, 1, [
        (1.0, [((1.0, 0.0, 0.0), 1)]),
        (0.5, [((5.0, 0.0, 0.0), 1)]),
    ])


@pytest.fixture(scope="session")
def entangled_psi():
    return kb.make_wavefunction(1.0, 2, [
        (1.0, [((0.6, 0.0, 0.0), 1), ((-0.4, 0.0, 0.0), 1)]),
        (0.6, [((-0.5, 0.0, 0.0), 1), ((0.7, 0.0, 0.0), 1)]),
    ]).symmetrize()


@pytest.fixture(scope="session")
def lab_surfaces():
    sigma0 = kb.Hypersurface(kb.four_vector(1, 0, 0, 0), 0.0)
    sigma = kb.Hypersurface(kb.four_vector(1, 0, 0, 0), 2.0)
    return sigma0, sigma


class TwoModeOracle:
    """Closed forms for psi = e^{-ip.x} + a e^{-iq.x} with m=1, p1=1, q1=5.

    theta = (p-q)_mu x^mu; the current is j = 2[p + a^2 q + a(p+q) cos theta]
    and the trajectory is exactly integrable because theta is monotone in the
    curve parameter: ds = D dtheta / c with c = (1 - p.q)(1 - a^2)/m.
    """

    def __init__(self, a=0.5):
        self.a = a
        self.m = 1.0
        self.p = np.array([np.sqrt(2.0), 1.0, 0.0, 0.0])
        self.q = np.array([np.sqrt(26.0), 5.0, 0.0, 0.0])
        self.k_low = (self.p - self.q) * G
        self.c = (1.0 - float((self.p * self.q * G).sum())) * (1.0 - a * a) / self.m

    def theta(self, x):
        return float((self.k_low * np.asarray(x)).sum())

    def density(self, theta):
        return 1.0 + self.a**2 + 2.0 * self.a * np.cos(theta)

    def current(self, theta):
        return 2.0 * (self.p + self.a**2 * self.q
                      + self.a * (self.p + self.q) * np.cos(theta))

    def velocity(self, theta):
        return self.current(theta) / (2.0 * self.m * self.density(theta))

    @property
    def band_cos_threshold(self):
        # j0 < 0 where cos theta is below this
        return -(self.p[0] + self.a**2 * self.q[0]) / (self.a * (self.p[0] + self.q[0]))

    def band_theta(self):
        t1 = np.arccos(self.band_cos_threshold)
        return t1, 2.0 * np.pi - t1

    def band_x(self, t_surface, k=0):
        """Negative-density x-interval on the surface t = t_surface."""
        t1, t2 = self.band_theta()
        shift = 2.0 * np.pi * k - self.k_low[0] * t_surface
        return (t1 + shift) / 4.0, (t2 + shift) / 4.0

    def plus_band_theta(self):
        """Paired-region theta interval from the flux-balance condition."""
        t1, t2 = self.band_theta()
        band_flux = self._j0_integral(t1, t2)
        f = lambda tp: self._j0_integral(tp, t1) + band_flux
        tp = brentq(f, t1 - 2.0, t1 - 1e-12, xtol=1e-14)
        return tp, t1

    def _j0_integral(self, t1, t2):
        a0 = self.p[0] + self.a**2 * self.q[0]
        b0 = self.a * (self.p[0] + self.q[0])
        return 2.0 * (a0 * (t2 - t1) + b0 * (np.sin(t2) - np.sin(t1)))

    def s_of_theta(self, theta, x0):
        th0 = self.theta(x0)
        return ((1 + self.a**2) * (theta - th0)
                + 2 * self.a * (np.sin(theta) - np.sin(th0))) / self.c

    def x_of_theta(self, theta, x0):
        th0 = self.theta(x0)
        lin = (self.p + self.a**2 * self.q) * (theta - th0)
        osc = self.a * (self.p + self.q) * (np.sin(theta) - np.sin(th0))
        return np.asarray(x0) + (lin + osc) / (self.m * self.c)

    def point_at_s(self, s_target, x0):
        th0 = self.theta(x0)
        f = lambda th: self.s_of_theta(th, x0) - s_target
        hi = th0
        lo = th0 - 10.0
        while f(lo) < 0:  # theta decreases along the curve
            lo -= 10.0
        th = brentq(f, lo, hi, xtol=1e-14)
        return self.x_of_theta(th, x0)


@pytest.fixture(scope="session")
def s2_oracle():
    return TwoModeOracle()


@pytest.fixture(scope="session")
def s2_patches(lab_surfaces):
    sigma0, sigma = lab_surfaces
    patch0 = kb.SurfacePatch(sigma0, ((-0.6, 0.6), (0.0, 0.0), (0.0, 0.0)), (240, 1, 1))
    patch = kb.SurfacePatch(sigma, ((0.4, 2.4), (0.0, 0.0), (0.0, 0.0)), (1000, 1, 1))
    return patch0, patch


@pytest.fixture(scope="session")
def s2_partition(s2_psi, s2_patches, lab_surfaces):
    sigma0, _ = lab_surfaces
    patch0, patch = s2_patches
    controls = kb.ClassifyControls(sigma0_window=patch0)
    return kb.classify_patch(s2_psi, patch, sigma0, controls)
