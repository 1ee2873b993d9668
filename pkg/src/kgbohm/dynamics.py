"""Guidance dynamics: per-particle currents, polar decomposition, quantum
potential, velocity fields, and trajectory integration.

All n particle worldlines advance in one shared curve parameter s; the state
of a trajectory is the full configuration (n, 4). The integrator is an
embedded Dormand-Prince 5(4) pair with PI step-size control, vectorized over
independent trajectories. Every array operation in the stepping path is
elementwise or a fixed-axis reduction, so each trajectory's result is
bit-identical no matter how a batch is split - which is what makes ensemble
output independent of the parallelism degree.

Surface crossings are refined by bisection in the step fraction, where the
state at a trial fraction comes from a partial Runge-Kutta step off the last
accepted sample; the reported crossing point therefore satisfies the surface
equation to the stated tolerance by construction.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NodeEncountered, NonuniformSpacing
from .spacetime import METRIC_SIGNS, Hypersurface
from .wavefunction import WaveFunction


class VelocityLaw(Enum):
    """Which form of the guidance equation supplies dx/ds.

    Both forms produce identical velocities wherever psi != 0 (the current
    equals -2 |psi|^2 grad S identically), so they also share one
    parametrization; both are kept because they exercise different arithmetic.
    """

    CURRENT = "current"
    PHASE_GRADIENT = "phase_gradient"


@dataclass
class IntegratorControls:
    rtol: float = 1e-9
    atol: float = 1e-12
    max_step: float = 0.1
    min_step: float = 1e-12
    velocity_law: VelocityLaw = VelocityLaw.CURRENT
    node_threshold: float | None = None  # default: psi.default_node_threshold

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_step <= 0 or self.min_step <= 0 or self.min_step > self.max_step:
            raise ValueError("need 0 < min_step <= max_step")
        if isinstance(self.velocity_law, str):
            self.velocity_law = VelocityLaw(self.velocity_law)


@dataclass(frozen=True)
class SurfaceStop:
    """Terminate at the first crossing of ``surface`` by particle ``particle``."""

    surface: Hypersurface
    particle: int = 0


@dataclass(frozen=True, eq=False)
class TrajectoryPoint:
    s: float
    configuration: np.ndarray  # (n, 4)
    velocities: np.ndarray     # (n, 4), dx/ds at this point


@dataclass(frozen=True, eq=False)
class ReachedSurface:
    s: float
    point: np.ndarray          # configuration at the refined crossing
    surface_index: int
    direction: int             # sign of d(n.x)/ds through the crossing


@dataclass(frozen=True)
class ReachedSMax:
    s: float


@dataclass(frozen=True)
class StepUnderflow:
    s: float
    step: float


@dataclass(frozen=True, eq=False)
class EscapedBounds:
    s: float
    point: np.ndarray


@dataclass(frozen=True, eq=False)
class Trajectory:
    samples: tuple[TrajectoryPoint, ...]
    termination: object

    @property
    def s_values(self) -> np.ndarray:
        return np.array([p.s for p in self.samples])

    @property
    def configurations(self) -> np.ndarray:
        """(samples, n, 4) stack of configurations."""
        return np.stack([p.configuration for p in self.samples])

    @property
    def velocities(self) -> np.ndarray:
        return np.stack([p.velocities for p in self.samples])

    @property
    def final(self) -> TrajectoryPoint:
        return self.samples[-1]


def _node_threshold(psi: WaveFunction, node_threshold) -> float:
    if node_threshold is None:
        return psi.default_node_threshold
    return float(node_threshold)


# ---------------------------------------------------------------------------
# pointwise fields
# ---------------------------------------------------------------------------

def current(psi: WaveFunction, cfg, a: int = 0) -> np.ndarray:
    """Real conserved 4-current of particle ``a``: i (psi* d psi - psi d psi*).

    The contraction i(z - z*) is purely real in floating arithmetic, so the
    imaginary residue is identically zero and only the real part is returned.
    """
    x = psi._check_configuration(cfg)
    grad = psi.gradient(x, a)
    val = psi.evaluate(x)
    return -2.0 * np.imag(np.conj(val)[..., None] * grad)


def _fields(psi: WaveFunction, x: np.ndarray):
    """psi, its per-particle gradient, and the density, in one sweep."""
    v = psi._term_values(x)
    val = v.sum(axis=-1)
    grad = (v[..., :, None, None] * (-1j * psi._P)).sum(axis=-3)
    dens = (val * np.conj(val)).real
    return val, grad, dens


def _velocity_and_density(psi: WaveFunction, x: np.ndarray, law: VelocityLaw):
    """Velocities (..., n, 4) and densities (...,). No node policy here:
    velocities at (near-)nodes are computed against a clamped denominator and
    must be masked by the caller."""
    val, grad, dens = _fields(psi, x)
    tiny = np.finfo(float).tiny
    if law is VelocityLaw.PHASE_GRADIENT:
        safe = np.where(dens > tiny, val, 1.0)
        grad_s = np.imag(grad / safe[..., None, None])
        vel = -grad_s / psi.mass
    else:
        j = -2.0 * np.imag(np.conj(val)[..., None, None] * grad)
        vel = j / (2.0 * psi.mass * np.where(dens > tiny, dens, 1.0)[..., None, None])
    return vel, dens


def polar(psi: WaveFunction, cfg, node_threshold: float | None = None):
    """Polar decomposition psi = R exp(iS): returns (R, grad S).

    grad S has shape (..., n, 4) with contravariant index; the identity
    j_a = -2 R^2 grad_a S ties it to :func:`current`.
    """
    x = psi._check_configuration(cfg)
    eps = _node_threshold(psi, node_threshold)
    val, grad, dens = _fields(psi, x)
    if np.any(dens <= eps):
        bad = float(np.min(dens))
        raise NodeEncountered(0.0, bad)
    grad_s = np.imag(grad / val[..., None, None])
    return np.sqrt(dens), grad_s


def velocity_field(psi: WaveFunction, cfg, law: VelocityLaw = VelocityLaw.CURRENT,
                   node_threshold: float | None = None) -> np.ndarray:
    """Guidance velocity dx_a/ds for every particle, shape (..., n, 4)."""
    x = psi._check_configuration(cfg)
    eps = _node_threshold(psi, node_threshold)
    vel, dens = _velocity_and_density(psi, x, law)
    if np.any(dens <= eps):
        raise NodeEncountered(0.0, float(np.min(dens)))
    return vel


def _density_ingredients(psi: WaveFunction, x: np.ndarray):
    """Derivatives of D = psi* psi needed by the quantum potential.

    Returns (val, D, grad psi, box_b psi, grad D, box_b D, grad_b D . grad_b D).
    """
    val, grad, dens = _fields(psi, x)
    box_psi = psi.box_all(x)  # (..., n)
    grad_d = 2.0 * np.real(np.conj(val)[..., None, None] * grad)
    box_d = 2.0 * np.real(np.conj(val)[..., None] * box_psi) \
        + 2.0 * ((grad * np.conj(grad)).real * METRIC_SIGNS).sum(axis=-1)
    gradsq_d = ((grad_d * grad_d) * METRIC_SIGNS).sum(axis=-1)
    return val, dens, grad, box_psi, grad_d, box_d, gradsq_d


def quantum_potential(psi: WaveFunction, cfg, node_threshold: float | None = None):
    """Q = (1/2m) sum_a (box_a R)/R with R = |psi|, evaluated analytically.

    Expressed through D = psi* psi: box_a R / R = box_a D/(2D) - |grad_a D|^2/(4D^2).
    """
    x = psi._check_configuration(cfg)
    eps = _node_threshold(psi, node_threshold)
    _, dens, _, _, _, box_d, gradsq_d = _density_ingredients(psi, x)
    if np.any(dens <= eps):
        raise NodeEncountered(0.0, float(np.min(dens)))
    d = dens[..., None]
    q = box_d / (2.0 * d) - gradsq_d / (4.0 * d * d)
    return q.sum(axis=-1) / (2.0 * psi.mass)


def quantum_potential_gradient(psi: WaveFunction, cfg,
                               node_threshold: float | None = None) -> np.ndarray:
    """Analytic d_a^mu Q, shape (..., n, 4).

    Uses one more derivative order of the mode expansion instead of
    differencing Q; finite differences are kept for the tests only.
    """
    x = psi._check_configuration(cfg)
    eps = _node_threshold(psi, node_threshold)
    val, dens, grad, box_psi, grad_d, box_d, gradsq_d = _density_ingredients(psi, x)
    if np.any(dens <= eps):
        raise NodeEncountered(0.0, float(np.min(dens)))

    hess = psi.hessian_all(x)          # (..., n, 4, n, 4)
    grad_box = psi.gradient_box_all(x)  # (..., n, 4, n)

    cval = np.conj(val)
    # d_c^rho box_b D, shape (..., n, 4, n)
    t3 = (
        2.0 * np.real(np.conj(grad)[..., :, :, None] * box_psi[..., None, None, :])
        + 2.0 * np.real(cval[..., None, None, None] * grad_box)
        + 4.0 * (METRIC_SIGNS * np.real(np.conj(grad)[..., None, None, :, :] * hess)).sum(axis=-1)
    )
    # d_c^rho d_b^nu D, shape (..., n, 4, n, 4)
    grad_dd = (
        2.0 * np.real(cval[..., None, None, None, None] * hess)
        + 2.0 * np.real(np.conj(grad)[..., :, :, None, None] * grad[..., None, None, :, :])
    )
    # sum_nu g_nu (d_b^nu D)(d_c^rho d_b^nu D), shape (..., n, 4, n)
    mixed = (METRIC_SIGNS * grad_d[..., None, None, :, :] * grad_dd).sum(axis=-1)

    d = dens[..., None, None]
    per_b = (
        t3 / (2.0 * d[..., None])
        - mixed / (2.0 * (d * d)[..., None])
    ).sum(axis=-1)
    scalar_b = (box_d.sum(axis=-1)[..., None, None] / (2.0 * d * d)
                - gradsq_d.sum(axis=-1)[..., None, None] / (2.0 * d * d * d))
    return (per_b - scalar_b * grad_d) / (2.0 * psi.mass)


def conservation_residual(psi: WaveFunction, cfg, a: int, h: float,
                          node_threshold: float | None = None) -> float:
    """Central-difference divergence of particle ``a``'s current.

    The analytic divergence vanishes identically, so the return value is the
    O(h^2) truncation error of the stencil plus roundoff.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    x = psi._check_configuration(cfg)
    if x.shape != (psi.particles, 4):
        raise ValueError("conservation_residual expects a single configuration")
    a = psi._check_particle(a)
    eps = _node_threshold(psi, node_threshold)

    shifted = np.broadcast_to(x, (8, psi.particles, 4)).copy()
    for mu in range(4):
        shifted[2 * mu, a, mu] += h
        shifted[2 * mu + 1, a, mu] -= h
    if np.any(psi.density(shifted) <= eps):
        raise NodeEncountered(0.0, float(psi.density(shifted).min()))
    j = current(psi, shifted, a)  # (8, 4)
    div = 0.0
    for mu in range(4):
        div += (j[2 * mu, mu] - j[2 * mu + 1, mu]) / (2.0 * h)
    return float(div)


def eom_residual(psi: WaveFunction, samples, node_threshold: float | None = None) -> np.ndarray:
    """m (second difference of x_a(s)) - d_a^mu Q over three equally spaced
    trajectory samples; shape (n, 4).

    Requires the shared-parameter velocity normalization dx/ds = -grad S / m
    (equivalently j / 2m psi*psi); feeding samples of a differently
    parametrized curve (e.g. raw-current flow dx/ds = j) leaves a finite
    residual wherever the density is not constant.
    """
    pts = tuple(samples)
    if len(pts) != 3:
        raise ValueError("need exactly three consecutive samples")
    s0, s1, s2 = (p.s for p in pts)
    d1, d2 = s1 - s0, s2 - s1
    if d1 <= 0 or d2 <= 0:
        raise NonuniformSpacing("sample parameters must be strictly increasing")
    if abs(d2 - d1) > 0.01 * max(d1, d2):
        raise NonuniformSpacing(
            f"sample gaps {d1:g} and {d2:g} differ by more than 1%; resample first"
        )
    ds = 0.5 * (d1 + d2)
    x_prev, x_mid, x_next = (p.configuration for p in pts)
    accel = (x_next - 2.0 * x_mid + x_prev) / ds**2
    dq = quantum_potential_gradient(psi, x_mid, node_threshold)
    return psi.mass * accel - dq


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4) with PI step control, batched over trajectories
# ---------------------------------------------------------------------------

_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
)
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                   187 / 2100, 1 / 40])
_DP_E = _DP_B5 - _DP_B4  # error weights over the 7 stages

_SAFETY = 0.9
_PI_ALPHA = 0.14   # 0.7 / order
_PI_BETA = 0.08    # 0.4 / order
_FAC_MIN, _FAC_MAX = 0.2, 10.0

_CROSSING_TOL = 1e-10
_SNAP_TOL = 1e-10

ACTIVE, HIT_SMAX, HIT_SURFACE, HIT_NODE, HIT_UNDERFLOW, HIT_BOUNDS = range(6)


@dataclass
class _BatchResult:
    status: np.ndarray            # (B,) codes above
    s: np.ndarray                 # (B,) final parameter values
    state: np.ndarray             # (B, n, 4) final configurations
    crossing_surface: np.ndarray  # (B,) stop index or -1
    crossing_direction: np.ndarray
    node_density: np.ndarray
    underflow_step: np.ndarray
    samples: list | None          # per-row [(s, x, v)] when recording


def _stop_distances(stops, x):
    """Signed distances (B, n_stops) of the designated particles."""
    cols = [stop.surface.signed_distance(x[:, stop.particle, :]) for stop in stops]
    return np.stack(cols, axis=1) if cols else np.zeros((x.shape[0], 0))


def _partial_step(psi, x0, k1, h, law, eps, direction):
    """One 5th-order step of size h (per row) from x0 with cached first stage.

    Densities are clamped from below during crossing refinement, so a trial
    point near a node yields a finite (if meaningless) state instead of NaN;
    the accepted bracket around the crossing was itself node-free.
    """
    k = np.empty((6,) + x0.shape)
    k[0] = k1
    hh = h[:, None, None]
    for i in range(1, 6):
        y = x0.copy()
        for j, aij in enumerate(_DP_A[i]):
            y += (aij * hh) * k[j]
        vel, _ = _velocity_and_density(psi, y, law)
        k[i] = direction * vel
    y5 = x0.copy()
    for j in range(6):
        y5 += (_DP_B5[j] * hh) * k[j]
    return y5


def _refine_crossings(psi, x0, k1, h, stop, law, eps, direction, d0, d1):
    """Bisection in the step fraction for rows bracketing a sign change.

    Returns (alpha, point) with |signed distance| < _CROSSING_TOL at ``point``.
    """
    b = x0.shape[0]
    lo = np.zeros(b)
    hi = np.ones(b)
    sign0 = np.sign(d0)
    done = np.zeros(b, bool)
    best_alpha = np.ones(b)
    best_point = _partial_step(psi, x0, k1, h, law, eps, direction)
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        y = _partial_step(psi, x0, k1, mid * h, law, eps, direction)
        d = stop.surface.signed_distance(y[:, stop.particle, :])
        hit = (np.abs(d) < _CROSSING_TOL) & ~done
        best_alpha = np.where(hit, mid, best_alpha)
        if hit.any():
            best_point[hit] = y[hit]
        done |= hit
        if done.all():
            break
        same = np.sign(d) == sign0
        lo = np.where(same & ~done, mid, lo)
        hi = np.where(~same & ~done, mid, hi)
    return best_alpha, best_point


def _integrate_batch(psi: WaveFunction, starts: np.ndarray, s_max: float,
                     controls: IntegratorControls, stops=(), bounds_check=None,
                     record: str | None = None, s_eval=None,
                     direction: float = 1.0) -> _BatchResult:
    """Advance a batch of independent trajectories of the guidance field.

    ``record`` is None (endpoints only), "all" (every accepted step), or
    "eval" (exactly the points of ``s_eval``, reached by step clamping).
    ``bounds_check`` maps states (B', n, 4) to a boolean escape mask.
    ``direction=-1`` integrates against the field (back-traces).
    """
    if s_max <= 0:
        raise ValueError("s_max must be positive")
    stops = tuple(stops)
    law = controls.velocity_law
    eps = _node_threshold(psi, controls.node_threshold)
    if s_eval is not None:
        s_eval = np.asarray(s_eval, dtype=float)
        if s_eval.ndim != 1 or np.any(np.diff(s_eval) <= 0) or s_eval[0] < 0:
            raise ValueError("s_eval must be strictly increasing and nonnegative")
        if record is None:
            record = "eval"

    x = np.array(starts, dtype=float)
    b, n, _ = x.shape
    s = np.zeros(b)
    status = np.full(b, ACTIVE)
    cross_surf = np.full(b, -1)
    cross_dir = np.zeros(b, dtype=int)
    node_dens = np.full(b, np.nan)
    uf_step = np.full(b, np.nan)
    eval_idx = np.zeros(b, dtype=int)
    n_eval = 0 if s_eval is None else len(s_eval)

    samples = [[] for _ in range(b)] if record else None

    vel0, dens0 = _velocity_and_density(psi, x, law)
    vel0 = direction * vel0
    at_node = dens0 <= eps
    status[at_node] = HIT_NODE
    node_dens[at_node] = dens0[at_node]

    if record == "all":
        for i in np.flatnonzero(~at_node):
            samples[i].append((0.0, x[i].copy(), vel0[i].copy()))
    elif record == "eval" and n_eval and s_eval[0] == 0.0:
        for i in np.flatnonzero(~at_node):
            samples[i].append((0.0, x[i].copy(), vel0[i].copy()))
        eval_idx[:] = 1

    k1 = vel0
    dist = _stop_distances(stops, x)
    dist[np.abs(dist) < _SNAP_TOL] = 0.0  # starting on a stop surface is not a crossing

    h = np.full(b, min(controls.max_step, s_max))
    err_prev = np.full(b, 1.0)

    while True:
        act = np.flatnonzero(status == ACTIVE)
        if act.size == 0:
            break
        xa = x[act]
        ha = np.minimum(h[act], controls.max_step)
        rem = s_max - s[act]
        clamp_smax = ha >= rem
        ha = np.where(clamp_smax, rem, ha)
        if n_eval:
            idx = np.minimum(eval_idx[act], n_eval - 1)
            to_eval = np.where(eval_idx[act] < n_eval, s_eval[idx] - s[act], np.inf)
            clamp_eval = ha >= to_eval
            ha = np.where(clamp_eval, to_eval, ha)
            clamp_smax &= ~clamp_eval
        else:
            clamp_eval = np.zeros(act.size, bool)

        # stages
        k = np.empty((7, act.size, n, 4))
        k[0] = k1[act]
        hh = ha[:, None, None]
        node_hit = np.zeros(act.size, bool)
        min_dens = np.full(act.size, np.inf)
        for i in range(1, 6):
            y = xa.copy()
            for j, aij in enumerate(_DP_A[i]):
                y += (aij * hh) * k[j]
            vel, dens = _velocity_and_density(psi, y, law)
            k[i] = direction * vel
            node_hit |= dens <= eps
            min_dens = np.minimum(min_dens, dens)
        y5 = xa.copy()
        for j in range(6):
            y5 += (_DP_B5[j] * hh) * k[j]
        vel, dens = _velocity_and_density(psi, y5, law)
        k[6] = direction * vel
        node_hit |= dens <= eps
        min_dens = np.minimum(min_dens, dens)

        errvec = np.zeros_like(xa)
        for j in range(7):
            if _DP_E[j] != 0.0:
                errvec += _DP_E[j] * k[j]
        errvec *= hh
        scale = controls.atol + controls.rtol * np.maximum(np.abs(xa), np.abs(y5))
        err = np.sqrt(np.mean((errvec / scale) ** 2, axis=(1, 2)))
        err = np.where(np.isfinite(err), err, np.inf)

        accept = (err <= 1.0) & ~node_hit

        # rejected rows: shrink, detect underflow / node capture
        rej = ~accept
        if rej.any():
            h_err = ha * np.clip(_SAFETY * np.maximum(err, 1e-10) ** -0.2, _FAC_MIN, 1.0)
            h_new = np.where(node_hit, 0.5 * ha, h_err)
            under = rej & (h_new < controls.min_step)
            rows = act[under]
            if rows.size:
                is_node = node_hit[under]
                status[rows[is_node]] = HIT_NODE
                node_dens[rows[is_node]] = min_dens[under][is_node]
                status[rows[~is_node]] = HIT_UNDERFLOW
                uf_step[rows[~is_node]] = h_new[under][~is_node]
            h[act[rej]] = h_new[rej]

        if not accept.any():
            continue

        acc = np.flatnonzero(accept)
        rows = act[acc]
        ya = y5[acc]
        ha_acc = ha[acc]
        s_new = s[rows] + ha_acc
        s_new = np.where(clamp_smax[acc], s_max, s_new)
        if n_eval:
            idx = np.minimum(eval_idx[rows], n_eval - 1)
            s_new = np.where(clamp_eval[acc], s_eval[idx], s_new)

        # surface crossings, refined per stop; earliest wins
        finished = np.zeros(acc.size, bool)
        if stops:
            d_new = _stop_distances(stops, ya)
            d_old = dist[rows]
            best_alpha = np.full(acc.size, np.inf)
            best_point = np.empty_like(ya)
            best_stop = np.full(acc.size, -1)
            best_dir = np.zeros(acc.size, dtype=int)
            for si, stop in enumerate(stops):
                d0 = d_old[:, si]
                d1 = d_new[:, si]
                crossed = (np.sign(d0) * np.sign(d1) < 0) | ((d1 == 0.0) & (d0 != 0.0))
                if not crossed.any():
                    continue
                cidx = np.flatnonzero(crossed)
                alpha, point = _refine_crossings(
                    psi, xa[acc][cidx], k[0][acc][cidx], ha_acc[cidx],
                    stop, law, eps, direction, d0[cidx], d1[cidx],
                )
                better = alpha < best_alpha[cidx]
                upd = cidx[better]
                best_alpha[upd] = alpha[better]
                best_point[upd] = point[better]
                best_stop[upd] = si
                best_dir[upd] = np.sign(d1 - d0)[upd].astype(int)
            hit = best_stop >= 0
            if hit.any():
                hrows = rows[hit]
                status[hrows] = HIT_SURFACE
                cross_surf[hrows] = best_stop[hit]
                cross_dir[hrows] = best_dir[hit]
                s[hrows] = s[hrows] + best_alpha[hit] * ha_acc[hit]
                x[hrows] = best_point[hit]
                finished |= hit
                if record:
                    vels, _ = _velocity_and_density(psi, x[hrows], law)
                    for out_i, i in enumerate(hrows):
                        samples[i].append((s[i], x[i].copy(),
                                           direction * vels[out_i].copy()))

        # bounds escape for rows that did not cross
        if bounds_check is not None:
            cand = ~finished
            if cand.any():
                esc = np.zeros(acc.size, bool)
                esc[cand] = bounds_check(ya[cand])
                erows = rows[esc]
                if erows.size:
                    status[erows] = HIT_BOUNDS
                    s[erows] = s_new[esc]
                    x[erows] = ya[esc]
                    finished |= esc

        cont = ~finished
        crows = rows[cont]
        if crows.size:
            x[crows] = ya[cont]
            s[crows] = s_new[cont]
            k1[crows] = k[6][acc][cont]
            dist[crows] = _stop_distances(stops, ya[cont]) if stops else dist[crows]

            if record == "all":
                vels = k[6][acc][cont]
                for out_i, i in enumerate(crows):
                    samples[i].append((s[i], x[i].copy(), vels[out_i].copy()))
            if n_eval:
                # a step may land on the next eval point without having been
                # clamped to it (float coincidence); advance on arrival either way
                idx = np.minimum(eval_idx[crows], n_eval - 1)
                target = s_eval[idx]
                reached = (eval_idx[crows] < n_eval) & \
                    (s[crows] >= target - 1e-12 * (1.0 + np.abs(target)))
                if record == "eval":
                    vels = k[6][acc][cont]
                    for out_i, i in enumerate(crows):
                        if reached[out_i]:
                            samples[i].append((s[i], x[i].copy(), vels[out_i].copy()))
                eval_idx[crows[reached]] += 1

            done_smax = s[crows] >= s_max * (1.0 - 1e-14)
            status[crows[done_smax]] = HIT_SMAX

            # PI controller update for rows still running
            run = crows[~done_smax]
            if run.size:
                e = np.maximum(err[acc][cont][~done_smax], 1e-10)
                fac = _SAFETY * e ** -_PI_ALPHA * err_prev[run] ** _PI_BETA
                h_next = ha_acc[cont][~done_smax] * np.clip(fac, _FAC_MIN, _FAC_MAX)
                # an eval-clamped step can be arbitrarily short; never let the
                # controller inherit a degenerate step size
                h[run] = np.clip(h_next, controls.min_step, controls.max_step)
                err_prev[run] = e

    return _BatchResult(status, s, x, cross_surf, cross_dir, node_dens, uf_step, samples)


def integrate_trajectory(psi: WaveFunction, cfg0, s_max: float,
                         controls: IntegratorControls | None = None,
                         stop: SurfaceStop | Hypersurface | None = None,
                         s_eval=None) -> Trajectory:
    """Integrate one trajectory from the configuration ``cfg0``.

    Terminates at ``s_max``, at a node, on step underflow, or - when ``stop``
    is given - at the refined first crossing of the designated particle's
    worldline with the stop surface. Failures are encoded in
    ``Trajectory.termination``, never raised.

    With ``s_eval`` the samples are taken exactly at the requested parameter
    values (the stepper clamps to them), which is what the equation-of-motion
    residual check needs.
    """
    controls = controls or IntegratorControls()
    x0 = psi._check_configuration(cfg0)
    if x0.shape != (psi.particles, 4):
        raise ValueError("cfg0 must be a single configuration")
    if isinstance(stop, Hypersurface):
        stop = SurfaceStop(stop, 0)
    if stop is not None:
        psi._check_particle(stop.particle)

    record = "eval" if s_eval is not None else "all"
    res = _integrate_batch(psi, x0[None], s_max, controls,
                           stops=(stop,) if stop else (), record=record, s_eval=s_eval)

    pts = tuple(TrajectoryPoint(si, xi, vi) for si, xi, vi in res.samples[0])
    code = int(res.status[0])
    s_fin = float(res.s[0])
    if code == HIT_SMAX:
        term = ReachedSMax(s_fin)
    elif code == HIT_SURFACE:
        term = ReachedSurface(s_fin, res.state[0].copy(), int(res.crossing_surface[0]),
                              int(res.crossing_direction[0]))
    elif code == HIT_NODE:
        term = NodeEncountered(s_fin, float(res.node_density[0]))
    elif code == HIT_UNDERFLOW:
        term = StepUnderflow(s_fin, float(res.underflow_step[0]))
    elif code == HIT_BOUNDS:
        term = EscapedBounds(s_fin, res.state[0].copy())
    else:  # pragma: no cover - loop only exits with a terminal status
        raise RuntimeError("integrator exited while still active")
    return Trajectory(pts, term)


def trajectory_set_distance(points_a, points_b) -> float:
    """Largest distance from samples of curve A to the piecewise-linear
    interpolation of curve B, in flattened configuration space."""
    pa = np.asarray(points_a, dtype=float).reshape(len(points_a), -1)
    pb = np.asarray(points_b, dtype=float).reshape(len(points_b), -1)
    if len(pb) == 1:
        return float(np.sqrt(((pa - pb[0]) ** 2).sum(axis=1)).max())
    q0, q1 = pb[:-1], pb[1:]
    seg = q1 - q0
    seg_len2 = np.maximum((seg * seg).sum(axis=1), np.finfo(float).tiny)
    diff = pa[:, None, :] - q0[None, :, :]
    t = np.clip((diff * seg).sum(axis=2) / seg_len2, 0.0, 1.0)
    proj = q0[None, :, :] + t[:, :, None] * seg[None, :, :]
    d2 = ((pa[:, None, :] - proj) ** 2).sum(axis=2).min(axis=1)
    return float(np.sqrt(d2.max()))
