"""Single-particle hypersurface analysis: surface density, crossing detection,
and the partition of a measurement surface into fed, paired and negative
regions.

A negative-density cell is paired with the point where the integral curve of
the current through it re-crosses the surface; cells reached that way, plus
any neighbor whose own back-trace returns to the surface instead of the
initial one, form the paired region. Everything else on the patch is ordinary
("prime") territory whose density is directly measurable.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .dynamics import (
    HIT_SURFACE,
    IntegratorControls,
    ReachedSurface,
    SurfaceStop,
    Trajectory,
    TrajectoryPoint,
    _integrate_batch,
    current,
)
from .errors import InitialDensityNegative, NodeEncountered, NotOnSurface, TooManyUnresolved
from .spacetime import Hypersurface, minkowski_dot
from .wavefunction import WaveFunction
from ._fmt import write_csv

_ON_SURFACE_TOL = 1e-9


class CellLabel(IntEnum):
    SIGMA_PRIME = 0
    SIGMA_PLUS = 1
    SIGMA_MINUS = 2

    @property
    def tag(self) -> str:
        return self.name.lower()


@dataclass(frozen=True, eq=False)
class SurfacePatch:
    """Axis-aligned grid window on a hypersurface, in adapted coordinates.

    An axis with a zero-width interval is collapsed: it carries a single
    layer of cells at that coordinate and contributes no volume factor, so a
    patch can be effectively one- or two-dimensional.
    """

    surface: Hypersurface
    bounds: tuple
    grid: tuple

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        grid = tuple(int(g) for g in self.grid)
        if len(bounds) != 3 or len(grid) != 3:
            raise ValueError("need bounds and grid for exactly 3 axes")
        for ax, ((lo, hi), g) in enumerate(zip(bounds, grid)):
            if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
                raise ValueError(f"axis {ax}: invalid interval [{lo}, {hi}]")
            if hi == lo:
                if g != 1:
                    raise ValueError(f"axis {ax} is collapsed; its grid must be 1")
            elif g < 2:
                raise ValueError(f"axis {ax}: need at least 2 cells, got {g}")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "grid", grid)

    def same_as(self, other: "SurfacePatch") -> bool:
        return (
            np.array_equal(self.surface.normal, other.surface.normal)
            and self.surface.offset == other.surface.offset
            and self.bounds == other.bounds
            and self.grid == other.grid
        )

    @property
    def extended_axes(self) -> tuple:
        return tuple(ax for ax, (lo, hi) in enumerate(self.bounds) if hi > lo)

    @property
    def cell_volume(self) -> float:
        vol = 1.0
        for ax in self.extended_axes:
            lo, hi = self.bounds[ax]
            vol *= (hi - lo) / self.grid[ax]
        return vol

    def cell_centers(self, axis: int) -> np.ndarray:
        lo, hi = self.bounds[axis]
        g = self.grid[axis]
        if hi == lo:
            return np.array([lo])
        edges = np.linspace(lo, hi, g + 1)
        return 0.5 * (edges[:-1] + edges[1:])

    def quadrature_nodes(self, axis: int) -> np.ndarray:
        """Cell-edge nodes used for composite quadrature along one axis."""
        lo, hi = self.bounds[axis]
        if hi == lo:
            return np.array([lo])
        return np.linspace(lo, hi, self.grid[axis] + 1)

    def center_mesh(self) -> np.ndarray:
        """(g1, g2, g3, 3) array of cell-center adapted coordinates."""
        c = [self.cell_centers(ax) for ax in range(3)]
        return np.stack(np.meshgrid(*c, indexing="ij"), axis=-1)

    def center_points(self) -> np.ndarray:
        """(g1, g2, g3, 4) spacetime points of the cell centers."""
        return self.surface.embed(self.center_mesh())

    def cell_index(self, u) -> tuple | None:
        """Containing cell of adapted coordinates u; cells are closed on the
        lower edge and open on the upper. None when outside the patch."""
        u = np.asarray(u, dtype=float)
        idx = []
        for ax in range(3):
            lo, hi = self.bounds[ax]
            if hi == lo:
                idx.append(0)
                continue
            if u[ax] < lo or u[ax] >= hi:
                return None
            width = (hi - lo) / self.grid[ax]
            idx.append(min(int((u[ax] - lo) // width), self.grid[ax] - 1))
        return tuple(idx)

    def cell_indices(self, u) -> np.ndarray:
        """Vectorized :meth:`cell_index`: (..., 3) coordinates to (..., 3)
        indices, with every component -1 for out-of-patch points."""
        u = np.asarray(u, dtype=float)
        out = np.zeros(u.shape[:-1] + (3,), dtype=int)
        inside = np.ones(u.shape[:-1], dtype=bool)
        for ax in range(3):
            lo, hi = self.bounds[ax]
            if hi == lo:
                continue
            width = (hi - lo) / self.grid[ax]
            i = np.floor((u[..., ax] - lo) / width).astype(int)
            inside &= (u[..., ax] >= lo) & (u[..., ax] < hi)
            out[..., ax] = np.minimum(i, self.grid[ax] - 1)
        out[~inside] = -1
        return out


@dataclass(frozen=True, eq=False)
class CrossingEvent:
    s: float
    point: np.ndarray  # (4,) spacetime point on the surface
    direction: int     # sign of d(n.x)/ds, i.e. of j.n, through the crossing


@dataclass(frozen=True, eq=False)
class Pairing:
    minus_cell: tuple
    minus_point: np.ndarray
    plus_cell: tuple | None   # None when the partner lies outside the patch
    plus_point: np.ndarray
    curve: Trajectory


@dataclass(frozen=True, eq=False)
class SurfacePartition:
    patch: SurfacePatch
    sigma0: Hypersurface
    labels: np.ndarray       # (g1, g2, g3) CellLabel values
    density: np.ndarray      # surface density j at cell centers
    unresolved: np.ndarray   # cells whose trace could not be completed
    pairings: tuple
    tol_j: float

    @property
    def unresolved_fraction(self) -> float:
        return float(self.unresolved.sum()) / self.unresolved.size

    def flux(self, label: CellLabel) -> float:
        """Quadrature of j over the cells carrying ``label``."""
        sel = self.labels == int(label)
        return float(self.density[sel].sum()) * self.patch.cell_volume


@dataclass
class ClassifyControls:
    # traces near a band edge dip below the surface only briefly; the small
    # default max_step keeps such re-crossings inside a resolvable bracket
    integrator: IntegratorControls = field(
        default_factory=lambda: IntegratorControls(max_step=0.002))
    tol_j: float | None = None          # default 1e-9 * max |j| on the patch
    sigma0_window: SurfacePatch | None = None
    margin: float = 3.0                 # bounding-window enlargement for traces
    trace_s_max: float | None = None


def surface_density(psi: WaveFunction, sigma: Hypersurface, y,
                    node_threshold: float | None = None):
    """j.n at points y on the surface; broadcasts over leading axes."""
    if psi.particles != 1:
        raise ValueError("surface density is a single-particle quantity")
    y = np.asarray(y, dtype=float)
    off = np.abs(sigma.signed_distance(y))
    if np.any(off > _ON_SURFACE_TOL):
        raise NotOnSurface(f"point off the surface by {float(off.max()):g}")
    cfg = y[..., None, :]
    eps = psi.default_node_threshold if node_threshold is None else float(node_threshold)
    dens = psi.density(cfg)
    if np.any(dens <= eps):
        raise NodeEncountered(0.0, float(np.min(dens)))
    return minkowski_dot(current(psi, cfg, 0), sigma.normal)


def _density_grid(psi, patch):
    """(j, |psi|^2) at the patch cell centers, without node policing."""
    cfg = patch.center_points()[..., None, :]
    j = minkowski_dot(current(psi, cfg, 0), patch.surface.normal)
    return j, psi.density(cfg)


def find_crossings(traj: Trajectory, sigma: Hypersurface, a: int = 0) -> list:
    """All crossings of particle ``a``'s recorded worldline with ``sigma``.

    Between samples the worldline is interpolated by the cubic Hermite
    polynomial built from stored positions and velocities; each bracketed
    sign change is refined by bisection until the interpolated point lies on
    the surface to 1e-10. An initial sample already on the surface counts as
    a departure, not a crossing.
    """
    if not traj.samples:
        return []
    s = traj.s_values
    x = traj.configurations[:, a, :]
    v = traj.velocities[:, a, :]
    d = sigma.signed_distance(x)

    events = []
    exact = np.abs(d) < 1e-10
    for i in range(1, len(s)):
        if exact[i]:
            direction = int(np.sign(minkowski_dot(sigma.normal, v[i])))
            events.append(CrossingEvent(float(s[i]), x[i].copy(), direction))
    for i in range(len(s) - 1):
        if exact[i] or exact[i + 1] or d[i] * d[i + 1] >= 0:
            continue
        h = s[i + 1] - s[i]
        lo, hi = 0.0, 1.0
        mid, point = 1.0, x[i + 1]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            point = _hermite(x[i], v[i], x[i + 1], v[i + 1], h, mid)
            dm = float(sigma.signed_distance(point))
            if abs(dm) < 1e-10:
                break
            if np.sign(dm) == np.sign(d[i]):
                lo = mid
            else:
                hi = mid
        events.append(CrossingEvent(float(s[i] + mid * h), point.copy(),
                                    int(np.sign(d[i + 1] - d[i]))))
    events.sort(key=lambda e: e.s)
    return events


def _hermite(x0, v0, x1, v1, h, t):
    t2 = t * t
    t3 = t2 * t
    return ((2 * t3 - 3 * t2 + 1) * x0 + ((t3 - 2 * t2 + t) * h) * v0
            + (-2 * t3 + 3 * t2) * x1 + ((t3 - t2) * h) * v1)


def _batch_trajectory(res, row) -> Trajectory:
    pts = tuple(TrajectoryPoint(si, xi, vi) for si, xi, vi in res.samples[row])
    term = ReachedSurface(float(res.s[row]), res.state[row].copy(),
                          int(res.crossing_surface[row]), int(res.crossing_direction[row]))
    return Trajectory(pts, term)


def _neighbors(cell, patch):
    for ax in patch.extended_axes:
        for step in (-1, 1):
            nb = list(cell)
            nb[ax] += step
            if 0 <= nb[ax] < patch.grid[ax]:
                yield tuple(nb)


def classify_patch(psi: WaveFunction, patch: SurfacePatch, sigma0: Hypersurface,
                   controls: ClassifyControls | None = None) -> SurfacePartition:
    """Label every patch cell as prime, paired-positive, or negative.

    Cells with j < -tol_j are negative. From each negative cell center an
    integral curve of the current is traced forward; it dives below the
    surface and its first re-crossing marks the paired partner. Partner
    cells seed a flood fill whose candidates are confirmed by back-traces:
    one that re-crosses the surface keeps the cell in the paired region, one
    that reaches the initial surface proves the cell is fed from it. Traces
    that leave the enlarged bounding window, hit a node, or exhaust the
    parameter budget leave their cell unresolved.
    """
    if psi.particles != 1:
        raise ValueError("classification is single-particle")
    controls = controls or ClassifyControls()
    sigma = patch.surface

    if sigma0.signed_distance(sigma.offset * sigma.normal) <= 0:
        raise ValueError("sigma0 must lie strictly earlier than the patch surface")

    j, dens = _density_grid(psi, patch)
    eps_node = controls.integrator.node_threshold
    eps_node = psi.default_node_threshold if eps_node is None else float(eps_node)
    tol_j = controls.tol_j
    if tol_j is None:
        tol_j = 1e-9 * float(np.abs(j).max())

    # standing assumption: nonnegative density on the sampled initial window
    window = controls.sigma0_window
    if window is None:
        window = SurfacePatch(sigma0, patch.bounds, patch.grid)
    j0, _ = _density_grid(psi, window)
    if np.any(j0 < -tol_j):
        flat = int(np.argmin(j0))
        bad = window.center_points().reshape(-1, 4)[flat]
        raise InitialDensityNegative(bad, float(j0.min()))

    labels = np.zeros(patch.grid, dtype=np.int8)
    unresolved = np.zeros(patch.grid, dtype=bool)
    node_cells = dens <= eps_node
    unresolved |= node_cells

    minus = (j < -tol_j) & ~node_cells
    labels[minus] = int(CellLabel.SIGMA_MINUS)

    # bounding window for traces: patch bounds enlarged around their center
    enlarged = []
    for ax in range(3):
        lo, hi = patch.bounds[ax]
        c, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        enlarged.append((c - controls.margin * half, c + controls.margin * half))

    def escaped(states):
        u = sigma.coordinates(states[:, 0, :])
        out = np.zeros(len(states), dtype=bool)
        for ax in patch.extended_axes:
            lo, hi = enlarged[ax]
            out |= (u[:, ax] < lo) | (u[:, ax] > hi)
        return out

    s_budget = controls.trace_s_max
    if s_budget is None:
        extent = max(hi - lo for lo, hi in patch.bounds)
        s_budget = 20.0 * (1.0 + abs(sigma.offset - sigma0.offset) + extent)

    stops = (SurfaceStop(sigma, 0), SurfaceStop(sigma0, 0))
    centers = patch.center_points()

    # forward connectors from every negative cell
    pairings = []
    minus_cells = list(zip(*np.nonzero(minus)))
    if minus_cells:
        starts = np.stack([centers[c] for c in minus_cells])[:, None, :]
        res = _integrate_batch(psi, starts, s_budget, controls.integrator,
                               stops=stops, bounds_check=escaped, record="all")
        for row, cell in enumerate(minus_cells):
            ok = res.status[row] == HIT_SURFACE and res.crossing_surface[row] == 0
            partner = res.state[row, 0]
            if ok:
                pj = float(minkowski_dot(current(psi, partner[None, :], 0), sigma.normal))
                ok = pj > tol_j  # near-tangential partners are ill-conditioned
            if not ok:
                unresolved[cell] = True
                continue
            pcell = patch.cell_index(sigma.coordinates(partner))
            if pcell is not None and labels[pcell] != int(CellLabel.SIGMA_MINUS):
                labels[pcell] = int(CellLabel.SIGMA_PLUS)
            pairings.append(Pairing(cell, starts[row, 0].copy(), pcell,
                                    partner.copy(), _batch_trajectory(res, row)))

    # flood fill with back-trace confirmation
    frontier = list(zip(*np.nonzero(labels == int(CellLabel.SIGMA_PLUS))))
    checked = set(frontier) | set(minus_cells)
    while frontier:
        candidates = []
        for cell in frontier:
            for nb in _neighbors(cell, patch):
                if nb in checked:
                    continue
                checked.add(nb)
                if node_cells[nb]:
                    continue
                if j[nb] <= tol_j:
                    unresolved[nb] = True  # edge band: back-trace ill-conditioned
                    continue
                candidates.append(nb)
        if not candidates:
            break
        starts = np.stack([centers[c] for c in candidates])[:, None, :]
        res = _integrate_batch(psi, starts, s_budget, controls.integrator,
                               stops=stops, bounds_check=escaped, direction=-1.0)
        frontier = []
        for row, cell in enumerate(candidates):
            if res.status[row] == HIT_SURFACE:
                if res.crossing_surface[row] == 0:
                    labels[cell] = int(CellLabel.SIGMA_PLUS)
                    frontier.append(cell)
                # reaching the initial surface instead proves the cell is fed
            else:
                unresolved[cell] = True

    return SurfacePartition(patch, sigma0, labels, j, unresolved, tuple(pairings), tol_j)


@dataclass(frozen=True, eq=False)
class MeasurableDistribution:
    rho: np.ndarray
    integral: float


def measurable_distribution(part: SurfacePartition,
                            max_unresolved_fraction: float = 1e-3) -> MeasurableDistribution:
    """Per-cell measurable density: j on prime cells, exactly zero on the
    paired and negative regions; together with its patch integral."""
    frac = part.unresolved_fraction
    if frac > max_unresolved_fraction:
        raise TooManyUnresolved(
            f"unresolved fraction {frac:.3e} exceeds {max_unresolved_fraction:.3e}"
        )
    rho = np.where(part.labels == int(CellLabel.SIGMA_PRIME), part.density, 0.0)
    return MeasurableDistribution(rho, float(rho.sum()) * part.patch.cell_volume)


def write_partition_csv(part: SurfacePartition, path):
    rho = np.where(part.labels == int(CellLabel.SIGMA_PRIME), part.density, 0.0)
    mesh = part.patch.center_mesh()
    rows = []
    for idx in np.ndindex(part.labels.shape):
        u = mesh[idx]
        rows.append((idx[0], idx[1], idx[2], float(u[0]), float(u[1]), float(u[2]),
                     float(part.density[idx]), CellLabel(part.labels[idx]).tag,
                     float(rho[idx])))
    write_csv(path, ("i1", "i2", "i3", "u1", "u2", "u3", "j", "label", "rho"), rows)


def write_rho_grid_csv(part: SurfacePartition, path):
    rho = np.where(part.labels == int(CellLabel.SIGMA_PRIME), part.density, 0.0)
    mesh = part.patch.center_mesh()
    rows = []
    for idx in np.ndindex(part.labels.shape):
        u = mesh[idx]
        rows.append((float(u[0]), float(u[1]), float(u[2]), float(rho[idx])))
    write_csv(path, ("u1", "u2", "u3", "rho"), rows)


def partition_summary(part: SurfacePartition) -> dict:
    return {
        "flux_sigma_prime": part.flux(CellLabel.SIGMA_PRIME),
        "flux_sigma_plus": part.flux(CellLabel.SIGMA_PLUS),
        "flux_sigma_minus": part.flux(CellLabel.SIGMA_MINUS),
        "flux_pair_defect": part.flux(CellLabel.SIGMA_PLUS) + part.flux(CellLabel.SIGMA_MINUS),
        "cells": {
            "sigma_prime": int((part.labels == int(CellLabel.SIGMA_PRIME)).sum()),
            "sigma_plus": int((part.labels == int(CellLabel.SIGMA_PLUS)).sum()),
            "sigma_minus": int((part.labels == int(CellLabel.SIGMA_MINUS)).sum()),
            "unresolved": int(part.unresolved.sum()),
        },
        "unresolved_fraction": part.unresolved_fraction,
        "tol_j": part.tol_j,
        "cell_volume": part.patch.cell_volume,
    }
