"""Scenario configuration: a single YAML document describing the wave
function, surfaces, grid patches, integrator controls, and ensemble settings
of a run.

Loading is strict: unknown keys, missing fields, and ill-typed entries raise
:class:`~kgbohm.errors.ConfigError` naming the offending field, and YAML
syntax problems keep their line/column diagnostics. A validated scenario
serializes back to an equivalent normalized document (round-trip stable).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .dynamics import IntegratorControls, VelocityLaw
from .errors import ConfigError, KGBohmError
from .spacetime import Hypersurface
from .surface import SurfacePatch
from .wavefunction import WaveFunction, gaussian_packet_terms, make_wavefunction

_INTEGRATOR_DEFAULTS = {
    "rtol": 1e-9,
    "atol": 1e-12,
    "max_step": 0.1,
    "min_step": 1e-12,
    "s_max": 10.0,
    "velocity_law": "current",
}

_PACKET_DEFAULTS = {
    "points_per_axis": 21,
    "span_sigmas": 4.0,
    "axes": [0],
}


@dataclass
class Scenario:
    """A validated run description plus the objects built from it."""

    raw: dict
    psi: WaveFunction
    sigma0: Hypersurface | None
    sigma: Hypersurface | None
    patch0: SurfacePatch | None
    patch: SurfacePatch | None
    controls: IntegratorControls
    s_max: float
    ensemble_samples: int | None
    seed: int | None
    ensemble_initial: str
    starts: list = field(default_factory=list)

    @property
    def name(self) -> str:
        return self.raw.get("name", "unnamed")

    def to_dict(self) -> dict:
        return self.raw


def _expect(d, key, types, path, required=True, default=None):
    if key not in d:
        if required:
            raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
        return default
    v = d[key]
    if types is not None and not isinstance(v, types):
        tn = types.__name__ if isinstance(types, type) else "/".join(t.__name__ for t in types)
        raise ConfigError(f"{path}.{key}" if path else key,
                          f"expected {tn}, got {type(v).__name__}")
    return v


def _number(d, key, path, required=True, default=None):
    v = _expect(d, key, (int, float), path, required, default)
    if isinstance(v, bool):
        raise ConfigError(f"{path}.{key}", "expected a number, got a boolean")
    return None if v is None else float(v)


def _vector(v, length, path):
    if not isinstance(v, (list, tuple)) or len(v) != length:
        raise ConfigError(path, f"expected a list of {length} numbers")
    try:
        return [float(c) for c in v]
    except (TypeError, ValueError):
        raise ConfigError(path, "entries must be numbers") from None


def _check_keys(d, allowed, path):
    for k in d:
        if k not in allowed:
            raise ConfigError(f"{path}.{k}" if path else k, "unknown field")


def _build_wavefunction(d: dict) -> WaveFunction:
    _check_keys(d, {"mass", "particles", "symmetrize", "terms", "gaussian_packet"},
                "wavefunction")
    mass = _number(d, "mass", "wavefunction")
    particles = _expect(d, "particles", int, "wavefunction")
    symmetrize = _expect(d, "symmetrize", bool, "wavefunction", required=False,
                         default=False)
    has_terms = "terms" in d
    has_packet = "gaussian_packet" in d
    if has_terms == has_packet:
        raise ConfigError("wavefunction", "give exactly one of terms / gaussian_packet")

    if has_packet:
        if particles != 1:
            raise ConfigError("wavefunction.gaussian_packet",
                              "packet generation is single-particle")
        g = _expect(d, "gaussian_packet", dict, "wavefunction")
        _check_keys(g, {"center", "sigma", "points_per_axis", "span_sigmas", "axes"},
                    "wavefunction.gaussian_packet")
        center = _vector(_expect(g, "center", (list, tuple),
                                 "wavefunction.gaussian_packet"), 3,
                         "wavefunction.gaussian_packet.center")
        sigma = _number(g, "sigma", "wavefunction.gaussian_packet")
        pts = _expect(g, "points_per_axis", int, "wavefunction.gaussian_packet",
                      required=False, default=_PACKET_DEFAULTS["points_per_axis"])
        span = _number(g, "span_sigmas", "wavefunction.gaussian_packet",
                       required=False, default=_PACKET_DEFAULTS["span_sigmas"])
        axes = _expect(g, "axes", (list, tuple), "wavefunction.gaussian_packet",
                       required=False, default=_PACKET_DEFAULTS["axes"])
        terms = gaussian_packet_terms(mass, center, sigma, pts, span,
                                      tuple(int(a) for a in axes))
    else:
        raw_terms = _expect(d, "terms", (list, tuple), "wavefunction")
        if not raw_terms:
            raise ConfigError("wavefunction.terms", "needs at least one term")
        terms = []
        for k, t in enumerate(raw_terms):
            tpath = f"wavefunction.terms[{k}]"
            if not isinstance(t, dict):
                raise ConfigError(tpath, "expected a mapping")
            _check_keys(t, {"coefficient", "modes"}, tpath)
            c = _expect(t, "coefficient", (list, tuple, int, float), tpath)
            if isinstance(c, (list, tuple)):
                re_im = _vector(c, 2, f"{tpath}.coefficient")
                coeff = complex(re_im[0], re_im[1])
            else:
                coeff = complex(float(c), 0.0)
            raw_modes = _expect(t, "modes", (list, tuple), tpath)
            modes = []
            for mi, mode in enumerate(raw_modes):
                mpath = f"{tpath}.modes[{mi}]"
                if not isinstance(mode, dict):
                    raise ConfigError(mpath, "expected a mapping")
                _check_keys(mode, {"momentum", "sign"}, mpath)
                mom = _vector(_expect(mode, "momentum", (list, tuple), mpath), 3,
                              f"{mpath}.momentum")
                sign = _expect(mode, "sign", int, mpath, required=False, default=1)
                if sign not in (1, -1):
                    raise ConfigError(f"{mpath}.sign", "must be 1 or -1")
                modes.append((tuple(mom), sign))
            terms.append((coeff, modes))

    try:
        psi = make_wavefunction(mass, particles, terms)
        if symmetrize:
            psi = psi.symmetrize()
    except KGBohmError as exc:
        raise ConfigError("wavefunction", str(exc)) from exc
    except ValueError as exc:
        raise ConfigError("wavefunction", str(exc)) from exc
    return psi


def _build_surface(d: dict, path: str) -> Hypersurface:
    _check_keys(d, {"normal", "offset"}, path)
    normal = _vector(_expect(d, "normal", (list, tuple), path), 4, f"{path}.normal")
    offset = _number(d, "offset", path)
    try:
        return Hypersurface(np.array(normal), offset)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def _build_patch(d: dict, surface: Hypersurface | None, path: str) -> SurfacePatch:
    if surface is None:
        raise ConfigError(path, "patch given without its surface")
    _check_keys(d, {"bounds", "grid"}, path)
    raw_bounds = _expect(d, "bounds", (list, tuple), path)
    if len(raw_bounds) != 3:
        raise ConfigError(f"{path}.bounds", "need 3 intervals")
    bounds = tuple(tuple(_vector(b, 2, f"{path}.bounds[{i}]"))
                   for i, b in enumerate(raw_bounds))
    raw_grid = _expect(d, "grid", (list, tuple), path)
    if len(raw_grid) != 3 or not all(isinstance(g, int) for g in raw_grid):
        raise ConfigError(f"{path}.grid", "need 3 integers")
    try:
        return SurfacePatch(surface, bounds, tuple(raw_grid))
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ConfigError("<document>", "top level must be a mapping")
    _check_keys(doc, {"name", "wavefunction", "surfaces", "patches", "integrator",
                      "ensemble", "starts", "node_threshold"}, "")

    name = _expect(doc, "name", str, "", required=False)
    wf_dict = _expect(doc, "wavefunction", dict, "")
    psi = _build_wavefunction(wf_dict)

    sigma0 = sigma = None
    surfaces = _expect(doc, "surfaces", dict, "", required=False, default={})
    _check_keys(surfaces, {"sigma0", "sigma"}, "surfaces")
    if "sigma0" in surfaces:
        sigma0 = _build_surface(_expect(surfaces, "sigma0", dict, "surfaces"),
                                "surfaces.sigma0")
    if "sigma" in surfaces:
        sigma = _build_surface(_expect(surfaces, "sigma", dict, "surfaces"),
                               "surfaces.sigma")

    patch0 = patch = None
    patches = _expect(doc, "patches", dict, "", required=False, default={})
    _check_keys(patches, {"sigma0", "sigma"}, "patches")
    if "sigma0" in patches:
        patch0 = _build_patch(_expect(patches, "sigma0", dict, "patches"), sigma0,
                              "patches.sigma0")
    if "sigma" in patches:
        patch = _build_patch(_expect(patches, "sigma", dict, "patches"), sigma,
                             "patches.sigma")

    node_threshold = _number(doc, "node_threshold", "", required=False)
    if node_threshold is not None and node_threshold < 0:
        raise ConfigError("node_threshold", "must be nonnegative")

    integ = dict(_INTEGRATOR_DEFAULTS)
    integ_doc = _expect(doc, "integrator", dict, "", required=False, default={})
    _check_keys(integ_doc, set(_INTEGRATOR_DEFAULTS), "integrator")
    integ.update(integ_doc)
    law = integ["velocity_law"]
    if law not in ("current", "phase_gradient"):
        raise ConfigError("integrator.velocity_law",
                          "must be 'current' or 'phase_gradient'")
    s_max = float(integ["s_max"])
    if s_max <= 0:
        raise ConfigError("integrator.s_max", "must be positive")
    try:
        controls = IntegratorControls(
            rtol=float(integ["rtol"]), atol=float(integ["atol"]),
            max_step=float(integ["max_step"]), min_step=float(integ["min_step"]),
            velocity_law=VelocityLaw(law), node_threshold=node_threshold,
        )
    except ValueError as exc:
        raise ConfigError("integrator", str(exc)) from exc

    samples = seed = None
    initial = "current"
    ens = _expect(doc, "ensemble", dict, "", required=False)
    if ens is not None:
        _check_keys(ens, {"samples", "seed", "initial"}, "ensemble")
        samples = _expect(ens, "samples", int, "ensemble")
        if samples < 1:
            raise ConfigError("ensemble.samples", "must be at least 1")
        seed = _expect(ens, "seed", int, "ensemble")
        initial = _expect(ens, "initial", str, "ensemble", required=False,
                          default="current")
        if initial not in ("current", "uniform"):
            raise ConfigError("ensemble.initial", "must be 'current' or 'uniform'")

    starts = []
    raw_starts = _expect(doc, "starts", (list, tuple), "", required=False, default=[])
    for i, st in enumerate(raw_starts):
        path = f"starts[{i}]"
        arr = np.asarray(st, dtype=float)
        if psi.particles == 1 and arr.shape == (4,):
            arr = arr[None, :]
        if arr.shape != (psi.particles, 4):
            raise ConfigError(path, f"expected {psi.particles} points of 4 components")
        if not np.all(np.isfinite(arr)):
            raise ConfigError(path, "components must be finite")
        starts.append(arr)

    normalized = _normalize(name, wf_dict, surfaces, patches, integ, ens, raw_starts,
                            node_threshold)
    return Scenario(normalized, psi, sigma0, sigma, patch0, patch, controls, s_max,
                    samples, seed, initial, starts)


def _normalize(name, wf, surfaces, patches, integ, ens, starts, node_threshold) -> dict:
    def listify(x):
        if isinstance(x, (list, tuple)):
            return [listify(v) for v in x]
        if isinstance(x, (int, bool)):
            return x
        if isinstance(x, float):
            return float(x)
        return x

    wf_out = {"mass": float(wf["mass"]), "particles": wf["particles"],
              "symmetrize": bool(wf.get("symmetrize", False))}
    if "gaussian_packet" in wf:
        g = dict(_PACKET_DEFAULTS)
        g.update(wf["gaussian_packet"])
        g["center"] = [float(c) for c in g["center"]]
        g["sigma"] = float(g["sigma"])
        g["span_sigmas"] = float(g["span_sigmas"])
        g["axes"] = [int(a) for a in g["axes"]]
        wf_out["gaussian_packet"] = g
    else:
        out_terms = []
        for t in wf["terms"]:
            c = t["coefficient"]
            if isinstance(c, (list, tuple)):
                coeff = [float(c[0]), float(c[1])]
            else:
                coeff = [float(c), 0.0]
            out_terms.append({
                "coefficient": coeff,
                "modes": [{"momentum": [float(p) for p in m["momentum"]],
                           "sign": int(m.get("sign", 1))} for m in t["modes"]],
            })
        wf_out["terms"] = out_terms

    doc = {"wavefunction": wf_out}
    if name is not None:
        doc["name"] = name
    if surfaces:
        doc["surfaces"] = {k: {"normal": [float(c) for c in v["normal"]],
                               "offset": float(v["offset"])}
                           for k, v in surfaces.items()}
    if patches:
        doc["patches"] = {k: {"bounds": listify(v["bounds"]),
                              "grid": [int(g) for g in v["grid"]]}
                          for k, v in patches.items()}
    doc["integrator"] = {k: (v if k == "velocity_law" else float(v))
                         for k, v in integ.items()}
    if ens is not None:
        doc["ensemble"] = {"samples": int(ens["samples"]), "seed": int(ens["seed"]),
                           "initial": ens.get("initial", "current")}
    if starts:
        doc["starts"] = listify(starts)
    if node_threshold is not None:
        doc["node_threshold"] = float(node_threshold)
    return doc


def load_scenario(path) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError("<file>", str(exc)) from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError("<yaml>", f"parse error at {where}: {exc}") from exc
    return scenario_from_dict(doc)


def save_scenario(scenario: Scenario, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        yaml.safe_dump(scenario.to_dict(), fh, sort_keys=True,
                       default_flow_style=None)
