"""Built-in scenarios, embedded so verification runs need no external files.

Each scenario is a full configuration document (the same schema the YAML
loader accepts), so any builtin can be dumped to a file and edited. The
off-shell fixture is the one exception: it deliberately violates the mass
shell to prove the wave-equation detector fires, which the public document
schema cannot (and should not) express.
"""
from __future__ import annotations

import math

import numpy as np

from .config import Scenario, scenario_from_dict
from .spacetime import boost
from .wavefunction import WaveFunction

_GAMMA_06 = 1.25
_BETA_06 = 0.6
_BETA_03 = 0.3


def _boosted_momentum(k: float, beta: float) -> float:
    """Spatial part of the x-boosted on-shell momentum (mass 1)."""
    gamma = 1.0 / math.sqrt(1.0 - beta * beta)
    e = math.sqrt(1.0 + k * k)
    return gamma * (k + beta * e)


def _boosted_normal(beta: float) -> list:
    gamma = 1.0 / math.sqrt(1.0 - beta * beta)
    return [gamma, gamma * beta, 0.0, 0.0]


_SQRT2 = math.sqrt(2.0)

_PLANEWAVE = {
    "name": "planewave",
    "wavefunction": {
        "mass": 1.0,
        "particles": 1,
        "terms": [{"coefficient": [1.0, 0.0],
                   "modes": [{"momentum": [1.0, 0.0, 0.0], "sign": 1}]}],
    },
    "surfaces": {
        "sigma0": {"normal": [1.0, 0.0, 0.0, 0.0], "offset": 0.0},
        "sigma": {"normal": [1.0, 0.0, 0.0, 0.0], "offset": 2.0},
    },
    "patches": {
        "sigma0": {"bounds": [[0.0, 1.0], [0.0, 0.0], [0.0, 0.0]],
                   "grid": [50, 1, 1]},
        "sigma": {"bounds": [[_SQRT2, 1.0 + _SQRT2], [0.0, 0.0], [0.0, 0.0]],
                  "grid": [50, 1, 1]},
    },
    "integrator": {"s_max": 30.0},
    "ensemble": {"samples": 100000, "seed": 1},
    "starts": [[0.0, 0.0, 0.0, 0.0]],
}

_TWO_MODE = {
    "name": "two-mode-neg-density",
    "wavefunction": {
        "mass": 1.0,
        "particles": 1,
        "terms": [
            {"coefficient": [1.0, 0.0],
             "modes": [{"momentum": [1.0, 0.0, 0.0], "sign": 1}]},
            {"coefficient": [0.5, 0.0],
             "modes": [{"momentum": [5.0, 0.0, 0.0], "sign": 1}]},
        ],
    },
    "surfaces": {
        "sigma0": {"normal": [1.0, 0.0, 0.0, 0.0], "offset": 0.0},
        "sigma": {"normal": [1.0, 0.0, 0.0, 0.0], "offset": 2.0},
    },
    "patches": {
        "sigma0": {"bounds": [[-0.6, 0.6], [0.0, 0.0], [0.0, 0.0]],
                   "grid": [240, 1, 1]},
        "sigma": {"bounds": [[0.4, 2.4], [0.0, 0.0], [0.0, 0.0]],
                  "grid": [1000, 1, 1]},
    },
    "integrator": {"s_max": 25.0},
    "ensemble": {"samples": 10000, "seed": 7},
    "starts": [[0.0, 0.5, 0.0, 0.0]],
}

_NONREL_PACKET = {
    "name": "nonrel-packet",
    "wavefunction": {
        "mass": 1.0,
        "particles": 1,
        "gaussian_packet": {"center": [0.0, 0.0, 0.0], "sigma": 0.0025,
                            "points_per_axis": 21, "span_sigmas": 4.0,
                            "axes": [0]},
    },
    "integrator": {"s_max": 5.0},
    "starts": [[0.0, 0.0, 0.0, 0.0]],
}

_ENTANGLED = {
    "name": "entangled-pair",
    "wavefunction": {
        "mass": 1.0,
        "particles": 2,
        "symmetrize": True,
        "terms": [
            {"coefficient": [1.0, 0.0],
             "modes": [{"momentum": [0.6, 0.0, 0.0], "sign": 1},
                       {"momentum": [-0.4, 0.0, 0.0], "sign": 1}]},
            {"coefficient": [0.6, 0.0],
             "modes": [{"momentum": [-0.5, 0.0, 0.0], "sign": 1},
                       {"momentum": [0.7, 0.0, 0.0], "sign": 1}]},
        ],
    },
    "integrator": {"s_max": 10.0},
    "starts": [[[0.0, 0.2, 0.0, 0.0], [0.0, -0.2, 0.0, 0.0]]],
}


def _boosted_doc(base: dict, name: str, beta: float) -> dict:
    doc = {
        "name": name,
        "wavefunction": {
            "mass": base["wavefunction"]["mass"],
            "particles": base["wavefunction"]["particles"],
            "terms": [
                {"coefficient": list(t["coefficient"]),
                 "modes": [{"momentum": [_boosted_momentum(m["momentum"][0], beta),
                                         0.0, 0.0],
                            "sign": m["sign"]} for m in t["modes"]]}
                for t in base["wavefunction"]["terms"]
            ],
        },
        "surfaces": {
            k: {"normal": _boosted_normal(beta), "offset": v["offset"]}
            for k, v in base["surfaces"].items()
        },
        # the adapted frame of a boosted normal is the boosted lab frame, so
        # patch coordinates carry over unchanged
        "patches": {k: {"bounds": [list(b) for b in v["bounds"]],
                        "grid": list(v["grid"])}
                    for k, v in base["patches"].items()},
        "integrator": dict(base["integrator"]),
        "ensemble": dict(base["ensemble"]),
    }
    transform = boost(np.array([beta, 0.0, 0.0]))
    doc["starts"] = [
        (np.asarray(st, dtype=float).reshape(-1, 4) @ transform.matrix.T).tolist()
        for st in base.get("starts", [])
    ]
    return doc


_BUILTINS = {
    "planewave": _PLANEWAVE,
    "two-mode-neg-density": _TWO_MODE,
    "nonrel-packet": _NONREL_PACKET,
    "entangled-pair": _ENTANGLED,
    "planewave-boosted": _boosted_doc(_PLANEWAVE, "planewave-boosted", _BETA_06),
    "two-mode-boosted": _boosted_doc(_TWO_MODE, "two-mode-boosted", _BETA_03),
}

#: Scenarios a full verification battery is expected to pass.
BUILTIN_NAMES = tuple(_BUILTINS)

#: The deliberate-failure fixture accepted by the verify command.
OFFSHELL_FIXTURE = "offshell-fixture"


def builtin_document(name: str) -> dict:
    """Deep copy of a builtin scenario's configuration document."""
    import copy

    if name not in _BUILTINS:
        raise KeyError(f"unknown builtin scenario '{name}'")
    return copy.deepcopy(_BUILTINS[name])


def load_builtin(name: str) -> Scenario:
    """Builtin scenario by name, including the off-shell detector fixture."""
    if name == OFFSHELL_FIXTURE:
        scenario = scenario_from_dict({
            "name": OFFSHELL_FIXTURE,
            "wavefunction": {"mass": 1.0, "particles": 1,
                             "terms": [{"coefficient": [1.0, 0.0],
                                        "modes": [{"momentum": [0.7, 0.0, 0.0],
                                                   "sign": 1}]}]},
            "starts": [[0.0, 0.0, 0.0, 0.0]],
        })
        # test-only backdoor: force the energy onto p0 = m, off the shell
        scenario.psi = WaveFunction._from_four_momenta(
            1.0, 1, [1.0], np.array([[[1.0, 0.7, 0.0, 0.0]]]), check_shell=False)
        return scenario
    return scenario_from_dict(builtin_document(name))
