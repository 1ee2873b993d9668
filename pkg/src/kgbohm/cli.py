"""Command-line front end: simulate trajectories, classify a measurement
surface, run crossing ensembles, and run the verification battery.

Exit codes: 0 success, 1 failed verification check, 2 configuration error,
3 node at a start point, 4 negative density on the initial window,
5 too many unresolved cells.
"""
from __future__ import annotations

import argparse
import datetime
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import Scenario, load_scenario
from .dynamics import (
    EscapedBounds,
    ReachedSMax,
    ReachedSurface,
    StepUnderflow,
    SurfaceStop,
    integrate_trajectory,
)
from .ensemble import (
    compare_to_prediction,
    normalize_on_surface,
    propagate_ensemble,
    sample_initial,
    sample_uniform,
    write_histogram_csv,
)
from .errors import (
    ConfigError,
    InitialDensityNegative,
    KGBohmError,
    NodeEncountered,
    TooManyUnresolved,
)
from .scenarios import BUILTIN_NAMES, OFFSHELL_FIXTURE, load_builtin
from .spacetime import METRIC_SIGNS
from .surface import (
    ClassifyControls,
    classify_patch,
    measurable_distribution,
    partition_summary,
    write_partition_csv,
    write_rho_grid_csv,
)
from .verify import reports_to_payload, run_all_suites
from ._fmt import fmt, write_json

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_START_NODE = 3
EXIT_INITIAL_DENSITY = 4
EXIT_UNRESOLVED = 5

_CAUSAL_TOL = 1e-9


def _thread_count(args) -> int:
    if getattr(args, "threads", None):
        return max(1, args.threads)
    env = os.environ.get("KG_BOHM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _timestamp() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _term_payload(term) -> dict:
    if isinstance(term, ReachedSurface):
        return {"type": "reached_surface", "s": term.s,
                "direction": term.direction,
                "point": [float(c) for c in term.point.reshape(-1)]}
    if isinstance(term, ReachedSMax):
        return {"type": "reached_s_max", "s": term.s}
    if isinstance(term, NodeEncountered):
        return {"type": "node_encountered", "s": term.s, "density": term.density}
    if isinstance(term, StepUnderflow):
        return {"type": "step_underflow", "s": term.s, "step": term.step}
    if isinstance(term, EscapedBounds):
        return {"type": "escaped_bounds", "s": term.s}
    return {"type": type(term).__name__}


def _causal_letter(vel) -> str:
    n2 = float((vel * vel * METRIC_SIGNS).sum())
    if n2 > _CAUSAL_TOL:
        return "T"
    if n2 < -_CAUSAL_TOL:
        return "S"
    return "L"


def _parse_start(text: str, particles: int) -> np.ndarray:
    rows = text.split(";")
    if len(rows) != particles:
        raise ConfigError("--start", f"expected {particles} point(s), got {len(rows)}")
    out = []
    for row in rows:
        comps = row.split(",")
        if len(comps) != 4:
            raise ConfigError("--start", f"'{row}' is not t,x,y,z")
        try:
            out.append([float(c) for c in comps])
        except ValueError:
            raise ConfigError("--start", f"'{row}' has a non-numeric component") from None
    return np.array(out)


def _load(args) -> Scenario:
    return load_scenario(args.config)


def cmd_simulate(args) -> int:
    scenario = _load(args)
    starts = list(scenario.starts)
    starts += [_parse_start(s, scenario.psi.particles) for s in args.start]
    if not starts:
        raise ConfigError("starts", "no start points given (config or --start)")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stop = SurfaceStop(scenario.sigma, 0) if scenario.sigma is not None else None

    entries = []
    for k, cfg0 in enumerate(starts):
        traj = integrate_trajectory(scenario.psi, cfg0, scenario.s_max,
                                    scenario.controls, stop=stop)
        if isinstance(traj.termination, NodeEncountered) and not traj.samples:
            print(f"start point {k} sits on a node "
                  f"(density {traj.termination.density:g})", file=sys.stderr)
            return EXIT_START_NODE
        name = f"trajectory_{k:03d}.csv"
        _write_trajectory_csv(traj, scenario.psi.particles, out / name)
        entries.append({"file": name, "samples": len(traj.samples),
                        "termination": _term_payload(traj.termination)})
        print(f"trajectory {k}: {len(traj.samples)} samples, "
              f"{_term_payload(traj.termination)['type']} -> {out / name}")

    write_json(out / "manifest.json", {
        "command": "simulate",
        "version": __version__,
        "timestamp": _timestamp(),
        "config": scenario.to_dict(),
        "trajectories": entries,
    })
    return EXIT_OK


def _write_trajectory_csv(traj, particles: int, path):
    header = ["s"]
    for a in range(1, particles + 1):
        header += [f"t_{a}", f"x_{a}", f"y_{a}", f"z_{a}"]
    header += [f"vclass_{a}" for a in range(1, particles + 1)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for p in traj.samples:
            cells = [fmt(float(p.s))]
            for a in range(particles):
                cells += [fmt(float(c)) for c in p.configuration[a]]
            cells += [_causal_letter(p.velocities[a]) for a in range(particles)]
            fh.write(",".join(cells) + "\n")


def _classify(scenario: Scenario):
    if scenario.psi.particles != 1:
        raise ConfigError("wavefunction.particles", "classification is single-particle")
    if scenario.sigma0 is None or scenario.sigma is None or scenario.patch is None:
        raise ConfigError("surfaces", "classification needs sigma0, sigma and a sigma patch")
    trace = replace(scenario.controls,
                    max_step=min(scenario.controls.max_step, 0.002))
    controls = ClassifyControls(integrator=trace, sigma0_window=scenario.patch0)
    return classify_patch(scenario.psi, scenario.patch, scenario.sigma0, controls)


def cmd_classify(args) -> int:
    scenario = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    part = _classify(scenario)
    dist = measurable_distribution(part)

    write_partition_csv(part, out / "partition.csv")
    write_rho_grid_csv(part, out / "rho_grid.csv")
    summary = partition_summary(part)
    summary["measurable_integral"] = dist.integral
    write_json(out / "summary.json", {
        "command": "classify",
        "version": __version__,
        "config": scenario.to_dict(),
        "summary": summary,
    })
    cells = summary["cells"]
    print(f"partition: {cells['sigma_prime']} prime, {cells['sigma_plus']} plus, "
          f"{cells['sigma_minus']} minus, {cells['unresolved']} unresolved")
    print(f"pair flux defect: {summary['flux_pair_defect']:.3e}")
    return EXIT_OK


def cmd_ensemble(args) -> int:
    scenario = _load(args)
    if scenario.ensemble_samples is None:
        raise ConfigError("ensemble", "scenario carries no ensemble settings")
    if scenario.patch0 is None:
        raise ConfigError("patches.sigma0", "ensembles need an initial-surface patch")
    seed = args.seed if args.seed is not None else scenario.seed
    threads = _thread_count(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    part = _classify(scenario)
    measurable_distribution(part)  # enforces the unresolved-cell budget

    dist = normalize_on_surface(scenario.psi, scenario.patch0)
    n = scenario.ensemble_samples
    if scenario.ensemble_initial == "uniform":
        points = sample_uniform(scenario.patch0, n, seed)
    else:
        points = sample_initial(dist, n, seed)
    result = propagate_ensemble(scenario.psi, points, scenario.patch,
                                controls=scenario.controls, s_max=scenario.s_max,
                                threads=threads, seed=seed)
    report = compare_to_prediction(result, part)

    write_histogram_csv(result, part, out / "histogram.csv")
    write_json(out / "report.json", {
        "command": "ensemble",
        "version": __version__,
        "config": scenario.to_dict(),
        "normalization": dist.normalization,
        "tail_flagged": dist.tail_flagged,
        "initial": scenario.ensemble_initial,
        "comparison": report.to_dict(),
        "partition": partition_summary(part),
    })
    write_json(out / "manifest.json", {
        "command": "ensemble",
        "version": __version__,
        "timestamp": _timestamp(),
        "config": scenario.to_dict(),
        "seed": seed,
    })
    print(f"ensemble: {result.crossings} crossings / {n} samples, "
          f"{report.hits_paired_interior} in the paired interior, "
          f"p-value {report.p_value}")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.scenario and args.config:
        raise ConfigError("verify", "give a builtin name or --config, not both")
    if args.scenario:
        known = BUILTIN_NAMES + (OFFSHELL_FIXTURE,)
        if args.scenario not in known:
            raise ConfigError("verify", f"unknown builtin '{args.scenario}'; "
                                        f"choose from {', '.join(known)}")
        scenario = load_builtin(args.scenario)
    elif args.config:
        scenario = load_scenario(args.config)
    else:
        raise ConfigError("verify", "need a builtin scenario name or --config")

    reports = run_all_suites(scenario)
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.name} ({r.scenario}) tolerance {r.tolerance} "
              f"[{r.runtime_s:.2f}s]")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "verify_report.json", reports_to_payload(reports))
    failed = [r for r in reports if not r.passed]
    print(f"{len(reports) - len(failed)}/{len(reports)} checks passed")
    return EXIT_OK if not failed else EXIT_CHECK_FAILED


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kg-bohm",
        description="Covariant guidance trajectories for free spinless particles: "
                    "simulate, classify measurement surfaces, run crossing "
                    "ensembles, verify identities.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate trajectories from start points")
    p.add_argument("--config", required=True, help="scenario YAML file")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--start", action="append", default=[],
                   help="start configuration 't,x,y,z[;t,x,y,z...]' (repeatable)")
    p.add_argument("--threads", type=int, help="worker threads")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("classify", help="partition the measurement surface patch")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=".")
    p.add_argument("--threads", type=int)
    p.set_defaults(fn=cmd_classify)

    p = sub.add_parser("ensemble", help="first-crossing statistics of an ensemble")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=".")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--threads", type=int)
    p.set_defaults(fn=cmd_ensemble)

    p = sub.add_parser("verify", help="run all applicable verification suites")
    p.add_argument("scenario", nargs="?",
                   help=f"builtin scenario ({', '.join(BUILTIN_NAMES)}, "
                        f"{OFFSHELL_FIXTURE})")
    p.add_argument("--config", help="scenario YAML file instead of a builtin")
    p.add_argument("--out", help="directory for the JSON report")
    p.set_defaults(fn=cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InitialDensityNegative as exc:
        print(f"initial surface density violation: {exc}", file=sys.stderr)
        return EXIT_INITIAL_DENSITY
    except TooManyUnresolved as exc:
        print(f"unresolved cells: {exc}", file=sys.stderr)
        return EXIT_UNRESOLVED
    except KGBohmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
