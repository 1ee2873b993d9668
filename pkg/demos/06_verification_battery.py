"""Run every verification suite against the built-in scenarios.

Covers the pointwise identities (wave equation, conservation, polar form,
Hamilton-Jacobi closure, continuity), boost covariance of currents and
trajectories, the nonrelativistic limit, the causal census, and product-state
factorization versus entangled coupling.
"""
from kgbohm.scenarios import BUILTIN_NAMES, load_builtin
from kgbohm.verify import run_all_suites

for name in BUILTIN_NAMES:
    reports = run_all_suites(load_builtin(name))
    failed = [r for r in reports if not r.passed]
    print(f"{name}: {len(reports) - len(failed)}/{len(reports)} checks passed")
    for r in reports:
        mark = "ok " if r.passed else "FAIL"
        print(f"  [{mark}] {r.name:38s} {r.tolerance}")
    print()
