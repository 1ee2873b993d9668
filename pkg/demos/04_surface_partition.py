"""Partitioning the measurement surface: prime, paired, and negative regions.

Each negative-density cell is connected, by an integral curve of the current,
to a unique partner point where the curve re-crosses the surface. The paired
region inherits zero measurable density: trajectories arriving from the
initial surface can never end there first.
"""
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

import kgbohm as kb
from kgbohm.surface import partition_summary

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

psi = kb.make_wavefunction(1.0, 1, [
    (1.0, [((1.0, 0.0, 0.0), 1)]),
    (0.5, [((5.0, 0.0, 0.0), 1)]),
])
sigma0 = kb.Hypersurface(kb.four_vector(1, 0, 0, 0), 0.0)
sigma = kb.Hypersurface(kb.four_vector(1, 0, 0, 0), 2.0)
window = kb.SurfacePatch(sigma0, ((-0.6, 0.6), (0, 0), (0, 0)), (240, 1, 1))
patch = kb.SurfacePatch(sigma, ((0.4, 2.4), (0, 0), (0, 0)), (1000, 1, 1))

part = kb.classify_patch(psi, patch, sigma0, kb.ClassifyControls(sigma0_window=window))
summary = partition_summary(part)
print("cells:", summary["cells"])
print(f"flux over paired regions: {summary['flux_sigma_plus']:+.6f} "
      f"{summary['flux_sigma_minus']:+.6f} "
      f"(defect {summary['flux_pair_defect']:.2e})")

pairing = part.pairings[len(part.pairings) // 2]
curve = pairing.curve.configurations[:, 0, :]
print(f"sample connector: from x = {pairing.minus_point[1]:.4f} "
      f"to x = {pairing.plus_point[1]:.4f} in {len(curve)} steps")

dist = kb.measurable_distribution(part)
x = patch.cell_centers(0)
labels = part.labels[:, 0, 0]

fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 5), sharex=True,
                               height_ratios=[2, 1])
ax1.plot(x, part.density[:, 0, 0], lw=0.8, label="surface density j")
ax1.plot(x, dist.rho[:, 0, 0], lw=1.2, label="measurable density rho")
ax1.axhline(0, color="k", lw=0.5)
ax1.legend()
colors = np.array(["#dddddd", "#f4a261", "#c1121f"])
ax2.bar(x, np.ones_like(x), width=x[1] - x[0], color=colors[labels])
ax2.plot(curve[:, 1], 0.5 + 0.4 * (curve[:, 0] - 2.0) / 0.6, "k-", lw=1.0)
ax2.set_yticks([])
ax2.set_xlabel("x on the t = 2 surface (grey prime, orange paired, red negative;"
               " black: one connector)")
fig.tight_layout()
fig.savefig(OUT / "surface_partition.png", dpi=150)
print(f"wrote {OUT / 'surface_partition.png'}")
