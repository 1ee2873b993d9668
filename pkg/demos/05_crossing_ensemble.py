"""Monte Carlo test of the zero-probability region.

Positions are drawn on the initial surface with weight j, propagated along
the guidance field, and binned where they first meet the measurement surface.
The paired and negative cells collect exactly zero first crossings; prime
cells reproduce the measurable density up to sampling noise.
"""
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

import kgbohm as kb

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
dist = kb.normalize_on_surface(psi, window)
print(f"normalization over the initial window: Z = {dist.normalization:.6f}")

n = 10_000
points = kb.sample_initial(dist, n, seed=7)
result = kb.propagate_ensemble(psi, points, patch, s_max=25.0, seed=7, threads=4)
report = kb.compare_to_prediction(result, part)
print(f"{result.crossings} of {n} samples crossed "
      f"({result.escaped} escaped, {result.node_terminated} hit nodes)")
print(f"first crossings inside the paired region: {report.hits_paired_interior} "
      f"(edge-buffer cells: {report.hits_paired_buffer})")

x = patch.cell_centers(0)
rho = kb.measurable_distribution(part).rho[:, 0, 0]
pred = rho / rho.sum()
emp = result.histogram[:, 0, 0] / max(result.histogram.sum(), 1)

fig, ax = plt.subplots(figsize=(8, 3.6))
ax.step(x, emp, where="mid", lw=0.7, label=f"ensemble frequencies (N = {n})")
ax.plot(x, pred, lw=1.2, label="normalized measurable density")
for lab, color in ((1, "#f4a261"), (2, "#c1121f")):
    sel = part.labels[:, 0, 0] == lab
    if sel.any():
        ax.axvspan(x[sel].min(), x[sel].max(), color=color, alpha=0.25)
ax.set_xlabel("x on the t = 2 surface (shaded: paired / negative bands)")
ax.set_ylabel("probability per cell")
ax.legend()
fig.tight_layout()
fig.savefig(OUT / "crossing_ensemble.png", dpi=150)
print(f"wrote {OUT / 'crossing_ensemble.png'}")
