"""Negative-density bands of a two-mode superposition.

Superposing momenta 1 and 5 (amplitudes 1 and 0.5) makes the time component
of the conserved current oscillate between 11.9 and -1.135: periodic bands
where the density that a naive reading would call a probability goes negative.
This script maps the bands on the t = 2 surface and writes the profile.
"""
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

import kgbohm as kb

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

psi = kb.make_wavefunction(1.0, 1, [
    (1.0, [((1.0, 0.0, 0.0), 1)]),
    (0.5, [((5.0, 0.0, 0.0), 1)]),
])

sigma = kb.Hypersurface(kb.four_vector(1, 0, 0, 0), 2.0)
x = np.linspace(0.4, 2.4, 2000)
points = np.zeros((len(x), 4))
points[:, 0] = 2.0
points[:, 1] = x
j = kb.surface_density(psi, sigma, points)

print(f"surface density on t = 2, x in [0.4, 2.4]")
print(f"  max j = {j.max():.6f}")
print(f"  min j = {j.min():.6f}   (closed form -1.135296)")
neg = x[j < 0]
print(f"  negative band: x in ({neg.min():.6f}, {neg.max():.6f})")

np.savetxt(OUT / "surface_density.csv",
           np.column_stack([x, j]), delimiter=",", header="x,j", comments="")

fig, ax = plt.subplots(figsize=(8, 3.2))
ax.plot(x, j, lw=1.2)
ax.axhline(0.0, color="k", lw=0.6)
ax.fill_between(x, j, 0, where=j < 0, color="crimson", alpha=0.4,
                label="j < 0 band")
ax.set_xlabel("x on the t = 2 surface")
ax.set_ylabel("surface density j")
ax.legend()
fig.tight_layout()
fig.savefig(OUT / "interference_bands.png", dpi=150)
print(f"wrote {OUT / 'surface_density.csv'} and {OUT / 'interference_bands.png'}")
