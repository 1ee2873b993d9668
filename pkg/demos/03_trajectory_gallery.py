"""A fan of guided trajectories through an interference band.

Worldlines of the two-mode state run forward in time until they meet a band,
swing backwards through it, and re-emerge: an S-shaped excursion that lets a
single worldline cross a constant-time surface three times. The causal census
along the way shows stretches of spacelike (superluminal) motion.
"""
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

import kgbohm as kb
from kgbohm.spacetime import METRIC_SIGNS

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

psi = kb.make_wavefunction(1.0, 1, [
    (1.0, [((1.0, 0.0, 0.0), 1)]),
    (0.5, [((5.0, 0.0, 0.0), 1)]),
])
sigma = kb.Hypersurface(kb.four_vector(1, 0, 0, 0), 2.0)

fig, ax = plt.subplots(figsize=(7, 6))
three_crossers = 0
# the window of starts whose band excursion straddles t = 2 is narrow,
# so the fan is densified around it
starts = np.concatenate([np.linspace(-0.6, 0.6, 25),
                         np.linspace(-0.36, -0.30, 7)])
for x0 in np.sort(starts):
    traj = kb.integrate_trajectory(psi, np.array([[0.0, x0, 0.0, 0.0]]), 8.0)
    pts = traj.configurations[:, 0, :]
    n2 = (traj.velocities[:, 0, :] ** 2 * METRIC_SIGNS).sum(axis=1)
    crossings = kb.find_crossings(traj, sigma)
    if len(crossings) >= 3:
        three_crossers += 1
        if three_crossers == 1:
            print(f"start x0 = {x0:+.3f} crosses t = 2 three times:")
            for ev in crossings[:3]:
                print(f"   s = {ev.s:7.4f}  x = {ev.point[1]:7.4f} "
                      f"direction {ev.direction:+d}")
    ax.plot(pts[:, 1], pts[:, 0], lw=0.8,
            color="firebrick" if len(crossings) >= 3 else "steelblue")
    spacelike = n2 < -1e-9
    if spacelike.any():
        ax.plot(pts[spacelike, 1], pts[spacelike, 0], ".", ms=2, color="orange")

print(f"{three_crossers} of {len(starts)} worldlines make a triple crossing")
ax.axhline(2.0, color="k", ls="--", lw=0.8, label="measurement surface t = 2")
ax.set_xlabel("x")
ax.set_ylabel("t")
ax.set_ylim(0, 3.2)
ax.legend(loc="upper left")
fig.tight_layout()
fig.savefig(OUT / "trajectory_gallery.png", dpi=150)
print(f"wrote {OUT / 'trajectory_gallery.png'} (orange dots mark spacelike motion)")
