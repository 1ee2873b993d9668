"""Warm-up: a single plane wave, its current, and the straight worldline.

A unit-amplitude positive-frequency mode with spatial momentum k = 1 carries
the constant current j = 2p and guides every trajectory along x(s) = x0 + s p/m.
"""
import numpy as np

import kgbohm as kb

psi = kb.plane_wave(mass=1.0, momentum=(1.0, 0.0, 0.0))
print("mode 4-momentum:", psi.four_momenta[0, 0])

origin = np.zeros((1, 4))
print("psi(0) =", complex(psi.evaluate(origin)))
print("current j =", kb.current(psi, origin, 0), " (expect 2p)")
print("velocity  =", kb.velocity_field(psi, origin)[0], " (expect p/m)")
print("quantum potential =", kb.quantum_potential(psi, origin), " (constant amplitude)")

traj = kb.integrate_trajectory(psi, origin, s_max=10.0)
end = traj.final.configuration[0]
exact = np.array([10 * np.sqrt(2.0), 10.0, 0.0, 0.0])
print(f"\nintegrated to s = 10 in {len(traj.samples)} samples")
print("endpoint      :", end)
print("exact line    :", exact)
print("max deviation :", np.abs(end - exact).max())

sigma = kb.Hypersurface(kb.four_vector(1, 0, 0, 0), 2.0)
stopped = kb.integrate_trajectory(psi, origin, s_max=10.0, stop=sigma)
term = stopped.termination
print(f"\nstopping at the t = 2 surface: s* = {term.s:.12f} (exact sqrt(2))")
print("crossing point:", term.point[0], " direction:", term.direction)
