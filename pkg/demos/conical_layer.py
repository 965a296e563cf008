"""Axisymmetric modes of a conical layer.

The layer around a cone of half-angle theta separates into Fourier modes.
Sharp cones trap several modes; the count grows with the truncation radius.
"""
import math

from polylayer import spectra

PI2 = math.pi ** 2

for theta in (0.2, math.pi / 4):
    for r_max in (20.0, 40.0):
        s = spectra.solve_cone(theta, r_max=r_max, h=0.05, modes=(0, 1))
        vals = ", ".join(f"{v / PI2:.6f}" for v in s.computed[:4])
        print(f"theta {theta:.3f}, r_max {r_max:4.0f}: count {s.count} "
              f"(per mode {s.mode_counts}), lowest computed [{vals}] pi^2")
