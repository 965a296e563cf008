"""Bound state of a planar guide bent to a right angle.

A unit-width strip with half-opening pi/4 traps exactly one mode below the
straight-strip threshold pi^2.  We solve on three refinement levels and
extrapolate.
"""
import math

from polylayer import spectra

PI2 = math.pi ** 2
theta = math.pi / 4

levels = spectra.spectrum_levels(spectra.solve_vguide, 3, theta=theta, L=4.0, h=0.025, k=1)
for s in levels:
    print(f"level {s.discretization['refinements']}: {s.n_dofs:7d} unknowns, "
          f"count {s.count}, lambda_1 = {s.lambda1 / PI2:.7f} pi^2")

rep = spectra.extrapolate(lambda lvl: levels[lvl].lambda1, 3)
print(f"extrapolated lambda_1 = {rep.estimate / PI2:.7f} pi^2 (observed order {rep.order:.2f})")
print(f"lower bound (1 - cos theta) pi^2 = {(1 - math.cos(theta)):.4f} pi^2")
