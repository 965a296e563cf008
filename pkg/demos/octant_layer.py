"""Layer around the octant (three right vertex angles).

The sharpest edge is a right dihedral angle, so the threshold is the ground
state of the right-angle planar guide, not pi^2.  We solve on the symmetric
half-sector and then vary the tilt on the same mesh.
"""
import math

from polylayer import spectra, sweeps
from polylayer.geometry import LayerSpec, regular_tilt

PI2 = math.pi ** 2
theta = regular_tilt(math.pi / 2, 3)
spec = LayerSpec.regular(3, theta, r_max=12.0)
print(f"tilt {theta:.6f}, dihedral angles {[round(float(b), 6) for b in spec.dihedral_angles]}")

s = spectra.solve_layer(spec, h=0.1)
print(f"threshold {s.threshold / PI2:.5f} pi^2, count {s.count}, lambda_1 = {s.lambda1 / PI2:.5f} pi^2")

res = sweeps.sweep_angle(spec, (0.45, 0.55, 0.61), {"h": 0.1}, k=1)
print("lambda_1 over tilts:", ", ".join(f"{v / PI2:.5f}" for v in res.lambda_j(0)), "pi^2")
