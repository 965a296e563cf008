"""Opening a trihedral angle can create a bound state.

The trihedral angle (pi/2, pi/2, eps) is dominated by the octant in every
vertex and every dihedral angle.  The sharp edge lowers its threshold so much
that nothing is trapped below it, while the octant traps one mode.
"""
import math

from polylayer import sweeps

PI2 = math.pi ** 2
rep = sweeps.nonmonotone_demo(eps=0.3)
for name, alphas, betas, thr, count in zip(("narrow", "octant"), rep["alphas"], rep["betas"],
                                            rep["thresholds"], rep["counts"]):
    print(f"{name}: vertex angles {[round(float(a), 4) for a in alphas]}, "
          f"dihedral angles {[round(float(b), 4) for b in betas]}, threshold {thr / PI2:.5f} pi^2, count {count}")
print("vertex dominance:", rep["vertex_dominance"], " dihedral dominance:", rep["dihedral_dominance"])
