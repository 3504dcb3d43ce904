"""
Symmetry breaking along J at G = 3
==================================

With the detuning locked to the band bottom (Delta = -J), a finite hopping
feeds each site a coherent drive proportional to <a>.  Past a critical J
the self-consistency loop acquires a pair of solutions +-alpha.
"""

import numpy as np

from kerrlattice.lindblad import BAND_BOTTOM, ModelParams
from kerrlattice.observables import occupation, purity
from kerrlattice.steadystate import search_branches
from kerrlattice.sweep import detect_jc

base = ModelParams(g=3.0, delta_mode=BAND_BOTTOM)

print(" J      |alpha|^2    n        purity   branches")
for j in np.linspace(0.1, 0.8, 8):
    found = search_branches(base.with_j(j), n_levels=30)
    b = found.branches[-1]
    print(f"{j:4.2f}  {abs(b.alpha)**2:9.5f}  {occupation(b.rho):8.5f}  {purity(b.rho):7.4f}   {len(found.branches)}")

# bisection on the presence of the broken branch
jc = detect_jc(3.0, BAND_BOTTOM, j_bracket=(0.2, 0.5), tol=1e-4, n_levels=30)
print("J_c ~", round(jc, 4))

# close to J_c the order parameter grows like sqrt(J - J_c)
for d in (1e-3, 4e-3, 1.6e-2):
    a = search_branches(base.with_j(jc + d), n_levels=30).branches[-1].alpha
    print(f"J - J_c = {d:.1e}:  |alpha| / sqrt(J - J_c) = {abs(a) / np.sqrt(d):.3f}")
