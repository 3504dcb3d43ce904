"""
A single Kerr site with two-photon drive
========================================

Without hopping (J = 0) every site is an isolated Kerr oscillator driven by
photon pairs.  Its steady state is a mixture of an even and an odd cat, so
the field expectation vanishes while the Wigner function has two lobes.
"""

import numpy as np

from kerrlattice.lindblad import ModelParams
from kerrlattice.observables import occupation, parity_expectation, purity, wigner
from kerrlattice.steadystate import steady_state_at_fixed_alpha

params = ModelParams(g=3.0, j=0.0, delta=0.0)
rho = steady_state_at_fixed_alpha(params, 0.0, n_levels=40)

print("occupation n     =", round(occupation(rho), 6))
print("purity Tr rho^2  =", round(purity(rho), 6))  # close to 1/2: two-state mixture
print("parity <P>       =", round(parity_expectation(rho), 6))

# Wigner function on a coarse grid, printed as rough ASCII art
xs = np.linspace(-3, 3, 31)
w = wigner(rho, (xs, xs))
chars = " .:-=+*#%@"
scale = w.values.max()
for row in w.values[::-2]:
    print("".join(chars[int(max(v, 0) / scale * (len(chars) - 1))] for v in row))
# the two lobes sit at +-z0; the mixture is symmetric under z -> -z
z0 = w.argmax(refine=True)
print("lobes near z = +-", np.round(z0, 3))
