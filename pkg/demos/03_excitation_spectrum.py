"""
Where the symmetric state becomes unstable
==========================================

Linearizing the lattice around the uniform symmetric state gives one
Liouvillian per lattice momentum k.  A positive Im omega_k marks growth.
At the band bottom the first unstable mode is k = 0; at Delta = 0 and
large J it moves to finite k.
"""

import numpy as np

from kerrlattice.lindblad import BAND_BOTTOM, ModelParams
from kerrlattice.stability import excitation_spectrum

for label, params in [
    ("G=3, J=0.25, Delta=-J", ModelParams(g=3.0, j=0.25, delta_mode=BAND_BOTTOM)),
    ("G=3, J=0.50, Delta=-J", ModelParams(g=3.0, j=0.5, delta_mode=BAND_BOTTOM)),
    ("G=4, J=2.00, Delta=0 ", ModelParams(g=4.0, j=2.0)),
]:
    spec = excitation_spectrum(params, n_levels=30)
    print(f"{label}: max Im omega = {spec.max_im:+.5f} at k = {spec.argmax_k:.3f}")
    # a few points of the dispersion of the least damped mode
    idx = np.linspace(0, len(spec.k_values) - 1, 5).astype(int)
    print("   k     :", " ".join(f"{spec.k_values[i]:+6.2f}" for i in idx))
    print("   Im w  :", " ".join(f"{spec.least_stable[i]:+6.3f}" for i in idx))
