"""
Bistability at Delta = 0
========================

At G = 3.7, J = 1 both the symmetric and the broken state are linearly
stable.  Which one the mean-field dynamics reaches depends on where it
starts; from a small seed the relaxation is very slow.
"""

from kerrlattice.dynamics import (
    IntegratorOptions,
    classify_endpoint,
    coherent_initial_state,
    evolve,
)
from kerrlattice.lindblad import ModelParams
from kerrlattice.sweep import detect_bistability

params = ModelParams(g=3.7, j=1.0, delta=0.0)
bis = detect_bistability(params, n_levels=30)
print("bistable:", bool(bis), " broken alpha =", complex(round(bis.broken_alpha.real, 4), round(bis.broken_alpha.imag, 4)))

opts = IntegratorOptions(t_max=2000, record_interval=1.0)
for a0 in (2.0, 0.25):
    traj = evolve(params, coherent_initial_state(a0, 30), opts)
    print(f"alpha0 = {a0}: {classify_endpoint(traj).value:9s} t = {traj.times[-1]:6.0f}"
          f"  |alpha| = {abs(traj.alphas[-1]):.4f}  purity = {traj.purities[-1]:.3f}")
# from alpha0 = 0.25 the state lingers near the symmetric manifold for over
# a thousand lifetimes before choosing the broken branch; from alpha0 = 0.05
# it decays to the symmetric state instead (t ~ 3e4, see the acceptance tests)
