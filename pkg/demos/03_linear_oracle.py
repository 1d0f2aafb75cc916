"""
Linear oracle: exact and wrong internal models
==============================================

For a linear plant the steady state follows from the Francis equations, so
every quantity the library estimates along trajectories has an independent
closed-form reference.
"""

# %%
import numpy as np

from postreg import integrate, linear_oracle_setup, mismatch_along, tail_stats
from postreg.regulator import ideal_eta1_star

plant, config, z0 = linear_oracle_setup(exo_freqs=(1.0,), chain_length=2, g=2.0, ell=10.0)
data = plant.params["data"]
Pi, Gamma = data.francis()
print("Pi =\n", Pi)
print("Gamma =", Gamma)

# %%
# With ``phi`` matching ``s^2 + 1`` the error vanishes and the plant state
# converges to ``Pi w``.
traj = integrate(plant, config, z0, 60.0)
m = traj.t >= 40
print(f"tail sup|e|     = {tail_stats(traj).sup_abs_e:.2e}")
print(f"max |x - Pi w|  = {np.abs(traj.x[m] - traj.w[m] @ Pi.T).max():.2e}")
print(f"max |u - Gam w| = {np.abs(traj.u[m] - traj.w[m] @ Gamma.T).max():.2e}")
w = traj.w[-1]
print("eta_1 at t=60:", traj.eta[-1, 0], " eta_1* from Francis:",
      ideal_eta1_star(w, Pi @ w, plant, config.gains)[0])

# %%
# Replace ``phi`` by zero (a double integrator). The mismatch ``delta`` is
# now ``eta_1*`` itself, and a nonzero residual error remains; raising ``g``
# shrinks it.
for g in (2.0, 4.0):
    p, c, z = linear_oracle_setup(exo_freqs=(1.0,), chain_length=2, g=g, ell=40.0, d=2, phi="zero")
    tr = integrate(p, c, z, 80.0)
    mm = mismatch_along(tr, p, c, tail_start=60.0)
    print(f"phi = 0, g = {g:g}: tail sup|e| = {tail_stats(tr).sup_abs_e:.3e}, "
          f"delta_bar = {mm.delta_bar:.3f}, blown up = {tr.blown_up}")
