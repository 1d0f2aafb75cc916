"""
Certifying the high-frequency gain
==================================

The stabilizer needs a matrix ``L`` with ``L' B' P + P B L >= I``. This demo
builds ``L`` from the leading principal minors of ``B`` on a sample of the
example plant and checks the resulting inequalities on a grid.
"""

# %%
import numpy as np

from postreg import emu_factorize, example_setup
from postreg.checks import (
    check_assumption_Dee,
    check_assumption_P_L,
    check_contraction,
    check_minors,
    plant_grid,
)
from postreg.gains import build_L_minors, minors_certificate_P
from postreg.plant import ExamplePlantParams, example_L, example_P

plant, config, _ = example_setup()
B = plant.B(np.array([1.0, 0.0]), np.zeros(3))
f = emu_factorize(B)
print("B =\n", B)
print("E =", np.diag(f.E))
print("M (symmetric positive definite) =\n", f.M)
print("U (strictly upper) =\n", f.U)
print("reconstruction error:", np.linalg.norm(B - f.reconstruct()))

# %%
# Sample ``w`` on the square that contains the exosystem orbit. ``B`` depends
# on ``w`` only, so the plant-state axes get a single point each.
grid = plant_grid(plant, [[0.0, 0.0]] * 3, scheme="grid", count=[41, 41, 1, 1, 1])
B_fn = lambda p: plant.B(p[:2], p[2:])
print(check_minors(B_fn, grid, 0.5).summary())

# %%
# ``L`` from the minors: the certificate is ``P = E M^{-1} E`` per sample.
L_minors, c = build_L_minors([B_fn(p) for p in grid.points()], 0.5)
print("L from minors =", np.diag(L_minors), " c =", c)
margins = []
for p in grid.points():
    Bp, P = B_fn(p), minors_certificate_P(B_fn(p))
    margins.append(np.linalg.eigvalsh(L_minors.T @ Bp.T @ P + P @ Bp @ L_minors)[0] - 1.0)
print(f"worst margin with the minors construction: {min(margins):.3f}")

# %%
# The hand-made ``L`` and ``P(w)`` of the example, and the error-block
# condition with ``M = 1``.
params = ExamplePlantParams()
P = example_P(params)
print(check_assumption_P_L(lambda p: P(p[:2]), example_L(params), B_fn, grid).summary())
print(check_assumption_Dee([[1.0]], plant, config.gains, grid).summary())

# %%
# The contraction test on the same samples fails: ``B`` moves too far from
# any constant reference for a small-gain argument.
print(check_contraction(B_fn, np.eye(2), 0.9, grid).summary())
