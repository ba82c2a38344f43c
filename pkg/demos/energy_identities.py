"""Convergence of the discrete energy identities on the catenoid.

Each identity holds exactly in the continuum; on the grid the residual
should fall at the order of the finite-difference stencils.
Run with ``python3 demos/energy_identities.py``.
"""

from holoray.connections import su2_bump
from holoray.fields import random_field, random_omega_field
from holoray.geometry import build_grid, catenoid
from holoray.vertical import (FrameOperators, commutator_residual, pestov_residual, pestov_residual_omega_m,
                              structure_residuals)

model = catenoid()
pair = su2_bump(model, beta=1.0)

print("  N   pestov     omega_2    commutator  [X,Xperp]+KV")
for N in (12, 16, 24, 32):
    g = build_grid(model, N, N, 32)
    ops = FrameOperators(g, pair)
    u = random_field(g, 0, n=2, theta_degree=3, dirichlet=True)
    w = random_omega_field(g, 1, 2, n=2, dirichlet=True)
    z = random_field(g, 2, n=2, theta_degree=3)
    p = pestov_residual(u, pair, ops).relative_residual
    o = pestov_residual_omega_m(w, pair, 2, ops=ops).relative_residual
    c = commutator_residual(z, pair, ops).relative_residual
    s = structure_residuals(z, pair, ops)["bracket_X_Xperp"].relative_residual
    print(f" {N:3d}  {p:.2e}   {o:.2e}   {c:.2e}    {s:.2e}")
