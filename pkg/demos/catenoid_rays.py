"""Rays on the catenoid: exit times, the Clairaut integral and the trapped equator.

Run with ``python3 demos/catenoid_rays.py``.
"""

import numpy as np

from holoray.dynamics import BoundaryGrid, PhasePoint, fit_decay_rate, integrate_ray, trace, volume_decay
from holoray.geometry import build_grid, catenoid

model = catenoid()

# The meridian climbs straight from v = -1 to v = +1.
ray = integrate_ray(model, PhasePoint(0.0, -1.0, np.pi / 2), 0.001)
print(f"meridian exit time {ray.exit_time:.12f}   2 sinh(1) = {2 * np.sinh(1.0):.12f}")

# Rays from the lower circle at increasingly shallow angles.  Once the
# Clairaut value cos(theta) cosh(v) reaches 1 the ray can no longer cross
# the neck and spirals towards the closed geodesic v = 0.
print("\n angle   clairaut   exit time   exit v")
for angle in (1.5, 1.2, 0.9, 0.7, 0.6):
    r = integrate_ray(model, PhasePoint(0.0, -1.0, angle), 0.01)
    end = f"{r.exit_time:9.4f}   {r.end.x2:+.3f}" if r.status == "exited" else "  capped"
    print(f" {angle:5.2f}   {r.clairaut:8.4f}   {end}")

# Exit time as the entry angle approaches the trapped value grows like
# -log|c - 1|, the signature of a hyperbolic closed orbit.
crit = float(np.arccos(1 / np.cosh(1.0)))
eps = np.logspace(-2, -8, 7)
res = trace(model, np.zeros(eps.size), -np.ones(eps.size), crit + eps, 0.01, 80.0)
print("\n offset     exit time")
for e, t in zip(eps, res.exit_time):
    print(f" {e:8.1e}   {t:8.3f}")

# Liouville measure of points still inside after time t.
grid = build_grid(model, 16, 16, 32)
curve = volume_decay(model, grid, np.arange(0.0, 21.0), h=0.02)
slope, r2 = fit_decay_rate(curve, 5.0, 20.0)
print(f"\nV(0) = {curve[0][1]:.3f}, log V(t) slope on [5, 20] = {slope:.4f} (R^2 = {r2:.6f})")

# The boundary grid never samples tangential directions.
bg = BoundaryGrid(model, 8, 8)
print(f"boundary grid: {len(bg)} entries, {int(bg.near_trapped.sum())} flagged near-trapped")
