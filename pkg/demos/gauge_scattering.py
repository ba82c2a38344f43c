"""Scattering data sees the connection only up to gauges trivial on the boundary.

An su(2) bump connection is compared with its gauge transform by a map that
is the identity on both boundary circles, and with the trivial connection.
Run with ``python3 demos/gauge_scattering.py``.
"""

import numpy as np

from holoray.connections import boundary_gauge, curvature_star, gauge_transform, su2_bump, trivial
from holoray.dynamics import BoundaryGrid
from holoray.geometry import build_grid, catenoid
from holoray.inversion import gauge_recovery_experiment

model = catenoid()
pair = su2_bump(model, beta=1.0)
r, dr = boundary_gauge(model, 2, gamma=1.0)
gauged = gauge_transform(pair, r, dr)

x1, x2 = np.array([1.0]), np.array([0.2])
print("connection 1-form at an interior point differs:")
print("  |A1 - A1'| =", float(np.abs(pair.evaluate(x1, x2)[0] - gauged.evaluate(x1, x2)[0]).max()))

X1, X2 = build_grid(model, 24, 24, 4).mesh()
_, ev = curvature_star(pair, model, (X1, X2))
_, ev_g = curvature_star(gauged, model, (X1, X2))
print("curvature eigenvalues agree:", float(np.abs(ev - ev_g).max()))

bg = BoundaryGrid(model, 16, 8)
for label, other in (("gauged", gauged), ("trivial", trivial(model, 2))):
    rep = gauge_recovery_experiment(model, pair, other, bg, h=0.005)
    print(f"su2-bump vs {label:7s}: sup distance {rep['sup_distance']:.2e} over {rep['shared_entries']} entries"
          f" -> {rep['verdict']}")

TA, _ = rep["tables"]
C = TA.holonomy
print("worst unitarity defect of the su2-bump holonomies:",
      float(np.abs(np.swapaxes(C.conj(), 1, 2) @ C - np.eye(2)).max()))
