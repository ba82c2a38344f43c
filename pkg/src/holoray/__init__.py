"""Attenuated geodesic ray transforms with unitary connections on surfaces."""

from .connections import ConnectionPair, curvature_star, gauge_transform, make_pair
from .dynamics import BoundaryGrid, GeodesicRay, PhasePoint, integrate_ray, scattering_relation, volume_decay
from .fields import FiberField
from .geometry import SMGrid, SurfaceModel, build_grid, make_model
from .holonomy import ScatteringRecord, attenuated_transform, scattering_data, transport_cocycle, transport_solve

__all__ = [
    "BoundaryGrid", "ConnectionPair", "FiberField", "GeodesicRay", "PhasePoint", "SMGrid", "ScatteringRecord",
    "SurfaceModel", "attenuated_transform", "build_grid", "curvature_star", "gauge_transform", "integrate_ray",
    "make_model", "make_pair", "scattering_data", "scattering_relation", "transport_cocycle", "transport_solve",
    "volume_decay",
]
