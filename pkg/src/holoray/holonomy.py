"""Parallel transport cocycles, attenuated ray transforms and scattering data."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .connections import ConnectionPair
from .dynamics import (CAPPED, EXITED, BoundaryGrid, PhasePoint, connection_matrix, outside_distance,
                       trace)
from .fields import FiberField, mode_numbers
from .geometry import ConfigurationError, DomainError, SMGrid, SurfaceModel, inner_normal_dot


class PartialTrajectoryError(RuntimeError):
    def __init__(self, exit_time: float):
        super().__init__(f"trajectory left the surface at t={exit_time:.6g}")
        self.exit_time = exit_time


class TrappedRayError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# sampling grid fields along rays

def _axis_stencil(x, a, b, count, periodic):
    """Cubic Lagrange stencil: indices and weights, both ``(P, 4)``."""
    if periodic:
        hx = (b - a) / count
        s = (x - a) / hx
        i0 = np.floor(s).astype(int)
        t = s - i0
        idx = (i0[:, None] + np.arange(-1, 3)) % count
    else:
        hx = (b - a) / (count - 1)
        s = (x - a) / hx
        i0 = np.clip(np.floor(s).astype(int), 1, count - 3)
        t = s - i0
        idx = i0[:, None] + np.arange(-1, 3)
    w = np.stack([-t * (t - 1) * (t - 2) / 6, (t + 1) * (t - 1) * (t - 2) / 2,
                  -(t + 1) * t * (t - 2) / 2, (t + 1) * t * (t - 1) / 6], axis=1)
    return idx, w


def interpolation_stencil(grid: SMGrid, x1, x2):
    """Flat base-node indices and weights ``(P, 16)`` of bicubic interpolation."""
    m = grid.model
    (a1, b1), (a2, b2) = m.domain
    n1, n2 = grid.counts[0], grid.counts[1]
    i1, w1 = _axis_stencil(np.asarray(x1, float), a1, b1, n1, m.periodic[0])
    i2, w2 = _axis_stencil(np.asarray(x2, float), a2, b2, n2, m.periodic[1])
    idx = (i1[:, :, None] * n2 + i2[:, None, :]).reshape(-1, 16)
    w = (w1[:, :, None] * w2[:, None, :]).reshape(-1, 16)
    return idx, w


class FieldSampler:
    """Evaluate a finite-degree field at arbitrary phase points.

    Base dependence is bicubic interpolation; the fibre dependence is the
    exact trigonometric polynomial of the retained modes.
    """

    def __init__(self, grid: SMGrid, modes: dict):
        self.grid = grid
        self.modes = sorted(int(m) for m in modes)
        n1, n2 = grid.counts[0], grid.counts[1]
        self.coef = np.stack([np.asarray(modes[m], complex).reshape(n1 * n2, -1) for m in self.modes])
        self.n = self.coef.shape[-1]

    @classmethod
    def from_field(cls, f: FiberField, tol: float = 1e-12) -> "FieldSampler":
        modes = f.fourier()
        big = max(float(np.max(np.abs(c))) for c in modes.values())
        keep = {m: c for m, c in modes.items() if np.max(np.abs(c)) > tol * max(big, 1e-300)}
        if not keep:
            keep = {0: modes[0]}
        return cls(f.grid, keep)

    def __call__(self, x1, x2, th):
        idx, w = interpolation_stencil(self.grid, x1, x2)
        out = np.zeros((idx.shape[0], self.n), dtype=complex)
        for k, m in enumerate(self.modes):
            base = np.einsum("ps,psn->pn", w, self.coef[k][idx])
            out += base * np.exp(1j * m * np.asarray(th))[:, None]
        return out


def as_sampler(f, grid: Optional[SMGrid] = None):
    if isinstance(f, FiberField):
        return FieldSampler.from_field(f)
    if callable(f):
        return f
    raise TypeError("f must be a FiberField or a callable (x1, x2, theta) -> (P, n)")


# ---------------------------------------------------------------------------
# cocycle and line integrals

def transport_cocycle(model: SurfaceModel, pair: ConnectionPair, p0: PhasePoint, t: float, h: float) -> np.ndarray:
    """``C(p0, t)`` solving ``dC/dt = -(A + Phi) C`` along the geodesic."""
    if t < 0:
        raise ConfigurationError("duration must be nonnegative")
    if t == 0:
        return np.eye(pair.n, dtype=complex)
    res = trace(model, [p0.x1], [p0.x2], [p0.theta], h, t, pair=pair)
    if res.status[0] == EXITED and res.exit_time[0] < t - 1e-12:
        raise PartialTrajectoryError(float(res.exit_time[0]))
    return res.holonomy[0]


def line_integrals(model, pair, f, x1, x2, th, h, t_max=50.0, damping=0.0):
    """``int_0^{l_+} e^{-damping t} C(p,t)^{-1} f(phi_t p) dt`` for a batch of points.

    Returns ``(values (B, n), TraceResult)``; capped rays keep the truncated
    integral and are flagged by the caller.
    """
    sampler = as_sampler(f)
    B = np.size(x1)
    n = pair.n
    out = np.zeros((B, n), dtype=complex)

    def sink(idx, p1, p2, pt, coef):
        vals = sampler(p1, p2, pt)
        np.add.at(out, idx, np.einsum("bij,bj->bi", coef, vals))

    res = trace(model, x1, x2, th, h, t_max, pair=pair, sink=sink, damping=damping)
    return out, res


def attenuated_transform(model, pair, f, entry: PhasePoint, h: float, t_max: float = 50.0) -> np.ndarray:
    """``h(0)`` for ``h' + (A + Phi) h = -f`` along the ray, ``h(l_+) = 0``."""
    if outside_distance(model, entry.x1, entry.x2) < -1e-9 or inner_normal_dot(model, (entry.x1, entry.x2), entry.theta) <= 0:
        raise DomainError("entry is not an incoming boundary point")
    vals, res = line_integrals(model, pair, f, [entry.x1], [entry.x2], [entry.theta], h, t_max)
    if res.status[0] == CAPPED:
        raise TrappedRayError("ray from entry does not exit before t_max")
    return vals[0]


def _grid_points(grid: SMGrid):
    X1, X2 = grid.mesh()
    nt = grid.counts[2]
    x1 = np.repeat(X1[..., None], nt, axis=2).ravel()
    x2 = np.repeat(X2[..., None], nt, axis=2).ravel()
    th = np.broadcast_to(grid.theta, (grid.counts[0], grid.counts[1], nt)).ravel()
    return x1, x2, th


def transport_solve(model, pair, f, grid: SMGrid, h: float, t_max: float = 50.0, damping: float = 0.0) -> FiberField:
    """Solve ``(X + A + Phi) u = -f`` with ``u = 0`` on the outgoing boundary.

    ``u(p)`` is the line integral from ``p`` to its exit; nodes whose ray is
    capped are set to 0 and flagged.
    """
    if model.closed:
        raise ConfigurationError("transport solves need a model with boundary")
    x1, x2, th = _grid_points(grid)
    vals, res = line_integrals(model, pair, f, x1, x2, th, h, t_max, damping)
    trapped = res.status == CAPPED
    vals[trapped] = 0.0
    shape = tuple(grid.counts)
    return FiberField(grid, vals.reshape(shape + (pair.n,)), flags=trapped.reshape(shape))


def resolvent_apply(model, pair, f, lam: float, grid: SMGrid, h: float, t_max: float = 50.0) -> FiberField:
    """``R_+(lam) f = int_0^{l_+} e^{-lam t} C^{-1} f(phi_t) dt`` per node, ``lam > 0``."""
    if not lam > 0:
        raise ConfigurationError("resolvent parameter must be positive")
    if model.closed:
        x1, x2, th = _grid_points(grid)
        vals, _ = line_integrals(model, pair, f, x1, x2, th, h, t_max, lam)
        return FiberField(grid, vals.reshape(tuple(grid.counts) + (pair.n,)))
    return transport_solve(model, pair, f, grid, h, t_max, damping=lam)


def flow_residual(model, pair, f, points, h: float, delta: float = 1e-2, lam: float = 0.0, t_max: float = 50.0):
    """Relative residual of ``X u + (A + Phi) u - lam u + f = 0`` at phase points.

    ``u`` is the damped line integral; ``X u`` is a central difference along
    the flow with offset ``delta``.  Returns ``(residual_norm, scale)`` with
    ``scale = max(|Xu|, |f|)`` so the ratio is a relative error.
    """
    sampler = as_sampler(f)
    x1, x2, th = (np.asarray(c, float) for c in points)
    fwd = trace(model, x1, x2, th, h, delta)
    back = trace(model, x1, x2, th + np.pi, h, delta)
    if np.any(fwd.status == EXITED) or np.any(back.status == EXITED):
        raise DomainError("residual points must stay inside for +-delta")
    pf, pb = fwd.end, back.end
    u0, _ = line_integrals(model, pair, sampler, x1, x2, th, h, t_max, lam)
    up, _ = line_integrals(model, pair, sampler, pf[:, 0], pf[:, 1], pf[:, 2], h, t_max, lam)
    um, _ = line_integrals(model, pair, sampler, pb[:, 0], pb[:, 1], pb[:, 2] - np.pi, h, t_max, lam)
    Xu = (up - um) / (2 * delta)
    Amat = connection_matrix(model, pair, x1, x2, th)
    res = Xu + np.einsum("bij,bj->bi", Amat, u0) - lam * u0 + sampler(x1, x2, th)
    scale = max(np.linalg.norm(Xu), np.linalg.norm(sampler(x1, x2, th)))
    return float(np.linalg.norm(res)), float(scale)


# ---------------------------------------------------------------------------
# scattering data

@dataclass
class ScatteringRecord:
    entry: tuple           # (x1, x2, theta) on d_-(SM)
    exit: Optional[tuple]  # (x1, x2, theta) on d_+(SM), None if trapped
    holonomy: Optional[np.ndarray]
    transit_time: float

    def unitarity_defect(self) -> float:
        C = self.holonomy
        return float(np.linalg.norm(C.conj().T @ C - np.eye(C.shape[0]), 2))


def _wrap_exit(model, end):
    x1 = end[:, 0].copy()
    if model.periodic[0]:
        a, b = model.domain[0]
        x1 = a + (x1 - a) % (b - a)
    return np.stack([x1, end[:, 1], end[:, 2] % (2 * np.pi)], axis=1)


def parallel_transport_data(model, pair, entry: PhasePoint, h: float, t_max: float = 50.0) -> ScatteringRecord:
    """Holonomy of the pair along the ray from an incoming boundary point."""
    if inner_normal_dot(model, (entry.x1, entry.x2), entry.theta) <= 0:
        raise DomainError("entry is not an incoming boundary point")
    res = trace(model, [entry.x1], [entry.x2], [entry.theta], h, t_max, pair=pair)
    e = (entry.x1, entry.x2, entry.theta)
    if res.status[0] == CAPPED:
        return ScatteringRecord(e, None, None, float("inf"))
    ex = _wrap_exit(model, res.end)[0]
    return ScatteringRecord(e, tuple(float(v) for v in ex), res.holonomy[0], float(res.exit_time[0]))


@dataclass
class ScatteringTable:
    """Vectorised scattering data over the usable entries of a boundary grid."""

    bgrid: BoundaryGrid
    index: np.ndarray        # entry indices into the boundary grid
    exit: np.ndarray         # (K, 3)
    holonomy: np.ndarray     # (K, n, n)
    transit_time: np.ndarray

    def records(self):
        g = self.bgrid
        return [ScatteringRecord((float(g.x1[i]), float(g.x2[i]), float(g.theta[i])), tuple(map(float, e)), C, float(t))
                for i, e, C, t in zip(self.index, self.exit, self.holonomy, self.transit_time)]


def scattering_table(model, pair, bgrid: BoundaryGrid, h: float, t_max: float = 50.0) -> ScatteringTable:
    use = np.flatnonzero(~bgrid.near_trapped)
    res = trace(model, bgrid.x1[use], bgrid.x2[use], bgrid.theta[use], h, t_max, pair=pair)
    ok = res.status == EXITED
    return ScatteringTable(bgrid, use[ok], _wrap_exit(model, res.end[ok]), res.holonomy[ok], res.exit_time[ok])


def scattering_data(model, pair, bgrid: BoundaryGrid, h: float, t_max: float = 50.0):
    """One record per non-trapped entry of ``bgrid``."""
    return scattering_table(model, pair, bgrid, h, t_max).records()


def write_scattering_csv(path, table: ScatteringTable):
    """CSV with entry/exit data and row-major interleaved real/imag holonomy."""
    g = table.bgrid
    n = table.holonomy.shape[-1]
    head = ["entry_u", "entry_v", "entry_angle", "exit_u", "exit_v", "exit_angle", "transit_time"]
    head += [f"C{i}{j}_{p}" for i in range(n) for j in range(n) for p in ("re", "im")]
    with open(path, "w") as fh:
        fh.write(",".join(head) + "\n")
        for k, i in enumerate(table.index):
            C = table.holonomy[k].ravel()
            row = [g.x1[i], g.x2[i], g.theta[i], *table.exit[k], table.transit_time[k]]
            row += [v for c in C for v in (c.real, c.imag)]
            fh.write(",".join(f"{v:.12e}" for v in row) + "\n")


def write_ray_csv(path, model, bgrid: BoundaryGrid, h: float, t_max: float = 50.0):
    """Ray batch CSV: entry/exit coordinates, exit time, Clairaut value, status."""
    res = trace(model, bgrid.x1, bgrid.x2, bgrid.theta, h, t_max)
    ex = _wrap_exit(model, res.end)
    cl = np.cos(bgrid.theta) * np.cosh(bgrid.x2) if model.name == "catenoid" else np.full(len(bgrid), np.nan)
    with open(path, "w") as fh:
        fh.write("entry_u,entry_angle,exit_u,exit_angle,exit_time,clairaut,status\n")
        for i in range(len(bgrid)):
            st = "exited" if res.status[i] == EXITED else "trapped"
            fh.write(f"{bgrid.x1[i]:.12e},{bgrid.theta[i]:.12e},{ex[i, 0]:.12e},{ex[i, 2]:.12e},"
                     f"{res.exit_time[i]:.12e},{cl[i]:.12e},{st}\n")
    return res
