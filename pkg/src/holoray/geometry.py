"""Surface models in isothermal coordinates and the phase-space grid on SM.

A model is a rectangle in the chart carrying the metric
``g = exp(2*lam) * (dx1**2 + dx2**2)``.  Every metric quantity is derived
from the conformal log-factor ``lam``; the Gaussian curvature is supplied in
closed form so that identity checks do not inherit differentiation error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class DomainError(ValueError):
    """A point lies outside the model, or is not where an operation needs it."""


class ConfigurationError(ValueError):
    """Invalid numerical parameters (grid counts, step sizes, ...)."""


@dataclass(frozen=True)
class SurfaceModel:
    """Isothermal chart ``[a1, b1] x [a2, b2]`` with metric ``e^{2 lam}|dx|^2``.

    The callables take broadcastable arrays ``(x1, x2)`` and return arrays of
    the broadcast shape (``grad_log`` returns a pair).
    """

    name: str
    conformal_log: Callable
    grad_log: Callable
    curvature: Callable
    domain: tuple[tuple[float, float], tuple[float, float]]
    periodic: tuple[bool, bool]
    params: dict = field(default_factory=dict)

    @property
    def closed(self) -> bool:
        return all(self.periodic)

    @property
    def lengths(self) -> tuple[float, float]:
        return tuple(b - a for a, b in self.domain)

    @property
    def bounded_axes(self) -> tuple[int, ...]:
        return tuple(i for i in (0, 1) if not self.periodic[i])

    def contains(self, x1, x2, tol: float = 1e-12):
        """Boolean mask of chart points inside the closed domain."""
        inside = np.ones(np.broadcast(x1, x2).shape, dtype=bool)
        for ax, xa in ((0, x1), (1, x2)):
            if not self.periodic[ax]:
                a, b = self.domain[ax]
                inside &= (xa >= a - tol) & (xa <= b + tol)
        return inside

    def boundary_sides(self):
        """List of ``(axis, value, inward_sign)`` describing each edge of M."""
        sides = []
        for ax in self.bounded_axes:
            a, b = self.domain[ax]
            sides.append((ax, a, 1.0))
            sides.append((ax, b, -1.0))
        return sides

    def is_strip(self) -> bool:
        """Periodic in x1 and bounded in x2: boundary is two circles."""
        return self.periodic == (True, False)


def catenoid() -> SurfaceModel:
    """Catenoid ``cosh^2 v (du^2 + dv^2)`` on ``[0, 2pi) x [-1, 1]``."""
    return SurfaceModel(
        name="catenoid",
        conformal_log=lambda u, v: np.log(np.cosh(v)) + 0.0 * u,
        grad_log=lambda u, v: (0.0 * (u + v), np.tanh(v) + 0.0 * u),
        curvature=lambda u, v: -np.cosh(v) ** -4 + 0.0 * u,
        domain=((0.0, 2 * np.pi), (-1.0, 1.0)),
        periodic=(True, False),
    )


def flat_torus() -> SurfaceModel:
    """Flat square torus ``[0, 2pi)^2``."""
    zero = lambda x1, x2: 0.0 * (x1 + x2)
    return SurfaceModel(
        name="flat-torus",
        conformal_log=zero,
        grad_log=lambda x1, x2: (zero(x1, x2), zero(x1, x2)),
        curvature=zero,
        domain=((0.0, 2 * np.pi), (0.0, 2 * np.pi)),
        periodic=(True, True),
    )


def flat_square(half_width: float = 1.0) -> SurfaceModel:
    """Flat square ``[-w, w]^2``; a non-trapping test domain."""
    zero = lambda x1, x2: 0.0 * (x1 + x2)
    w = float(half_width)
    return SurfaceModel(
        name="flat-square",
        conformal_log=zero,
        grad_log=lambda x1, x2: (zero(x1, x2), zero(x1, x2)),
        curvature=zero,
        domain=((-w, w), (-w, w)),
        periodic=(False, False),
        params={"half_width": w},
    )


MODELS = {
    "catenoid": catenoid,
    "flat-torus": flat_torus,
    "flat-square": flat_square,
}


def make_model(name: str, **params) -> SurfaceModel:
    try:
        factory = MODELS[name]
    except KeyError:
        raise ConfigurationError(f"unknown model {name!r}") from None
    return factory(**params)


def _check_inside(model: SurfaceModel, x1, x2):
    if not np.all(model.contains(x1, x2)):
        raise DomainError(f"point outside {model.name} domain")


def gaussian_curvature(model: SurfaceModel, x) -> np.ndarray:
    """Analytic Gaussian curvature ``K = -e^{-2 lam} Laplacian(lam)`` at ``x``."""
    x1, x2 = np.asarray(x[0], float), np.asarray(x[1], float)
    _check_inside(model, x1, x2)
    return model.curvature(x1, x2)


def inner_normal_dot(model: SurfaceModel, x, theta):
    """``<v, nu>_g`` for the unit vector of angle ``theta`` at a boundary point.

    With ``v = e^{-lam}(cos, sin)`` and ``nu = e^{-lam} e_axis`` (inward),
    the metric factors cancel and only the angle survives.
    """
    x1, x2 = float(x[0]), float(x[1])
    for ax, val, sign in model.boundary_sides():
        if abs((x1, x2)[ax] - val) < 1e-9:
            comp = np.cos(theta) if ax == 0 else np.sin(theta)
            return sign * comp
    raise DomainError("point is not on the boundary")


def boundary_measure_weight(model: SurfaceModel, x, theta) -> float:
    """Density of ``d mu_nu = |<v,nu>| dvol_{dM} dtheta`` per unit chart length.

    The boundary arc-length element along a chart edge is ``e^{lam} dx``.
    """
    dot = inner_normal_dot(model, x, theta)
    lam = model.conformal_log(float(x[0]), float(x[1]))
    return float(abs(dot) * np.exp(lam))


# ---------------------------------------------------------------------------
# differentiation matrices

def fd_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Fornberg weights for derivatives ``0..m`` at ``z`` on nodes ``x``.

    Returns an array of shape ``(len(x), m + 1)``.
    """
    n = len(x)
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c


def fd_matrix(nodes: np.ndarray, order: int = 4) -> np.ndarray:
    """First-derivative matrix with centered stencils and one-sided closures."""
    n = len(nodes)
    width = order + 1
    if n < width:
        raise ConfigurationError(f"need at least {width} nodes for order {order}")
    half = order // 2
    D = np.zeros((n, n))
    for i in range(n):
        lo = min(max(i - half, 0), n - width)
        idx = np.arange(lo, lo + width)
        D[i, idx] = fd_weights(nodes[i], nodes[idx], 1)[:, 1]
    return D


def spectral_wavenumbers(n: int, length: float) -> np.ndarray:
    """Angular wavenumbers for a periodic axis, Nyquist zeroed for d/dx."""
    k = 2 * np.pi * np.fft.fftfreq(n, d=length / n)
    if n % 2 == 0:
        k[n // 2] = 0.0
    return k


def _spectral_diff(arr, k, axis):
    shape = [1] * arr.ndim
    shape[axis] = len(k)
    return np.fft.ifft(np.fft.fft(arr, axis=axis) * (1j * k).reshape(shape), axis=axis)


def _matrix_diff(arr, D, axis):
    out = np.tensordot(D, arr, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


# ---------------------------------------------------------------------------
# phase-space grid

@dataclass(frozen=True, eq=False)
class SMGrid:
    """Node-centred grid on SM with Liouville weights and boundary index sets."""

    model: SurfaceModel
    counts: tuple[int, int, int]
    x1: np.ndarray
    x2: np.ndarray
    theta: np.ndarray
    spacing: tuple[float, float, float]
    axis_weights: tuple[np.ndarray, np.ndarray]
    weights: np.ndarray
    incoming: np.ndarray
    outgoing: np.ndarray
    fd_order: int = 6
    _dmats: dict = field(default_factory=dict, repr=False)

    @property
    def base_shape(self) -> tuple[int, int]:
        return self.counts[0], self.counts[1]

    def mesh(self):
        """Base-grid coordinate arrays of shape ``(N1, N2)``."""
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    @property
    def base_weights(self) -> np.ndarray:
        """Riemannian area weights ``e^{2 lam} w1 w2`` on the base grid."""
        X1, X2 = self.mesh()
        return np.exp(2 * self.model.conformal_log(X1, X2)) * np.outer(*self.axis_weights)

    def boundary_mask(self) -> np.ndarray:
        """Base nodes lying on dM."""
        mask = np.zeros(self.base_shape, dtype=bool)
        if not self.model.periodic[0]:
            mask[[0, -1], :] = True
        if not self.model.periodic[1]:
            mask[:, [0, -1]] = True
        return mask

    def deriv(self, arr: np.ndarray, which: int, axis: int) -> np.ndarray:
        """Derivative in chart coordinate ``which`` along numpy ``axis``."""
        n = self.counts[which]
        if self.model.periodic[which]:
            return _spectral_diff(arr, spectral_wavenumbers(n, self.model.lengths[which]), axis)
        D = self._dmats.get(which)
        if D is None:
            D = fd_matrix(self.x1 if which == 0 else self.x2, self.fd_order)
            self._dmats[which] = D
        return _matrix_diff(arr, D, axis)

    def dtheta(self, arr: np.ndarray, axis: int) -> np.ndarray:
        return _spectral_diff(arr, spectral_wavenumbers(self.counts[2], 2 * np.pi), axis)

    def diff_matrix(self, which: int) -> np.ndarray:
        """Dense derivative matrix for chart coordinate ``which``."""
        n = self.counts[which]
        return self.deriv(np.eye(n, dtype=complex), which, 0)


def _axis(model, ax, n):
    a, b = model.domain[ax]
    if model.periodic[ax]:
        h = (b - a) / n
        nodes = a + h * np.arange(n)
        w = np.full(n, h)
    else:
        nodes = np.linspace(a, b, n)
        h = (b - a) / (n - 1)
        w = np.full(n, h)
        w[[0, -1]] *= 0.5
    return nodes, h, w


def build_grid(model: SurfaceModel, n1: int, n2: int, ntheta: int, fd_order: int = 6) -> SMGrid:
    """Uniform grid honouring periodicity; bounded axes include both endpoints.

    Liouville weights are ``e^{2 lam} w1 w2 dtheta`` with trapezoid factors on
    bounded axes.  Boundary nodes are split into incoming (``<v,nu> > 0``) and
    outgoing sets; nodes within one angular cell of tangency are left out.
    """
    for c in (n1, n2, ntheta):
        if int(c) != c or c < 4:
            raise ConfigurationError("grid counts must be integers >= 4")
    if ntheta % 2:
        raise ConfigurationError("N_theta must be even")
    x1, h1, w1 = _axis(model, 0, n1)
    x2, h2, w2 = _axis(model, 1, n2)
    dth = 2 * np.pi / ntheta
    theta = dth * np.arange(ntheta)
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    area = np.exp(2 * model.conformal_log(X1, X2)) * np.outer(w1, w2)
    weights = area[:, :, None] * dth * np.ones(ntheta)

    margin = np.sin(dth) + 1e-12
    inc, out = [], []
    for ax, val, sign in model.boundary_sides():
        idx = 0 if val == model.domain[ax][0] else (n1, n2)[ax] - 1
        dots = sign * (np.cos(theta) if ax == 0 else np.sin(theta))
        others = range((n2, n1)[ax])
        for o in others:
            i, j = (idx, o) if ax == 0 else (o, idx)
            for k, d in enumerate(dots):
                if d > margin:
                    inc.append((i, j, k))
                elif d < -margin:
                    out.append((i, j, k))
    return SMGrid(
        model=model,
        counts=(n1, n2, ntheta),
        x1=x1,
        x2=x2,
        theta=theta,
        spacing=(h1, h2, dth),
        axis_weights=(w1, w2),
        weights=weights,
        incoming=np.array(sorted(set(inc)), dtype=int).reshape(-1, 3),
        outgoing=np.array(sorted(set(out)), dtype=int).reshape(-1, 3),
        fd_order=fd_order,
    )


def euler_characteristic(model: SurfaceModel) -> int:
    """Euler characteristic of the supported model topologies."""
    if model.closed:
        return 0  # torus
    if model.is_strip():
        return 0  # annulus
    return 1  # disk-like rectangle
