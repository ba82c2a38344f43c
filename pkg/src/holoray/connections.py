"""Unitary connections and skew-Hermitian Higgs fields on ``M x C^n``.

A pair is given by callables returning ``(..., n, n)`` complex arrays at
chart points; evaluating them on arrays of points must be reentrant.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .geometry import ConfigurationError, SurfaceModel


class GaugeValidationError(ValueError):
    """The supplied gauge is not unitary or its derivative is inconsistent."""


SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)
# su(2) basis with [tau_1, tau_2] = -tau_3
TAU = 0.5j * SIGMA


def _const(mat):
    mat = np.asarray(mat, dtype=complex)

    def f(x1, x2):
        shape = np.broadcast(x1, x2).shape
        return np.broadcast_to(mat, shape + mat.shape).copy()

    return f


@dataclass(frozen=True)
class ConnectionPair:
    """``A = A1 dx1 + A2 dx2`` and Higgs field ``Phi``, all skew-Hermitian.

    ``dA1`` and ``dA2`` are optional pairs of callables giving the chart
    derivatives ``(d1 A_i, d2 A_i)``; without them curvature falls back to
    finite differences.
    """

    n: int
    A1: Callable
    A2: Callable
    Phi: Callable
    name: str = "custom"
    params: dict = field(default_factory=dict)
    dA1: Optional[tuple] = None
    dA2: Optional[tuple] = None
    domain: Optional[tuple] = None
    joint: Optional[Callable] = None  # fused evaluation of (A1, A2, Phi)

    def evaluate(self, x1, x2):
        """Return ``(A1, A2, Phi)`` at the points, each ``(..., n, n)``."""
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        if self.joint is not None:
            return self.joint(x1, x2)
        return self.A1(x1, x2), self.A2(x1, x2), self.Phi(x1, x2)

    def on_sphere_bundle(self, model: SurfaceModel, x1, x2, theta):
        """``A(x, v) = A1 v^1 + A2 v^2`` with ``v = e^{-lam}(cos, sin)``."""
        a1, a2, _ = self.evaluate(x1, x2)
        e = np.exp(-model.conformal_log(x1, x2))[..., None, None]
        c = np.cos(theta)[..., None, None]
        s = np.sin(theta)[..., None, None]
        return e * (a1 * c + a2 * s)

    def derivatives(self, x1, x2, step=None):
        """``((d1A1, d2A1), (d1A2, d2A2))`` analytic if available."""
        if self.dA1 is not None and self.dA2 is not None:
            return tuple(tuple(f(x1, x2) for f in d) for d in (self.dA1, self.dA2))
        return _fd_grad(self.A1, x1, x2, step), _fd_grad(self.A2, x1, x2, step)


def _fd_grad(fun, x1, x2, step):
    x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
    h1, h2 = step if step is not None else (1e-4 * 2 * np.pi, 1e-4 * 2 * np.pi)
    out = []
    for e1, e2, h in ((1, 0, h1), (0, 1, h2)):
        f = lambda k: fun(x1 + k * e1 * h, x2 + k * e2 * h)
        out.append((-f(2) + 8 * f(1) - 8 * f(-1) + f(-2)) / (12 * h))
    return tuple(out)


def _fd_step(pair, model):
    dom = model.domain if model is not None else pair.domain
    if dom is None:
        return None
    return tuple(1e-4 * (b - a) for a, b in dom)


def curvature_star(pair: ConnectionPair, model: SurfaceModel, x):
    """``i e^{-2 lam} (d1 A2 - d2 A1 + [A1, A2])`` and its sorted eigenvalues.

    ``x`` is a pair of broadcastable coordinate arrays.  Returns the
    Hermitian matrix field ``(..., n, n)`` and eigenvalues ``(..., n)``.
    """
    x1, x2 = np.broadcast_arrays(np.asarray(x[0], float), np.asarray(x[1], float))
    a1, a2, _ = pair.evaluate(x1, x2)
    (_, d2a1), (d1a2, _) = pair.derivatives(x1, x2, _fd_step(pair, model))
    f = d1a2 - d2a1 + a1 @ a2 - a2 @ a1
    scale = np.exp(-2 * model.conformal_log(x1, x2))[..., None, None]
    mat = 1j * scale * f
    mat = 0.5 * (mat + np.swapaxes(mat.conj(), -1, -2))
    return mat, np.linalg.eigvalsh(mat)


def star_curvature(pair: ConnectionPair, model: SurfaceModel, x1, x2):
    """Skew-Hermitian ``*f^E`` (without the factor ``i``)."""
    mat, _ = curvature_star(pair, model, (x1, x2))
    return -1j * mat


# ---------------------------------------------------------------------------
# presets

def _bump(model: SurfaceModel, width: float):
    """Smooth bump centred in the chart; periodic-compatible on periodic axes.

    Returns ``(b, d1b, d2b)`` as callables.
    """
    centres = [0.5 * (a + b) for a, b in model.domain]
    factors = []
    for ax in (0, 1):
        c = centres[ax]
        if model.periodic[ax]:
            kap = 1.0 / width**2
            g = lambda t, c=c, kap=kap: np.exp(kap * (np.cos(t - c) - 1.0))
            dg = lambda t, c=c, kap=kap: -kap * np.sin(t - c) * np.exp(kap * (np.cos(t - c) - 1.0))
        else:
            g = lambda t, c=c: np.exp(-((t - c) ** 2) / (2 * width**2))
            dg = lambda t, c=c: -(t - c) / width**2 * np.exp(-((t - c) ** 2) / (2 * width**2))
        factors.append((g, dg))
    (g1, dg1), (g2, dg2) = factors
    b = lambda x1, x2: g1(x1) * g2(x2)
    d1b = lambda x1, x2: dg1(x1) * g2(x2)
    d2b = lambda x1, x2: g1(x1) * dg2(x2)
    return b, d1b, d2b


def trivial(model: SurfaceModel, n: int = 1) -> ConnectionPair:
    z = _const(np.zeros((n, n)))
    return ConnectionPair(n, z, z, z, "trivial", {"n": n}, (z, z), (z, z), model.domain)


def scalar_higgs(model: SurfaceModel, phi0: float = 1.0, n: int = 1) -> ConnectionPair:
    z = _const(np.zeros((n, n)))
    phi = _const(1j * phi0 * np.eye(n))
    return ConnectionPair(n, z, z, phi, "scalar-higgs", {"phi0": phi0, "n": n}, (z, z), (z, z), model.domain)


def u1_oscillatory(model: SurfaceModel, alpha: float = 0.5, phi0: float = 0.0) -> ConnectionPair:
    """``A = i alpha cos(x2) dx1`` plus an optional constant Higgs ``i phi0``."""
    A1 = lambda x1, x2: (1j * alpha * np.cos(x2) + 0 * x1)[..., None, None]
    z = _const(np.zeros((1, 1)))
    d2A1 = lambda x1, x2: (-1j * alpha * np.sin(x2) + 0 * x1)[..., None, None]
    return ConnectionPair(
        1, A1, z, _const([[1j * phi0]]), "u1-oscillatory",
        {"alpha": alpha, "phi0": phi0}, (z, d2A1), (z, z), model.domain,
    )


def su2_bump(model: SurfaceModel, beta: float = 1.0, width: float = 0.5) -> ConnectionPair:
    """Non-abelian bump: ``A_i = beta b tau_i``, ``Phi = beta b tau_3``."""
    b, d1b, d2b = _bump(model, width)
    t1, t2, t3 = TAU

    def mk(fun, tau):
        return lambda x1, x2: beta * fun(x1, x2)[..., None, None] * tau

    def joint(x1, x2):
        bv = beta * b(x1, x2)[..., None, None]
        return bv * t1, bv * t2, bv * t3

    return ConnectionPair(
        2, mk(b, t1), mk(b, t2), mk(b, t3), "su2-bump", {"beta": beta, "width": width},
        (mk(d1b, t1), mk(d2b, t1)), (mk(d1b, t2), mk(d2b, t2)), model.domain, joint,
    )


PAIRS = {
    "trivial": trivial,
    "scalar-higgs": scalar_higgs,
    "u1-oscillatory": u1_oscillatory,
    "su2-bump": su2_bump,
}


def make_pair(name: str, model: SurfaceModel, **params) -> ConnectionPair:
    try:
        factory = PAIRS[name]
    except KeyError:
        raise ConfigurationError(f"unknown pair preset {name!r}") from None
    try:
        return factory(model, **params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for {name!r}: {exc}") from None


# ---------------------------------------------------------------------------
# gauge action

def _sample_points(domain, k=7):
    dom = domain if domain is not None else ((-1.0, 1.0), (-1.0, 1.0))
    t = (np.arange(k) + 0.37) / k
    s1 = dom[0][0] + (dom[0][1] - dom[0][0]) * t
    s2 = dom[1][0] + (dom[1][1] - dom[1][0]) * t
    return np.meshgrid(s1, s2, indexing="ij")


def gauge_transform(pair: ConnectionPair, r: Callable, dr: Callable, samples=None) -> ConnectionPair:
    """Act by ``(A, Phi) -> (r^{-1} dr + r^{-1} A r, r^{-1} Phi r)``.

    ``dr(x1, x2)`` returns ``(d1 r, d2 r)``.  Unitarity of ``r`` and
    consistency of ``dr`` with finite differences are checked at sample
    points before the new pair is built.
    """
    X1, X2 = samples if samples is not None else _sample_points(pair.domain)
    rv = r(X1, X2)
    if rv.shape[-1] != pair.n:
        raise GaugeValidationError("gauge rank does not match the pair")
    eye = np.eye(pair.n)
    if np.max(np.abs(np.swapaxes(rv.conj(), -1, -2) @ rv - eye)) > 1e-10:
        raise GaugeValidationError("gauge is not unitary at a sample point")
    step = tuple(1e-4 * (b - a) for a, b in pair.domain) if pair.domain else None
    fd = _fd_grad(r, X1, X2, step)
    an = dr(X1, X2)
    for a, d in zip(an, fd):
        if np.max(np.abs(a - d)) > 1e-6 * max(1.0, np.max(np.abs(a))):
            raise GaugeValidationError("gauge derivative inconsistent with finite differences")

    def rinv(x1, x2):
        return np.swapaxes(r(x1, x2).conj(), -1, -2)

    def new_A(i):
        Ai = (pair.A1, pair.A2)[i]

        def f(x1, x2):
            ri = rinv(x1, x2)
            return ri @ dr(x1, x2)[i] + ri @ Ai(x1, x2) @ r(x1, x2)

        return f

    def new_phi(x1, x2):
        return rinv(x1, x2) @ pair.Phi(x1, x2) @ r(x1, x2)

    def joint(x1, x2):
        rv = r(x1, x2)
        ri = np.swapaxes(rv.conj(), -1, -2)
        d1, d2 = dr(x1, x2)
        a1, a2, phi = pair.evaluate(x1, x2)
        conj = ri @ (np.stack([a1, a2, phi]) @ rv)
        return ri @ d1 + conj[0], ri @ d2 + conj[1], conj[2]

    return replace(
        pair, A1=new_A(0), A2=new_A(1), Phi=new_phi, dA1=None, dA2=None,
        name=f"gauge({pair.name})", joint=joint,
    )


def boundary_gauge(model: SurfaceModel, n: int, gamma: float = 1.0):
    """Gauge ``r = exp(i psi(x) H)`` with ``psi`` vanishing on dM.

    Returns ``(r, dr)``.  On closed models ``psi`` is a plain periodic
    function, so ``r`` is a generic non-constant gauge.
    """
    H = np.eye(n, dtype=complex)
    if n >= 2:
        H[:] = 0.0
        H[:2, :2] = (SIGMA[0] + SIGMA[2]) / np.sqrt(2.0)
        for k in range(2, n):
            H[k, k] = 0.5 * k
    h, Q = np.linalg.eigh(H)
    (a1, b1), (a2, b2) = model.domain

    def psi(x1, x2):
        s1 = (x1 - a1) / (b1 - a1) * 2 * np.pi
        s2 = (x2 - a2) / (b2 - a2) * 2 * np.pi
        base = gamma * (1.0 + 0.5 * np.cos(s1))
        if model.periodic[1]:
            return base * (0.7 + np.sin(s2 + 0.3))
        t = 2 * (x2 - a2) / (b2 - a2) - 1
        return base * (1 - t**2) ** 2

    def dpsi(x1, x2):
        s1 = (x1 - a1) / (b1 - a1) * 2 * np.pi
        s2 = (x2 - a2) / (b2 - a2) * 2 * np.pi
        base = gamma * (1.0 + 0.5 * np.cos(s1))
        dbase = -gamma * 0.5 * np.sin(s1) * 2 * np.pi / (b1 - a1)
        if model.periodic[1]:
            g, dg = 0.7 + np.sin(s2 + 0.3), np.cos(s2 + 0.3) * 2 * np.pi / (b2 - a2)
        else:
            t = 2 * (x2 - a2) / (b2 - a2) - 1
            g, dg = (1 - t**2) ** 2, -4 * t * (1 - t**2) * 2 / (b2 - a2)
        return dbase * g, base * dg

    # spectral projectors of H: r = sum_k e^{i psi h_k} P_k
    proj = np.einsum("ik,jk->kij", Q, Q.conj())

    def _phases(x1, x2):
        p = np.asarray(psi(np.asarray(x1, float), np.asarray(x2, float)))
        return np.exp(1j * p[..., None] * h)

    def r(x1, x2):
        ph = _phases(x1, x2)
        return np.tensordot(ph, proj, axes=([-1], [0]))

    def dr(x1, x2):
        ph = _phases(x1, x2)
        Tr = np.tensordot(1j * h * ph, proj, axes=([-1], [0]))
        g1, g2 = dpsi(np.asarray(x1, float), np.asarray(x2, float))
        return np.asarray(g1)[..., None, None] * Tr, np.asarray(g2)[..., None, None] * Tr

    return r, dr
