"""Geodesic flow on SM in angle form, exit times and boundary sampling.

The state of a ray is ``(x1, x2, theta)`` with unit velocity
``v = e^{-lam}(cos theta, sin theta)``, so the speed constraint holds
identically.  The core routine :func:`trace` advances a batch of rays with
fixed-step RK4, optionally transporting a ``U(n)`` cocycle alongside and
emitting Simpson quadrature samples along each step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import ConfigurationError, DomainError, SMGrid, SurfaceModel, inner_normal_dot

EXITED, CAPPED = 0, 1
STATUS_NAMES = {EXITED: "exited", CAPPED: "trapped"}
TRAPPED = None  # marker returned for capped rays


class UnsupportedModelError(ValueError):
    """The operation is defined only for particular models."""


@dataclass(frozen=True)
class PhasePoint:
    x1: float
    x2: float
    theta: float

    def flipped(self) -> "PhasePoint":
        return PhasePoint(self.x1, self.x2, (self.theta + np.pi) % (2 * np.pi))


@dataclass
class GeodesicRay:
    start: PhasePoint
    times: np.ndarray
    samples: np.ndarray  # (K, 3) states at ``times``
    exit_time: Optional[float]
    status: str
    clairaut: Optional[float] = None

    @property
    def end(self) -> PhasePoint:
        return PhasePoint(*self.samples[-1])


# ---------------------------------------------------------------------------
# vector fields

def geodesic_rhs(model: SurfaceModel, x1, x2, th):
    lam = model.conformal_log(x1, x2)
    l1, l2 = model.grad_log(x1, x2)
    e = np.exp(-lam)
    c, s = np.cos(th), np.sin(th)
    return e * c, e * s, e * (-l1 * s + l2 * c)


def _rk4_state(model, x1, x2, th, tau, k1=None):
    if k1 is None:
        k1 = geodesic_rhs(model, x1, x2, th)
    h2 = 0.5 * tau
    k2 = geodesic_rhs(model, x1 + h2 * k1[0], x2 + h2 * k1[1], th + h2 * k1[2])
    k3 = geodesic_rhs(model, x1 + h2 * k2[0], x2 + h2 * k2[1], th + h2 * k2[2])
    k4 = geodesic_rhs(model, x1 + tau * k3[0], x2 + tau * k3[1], th + tau * k3[2])
    stages = [(x1, x2, th), (x1 + h2 * k1[0], x2 + h2 * k1[1], th + h2 * k1[2]),
              (x1 + h2 * k2[0], x2 + h2 * k2[1], th + h2 * k2[2]),
              (x1 + tau * k3[0], x2 + tau * k3[1], th + tau * k3[2])]
    new = tuple(y + tau / 6 * (a + 2 * b + 2 * c + d) for y, a, b, c, d in zip((x1, x2, th), k1, k2, k3, k4))
    return new, stages


def flow_step(model: SurfaceModel, p: PhasePoint, h: float) -> PhasePoint:
    """One RK4 step of the geodesic equations."""
    (x1, x2, th), _ = _rk4_state(model, np.float64(p.x1), np.float64(p.x2), np.float64(p.theta), h)
    return PhasePoint(float(x1), float(x2), float(th))


def connection_matrix(model: SurfaceModel, pair, x1, x2, th):
    """``A(x, v) + Phi(x)`` at phase points, shape ``(..., n, n)``."""
    a1, a2, phi = pair.evaluate(x1, x2)
    e = np.exp(-model.conformal_log(x1, x2))[..., None, None]
    return e * (a1 * np.cos(th)[..., None, None] + a2 * np.sin(th)[..., None, None]) + phi


def polar_project(C: np.ndarray, iterations: int = 3) -> np.ndarray:
    """Newton-Schulz iteration towards the unitary polar factor."""
    n = C.shape[-1]
    eye = np.eye(n)
    for _ in range(iterations):
        C = 0.5 * C @ (3 * eye - np.swapaxes(C.conj(), -1, -2) @ C)
    return C


def outside_distance(model: SurfaceModel, x1, x2):
    """Signed distance outside M along bounded chart axes (<= 0 inside)."""
    d = np.full(np.shape(x1), -np.inf)
    for ax, xa in ((0, x1), (1, x2)):
        if not model.periodic[ax]:
            a, b = model.domain[ax]
            d = np.maximum(d, np.maximum(a - xa, xa - b))
    return d


# ---------------------------------------------------------------------------
# batch tracer

@dataclass
class TraceResult:
    exit_time: np.ndarray       # transit time (t_max for capped rays)
    status: np.ndarray          # EXITED or CAPPED
    end: np.ndarray             # (B, 3) final phase point
    holonomy: Optional[np.ndarray] = None  # (B, n, n)


def trace(model: SurfaceModel, x1, x2, th, h: float, t_max: float, pair=None,
          sink: Optional[Callable] = None, damping: float = 0.0, tol_exit: float = 1e-10,
          max_bisect: int = 60, observer: Optional[Callable] = None, project: bool = True) -> TraceResult:
    """Advance rays until they leave M or reach ``t_max``.

    Each step is RK4 of size ``h`` (shortened to land on ``t_max``).  A step
    that leaves M is replaced by a shortened step found by bisection so the
    end point lies within ``tol_exit`` of the boundary.

    With ``pair`` the cocycle ``dC/dt = -(A + Phi) C`` is transported and
    re-projected onto ``U(n)`` after every step.  With ``sink`` each step
    emits Simpson samples ``sink(idx, x1, x2, th, coef)`` where ``coef`` is
    ``q e^{-damping t} C^{-1}`` (``q`` the Simpson weight); midpoint states
    come from cubic Hermite interpolation.  ``observer(idx, t, x1, x2, th)``
    sees every step end.  ``t_max`` may be a scalar or one value per ray.
    """
    x1 = np.array(x1, dtype=float).reshape(-1)
    x2 = np.array(x2, dtype=float).reshape(-1)
    th = np.array(th, dtype=float).reshape(-1)
    B = x1.size
    tmax = np.broadcast_to(np.asarray(t_max, dtype=float), (B,)).copy()
    if h <= 0 or np.any(tmax <= 0):
        raise ConfigurationError("step size and t_max must be positive")
    exit_time = tmax.copy()
    status = np.full(B, CAPPED, dtype=int)
    end = np.zeros((B, 3))
    transport = pair is not None
    n = pair.n if transport else 1
    hol = np.zeros((B, n, n), dtype=complex) if transport else None

    idx = np.arange(B)
    t = np.zeros(B)
    C = np.broadcast_to(np.eye(n, dtype=complex), (B, n, n)).copy() if transport else None
    k1 = geodesic_rhs(model, x1, x2, th)
    A0 = connection_matrix(model, pair, x1, x2, th) if transport else None

    while idx.size:
        tau = np.minimum(h, tmax - t)
        (y1, y2, yt), stages = _rk4_state(model, x1, x2, th, tau, k1)
        dist = outside_distance(model, y1, y2)
        leaving = dist > 0
        if leaving.any():
            lo = np.zeros(leaving.sum())
            hi = tau[leaving].copy()
            s1, s2, st = x1[leaving], x2[leaving], th[leaving]
            kk = tuple(k[leaving] for k in k1)
            dh = dist[leaving]
            for _ in range(max_bisect):
                if np.all(dh < tol_exit):
                    break
                mid = 0.5 * (lo + hi)
                (m1, m2, _), _ = _rk4_state(model, s1, s2, st, mid, kk)
                dm = outside_distance(model, m1, m2)
                out = dm > 0
                hi = np.where(out, mid, hi)
                dh = np.where(out, dm, dh)
                lo = np.where(out, lo, mid)
            tau = tau.copy()
            tau[leaving] = hi
            (y1, y2, yt), stages = _rk4_state(model, x1, x2, th, tau, k1)
        k_end = geodesic_rhs(model, y1, y2, yt)

        if transport:
            Cn, A_end = _rk4_cocycle(model, pair, C, stages, (y1, y2, yt), tau, A0)
            if project:
                Cn = polar_project(Cn)
        if sink is not None:
            m1 = 0.5 * (x1 + y1) + tau / 8 * (k1[0] - k_end[0])
            m2 = 0.5 * (x2 + y2) + tau / 8 * (k1[1] - k_end[1])
            mt = 0.5 * (th + yt) + tau / 8 * (k1[2] - k_end[2])
            if transport:
                dC0 = -A0 @ C
                dC1 = -A_end @ Cn
                Cm = 0.5 * (C + Cn) + (tau / 8)[:, None, None] * (dC0 - dC1)
                W = [np.swapaxes(M.conj(), -1, -2) for M in (C, Cm, Cn)]
            else:
                W = [np.ones((idx.size, 1, 1))] * 3
            for (p1, p2, pt), Wk, q, tk in (((x1, x2, th), W[0], 1.0, t), ((m1, m2, mt), W[1], 4.0, t + 0.5 * tau),
                                             ((y1, y2, yt), W[2], 1.0, t + tau)):
                w = q * tau / 6
                if damping:
                    w = w * np.exp(-damping * tk)
                sink(idx, p1, p2, pt, w[:, None, None] * Wk)
        t = t + tau
        x1, x2, th, k1 = y1, y2, yt, k_end
        if transport:
            C, A0 = Cn, A_end
        if observer is not None:
            observer(idx, t, x1, x2, th)

        done_exit = leaving
        done_cap = (~leaving) & (t >= tmax - 1e-14)
        done = done_exit | done_cap
        if done.any():
            di = idx[done]
            exit_time[di] = t[done]
            status[di] = np.where(done_exit[done], EXITED, CAPPED)
            end[di] = np.stack([x1[done], x2[done], th[done]], axis=1)
            if transport:
                hol[di] = C[done]
            keep = ~done
            idx, t, tmax, x1, x2, th = idx[keep], t[keep], tmax[keep], x1[keep], x2[keep], th[keep]
            k1 = tuple(k[keep] for k in k1)
            if transport:
                C, A0 = C[keep], A0[keep]
    return TraceResult(exit_time, status, end, hol)


def _rk4_cocycle(model, pair, C, stages, end_state, tau, A0):
    """RK4 for ``dC/dt = -(A + Phi) C`` along the RK4 stage points."""
    As = [A0] + [connection_matrix(model, pair, *s) for s in stages[1:]]
    tt = tau[:, None, None]
    k1 = -As[0] @ C
    k2 = -As[1] @ (C + 0.5 * tt * k1)
    k3 = -As[2] @ (C + 0.5 * tt * k2)
    k4 = -As[3] @ (C + tt * k3)
    Cn = C + tt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return Cn, connection_matrix(model, pair, *end_state)


# ---------------------------------------------------------------------------
# single-ray interface

def integrate_ray(model: SurfaceModel, p0: PhasePoint, h: float, t_max: float = 50.0,
                  tol_exit: float = 1e-10) -> GeodesicRay:
    """Integrate one ray, recording every step, until exit or ``t_max``."""
    if h <= 0:
        raise ConfigurationError("step size must be positive")
    times, samples = [0.0], [(p0.x1, p0.x2, p0.theta)]

    def obs(idx, t, a, b, c):
        times.append(float(t[0]))
        samples.append((float(a[0]), float(b[0]), float(c[0])))

    res = trace(model, [p0.x1], [p0.x2], [p0.theta], h, t_max, tol_exit=tol_exit, observer=obs)
    st = STATUS_NAMES[int(res.status[0])]
    clair = clairaut_constant(model, p0) if model.name == "catenoid" else None
    return GeodesicRay(
        start=p0, times=np.array(times), samples=np.array(samples),
        exit_time=float(res.exit_time[0]) if st == "exited" else None,
        status="exited" if st == "exited" else "capped",
        clairaut=clair,
    )


def clairaut_constant(model: SurfaceModel, p: PhasePoint) -> float:
    """``u' cosh^2 v = cos(theta) cosh(v)`` on the catenoid."""
    if model.name != "catenoid":
        raise UnsupportedModelError("the Clairaut integral is implemented for the catenoid only")
    return float(np.cos(p.theta) * np.cosh(p.x2))


def _boundary_dot(model, p: PhasePoint):
    try:
        return inner_normal_dot(model, (p.x1, p.x2), p.theta)
    except DomainError:
        raise DomainError("point is not on the boundary") from None


def scattering_relation(model: SurfaceModel, entry: PhasePoint, h: float, t_max: float = 50.0):
    """Exit point of the ray from an incoming boundary point, or ``TRAPPED``."""
    if _boundary_dot(model, entry) <= 0:
        raise DomainError("entry is not an incoming boundary point")
    res = trace(model, [entry.x1], [entry.x2], [entry.theta], h, t_max)
    if res.status[0] == CAPPED:
        return TRAPPED
    x1, x2, th = res.end[0]
    a1, b1 = model.domain[0]
    if model.periodic[0]:
        x1 = a1 + (x1 - a1) % (b1 - a1)
    return PhasePoint(float(x1), float(x2), float(th % (2 * np.pi)))


# ---------------------------------------------------------------------------
# boundary sampling of the incoming set

@dataclass(eq=False)
class BoundaryGrid:
    """Midpoint sampling of ``d_-(SM)`` on strip models.

    Each boundary circle carries ``n_s`` chart points and ``n_angle`` angles
    ``alpha`` measured from the inward normal, so tangential directions are
    never sampled.  ``weights`` discretise ``d mu_nu``.
    """

    model: SurfaceModel
    n_s: int
    n_angle: int
    x1: np.ndarray = field(init=False)
    x2: np.ndarray = field(init=False)
    theta: np.ndarray = field(init=False)
    alpha: np.ndarray = field(init=False)
    component: np.ndarray = field(init=False)
    weights: np.ndarray = field(init=False)
    near_trapped: np.ndarray = field(init=False)

    def __post_init__(self):
        m = self.model
        if not m.is_strip():
            raise UnsupportedModelError("boundary grids are implemented for strip models")
        if self.n_s < 1 or self.n_angle < 1:
            raise ConfigurationError("boundary grid counts must be positive")
        (a1, b1), (a2, b2) = m.domain
        ds = (b1 - a1) / self.n_s
        da = np.pi / self.n_angle
        s = a1 + ds * np.arange(self.n_s)
        al = -0.5 * np.pi + da * (np.arange(self.n_angle) + 0.5)
        rows = []
        for comp, (x2v, normal) in enumerate(((a2, 0.5 * np.pi), (b2, 1.5 * np.pi))):
            S, AL = np.meshgrid(s, al, indexing="ij")
            rows.append((S.ravel(), np.full(S.size, x2v), (normal + AL.ravel()) % (2 * np.pi),
                         AL.ravel(), np.full(S.size, comp)))
        self.x1, self.x2, self.theta, self.alpha, self.component = (np.concatenate(c) for c in zip(*rows))
        lam = m.conformal_log(self.x1, self.x2)
        self.weights = np.cos(self.alpha) * np.exp(lam) * ds * da
        if m.name == "catenoid":
            c = np.cos(self.theta) * np.cosh(self.x2)
            self.near_trapped = np.abs(np.abs(c) - 1.0) < 1e-3
        else:
            self.near_trapped = np.zeros(self.x1.size, dtype=bool)

    def __len__(self):
        return self.x1.size

    @property
    def shape(self):
        return (self.n_s, self.n_angle)


# ---------------------------------------------------------------------------
# volume decay

def _survival_integral(times, L, weights_alpha):
    """``int (L(alpha) - t)_+ cos(alpha) d alpha`` with ``L`` piecewise linear.

    ``L`` and ``weights_alpha`` are given on sorted nodes of one angular
    interval; the positive part is integrated exactly on each sub-interval.
    """
    a, La, ca = weights_alpha
    da = np.diff(a)
    L0, L1 = L[:-1], L[1:]
    cm = 0.5 * (ca[:-1] + ca[1:])
    out = []
    for t in times:
        p0, p1 = L0 - t, L1 - t
        both = (p0 >= 0) & (p1 >= 0)
        one = (p0 >= 0) ^ (p1 >= 0)
        val = np.where(both, 0.5 * (p0 + p1) * da, 0.0)
        top = np.maximum(p0, p1)
        span = np.abs(p1 - p0)
        val = val + np.where(one, 0.5 * top**2 / np.where(span > 0, span, 1.0) * da, 0.0)
        out.append(np.sum(val * cm))
    return np.array(out)


def volume_decay(model: SurfaceModel, grid: SMGrid, times, h: float = 0.02, t_max: float = 50.0,
                 method: str = "santalo", min_width: float = 1e-13, max_levels: int = 48,
                 uniform_levels: int = 3):
    """Liouville measure ``V(t)`` of points whose forward ray stays in SM up to ``t``.

    ``method="santalo"`` (default) writes ``V(t) = int_{d_-} (l_+ - t)_+ d mu_nu``
    over incoming boundary points, samples the boundary at the grid's ``N1``
    chart points and refines the angular mesh geometrically around maxima
    of ``l_+`` (the tails of the trapped set), so exponentially small values
    are resolved.  ``method="nodes"`` counts grid nodes directly.
    Returns a list of ``(t, V(t))``.
    """
    if model.closed:
        raise UnsupportedModelError("V(t) is constant on closed models")
    times = np.asarray(times, dtype=float)
    if method == "nodes":
        return _volume_decay_nodes(model, grid, times, h, t_max)
    if method != "santalo":
        raise ValueError(f"unknown method {method!r}")
    if not model.is_strip():
        raise UnsupportedModelError("boundary-integral volume decay needs a strip model")

    (a1, b1), (a2, b2) = model.domain
    ns = grid.counts[0]
    ds = (b1 - a1) / ns
    s_nodes = a1 + ds * np.arange(ns)
    n0 = max(grid.counts[2] // 2, 4) * 2**uniform_levels
    alpha0 = np.linspace(-0.5 * np.pi, 0.5 * np.pi, n0 + 1)
    # one angular profile per (boundary point, component)
    profiles = []
    for x2v, normal in ((a2, 0.5 * np.pi), (b2, 1.5 * np.pi)):
        for s in s_nodes:
            profiles.append({"x1": s, "x2": x2v, "normal": normal, "alpha": alpha0.copy(), "L": None})

    def evaluate(requests):
        if not requests:
            return []
        xs = np.concatenate([np.full(len(al), p["x1"]) for p, al in requests])
        ys = np.concatenate([np.full(len(al), p["x2"]) for p, al in requests])
        ths = np.concatenate([p["normal"] + al for p, al in requests])
        ell = trace(model, xs, ys, ths, h, t_max).exit_time
        # tangential directions leave immediately
        out, k = [], 0
        for p, al in requests:
            out.append(ell[k:k + len(al)])
            k += len(al)
        return out

    interior = [(p, p["alpha"][1:-1]) for p in profiles]
    for (p, _), ell in zip(interior, evaluate(interior)):
        p["L"] = np.concatenate([[0.0], ell, [0.0]])

    for _ in range(max_levels):
        requests = []
        for p in profiles:
            al, L = p["alpha"], p["L"]
            # capped rays form plateaus at t_max; refining those never terminates usefully
            peak = np.flatnonzero((L[1:-1] >= L[:-2]) & (L[1:-1] >= L[2:]) & (L[1:-1] < t_max)) + 1
            new = []
            for i in peak:
                for j in (i - 1, i):
                    if al[j + 1] - al[j] > min_width:
                        new.append(0.5 * (al[j] + al[j + 1]))
            if new:
                requests.append((p, np.unique(new)))
        if not requests:
            break
        for (p, al_new), ell in zip(requests, evaluate(requests)):
            al = np.concatenate([p["alpha"], al_new])
            L = np.concatenate([p["L"], ell])
            order = np.argsort(al, kind="stable")
            p["alpha"], p["L"] = al[order], L[order]

    total = np.zeros(times.size)
    for p in profiles:
        el = np.exp(model.conformal_log(p["x1"], p["x2"]))
        total += ds * el * _survival_integral(times, p["L"], (p["alpha"], p["L"], np.cos(p["alpha"])))
    return [(float(t), float(v)) for t, v in zip(times, total)]


def _volume_decay_nodes(model, grid, times, h, t_max):
    X1, X2 = grid.mesh()
    x1 = np.repeat(X1[..., None], grid.counts[2], axis=2)
    x2 = np.repeat(X2[..., None], grid.counts[2], axis=2)
    th = np.broadcast_to(grid.theta, x1.shape)
    ell = trace(model, x1.ravel(), x2.ravel(), th.ravel(), h, t_max).exit_time
    w = grid.weights.ravel()
    return [(float(t), float(np.sum(w[ell > t]) if t > 0 else np.sum(w))) for t in times]


def fit_decay_rate(curve, t_lo: float, t_hi: float):
    """Least-squares line through ``log V`` on ``[t_lo, t_hi]``: ``(slope, R^2)``."""
    t = np.array([c[0] for c in curve])
    v = np.array([c[1] for c in curve])
    sel = (t >= t_lo) & (t <= t_hi) & (v > 0)
    if sel.sum() < 3:
        return float("nan"), float("nan")
    y = np.log(v[sel])
    slope, icpt = np.polyfit(t[sel], y, 1)
    ss_res = np.sum((y - (slope * t[sel] + icpt)) ** 2)
    ss_tot = np.sum((y - y.mean()) ** 2)
    return float(slope), float(1 - ss_res / ss_tot)
