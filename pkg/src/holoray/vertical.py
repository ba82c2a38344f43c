"""Frame operators on SM and the integral identities they satisfy.

All operators act on arrays shaped ``(..., N1, N2, Ntheta, n)`` so that
batches of fields (e.g. basis columns) can be pushed through at once.
In isothermal coordinates

    X      = e^{-lam} (cos th d1 + sin th d2 + (-l1 sin th + l2 cos th) d_th)
    X_perp = [X, V] = e^{-lam} (sin th d1 - cos th d2 + (l1 cos th + l2 sin th) d_th)
    V      = d_th

and the twisted versions add ``A(x, v)`` to ``X`` and ``-(V A)`` to ``X_perp``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .connections import ConnectionPair, curvature_star, trivial
from .fields import FiberField, inner, mode_numbers
from .geometry import ConfigurationError, SMGrid, euler_characteristic


class ValidationError(ValueError):
    """An input field does not satisfy an operation's preconditions."""


_B1, _B2, _TH = -4, -3, -2  # numpy axes of a field array


@dataclass(eq=False)
class FrameOperators:
    """Precomputed coefficient arrays for ``X, X_perp, V`` and a pair."""

    grid: SMGrid
    pair: ConnectionPair
    lam: np.ndarray = field(init=False)
    K: np.ndarray = field(init=False)

    def __post_init__(self):
        g = self.grid
        model = g.model
        X1, X2 = g.mesh()
        lam = model.conformal_log(X1, X2)
        l1, l2 = model.grad_log(X1, X2)
        b = lambda a: np.asarray(a, float)[:, :, None, None]
        self.lam = lam
        self.em = b(np.exp(-lam))
        self.l1, self.l2 = b(l1), b(l2)
        self.K = b(model.curvature(X1, X2))
        self.c = np.cos(g.theta)[:, None]
        self.s = np.sin(g.theta)[:, None]
        a1, a2, phi = self.pair.evaluate(X1, X2)
        e = np.exp(-lam)[:, :, None, None, None]
        c = self.c[None, None, :, :, None]
        s = self.s[None, None, :, :, None]
        a1, a2 = a1[:, :, None], a2[:, :, None]
        self.A = e * (a1 * c + a2 * s)
        self.VA = e * (-a1 * s + a2 * c)
        self.Phi = phi[:, :, None]
        self.star_f = -1j * curvature_star(self.pair, model, (X1, X2))[0][:, :, None]
        self.trivial_connection = not (np.any(self.A) or np.any(self.VA))

    # -- derivatives -----------------------------------------------------
    def d1(self, u):
        return self.grid.deriv(u, 0, _B1)

    def d2(self, u):
        return self.grid.deriv(u, 1, _B2)

    def V(self, u):
        return self.grid.dtheta(u, _TH)

    def X(self, u):
        return self.em * (self.c * self.d1(u) + self.s * self.d2(u)
                          + (-self.l1 * self.s + self.l2 * self.c) * self.V(u))

    def Xperp(self, u):
        return self.em * (self.s * self.d1(u) - self.c * self.d2(u)
                          + (self.l1 * self.c + self.l2 * self.s) * self.V(u))

    # -- twisted ---------------------------------------------------------
    @staticmethod
    def _act(mat, u):
        return np.einsum("...ij,...j->...i", mat, u)

    def TX(self, u):
        return self.X(u) + self._act(self.A, u)

    def TXperp(self, u):
        return self.Xperp(u) - self._act(self.VA, u)

    def eta(self, sign, u):
        return 0.5 * (self.X(u) + sign * 1j * self.Xperp(u))

    def mu(self, sign, u):
        return 0.5 * (self.TX(u) + sign * 1j * self.TXperp(u))

    def star(self, u):
        return self._act(self.star_f, u)

    def higgs(self, u):
        return self._act(self.Phi, u)


def _ops(field_or_grid, pair=None) -> FrameOperators:
    grid = field_or_grid.grid if isinstance(field_or_grid, FiberField) else field_or_grid
    if pair is None:
        pair = trivial(grid.model, field_or_grid.n if isinstance(field_or_grid, FiberField) else 1)
    return FrameOperators(grid, pair)


def _check_rank(u: FiberField, pair: ConnectionPair):
    if u.n != pair.n:
        raise ValidationError(f"field rank {u.n} does not match pair rank {pair.n}")


def apply_V(u: FiberField) -> FiberField:
    return FiberField(u.grid, u.grid.dtheta(u.values, _TH))


def apply_X(u: FiberField, ops: Optional[FrameOperators] = None) -> FiberField:
    ops = ops or _ops(u)
    return FiberField(u.grid, ops.X(u.values))


def apply_Xperp(u: FiberField, ops: Optional[FrameOperators] = None) -> FiberField:
    ops = ops or _ops(u)
    return FiberField(u.grid, ops.Xperp(u.values))


def apply_twisted(u: FiberField, pair: ConnectionPair, which: str,
                  ops: Optional[FrameOperators] = None) -> FiberField:
    """Twisted ``X`` (``"X"``), ``X_perp`` (``"Xperp"``) or ``V`` (``"V"``)."""
    _check_rank(u, pair)
    if which == "V":
        return apply_V(u)
    ops = ops or FrameOperators(u.grid, pair)
    if which == "X":
        return FiberField(u.grid, ops.TX(u.values))
    if which == "Xperp":
        return FiberField(u.grid, ops.TXperp(u.values))
    raise ValueError(f"unknown operator {which!r}")


def _pure_mode(u: FiberField, tol=1e-8) -> int:
    norms = {m: np.linalg.norm(c) for m, c in u.fourier().items()}
    total = np.sqrt(sum(v * v for v in norms.values()))
    if total == 0:
        return 0
    m = max(norms, key=norms.get)
    rest = np.sqrt(max(total**2 - norms[m] ** 2, 0.0))
    if rest > tol * total:
        raise ValidationError("field is not a single fibre mode")
    return m


def eta_mu(u: FiberField, pair: Optional[ConnectionPair], sign: int, twisted: bool = True,
           ops: Optional[FrameOperators] = None, leak_tol: float = 1e-8) -> FiberField:
    """Apply ``mu_pm`` (or ``eta_pm`` when ``twisted`` is false) to a pure mode.

    The output is projected onto ``Lambda_{m +- 1}``; leakage into other
    modes above ``leak_tol`` of the norm raises :class:`ValidationError`.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    m = _pure_mode(u)
    if pair is not None:
        _check_rank(u, pair)
    ops = ops or _ops(u, pair)
    out = ops.mu(sign, u.values) if twisted else ops.eta(sign, u.values)
    w = FiberField(u.grid, out)
    target = m + sign
    kept = w.project([target])
    leak = (w - kept).norm()
    if leak > leak_tol * max(w.norm(), u.norm(), 1e-300):
        raise ValidationError(f"degree shift leaked {leak:.2e} outside mode {target}")
    return kept


def degree_profile(u: FiberField) -> list[tuple[int, float]]:
    """``(m, ||u_m + u_{-m}||)`` for ``m = 0 .. Ntheta/2``.

    The last entry is the unpaired Nyquist mode, kept so that the squared
    norms add up to ``||u||^2`` and aliased content is not hidden.
    """
    area = u.grid.base_weights * 2 * np.pi
    modes = u.fourier()
    out = []
    half = u.grid.counts[2] // 2
    for m in range(half + 1):
        comps = [modes[m]] if m == 0 else [modes[-m]] if m == half else [modes[m], modes[-m]]
        total = sum(np.sum(area[..., None] * np.abs(c) ** 2) for c in comps)
        out.append((m, float(np.sqrt(total))))
    return out


# ---------------------------------------------------------------------------
# identities

@dataclass
class IdentityReport:
    identity: str
    model: str
    pair: str
    grid: tuple
    terms: dict
    residual: float
    relative_residual: float

    def as_dict(self):
        return {
            "identity": self.identity,
            "model": self.model,
            "pair": self.pair,
            "grid": list(self.grid),
            "terms": {k: float(v) for k, v in self.terms.items()},
            "residual": float(self.residual),
            "relative_residual": float(self.relative_residual),
        }


def _report(name, u, pair, terms, residual, scale):
    rel = abs(residual) / scale if scale > 0 else abs(residual)
    return IdentityReport(name, u.grid.model.name, pair.name, tuple(u.grid.counts), terms,
                          float(residual), float(rel))


def _require_dirichlet(u: FiberField, tol=1e-10):
    mask = u.grid.boundary_mask()
    if mask.any() and np.max(np.abs(u.values[mask])) >= tol:
        raise ValidationError("field does not vanish on the boundary of SM")


def _ip(grid, a, b):
    return inner(grid, a, b)


def pestov_residual(u: FiberField, pair: ConnectionPair,
                    ops: Optional[FrameOperators] = None) -> IdentityReport:
    """Two-dimensional Pestov identity with a connection.

    ``||V X u||^2 = ||X V u||^2 - (K V u, V u) - (*f u, V u) + ||X u||^2``
    with twisted ``X``; ``u`` must vanish on the boundary.
    """
    _check_rank(u, pair)
    _require_dirichlet(u)
    ops = ops or FrameOperators(u.grid, pair)
    g, v = u.grid, u.values
    Xu = ops.TX(v)
    Vu = ops.V(v)
    VXu = ops.V(Xu)
    XVu = ops.TX(Vu)
    lhs = _ip(g, VXu, VXu).real
    terms = {
        "VXu": lhs,
        "XVu": _ip(g, XVu, XVu).real,
        "curvature": _ip(g, ops.K * Vu, Vu).real,
        "bundle_curvature": _ip(g, ops.star(v), Vu).real,
        "Xu": _ip(g, Xu, Xu).real,
    }
    rhs = terms["XVu"] - terms["curvature"] - terms["bundle_curvature"] + terms["Xu"]
    return _report("pestov", u, pair, terms, lhs - rhs, abs(lhs))


def split_omega(u: FiberField, m: int, tol=1e-8):
    """Return ``(u_m, u_{-m})`` as fields; raise if ``u`` is not in ``Omega_m``."""
    modes = u.fourier()
    total = u.norm()
    keep = FiberField.from_modes(u.grid, {m: modes[m], -m: modes[-m]} if m else {0: modes[0]}, u.n)
    if (u - keep).norm() > tol * max(total, 1e-300):
        raise ValidationError(f"field is not in Omega_{m}")
    up = FiberField.from_modes(u.grid, {m: modes[m]}, u.n)
    um = FiberField.from_modes(u.grid, {-m: modes[-m]}, u.n)
    return up, um


def twisted_plus_minus(u: FiberField, m: int, ops: FrameOperators):
    """``(X_+ u, X_- u)`` for ``u`` in ``Omega_m`` via ``mu_pm`` on each half."""
    up, um = split_omega(u, m)
    mp = lambda w: ops.mu(+1, w.values)
    mm = lambda w: ops.mu(-1, w.values)
    if m == 0:
        return mp(up) + mm(up), np.zeros_like(up.values)
    return mp(up) + mm(um), mm(up) + mp(um)


def pestov_residual_omega_m(u: FiberField, pair: ConnectionPair, m: int, d: int = 2,
                            ops: Optional[FrameOperators] = None) -> IdentityReport:
    """Pestov identity restricted to ``Omega_m``:

    ``(2m+d-3)||X_- u||^2 + ||X_perp u||^2 - (K V u, V u) - (*f u, V u)
    = (2m+d-1)||X_+ u||^2``.
    """
    if d != 2:
        raise ConfigurationError("only surfaces (d = 2) are supported")
    if m < 1:
        raise ConfigurationError("m must be >= 1")
    _check_rank(u, pair)
    _require_dirichlet(u)
    ops = ops or FrameOperators(u.grid, pair)
    g, v = u.grid, u.values
    Xp, Xm = twisted_plus_minus(u, m, ops)
    Vu = ops.V(v)
    Xperp = ops.TXperp(v)
    terms = {
        "Xminus": _ip(g, Xm, Xm).real,
        "Xperp": _ip(g, Xperp, Xperp).real,
        "curvature": _ip(g, ops.K * Vu, Vu).real,
        "bundle_curvature": _ip(g, ops.star(v), Vu).real,
        "Xplus": _ip(g, Xp, Xp).real,
    }
    lhs = (2 * m + d - 3) * terms["Xminus"] + terms["Xperp"] - terms["curvature"] - terms["bundle_curvature"]
    rhs = (2 * m + d - 1) * terms["Xplus"]
    scale = max(abs(lhs), abs(rhs))
    return _report(f"pestov_omega_{m}", u, pair, terms, lhs - rhs, scale)


def commutator_residual(u: FiberField, pair: ConnectionPair,
                        ops: Optional[FrameOperators] = None) -> IdentityReport:
    """``[mu_+, mu_-] u - (i/2)(K V u + *f u)``, normalised by the larger product."""
    _check_rank(u, pair)
    ops = ops or FrameOperators(u.grid, pair)
    v = u.values
    pm = ops.mu(+1, ops.mu(-1, v))
    mp = ops.mu(-1, ops.mu(+1, v))
    target = 0.5j * (ops.K * ops.V(v) + ops.star(v))
    res = pm - mp - target
    nrm = lambda a: np.sqrt(abs(_ip(u.grid, a, a)))
    terms = {"mu_plus_mu_minus": nrm(pm), "mu_minus_mu_plus": nrm(mp), "curvature_side": nrm(target)}
    return _report("mu_commutator", u, pair, terms, nrm(res), max(terms["mu_plus_mu_minus"], terms["mu_minus_mu_plus"]))


def structure_residuals(u: FiberField, pair: Optional[ConnectionPair] = None,
                        ops: Optional[FrameOperators] = None) -> dict[str, IdentityReport]:
    """Frame brackets ``[X,V] - X_perp``, ``[X,X_perp] + K V`` and the twisted
    ``[TX, V] - TX_perp``, each normalised by ``||u||``."""
    pair = pair or trivial(u.grid.model, u.n)
    ops = ops or FrameOperators(u.grid, pair)
    v = u.values
    nrm = lambda a: np.sqrt(abs(_ip(u.grid, a, a)))
    un = nrm(v)
    r1 = ops.X(ops.V(v)) - ops.V(ops.X(v)) - ops.Xperp(v)
    r2 = ops.X(ops.Xperp(v)) - ops.Xperp(ops.X(v)) + ops.K * ops.V(v)
    r3 = ops.TX(ops.V(v)) - ops.V(ops.TX(v)) - ops.TXperp(v)
    out = {}
    for name, r in (("bracket_X_V", r1), ("bracket_X_Xperp", r2), ("twisted_bracket_X_V", r3)):
        out[name] = _report(name, u, pair, {"u": un}, nrm(r), un)
    return out


def adjoint_residual(u: FiberField, w: FiberField, pair: ConnectionPair,
                     ops: Optional[FrameOperators] = None) -> float:
    """``|<mu_+ u, w> + <u, mu_- w>|`` relative to the term sizes."""
    ops = ops or FrameOperators(u.grid, pair)
    a = _ip(u.grid, ops.mu(+1, u.values), w.values)
    b = _ip(u.grid, u.values, ops.mu(-1, w.values))
    return abs(a + b) / max(abs(a), abs(b), 1e-300)


# ---------------------------------------------------------------------------
# Beurling contraction

def beurling_constants(m: int, kappa: float, d: int = 2):
    """``(c_m, d_m)`` of the Beurling-type estimate on ``Omega_m``."""
    c_m = kappa * m / 4.0
    if m == 1:
        d_m = (d + 2) / (2 * d - 2) if d != 1 else np.inf
    elif d == 3 and m == 2:
        raise ConfigurationError("the d=3, m=2 constant is not tabulated")
    else:
        d_m = 1.0
    return c_m, d_m


def bundle_curvature_sup(grid: SMGrid, pair: ConnectionPair) -> float:
    """``sup_x`` of the operator norm of ``*f`` over the base grid."""
    X1, X2 = grid.mesh()
    _, ev = curvature_star(pair, grid.model, (X1, X2))
    return float(np.max(np.abs(ev)))


def beurling_check(u: FiberField, pair: ConnectionPair, m: int, kappa: float, d: int = 2,
                   ops: Optional[FrameOperators] = None) -> dict:
    """Evaluate ``||X_- u||^2 + c_m ||u||^2 <= d_m ||X_+ u||^2``.

    The curvature hypothesis ``m(m+d-2) >= 4 ||F||_inf^2 / kappa^2`` is
    evaluated and reported; it does not change the computation.
    """
    _check_rank(u, pair)
    _require_dirichlet(u)
    ops = ops or FrameOperators(u.grid, pair)
    Kmax = float(np.max(ops.K))
    c_m, d_m = beurling_constants(m, kappa, d)
    Xp, Xm = twisted_plus_minus(u, m, ops)
    g = u.grid
    lhs = _ip(g, Xm, Xm).real + c_m * _ip(g, u.values, u.values).real
    rhs = d_m * _ip(g, Xp, Xp).real
    F = bundle_curvature_sup(g, pair)
    lam_m = m * (m + d - 2)
    hyp = bool(lam_m >= 4 * F**2 / kappa**2 and Kmax <= -kappa + 1e-12)
    return {
        "m": m, "lhs": lhs, "rhs": rhs, "margin": rhs - lhs, "c_m": c_m, "d_m": d_m,
        "kappa": kappa, "sup_F": F, "hypothesis_satisfied": hyp,
    }


# ---------------------------------------------------------------------------
# conformal Killing tensor scans

def _resolved_basis(grid: SMGrid, fraction: float):
    """Smooth base functions resolved by the grid: Fourier modes on periodic
    axes and Dirichlet sine modes on bounded axes, up to ``fraction`` of the
    node count.  Returns an array ``(nbasis, N1, N2)``."""
    per_axis = []
    for ax, x in ((0, grid.x1), (1, grid.x2)):
        a, b = grid.model.domain[ax]
        n = grid.counts[ax]
        t = (x - a) / (b - a)
        if grid.model.periodic[ax]:
            kmax = max(int(n * fraction), 1)
            per_axis.append([np.exp(2j * np.pi * k * t) for k in range(-kmax, kmax + 1)])
        else:
            jmax = max(int((n - 1) * fraction), 1)
            per_axis.append([np.sin(np.pi * j * t) + 0j for j in range(1, jmax + 1)])
    return np.array([np.outer(p, q) for p in per_axis[0] for q in per_axis[1]])


def _nodal_basis(grid: SMGrid, keep: np.ndarray):
    nodes = np.flatnonzero(keep.reshape(-1))
    B = np.zeros((len(nodes), grid.counts[0] * grid.counts[1]), dtype=complex)
    B[np.arange(len(nodes)), nodes] = 1.0
    return B.reshape(len(nodes), *grid.base_shape)


def ckt_operator_matrix(grid: SMGrid, pair: ConnectionPair, m: int, boundary_dirichlet: bool,
                        basis: str = "smooth", fraction: float = 0.25, chunk: int = 128):
    """Matrix of ``(u_m, u_{-m}) -> mu_+ u_m + mu_- u_{-m}`` between ``L^2`` spaces.

    Columns are obtained by pushing basis fields through the frame operators.
    ``basis="nodal"`` uses one column per base node; it carries grid-scale
    odd-even modes that centred stencils barely see.  ``basis="smooth"``
    (default) spans only modes resolved by the grid, see
    :func:`_resolved_basis`.  With ``boundary_dirichlet`` the boundary rows
    (and, for the nodal basis, columns) are deleted.  Rows carry square
    roots of the Liouville weights; columns are orthonormalised in the
    weighted inner product, so the singular values are those of the operator.
    """
    if m < 1:
        raise ConfigurationError("m must be >= 1")
    if grid.counts[2] < 2 * (m + 2):
        raise ConfigurationError(f"N_theta={grid.counts[2]} cannot resolve mode {m}")
    n = pair.n
    ops = FrameOperators(grid, pair)
    n1, n2 = grid.base_shape
    nt = grid.counts[2]
    interior = ~grid.boundary_mask() if boundary_dirichlet else np.ones((n1, n2), dtype=bool)
    if basis == "smooth":
        B = _resolved_basis(grid, fraction)
    elif basis == "nodal":
        B = _nodal_basis(grid, interior)
    else:
        raise ValueError(f"unknown basis {basis!r}")
    sw = np.sqrt(grid.base_weights * 2 * np.pi)
    cols = [(s, b, k) for s in (+1, -1) for b in range(len(B)) for k in range(n)]
    out_phase = {s: np.exp(-1j * s * (m + 1) * grid.theta) / nt for s in (+1, -1)}
    out_cols, in_cols = [], []
    for start in range(0, len(cols), chunk):
        block = cols[start:start + chunk]
        F = np.zeros((len(block), n1, n2, nt, n), dtype=complex)
        for c, (s, b, k) in enumerate(block):
            F[c, :, :, :, k] = B[b][:, :, None] * np.exp(1j * s * m * grid.theta)
        sel = np.array([s for s, _, _ in block])[:, None, None, None, None]
        img = np.where(sel > 0, ops.mu(+1, F), ops.mu(-1, F))
        hi = np.tensordot(img, out_phase[+1], axes=([3], [0]))
        lo = np.tensordot(img, out_phase[-1], axes=([3], [0]))
        rows = [(c * sw[..., None])[:, interior] for c in (hi, lo)]
        out_cols.append(np.concatenate([r.reshape(len(block), -1) for r in rows], axis=1))
        coef = np.zeros((len(block), 2, n1, n2, n), dtype=complex)
        for c, (s, b, k) in enumerate(block):
            coef[c, 0 if s > 0 else 1, :, :, k] = B[b] * sw
        in_cols.append(coef.reshape(len(block), -1))
    M = np.concatenate(out_cols, axis=0).T
    R = np.linalg.qr(np.concatenate(in_cols, axis=0).T, mode="r")
    return scipy.linalg.solve_triangular(R, M.T, trans="T", lower=False).T, cols


def ckt_kernel_scan(grid: SMGrid, pair: ConnectionPair, m: int, boundary_dirichlet: bool,
                    k: int = 4, basis: str = "smooth") -> np.ndarray:
    """``k`` smallest singular values of the discretised ``X_+`` on ``Omega_m``."""
    M, _ = ckt_operator_matrix(grid, pair, m, boundary_dirichlet, basis=basis)
    if grid.base_shape[0] * grid.base_shape[1] <= 64 * 64:
        sv = scipy.linalg.svdvals(M)
        return np.sort(sv)[:k]
    sv = scipy.sparse.linalg.svds(M, k=k, which="SM", return_singular_vectors=False)
    return np.sort(sv)


def ckt_condition_check(grid: SMGrid, pair: ConnectionPair, m: int) -> dict:
    """Integrals of the extreme eigenvalues of ``i *f`` against ``2 pi m chi``."""
    model = grid.model
    if not model.closed:
        raise ConfigurationError("the condition check applies to closed models only")
    X1, X2 = grid.mesh()
    _, ev = curvature_star(pair, model, (X1, X2))
    area = grid.base_weights
    int_low = float(np.sum(area * ev[..., 0]))
    int_high = float(np.sum(area * ev[..., -1]))
    bound = 2 * np.pi * m * euler_characteristic(model)
    a = int_low > bound
    b = int_high < -bound
    return {
        "m": m,
        "integral_lambda_1": int_low,
        "integral_lambda_n": int_high,
        "two_pi_m_chi": bound,
        "a": bool(a),
        "b": bool(b),
        "c": bool(a and b),
    }
