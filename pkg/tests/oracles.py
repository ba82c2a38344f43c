"""Independent reference computations used as test oracles.

None of these reuse the package's integrators or differentiation code.
"""

import numpy as np
import scipy.integrate
import scipy.linalg


def fd_laplacian_curvature(lam, x1, x2, step=1e-3):
    """``-e^{-2 lam} Delta lam`` from a centred 5-point Laplacian."""
    lap = (lam(x1 + step, x2) + lam(x1 - step, x2) + lam(x1, x2 + step) + lam(x1, x2 - step)
           - 4 * lam(x1, x2)) / step**2
    return -np.exp(-2 * lam(x1, x2)) * lap


def catenoid_lambda(x1, x2):
    return np.log(np.cosh(x2))


def catenoid_area():
    """``int_0^{2 pi} int_{-1}^{1} cosh^2 v dv du``."""
    return 2 * np.pi * (1.0 + np.sinh(2.0) / 2.0)


def _catenoid_rhs(t, y):
    u, v, th = y
    e = 1.0 / np.cosh(v)
    return [e * np.cos(th), e * np.sin(th), e * np.tanh(v) * np.cos(th)]


def catenoid_geodesic(p, t, rtol=1e-12):
    """State after time ``t`` via an adaptive high-order integrator."""
    sol = scipy.integrate.solve_ivp(_catenoid_rhs, (0, t), list(p), method="DOP853", rtol=rtol, atol=1e-13)
    return sol.y[:, -1]


def catenoid_exit_time(p, rtol=1e-12):
    """Exit time through ``v = +-1`` by event location."""
    ev = lambda t, y: abs(y[1]) - 1.0 - 1e-14 if t > 0 else -1.0
    ev.terminal = True
    ev.direction = 1
    sol = scipy.integrate.solve_ivp(_catenoid_rhs, (0, 60), list(p), method="DOP853", rtol=rtol, atol=1e-13,
                                    events=ev)
    return float(sol.t_events[0][0]) if sol.t_events[0].size else np.inf


def catenoid_cocycle_and_integral(pair, f, p, t_end, rtol=1e-11):
    """Joint solve of the geodesic, ``C' = -(A + Phi) C`` and ``J' = C^{-1} f``.

    Returns ``(C(t_end), sample times, C samples, integrand samples)``; the
    integral is formed afterwards with scipy's Simpson rule on a fine grid.
    """
    n = pair.n

    def rhs(t, y):
        u, v, th = y[:3]
        C = (y[3:3 + n * n] + 1j * y[3 + n * n:3 + 2 * n * n]).reshape(n, n)
        a1, a2, phi = (np.asarray(m)[0] for m in pair.evaluate(np.array([u]), np.array([v])))
        e = 1.0 / np.cosh(v)
        Amat = e * (a1 * np.cos(th) + a2 * np.sin(th)) + phi
        dC = -Amat @ C
        return np.concatenate([_catenoid_rhs(t, y[:3]), dC.real.ravel(), dC.imag.ravel()])

    y0 = np.concatenate([list(p), np.eye(n).ravel(), np.zeros(n * n)])
    ts = np.linspace(0, t_end, 4001)
    sol = scipy.integrate.solve_ivp(rhs, (0, t_end), y0, method="DOP853", rtol=rtol, atol=1e-12, t_eval=ts)
    Cs = (sol.y[3:3 + n * n] + 1j * sol.y[3 + n * n:]).T.reshape(-1, n, n)
    vals = None
    if f is not None:
        fx = f(sol.y[0], sol.y[1], sol.y[2])
        vals = np.einsum("tji,tj->ti", Cs.conj(), fx)  # C^{-1} = C^*
    return Cs[-1], ts, Cs, vals


def simpson(vals, ts):
    return scipy.integrate.simpson(vals, x=ts, axis=0)


def ckt_radial_sigma(N=64):
    """Smallest singular value of the flat-mode ``m = 1`` CKT operator on the catenoid.

    In the ``u``-independent sector the Dirichlet problem reduces to
    ``-(1/4)(cosh^2 q')' = s^2 cosh^4 q`` on ``[-1, 1]``; solved by
    Chebyshev collocation.
    """
    k = np.arange(N + 1)
    x = np.cos(np.pi * k / N)
    c = np.hstack([2, np.ones(N - 1), 2]) * (-1) ** k
    X = np.tile(x, (N + 1, 1)).T
    D = np.outer(c, 1 / c) / (X - X.T + np.eye(N + 1))
    D -= np.diag(D.sum(1))
    L = (-0.25 * D @ np.diag(np.cosh(x) ** 2) @ D)[1:-1, 1:-1]
    M = np.diag(np.cosh(x) ** 4)[1:-1, 1:-1]
    ev = np.sort(scipy.linalg.eigvals(L, M).real)
    return float(np.sqrt(ev[0]))
