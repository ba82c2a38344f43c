import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from holoray.connections import (GaugeValidationError, TAU, boundary_gauge, curvature_star, gauge_transform,
                                 make_pair, scalar_higgs, su2_bump, trivial, u1_oscillatory)
from holoray.geometry import ConfigurationError, build_grid, catenoid, flat_torus


def _skew(M):
    return np.max(np.abs(M + np.swapaxes(M.conj(), -1, -2)))


@pytest.mark.parametrize("name", ["trivial", "scalar-higgs", "u1-oscillatory", "su2-bump"])
@pytest.mark.parametrize("model", [catenoid(), flat_torus()], ids=["catenoid", "torus"])
def test_presets_are_skew_hermitian(name, model):
    p = make_pair(name, model)
    x1, x2 = np.meshgrid(np.linspace(0, 2 * np.pi, 7), np.linspace(*model.domain[1], 5), indexing="ij")
    for M in p.evaluate(x1, x2):
        assert _skew(M) < 1e-15


def test_su2_basis_relation():
    t1, t2, t3 = TAU
    assert np.allclose(t1 @ t2 - t2 @ t1, -t3)


def test_trivial_curvature_zero():
    m = catenoid()
    F, ev = curvature_star(trivial(m, 2), m, (np.array([0.3]), np.array([0.2])))
    assert np.all(F == 0) and np.all(ev == 0)


def test_u1_curvature_against_direct_differentiation():
    # A1 = i a cos x2: i * (-d2 A1) = i * (i a sin x2) = -a sin x2
    m = flat_torus()
    a = 0.7
    x2 = np.linspace(0, 2 * np.pi, 13)
    x1 = np.full_like(x2, 0.4)
    F, ev = curvature_star(u1_oscillatory(m, a), m, (x1, x2))
    assert np.allclose(ev[:, 0], -a * np.sin(x2), atol=1e-14)


def test_curvature_fd_fallback_agrees_with_analytic():
    m = catenoid()
    p = su2_bump(m, 1.3)
    x1, x2 = np.array([1.0, 3.0, 4.2]), np.array([-0.3, 0.1, 0.5])
    F_an, _ = curvature_star(p, m, (x1, x2))
    F_fd, _ = curvature_star(p.__class__(**{**p.__dict__, "dA1": None, "dA2": None}), m, (x1, x2))
    assert np.max(np.abs(F_an - F_fd)) < 1e-8


def test_curvature_is_hermitian_with_sorted_spectrum():
    m = catenoid()
    X1, X2 = build_grid(m, 12, 12, 4).mesh()
    F, ev = curvature_star(su2_bump(m, 1.0), m, (X1, X2))
    assert np.max(np.abs(F - np.swapaxes(F.conj(), -1, -2))) < 1e-14
    assert np.all(np.diff(ev, axis=-1) >= 0)


def test_traceless_spectrum_symmetric_against_quadrature():
    # su(2)-valued curvature: lambda_1 = -lambda_2 pointwise, so the integrals cancel
    m = flat_torus()
    g = build_grid(m, 32, 32, 4)
    X1, X2 = g.mesh()
    _, ev = curvature_star(su2_bump(m, 0.8), m, (X1, X2))
    i1 = np.sum(g.base_weights * ev[..., 0])
    i2 = np.sum(g.base_weights * ev[..., 1])
    assert i1 == pytest.approx(-i2, rel=1e-12)
    assert i1 < 0


def test_gauge_identity_is_noop():
    m = catenoid()
    p = su2_bump(m)
    eye = lambda x1, x2: np.broadcast_to(np.eye(2, dtype=complex), np.shape(x1) + (2, 2)).copy()
    zero = lambda x1, x2: (np.zeros(np.shape(x1) + (2, 2), complex),) * 2
    q = gauge_transform(p, eye, zero)
    x1, x2 = np.array([0.5, 2.0]), np.array([-0.2, 0.7])
    for a, b in zip(p.evaluate(x1, x2), q.evaluate(x1, x2)):
        assert np.allclose(a, b, atol=1e-15)


def test_pure_gauge_is_flat_and_skew():
    m = catenoid()
    r, dr = boundary_gauge(m, 2, 1.2)
    q = gauge_transform(trivial(m, 2), r, dr)
    X1, X2 = build_grid(m, 10, 10, 4).mesh()
    for M in q.evaluate(X1, X2):
        assert _skew(M) < 1e-14
    F, _ = curvature_star(q, m, (X1, X2))
    assert np.max(np.abs(F)) < 1e-7


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(-0.95, 0.95), st.floats(0.1, 2.0))
def test_spectrum_gauge_invariant(x1, x2, gamma):
    m = catenoid()
    p = su2_bump(m, 1.0)
    r, dr = boundary_gauge(m, 2, gamma)
    q = gauge_transform(p, r, dr)
    pt = (np.array([x1]), np.array([x2]))
    _, e1 = curvature_star(p, m, pt)
    _, e2 = curvature_star(q, m, pt)
    assert np.allclose(e1, e2, atol=1e-7)


def test_boundary_gauge_is_identity_on_boundary():
    m = catenoid()
    r, _ = boundary_gauge(m, 2, 1.0)
    u = np.linspace(0, 2 * np.pi, 9)
    for v in (-1.0, 1.0):
        assert np.allclose(r(u, np.full_like(u, v)), np.eye(2), atol=1e-15)


def test_gauge_validation_errors():
    m = catenoid()
    bad = lambda x1, x2: 2.0 * np.broadcast_to(np.eye(1, dtype=complex), np.shape(x1) + (1, 1))
    zero = lambda x1, x2: (np.zeros(np.shape(x1) + (1, 1), complex),) * 2
    with pytest.raises(GaugeValidationError):
        gauge_transform(trivial(m), bad, zero)
    r, dr = boundary_gauge(m, 1, 1.0)
    wrong = lambda x1, x2: tuple(2 * d for d in dr(x1, x2))
    with pytest.raises(GaugeValidationError):
        gauge_transform(trivial(m), r, wrong)


def test_make_pair_errors():
    with pytest.raises(ConfigurationError):
        make_pair("nope", catenoid())
    with pytest.raises(ConfigurationError):
        make_pair("trivial", catenoid(), colour=3)
    assert scalar_higgs(catenoid(), 0.5).Phi(0.0, 0.0)[0, 0] == 0.5j
