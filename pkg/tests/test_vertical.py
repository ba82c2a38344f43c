import numpy as np
import pytest

from holoray.connections import boundary_gauge, gauge_transform, scalar_higgs, su2_bump, trivial, u1_oscillatory
from holoray.fields import FiberField, random_field, random_omega_field
from holoray.geometry import ConfigurationError, build_grid, catenoid, flat_torus
from holoray.vertical import (FrameOperators, ValidationError, adjoint_residual, apply_twisted, apply_V, apply_X,
                              beurling_check, beurling_constants, ckt_condition_check, ckt_kernel_scan,
                              commutator_residual, degree_profile, eta_mu, pestov_residual,
                              pestov_residual_omega_m, structure_residuals)

import oracles

CKT_RADIAL_SIGMA = 0.8680661877089928  # frozen from oracles.ckt_radial_sigma(64)


def _pairs(model):
    return [trivial(model), u1_oscillatory(model, 0.5, 0.5), su2_bump(model, 1.0)]


def test_V_on_pure_modes():
    g = build_grid(flat_torus(), 8, 8, 16)
    u = FiberField.from_modes(g, {3: np.ones((8, 8, 1))})
    assert np.allclose(apply_V(u).values, 3j * u.values, atol=1e-12)
    c = FiberField(g, np.full((8, 8, 16, 1), 2.0))
    assert np.max(np.abs(apply_V(c).values)) < 1e-13


def test_X_on_flat_torus_plane_wave():
    g = build_grid(flat_torus(), 16, 16, 16)
    X1, _ = g.mesh()
    u = np.exp(1j * (X1[..., None] + g.theta))[..., None]
    Xu = apply_X(FiberField(g, u)).values
    assert np.allclose(Xu, 1j * np.cos(g.theta)[:, None] * u, atol=1e-12)


def test_twisted_reduces_for_trivial_pair_and_V_ignores_connection():
    m = catenoid()
    g = build_grid(m, 12, 12, 8)
    u = random_field(g, 0, n=2)
    a = apply_twisted(u, trivial(m, 2), "X").values
    assert np.allclose(a, apply_X(u).values)
    assert np.array_equal(apply_twisted(u, su2_bump(m), "V").values, apply_V(u).values)
    with pytest.raises(ValidationError):
        apply_twisted(u, trivial(m, 1), "X")


def test_structure_equations_converge():
    m = catenoid()
    res = {}
    for N in (16, 32):
        g = build_grid(m, N, N, 32)
        u = random_field(g, 5, n=2, theta_degree=3)
        res[N] = structure_residuals(u, su2_bump(m))
    assert res[32]["bracket_X_V"].relative_residual < 1e-12
    assert res[32]["twisted_bracket_X_V"].relative_residual < 1e-12
    ratio = res[16]["bracket_X_Xperp"].relative_residual / res[32]["bracket_X_Xperp"].relative_residual
    assert ratio > 8  # at least third order
    assert res[32]["bracket_X_Xperp"].relative_residual < 1e-4


def test_eta_degree_shift_and_flat_commutation():
    m = flat_torus()
    g = build_grid(m, 16, 16, 16)
    u = FiberField.from_modes(g, {2: random_field(g, 1, theta_degree=0).mode(0)})
    up = eta_mu(u, None, +1, twisted=False)
    assert up.degree() == 3
    ops = FrameOperators(g, trivial(m))
    comm = ops.eta(+1, ops.eta(-1, u.values)) - ops.eta(-1, ops.eta(+1, u.values))
    assert np.max(np.abs(comm)) < 1e-12 * np.max(np.abs(u.values))
    with pytest.raises(ValidationError):
        eta_mu(random_field(g, 2, theta_degree=2), None, +1)


def test_mu_degree_shift_on_catenoid():
    m = catenoid()
    g = build_grid(m, 16, 16, 16)
    u = random_omega_field(g, 3, 2, n=2).project([2])
    w = eta_mu(u, su2_bump(m), -1)
    assert w.degree() == 1


def test_X_plus_splits_over_omega_m():
    m = catenoid()
    g = build_grid(m, 16, 16, 16)
    pair = u1_oscillatory(m, 0.5)
    ops = FrameOperators(g, pair)
    u = random_omega_field(g, 4, 2)
    full = FiberField(g, ops.TX(u.values)).project([3, -3])
    up, um = u.project([2]), u.project([-2])
    split = ops.mu(+1, up.values) + ops.mu(-1, um.values)
    assert np.max(np.abs(full.values - split)) < 1e-10 * np.max(np.abs(split))


def test_pestov_zero_field_and_precondition():
    m = catenoid()
    g = build_grid(m, 12, 12, 8)
    z = FiberField.zeros(g, 1)
    assert pestov_residual(z, trivial(m)).residual == 0.0
    with pytest.raises(ValidationError):
        pestov_residual(random_field(g, 0), trivial(m))


def test_pestov_exact_on_flat_torus():
    m = flat_torus()
    g = build_grid(m, 16, 16, 16)
    u = random_field(g, 7, theta_degree=3)
    assert pestov_residual(u, trivial(m)).relative_residual < 1e-12


@pytest.mark.parametrize("idx", [0, 1, 2])
def test_pestov_converges_on_catenoid(idx):
    m = catenoid()
    rel = []
    for N in (16, 32):
        g = build_grid(m, N, N, 32)
        pair = _pairs(m)[idx]
        u = random_field(g, 3, n=pair.n, theta_degree=3, dirichlet=True)
        rel.append(pestov_residual(u, pair).relative_residual)
    assert rel[1] < 1e-3 and rel[0] / rel[1] > 8


def test_omega_m_identity_m1_flat():
    # d = 2, m = 1, K = 0, f = 0: ||X_- u||^2 + ||X_perp u||^2 = 3 ||X_+ u||^2
    m = flat_torus()
    g = build_grid(m, 16, 16, 16)
    u = random_omega_field(g, 9, 1)
    r = pestov_residual_omega_m(u, trivial(m), 1)
    t = r.terms
    assert t["Xminus"] + t["Xperp"] == pytest.approx(3 * t["Xplus"], rel=1e-12)
    with pytest.raises(ValidationError):
        pestov_residual_omega_m(random_field(g, 0, theta_degree=2), trivial(m), 1)


def test_omega_m_identity_catenoid_nontrivial():
    m = catenoid()
    rel = []
    for N in (16, 32):
        g = build_grid(m, N, N, 32)
        u = random_omega_field(g, 1, 2, n=2, dirichlet=True)
        rel.append(pestov_residual_omega_m(u, su2_bump(m), 2).relative_residual)
    assert rel[1] < 1e-3 and rel[1] < rel[0]


@pytest.mark.parametrize("model", [catenoid(), flat_torus()], ids=["catenoid", "torus"])
def test_mu_commutator_identity(model):
    g = build_grid(model, 32, 32, 32)
    for pair in _pairs(model):
        u = random_field(g, 2, n=pair.n, theta_degree=3)
        assert commutator_residual(u, pair).relative_residual < 1e-3


def test_adjointness_compact_support():
    m = catenoid()
    g = build_grid(m, 32, 32, 16)
    pair = su2_bump(m)
    u = random_field(g, 1, n=2, dirichlet=True)
    w = random_field(g, 2, n=2, dirichlet=True)
    assert adjoint_residual(u, w, pair) < 1e-3


def test_beurling_constants_table():
    assert beurling_constants(4, 0.17) == (pytest.approx(0.17), 1.0)
    assert beurling_constants(1, 0.3)[1] == 2.0
    assert beurling_constants(2, 0.3)[1] == 1.0


def test_beurling_margin_and_hypothesis_flag():
    m = catenoid()
    g = build_grid(m, 32, 32, 32)
    kappa = np.cosh(1.0) ** -4
    ok = beurling_check(random_omega_field(g, 0, 4, dirichlet=True), trivial(m), 4, kappa)
    assert ok["hypothesis_satisfied"] and ok["margin"] >= -1e-3 * ok["rhs"]
    strong = beurling_check(random_omega_field(g, 0, 1, n=2, dirichlet=True), su2_bump(m, 1.0), 1, kappa)
    assert strong["hypothesis_satisfied"] is False


def test_ckt_scan_torus_has_flat_kernel():
    m = flat_torus()
    sv = ckt_kernel_scan(build_grid(m, 16, 16, 8), trivial(m), 1, boundary_dirichlet=False)
    assert sv[0] < 1e-10


def test_ckt_scan_catenoid_monotone_towards_radial_oracle():
    assert oracles.ckt_radial_sigma(48) == pytest.approx(CKT_RADIAL_SIGMA, abs=1e-9)
    m = catenoid()
    s = [ckt_kernel_scan(build_grid(m, N, N, 8), trivial(m), 1, True)[0] for N in (16, 24, 32)]
    assert s[0] <= s[1] <= s[2] < CKT_RADIAL_SIGMA
    assert CKT_RADIAL_SIGMA - s[2] < 0.05


def test_ckt_scan_gauge_covariance():
    m = catenoid()
    g = build_grid(m, 16, 16, 8)
    r, dr = boundary_gauge(m, 2, 0.8)
    a = ckt_kernel_scan(g, trivial(m, 2), 1, True)
    b = ckt_kernel_scan(g, gauge_transform(trivial(m, 2), r, dr), 1, True)
    assert np.allclose(a, b, rtol=1e-2)


def test_ckt_scan_rejects_unresolved_mode():
    m = catenoid()
    with pytest.raises(ConfigurationError):
        ckt_kernel_scan(build_grid(m, 8, 8, 4), trivial(m), 1, True)


def test_condition_check():
    m = flat_torus()
    g = build_grid(m, 64, 64, 4)
    for pair in (trivial(m), u1_oscillatory(m, 0.9), scalar_higgs(m, 1.0)):
        rep = ckt_condition_check(g, pair, 1)
        assert abs(rep["integral_lambda_1"]) < 1e-8 and not rep["c"]
    rep = ckt_condition_check(g, su2_bump(m, 0.7), 2)
    assert rep["integral_lambda_1"] == pytest.approx(-rep["integral_lambda_n"], rel=1e-12)
    with pytest.raises(ConfigurationError):
        ckt_condition_check(build_grid(catenoid(), 8, 8, 4), trivial(catenoid()), 1)


def test_degree_profile():
    m = catenoid()
    g = build_grid(m, 10, 10, 16)
    u = random_field(g, 4, n=2, theta_degree=2)
    prof = degree_profile(u)
    assert all(v < 1e-10 for mm, v in prof if mm >= 3)
    Q = np.array([[0, 1j], [1, 0]]) @ np.diag([1, np.exp(0.4j)])
    rot = FiberField(g, u.values @ Q.T)
    assert np.allclose([v for _, v in degree_profile(rot)], [v for _, v in prof], rtol=1e-12)
