import math

import numpy as np
import pytest

from carlemanlab.analytic import (CoefficientSpec, coefficient_preset,
                                  weight_preset)
from carlemanlab.geometry import build_grid, interval, rectangle, sample_coefficients
from carlemanlab import symbols as sy


@pytest.fixture(scope="module")
def grid_2d():
    return build_grid(rectangle(), 8, 8, 1.0)


@pytest.fixture(scope="module")
def coeffs_2d_identity(grid_2d):
    return sample_coefficients(coefficient_preset("identity", 2), grid_2d)


@pytest.fixture(scope="module")
def psi_2d_offset(grid_2d):
    # |x - y0|^2 with the reference point outside the closed domain
    return sy.WeightFunction.on_grid(
        weight_preset("distance_sq", 2, center=[-1.0, -1.0]), grid_2d)


def test_quad_form_examples(grid_2d, coeffs_2d_identity):
    aniso = sample_coefficients(coefficient_preset("anisotropic_constant", 2), grid_2d)
    assert sy.quad_form(coeffs_2d_identity, 0.5, (0.3, 0.4), (1, 0), (1, 0)) == pytest.approx(1.0)
    assert sy.quad_form(aniso, 0.5, (0.3, 0.4), (1, 0), (0, 1)) == pytest.approx(1.0)
    assert sy.quad_form(aniso, 0.5, (0.3, 0.4), (0, 0), (3, 7)) == pytest.approx(0.0)


def test_quad_form_symmetric(coeffs_2d_identity, grid_2d):
    aniso = sample_coefficients(
        CoefficientSpec(2, [["2 + x*y", "x/3"], ["x/3", "2 + t"]]), grid_2d)
    rng = np.random.default_rng(1)
    for _ in range(25):
        t = rng.uniform(0.1, 1.0)
        x = rng.uniform(0.0, 1.0, 2)
        v = rng.standard_normal(2)
        w = rng.standard_normal(2)
        assert sy.quad_form(aniso, t, x, v, w) == sy.quad_form(aniso, t, x, w, v)


def test_derivative_form_examples():
    g = build_grid(interval(), 10, 10, 1.0)
    const = sample_coefficients(coefficient_preset("identity", 1), g)
    for p in (0, 1):
        assert sy.derivative_form(const, p, 0.4, (0.3,), (1,), (1,)) == pytest.approx(0.0)
    lin_x = sample_coefficients(CoefficientSpec(1, [["1 + x"]]), g)
    assert sy.derivative_form(lin_x, 1, 0.4, (0.3,), (1,), (1,)) == pytest.approx(1.0)
    lin_t = sample_coefficients(CoefficientSpec(1, [["1 + t"]]), g)
    assert sy.derivative_form(lin_t, 0, 0.4, (0.3,), (1,), (1,)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        sy.derivative_form(lin_t, 2, 0.4, (0.3,), (1,), (1,))


def test_principal_symbol_examples(coeffs_2d_identity):
    assert sy.principal_symbol(coeffs_2d_identity, 0.5, (0.3, 0.4), 1.0, (1, 1)) == pytest.approx(1.0)
    assert sy.principal_symbol(coeffs_2d_identity, 0.5, (0.3, 0.4), 2.5, (0, 0)) == pytest.approx(-2.5)
    g = build_grid(interval(), 10, 10, 1.0)
    c1 = sample_coefficients(coefficient_preset("identity", 1), g)
    assert sy.principal_symbol(c1, 0.5, (0.3,), math.pi ** 2, (math.pi,)) == pytest.approx(0.0)


def test_closed_form_hand_values(grid_1d, coeffs_1d, psi_1d):
    # a = 1, psi = (x+1)^2: psi'(0) = 2, psi'' = 2
    assert sy.bracket_closed_form(coeffs_1d, psi_1d, 0.5, (0.0,), (1.0,), 0.0) == pytest.approx(8.0)
    assert sy.bracket_closed_form(coeffs_1d, psi_1d, 0.5, (0.0,), (0.0,), 1.0) == pytest.approx(32.0)


def test_closed_form_constant_a_linear_psi(grid_2d, coeffs_2d_identity):
    lin = sy.WeightFunction.on_grid(weight_preset("linear", 2), grid_2d)
    v = sy.bracket_closed_form(coeffs_2d_identity, lin, 0.5, (0.3, 0.4), (0.7, -0.2), 1.3)
    assert v == pytest.approx(0.0, abs=1e-14)


def test_closed_form_homogeneity(grid_2d):
    spec = CoefficientSpec(2, [["1 + x**2/2", "x*y/5"], ["x*y/5", "1 + t/3"]])
    cs = sample_coefficients(spec, grid_2d)
    psi = sy.WeightFunction.on_grid(
        weight_preset("distance_sq", 2, center=[-1.0, -1.0]), grid_2d)
    rng = np.random.default_rng(3)
    for _ in range(25):
        t = rng.uniform(0.1, 1.0)
        x = rng.uniform(0.0, 1.0, 2)
        xi = rng.standard_normal(2)
        tau = rng.uniform(0.1, 2.0)
        s = rng.uniform(0.5, 3.0)
        q1 = sy.bracket_closed_form(cs, psi, t, x, xi, tau)
        q2 = sy.bracket_closed_form(cs, psi, t, x, s * xi, s * tau)
        assert q2 == pytest.approx(s ** 2 * q1, rel=1e-12, abs=1e-12)


def test_oracle_matches_closed_form_1d(grid_1d, coeffs_1d, psi_1d):
    v_or = sy.bracket_oracle(coeffs_1d, psi_1d, 0.5, (0.3,), 0.1, (0.7,), 1.2)
    v_cl = sy.bracket_closed_form(coeffs_1d, psi_1d, 0.5, (0.3,), (0.7,), 1.2)
    assert abs(v_or - v_cl) <= 1e-6 * (1 + abs(v_cl))


def test_oracle_constant_a_linear_psi():
    g = build_grid(interval(), 16, 16, 1.0)
    cs = sample_coefficients(coefficient_preset("identity", 1), g)
    lin = sy.WeightFunction.on_grid(weight_preset("linear", 1), g)
    v = sy.bracket_oracle(cs, lin, 0.5, (0.3,), 0.2, (0.7,), 1.1)
    assert abs(v) <= 1e-10


def test_oracle_requires_positive_tau(grid_1d, coeffs_1d, psi_1d):
    with pytest.raises(ValueError):
        sy.bracket_oracle(coeffs_1d, psi_1d, 0.5, (0.3,), 0.0, (1.0,), 0.0)


def test_oracle_equivalence_randomized(grid_2d):
    rng = np.random.default_rng(11)
    g1 = build_grid(interval(), 16, 16, 1.0)
    psi1 = sy.WeightFunction.on_grid(weight_preset("shifted_square", 1), g1)
    psi2 = sy.WeightFunction.on_grid(
        weight_preset("distance_sq", 2, center=[-1.0, -1.0]), grid_2d)
    cases = [
        (sample_coefficients(coefficient_preset("identity", 1), g1), psi1, 1),
        (sample_coefficients(coefficient_preset("variable_a11", 1), g1), psi1, 1),
        (sample_coefficients(coefficient_preset("identity", 2), grid_2d), psi2, 2),
        (sample_coefficients(coefficient_preset("variable_a11", 2), grid_2d), psi2, 2),
    ]
    for cs, psi, dim in cases:
        for _ in range(25):
            t = rng.uniform(0.1, 1.0)
            x = rng.uniform(0.05, 0.95, dim)
            xi = rng.uniform(-2, 2, dim)
            xi0 = rng.uniform(-1, 1)
            tau = rng.uniform(0.1, 3.0)
            vo = sy.bracket_oracle(cs, psi, t, x, xi0, xi, tau)
            vc = sy.bracket_closed_form(cs, psi, t, x, xi, tau)
            assert abs(vo - vc) <= 1e-6 * (1 + abs(vc))


def test_convexity_condition_distance_weight_value(coeffs_2d_identity, psi_2d_offset):
    chk = sy.check_convexity_condition(coeffs_2d_identity, psi_2d_offset, 300)
    assert not chk.vacuous
    assert chk.minimum == pytest.approx(8.0, abs=1e-9)


def test_convexity_condition_vacuous_1d(coeffs_1d, psi_1d):
    chk = sy.check_convexity_condition(coeffs_1d, psi_1d, 50)
    assert chk.vacuous
    assert chk.minimum == math.inf


def test_convexity_condition_linear_psi_degenerate(grid_2d, coeffs_2d_identity):
    lin = sy.WeightFunction.on_grid(weight_preset("linear", 2), grid_2d)
    chk = sy.check_convexity_condition(coeffs_2d_identity, lin, 50)
    assert chk.minimum == pytest.approx(0.0, abs=1e-12)
    assert not chk.minimum > 0  # verdict fails on the boundary case


def test_boundary_sign_examples():
    g_right = build_grid(interval(observed=("right",)), 16, 16, 1.0)
    g_left = build_grid(interval(observed=("left",)), 16, 16, 1.0)
    for g, expected in ((g_right, -2.0), (g_left, 4.0)):
        cs = sample_coefficients(coefficient_preset("identity", 1), g)
        psi = sy.WeightFunction.on_grid(weight_preset("shifted_square", 1), g)
        chk = sy.check_boundary_sign(cs, psi)
        assert chk.maximum == pytest.approx(expected, abs=1e-12)


def test_boundary_sign_vacuous_when_all_observed():
    g = build_grid(interval(observed=("left", "right")), 16, 16, 1.0)
    cs = sample_coefficients(coefficient_preset("identity", 1), g)
    psi = sy.WeightFunction.on_grid(weight_preset("shifted_square", 1), g)
    chk = sy.check_boundary_sign(cs, psi)
    assert chk.vacuous
    assert chk.maximum == -math.inf


def test_find_min_lambda_distance_weight(coeffs_2d_identity, psi_2d_offset):
    res = sy.find_min_lambda(coeffs_2d_identity, psi_2d_offset, n_space_samples=60)
    assert res.found
    assert res.q_min > 0
    # larger lambdas keep the minimum positive on the same samples
    res2 = sy.find_min_lambda(coeffs_2d_identity, psi_2d_offset,
                              lambda_grid=[res.lambda_star, 2 * res.lambda_star,
                                           4 * res.lambda_star],
                              n_space_samples=60)
    assert res2.found and res2.lambda_star == res.lambda_star


def test_find_min_lambda_linear_psi_not_found(grid_2d, coeffs_2d_identity):
    lin = sy.WeightFunction.on_grid(weight_preset("linear", 2), grid_2d)
    res = sy.find_min_lambda(coeffs_2d_identity, lin, n_space_samples=30)
    assert not res.found
    assert res.lambda_star is None


def test_garding_constant_positive(grid_1d, coeffs_1d, psi_1d):
    c = sy.estimate_garding_constant(coeffs_1d, psi_1d, 2.0, (1.0, 10.0),
                                     n_space_samples=60)
    assert c > 0


def test_garding_ratio_scale_invariant(grid_1d, coeffs_1d, psi_1d):
    # the bound's two sides are jointly degree-2 homogeneous in (xi, tau)
    spec = coeffs_1d.spec
    lam = 2.0
    t, x = 0.5, np.array([0.3])
    phi = math.exp(lam * float(psi_1d.psi(*x))) / t
    g = psi_1d.grad(*x).reshape(1)
    H = psi_1d.hess(*x).reshape(1, 1)
    A = spec.a(t, *x).reshape(1, 1)
    A_dx = np.array([spec.a_dx(0, t, *x)]).reshape(1, 1, 1)
    G_a = lam * phi * g
    H_a = lam * phi * (H + lam * np.outer(g, g))
    for xi, tau in ((np.array([1.0]), 0.7), (np.array([-0.4]), 2.0)):
        r1 = sy.bracket_core(A, A_dx, G_a, H_a, xi, tau) / (xi @ xi + tau ** 2 * phi ** 2)
        r2 = sy.bracket_core(A, A_dx, G_a, H_a, 2 * xi, 2 * tau) / (
            4 * (xi @ xi) + 4 * tau ** 2 * phi ** 2)
        assert r2 == pytest.approx(r1, rel=1e-12)


def test_covector_validates_tau():
    c = sy.Covector(0.5, np.array([1.0, 0.0]), 2.0)
    assert c.tau == 2.0
    with pytest.raises(ValueError):
        sy.Covector(0.5, np.array([1.0]), -1.0)


def test_garding_rejects_nonpositive_tau(grid_1d, coeffs_1d, psi_1d):
    with pytest.raises(ValueError):
        sy.estimate_garding_constant(coeffs_1d, psi_1d, 2.0, (0.0, 1.0),
                                     n_space_samples=10)


def test_weight_requires_nonvanishing_gradient():
    g = build_grid(interval(), 16, 16, 1.0)
    from carlemanlab.analytic import WeightSpec
    with pytest.raises(ValueError):
        sy.WeightFunction.on_grid(WeightSpec("(x - 0.5)**2", 1), g)


def test_report_verdict_invariant(grid_1d, coeffs_1d, psi_1d_scaled):
    rep = sy.pseudoconvexity_report(coeffs_1d, psi_1d_scaled,
                                    n_space_samples=40, n_tau_samples=3)
    assert rep.verdict == ((rep.convexity_min > 0) and (rep.boundary_sign_max < 0))
