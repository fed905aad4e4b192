import math

import numpy as np
import pytest

from carlemanlab.analytic import (CoefficientSpec, SolutionSpec,
                                  coefficient_preset, weight_preset)
from carlemanlab.geometry import build_grid, interval, sample_coefficients
from carlemanlab.numerics import loglog_slope
from carlemanlab.solver import GridFunction, solve_ivp
from carlemanlab.symbols import WeightFunction
from carlemanlab import carleman as ca


TEST_FIELD = SolutionSpec("t**2*exp(I*t)*(sin(pi*x)+0.4*I*sin(2*pi*x))", 1)


def _field_on(grid, sol=TEST_FIELD):
    vals = sol(grid.time_col(grid.ts), *grid.meshes)
    vals[:, grid.boundary_mask()] = 0.0
    return GridFunction(grid, vals)


def test_weight_values(grid_1d, psi_1d, psi_1d_scaled):
    w = ca.build_weights(psi_1d, 1.0, 2.0, grid_1d)
    assert psi_1d.sup_norm == pytest.approx(4.0)
    # values at (t, x) = (1, 1)
    assert w.alpha[-1, -1] == pytest.approx(math.e ** 4 - math.e ** 8)
    assert w.phi[-1, -1] == pytest.approx(math.e ** 4)
    assert np.all(w.alpha < 0)
    assert np.all(w.phi > 0)
    # underflow of exp(tau alpha) to exact zero is permitted near t_floor;
    # with a moderate weight the factor sits strictly inside (0, 1)
    assert np.all((w.exp_tau_alpha >= 0) & (w.exp_tau_alpha < 1))
    ws = ca.build_weights(psi_1d_scaled, 1.0, 2.0, grid_1d)
    assert np.all((ws.exp_tau_alpha > 0) & (ws.exp_tau_alpha < 1))


def test_weight_rejects_bad_parameters(grid_1d, psi_1d):
    with pytest.raises(ValueError):
        ca.build_weights(psi_1d, 0.0, 1.0, grid_1d)
    with pytest.raises(ValueError):
        ca.build_weights(psi_1d, 1.0, -2.0, grid_1d)


def test_log_space_products_underflow_gracefully(grid_1d, psi_1d):
    w = ca.build_weights(psi_1d, 1.0, 64.0, grid_1d)
    v3 = w.weighted_power(3.0)
    assert np.all(np.isfinite(v3))
    assert np.all(v3 >= 0)


def test_conjugated_operators_zero_and_scaling(grid_1d, coeffs_1d, psi_1d_scaled):
    w1 = ca.build_weights(psi_1d_scaled, 1.0, 1.0, grid_1d)
    w2 = ca.build_weights(psi_1d_scaled, 1.0, 2.0, grid_1d)
    zero = GridFunction(grid_1d, np.zeros((grid_1d.n_t + 1,) + grid_1d.space_shape,
                                          dtype=complex))
    p1, p2 = ca.apply_conjugated_operators(coeffs_1d, w1, zero)
    assert np.max(np.abs(p1)) == 0.0 and np.max(np.abs(p2)) == 0.0

    v = _field_on(grid_1d)
    p1a, p2a = ca.apply_conjugated_operators(coeffs_1d, w1, v)
    p1b, p2b = ca.apply_conjugated_operators(coeffs_1d, w2, v)
    # first operator is linear in tau; the zero-order part of the second is
    # quadratic in tau
    np.testing.assert_allclose(p1b, 2 * p1a, rtol=1e-12)
    dtv = ca._sub_time_deriv(v.values[1:], grid_1d)
    lap = ca._space_hess_contract(v.values[1:], coeffs_1d.a[:, :, 1:], grid_1d)
    zo_a = p1a * 0 + (1j * dtv - lap - p2a)
    zo_b = (1j * dtv - lap - p2b)
    np.testing.assert_allclose(zo_b, 4 * zo_a, rtol=1e-12, atol=1e-13)


def test_conjugated_operator_hand_evaluation(grid_1d, coeffs_1d, psi_1d_scaled):
    # P1 v = 2 tau phi lam a psi' v' + tau lam^2 phi a psi'^2 v for constant a
    lam, tau = 1.5, 2.5
    w = ca.build_weights(psi_1d_scaled, lam, tau, grid_1d)
    sol = SolutionSpec("exp(I*t)*sin(pi*x)", 1)
    v = _field_on(grid_1d, sol)
    p1, _ = ca.apply_conjugated_operators(coeffs_1d, w, v)
    x = grid_1d.axes[0][1:-1]
    t = grid_1d.ts[1:][:, None]
    phi = np.exp(lam * (x + 1) ** 2 / 8) / t
    dpsi = 2 * (x + 1) / 8
    vv = np.exp(1j * t) * np.sin(np.pi * x)
    dv = np.pi * np.exp(1j * t) * np.cos(np.pi * x)
    expected = 2 * tau * phi * lam * dpsi * dv + tau * lam ** 2 * phi * dpsi ** 2 * vv
    np.testing.assert_allclose(p1[:, 1:-1], expected, rtol=5e-3, atol=5e-3)


def _ensemble_member(coeffs, seed):
    grid = coeffs.grid
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    om = rng.uniform(0.5, 3.0, 4)

    def gfun(t, x):
        out = np.zeros_like(x, dtype=complex)
        for k in range(4):
            out += c[k] * np.exp(1j * om[k] * t) * np.sin((k + 1) * np.pi * x)
        return out

    return solve_ivp(coeffs, gfun), gfun


def test_budget_zero_scaling_and_flags(grid_1d, coeffs_1d, psi_1d_scaled):
    w = ca.build_weights(psi_1d_scaled, 1.0, 4.0, grid_1d)
    z, g = _ensemble_member(coeffs_1d, 0)
    row = ca.carleman_budget(coeffs_1d, w, z, g)
    for f in ("lhs_volume", "lhs_p1p2", "rhs_final", "rhs_source", "rhs_boundary"):
        assert getattr(row, f) >= 0.0
    z2 = GridFunction(grid_1d, 2 * z.values)
    row2 = ca.carleman_budget(coeffs_1d, w, z2, lambda t, x: 2 * g(t, x))
    for f in ("lhs_volume", "lhs_p1p2", "rhs_final", "rhs_source", "rhs_boundary"):
        assert getattr(row2, f) == pytest.approx(4 * getattr(row, f), rel=1e-12)
    assert row2.empirical_C == pytest.approx(row.empirical_C, rel=1e-12)

    zero = GridFunction(grid_1d, np.zeros_like(z.values))
    rz = ca.carleman_budget(coeffs_1d, w, zero, lambda t, x: np.zeros_like(x, dtype=complex))
    assert rz.degenerate and math.isnan(rz.empirical_C)

    bad = GridFunction(grid_1d, np.ones_like(z.values))
    with pytest.raises(ValueError):
        ca.carleman_budget(coeffs_1d, w, bad, g)


def test_sweep_stabilizes(grid_1d, coeffs_1d, psi_1d_scaled):
    ensemble = [_ensemble_member(coeffs_1d, s) for s in range(10)]
    taus = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0]
    rep = ca.carleman_sweep(coeffs_1d, psi_1d_scaled, 1.0, ensemble, taus)
    assert rep.tau0_star is not None
    cs = [c for _, c in rep.max_empirical_C]
    top = cs[len(cs) // 2:]
    assert (max(top) - min(top)) / max(top) <= 0.10
    assert rep.excluded_members == 0
    with pytest.raises(ValueError):
        ca.carleman_sweep(coeffs_1d, psi_1d_scaled, 1.0, ensemble, [4.0, 1.0])


def test_sweep_excludes_degenerate_member(grid_1d, coeffs_1d, psi_1d_scaled):
    zero = (GridFunction(grid_1d, np.zeros((grid_1d.n_t + 1,) + grid_1d.space_shape,
                                           dtype=complex)),
            lambda t, x: np.zeros_like(x, dtype=complex))
    ensemble = [_ensemble_member(coeffs_1d, 0), zero]
    rep = ca.carleman_sweep(coeffs_1d, psi_1d_scaled, 1.0, ensemble, [1.0, 2.0])
    assert rep.excluded_members == 2  # one per tau
    assert all(np.isfinite(c) for _, c in rep.max_empirical_C)


def test_energy_identity_zero_field(grid_1d, coeffs_1d, psi_1d_scaled):
    w = ca.build_weights(psi_1d_scaled, 1.0, 1.0, grid_1d)
    zero = GridFunction(grid_1d, np.zeros((grid_1d.n_t + 1,) + grid_1d.space_shape,
                                          dtype=complex))
    res = ca.energy_identity_check(coeffs_1d, w, zero)
    assert res.lhs == 0.0 and res.rhs == 0.0 and res.relative_discrepancy == 0.0


def test_energy_identity_refinement_identity_coeffs():
    spec = coefficient_preset("identity", 1)
    wspec = weight_preset("shifted_square", 1, scale=8.0)
    discs, hs = [], []
    for n in (32, 64, 128):
        grid = build_grid(interval(), n, n, 1.0)
        coeffs = sample_coefficients(spec, grid)
        psi = WeightFunction.on_grid(wspec, grid)
        weights = ca.build_weights(psi, 1.0, 1.0, grid)
        res = ca.energy_identity_check(coeffs, weights, _field_on(grid))
        assert res.terms["lateral_time"] == 0.0
        discs.append(res.relative_discrepancy)
        hs.append(grid.h[0])
    assert discs[-1] < discs[0]
    assert loglog_slope(hs, discs) >= 1.0


def test_energy_identity_variable_coefficients():
    spec = CoefficientSpec(1, [["1 + x**2/2 + t/4"]])
    wspec = weight_preset("shifted_square", 1, scale=8.0)
    discs, hs = [], []
    for n in (32, 64, 128):
        grid = build_grid(interval(), n, n, 1.0)
        coeffs = sample_coefficients(spec, grid)
        psi = WeightFunction.on_grid(wspec, grid)
        weights = ca.build_weights(psi, 1.5, 2.0, grid)
        res = ca.energy_identity_check(coeffs, weights, _field_on(grid))
        discs.append(res.relative_discrepancy)
        hs.append(grid.h[0])
    assert loglog_slope(hs, discs) >= 1.5


def test_energy_identity_static_real_field(grid_1d, coeffs_1d, psi_1d_scaled):
    w = ca.build_weights(psi_1d_scaled, 1.0, 1.0, grid_1d)
    x = grid_1d.axes[0]
    vals = np.tile(np.sin(np.pi * x).astype(complex), (grid_1d.n_t + 1, 1))
    vals[:, 0] = vals[:, -1] = 0
    res = ca.energy_identity_check(coeffs_1d, w, GridFunction(grid_1d, vals))
    assert res.relative_discrepancy <= 0.05


def test_elliptic_slice_check(grid_1d, coeffs_1d, psi_1d_scaled):
    w = ca.build_weights(psi_1d_scaled, 1.0, 2.0, grid_1d)
    z, g = _ensemble_member(coeffs_1d, 1)
    level = grid_1d.n_t // 2
    w_slice = z.values[level]
    dtw = (z.values[level + 1] - z.values[level - 1]) / (2 * grid_1d.dt)
    q = g(grid_1d.ts[level], grid_1d.axes[0])
    res = ca.elliptic_slice_check(coeffs_1d, w, w_slice, q, dtw, level)
    assert np.isfinite(res.ratio) and res.lhs > 0 and res.rhs > 0
    res2 = ca.elliptic_slice_check(coeffs_1d, w, 3 * w_slice, 3 * q, 3 * dtw, level)
    assert res2.ratio == pytest.approx(res.ratio, rel=1e-12)
    zero = np.zeros_like(w_slice)
    rz = ca.elliptic_slice_check(coeffs_1d, w, zero, zero, zero, level)
    assert rz.excluded


def test_h3_tau_norm_values():
    grid = build_grid(interval(), 128, 16, 1.0)
    x = grid.axes[0]
    v = np.sin(np.pi * x)
    expected = math.sqrt((1 + np.pi ** 2 + np.pi ** 4 + np.pi ** 6) / 2)
    got = ca.h3_tau_norm(v, grid, 0.0)
    assert got == pytest.approx(expected, rel=2e-3)
    got_tau = ca.h3_tau_norm(v, grid, 1.0)
    assert got_tau == pytest.approx(expected + 1 / math.sqrt(2), rel=2e-3)
    assert ca.h3_tau_norm(np.zeros_like(v), grid, 5.0) == 0.0
