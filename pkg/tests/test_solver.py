import numpy as np
import pytest
import sympy as sp

from carlemanlab.analytic import CoefficientSpec, SolutionSpec, coefficient_preset
from carlemanlab.geometry import build_grid, interval, rectangle, sample_coefficients
from carlemanlab.numerics import loglog_slope, space_weights
from carlemanlab import solver as sv


MANUFACTURED_1D = SolutionSpec("exp(I*t)*sin(pi*x)", 1)


def _mms_error(spec, sol, n, domain=None, T=1.0):
    grid = build_grid(domain or interval(), n, n, T)
    coeffs = sample_coefficients(spec, grid)
    source = sv.manufactured_source(spec, sol)
    u0 = sol(0.0, *grid.meshes)
    u0[grid.boundary_mask()] = 0.0
    u = sv.solve_ivp(coeffs, source, u0=u0)
    exact = sol(grid.time_col(grid.ts), *grid.meshes)
    return float(np.max(np.abs(u.values - exact))), grid.h[0]


def test_convergence_order_1d():
    spec = coefficient_preset("identity", 1)
    errs, hs = zip(*(_mms_error(spec, MANUFACTURED_1D, n) for n in (32, 64, 128)))
    slope = loglog_slope(hs, errs)
    assert 1.8 <= slope <= 2.2


def test_convergence_order_2d_mixed_coefficients():
    spec = CoefficientSpec(2, [["2", "1/2 + x*y/4"], ["1/2 + x*y/4", "2"]])
    sol = SolutionSpec("exp(I*t)*sin(pi*x)*sin(2*pi*y)", 2)
    errs, hs = zip(*(_mms_error(spec, sol, n, rectangle(), T=0.5) for n in (8, 16, 32)))
    slope = loglog_slope(hs, errs)
    assert 1.7 <= slope <= 2.3


def test_zero_source_zero_initial(coeffs_1d):
    u = sv.solve_ivp(coeffs_1d, None)
    assert np.max(np.abs(u.values)) == 0.0


def test_norm_conservation(grid_1d, coeffs_1d):
    x = grid_1d.axes[0]
    u0 = np.sin(np.pi * x) + 0.3j * np.sin(2 * np.pi * x)
    u0[0] = u0[-1] = 0
    u = sv.solve_ivp(coeffs_1d, None, u0=u0)
    w = space_weights(grid_1d)
    norms = np.sqrt(np.sum(w * np.abs(u.values) ** 2, axis=-1))
    assert np.max(np.abs(np.diff(norms))) / norms[0] <= 1e-10


def test_norm_conservation_2d_mixed():
    spec = CoefficientSpec(2, [["2", "1/2 + x*y/4"], ["1/2 + x*y/4", "2"]])
    grid = build_grid(rectangle(), 12, 12, 0.5)
    coeffs = sample_coefficients(spec, grid)
    X, Y = grid.meshes
    u0 = (np.sin(np.pi * X) * np.sin(np.pi * Y)).astype(complex)
    u0[grid.boundary_mask()] = 0.0
    u = sv.solve_ivp(coeffs, None, u0=u0)
    w = space_weights(grid)
    norms = np.sqrt(np.sum(w * np.abs(u.values) ** 2, axis=(1, 2)))
    assert np.max(np.abs(np.diff(norms))) / norms[0] <= 1e-10


def test_time_reversibility(grid_1d, coeffs_1d):
    x = grid_1d.axes[0]
    u0 = (np.sin(np.pi * x) + 0.5 * np.sin(3 * np.pi * x)).astype(complex)
    u0[0] = u0[-1] = 0
    fwd = sv.solve_ivp(coeffs_1d, None, u0=u0)
    back = sv.solve_ivp(coeffs_1d, None, terminal=fwd.values[-1], direction="backward")
    rel = np.max(np.abs(back.values[0] - u0)) / np.max(np.abs(u0))
    assert rel <= 1e-8


def test_boundary_data_must_vanish(grid_1d, coeffs_1d):
    u0 = np.ones(grid_1d.space_shape, dtype=complex)
    with pytest.raises(ValueError):
        sv.solve_ivp(coeffs_1d, None, u0=u0)
    with pytest.raises(ValueError):
        sv.solve_ivp(coeffs_1d, None, direction="sideways")
    with pytest.raises(ValueError):
        sv.solve_ivp(coeffs_1d, None, direction="backward")


def test_apply_operator_consistency(grid_1d, coeffs_1d):
    source = sv.manufactured_source(coeffs_1d, MANUFACTURED_1D)
    u0 = MANUFACTURED_1D(0.0, *grid_1d.meshes)
    u0[0] = u0[-1] = 0
    u = sv.solve_ivp(coeffs_1d, source, u0=u0)
    Pu = sv.apply_operator(coeffs_1d, u)
    g = source(grid_1d.time_col(grid_1d.ts), *grid_1d.meshes)
    res = np.max(np.abs(Pu[1:-1, 1:-1] - g[1:-1, 1:-1]))
    assert res <= 5e-3
    zero = sv.apply_operator(coeffs_1d, sv.GridFunction(grid_1d, np.zeros_like(u.values)))
    assert np.max(np.abs(zero)) == 0.0


def test_manufactured_source_hand_values():
    spec = coefficient_preset("identity", 1)
    g1 = sv.manufactured_source(spec, MANUFACTURED_1D)
    x = sp.Symbol("x", real=True)
    t = sp.Symbol("t", real=True)
    assert sp.simplify(g1.expr - (sp.pi ** 2 - 1) * sp.exp(sp.I * t) * sp.sin(sp.pi * x)) == 0
    g2 = sv.manufactured_source(spec, SolutionSpec("t*x*(1-x)", 1))
    assert sp.simplify(g2.expr - (sp.I * x * (1 - x) + 2 * t)) == 0
    g3 = sv.manufactured_source(spec, SolutionSpec("0", 1))
    assert g3.expr == 0


def test_neumann_trace_values():
    grid = build_grid(interval(), 128, 16, 1.0)
    vals = np.tile(np.sin(np.pi * grid.axes[0]), (grid.n_t + 1, 1)).astype(complex)
    u = sv.GridFunction(grid, vals)
    tr = sv.neumann_trace(u, "right", 0)
    assert tr.values[0] == pytest.approx(-np.pi, abs=5e-3)
    zero = sv.neumann_trace(sv.GridFunction(grid, np.zeros_like(vals)), "left", 0)
    assert np.max(np.abs(zero.values)) == 0.0


def test_neumann_trace_time_derivative():
    grid = build_grid(interval(), 128, 128, 1.0)
    exact = MANUFACTURED_1D(grid.time_col(grid.ts), *grid.meshes)
    u = sv.GridFunction(grid, exact)
    tr = sv.neumann_trace(u, "right", 1)
    expected = -1j * np.pi * np.exp(1j * grid.ts[10])
    assert abs(tr.values[10] - expected) <= 5e-3
    with pytest.raises(ValueError):
        sv.neumann_trace(u, "y_hi", 0)
    with pytest.raises(ValueError):
        sv.neumann_trace(u, "right", 2)


def test_adjoint_identity():
    grid = build_grid(interval(observed=("right",)), 32, 32, 1.0)
    spec = CoefficientSpec(1, [[1]], b=["0.1"], c="0.2 + 0.1*I", R="exp(I*t)*(1 + x/2)")
    coeffs = sample_coefficients(spec, grid)
    F = sv.SourceForwardMap(coeffs)
    rng = np.random.default_rng(7)
    for _ in range(25):
        f = rng.standard_normal(grid.space_shape) + 1j * rng.standard_normal(grid.space_shape)
        d = F.apply(f)
        r = sv.DataVector(
            rng.standard_normal(grid.space_shape) + 1j * rng.standard_normal(grid.space_shape),
            {k: rng.standard_normal(v.shape) + 1j * rng.standard_normal(v.shape)
             for k, v in d.traces.items()})
        lhs = F.data_inner(d, r)
        rhs = F.source_inner(f, F.adjoint(r))
        assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_adjoint_zero_cases(grid_1d, coeffs_1d):
    F = sv.SourceForwardMap(coeffs_1d)
    d0 = F.apply(np.zeros(grid_1d.space_shape))
    assert np.max(np.abs(d0.u_final)) == 0.0
    r0 = sv.DataVector(np.zeros(grid_1d.space_shape, dtype=complex),
                       {k: np.zeros_like(v) for k, v in d0.traces.items()})
    assert np.max(np.abs(F.adjoint(r0))) == 0.0
