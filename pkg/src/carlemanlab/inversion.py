"""Inverse experiments: synthetic data, regularized least-squares source
reconstruction, empirical Lipschitz stability ratios, the multiplication
transform behind the coefficient problem, and its reduction to a source
problem."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import sympy as sp

from .analytic import (CoefficientSpec, ScalarField, T as T_SYM, space_symbols,
                       parse_expr)
from .geometry import CoefficientSet, SpaceTimeGrid, sample_coefficients
from .numerics import space_weights, time_weights, face_weights, loglog_slope
from .carleman import h3_tau_norm, _space_grad
from .solver import (GridFunction, SourceForwardMap, DataVector, solve_ivp,
                     neumann_trace, apply_operator)


@dataclass
class InverseData:
    """Observed final-time field and Neumann traces, possibly noisy."""

    u_final: np.ndarray
    traces: dict  # (face, order) -> (n_t + 1,) + face shape
    noise_level: float
    seed: Optional[int]

    def as_data_vector(self) -> DataVector:
        return DataVector(self.u_final, dict(self.traces))


def _perturb(rng: np.random.Generator, v: np.ndarray, level: float) -> np.ndarray:
    scale = float(np.linalg.norm(v.ravel())) / math.sqrt(v.size)
    noise = (rng.standard_normal(v.shape) + 1j * rng.standard_normal(v.shape)) / math.sqrt(2)
    return v + level * scale * noise


def synthesize_data(coeffs: CoefficientSet, f: np.ndarray,
                    u0: Optional[np.ndarray] = None, noise_level: float = 0.0,
                    seed: Optional[int] = 0) -> InverseData:
    """Forward data for the source R f with given initial field, plus
    independent per-channel Gaussian perturbations of the stated relative
    size (seeded, reproducible)."""
    coeffs.require_valid()
    if noise_level < 0:
        raise ValueError("noise_level must be nonnegative")
    f = np.asarray(f)
    if np.iscomplexobj(f) and np.max(np.abs(f.imag)) > 0:
        raise ValueError("source factor f must be real-valued")
    grid = coeffs.grid
    spec = coeffs.spec
    u = solve_ivp(coeffs, lambda t, *X: spec.R(t, *X) * f.real, u0=u0)
    traces = {}
    for face in sorted(grid.domain.observed):
        for k in (0, 1):
            traces[(face, k)] = neumann_trace(u, face, k).values
    u_final = u.values[-1].copy()
    if noise_level > 0:
        rng = np.random.default_rng(seed)
        u_final = _perturb(rng, u_final, noise_level)
        traces = {key: _perturb(rng, traces[key], noise_level)
                  for key in sorted(traces)}
    return InverseData(u_final, traces, noise_level, seed)


@dataclass
class ReconstructionResult:
    f_hat: np.ndarray
    converged: bool
    iterations: int
    relative_residual: float


def reconstruct_source(coeffs: CoefficientSet, data: InverseData,
                       reg: float = 1e-12, max_iters: int = 500,
                       tol: float = 1e-10) -> ReconstructionResult:
    """Conjugate gradients on the normal equations of

        min_f  || F f - data ||_data^2 + reg ||f||_L2^2

    over real f, with the data norm weighting the order-3 Sobolev final-time
    channel and the trace channels equally.  Gradients use the exact discrete
    adjoint with the real part taken."""
    if reg < 0:
        raise ValueError("reg must be nonnegative")
    F = SourceForwardMap(coeffs)
    grid = coeffs.grid
    wq = space_weights(grid)

    def inner(u, v):
        return float(np.sum(wq * u * v))

    def normal_apply(f):
        return F.adjoint(F.apply(f)).real + reg * f

    b = F.adjoint(data.as_data_vector()).real
    x = np.zeros(grid.space_shape)
    r = b - normal_apply(x)
    p = r.copy()
    rs = inner(r, r)
    b_norm = math.sqrt(max(inner(b, b), 1e-300))
    iterations = 0
    for it in range(1, max_iters + 1):
        iterations = it
        Ap = normal_apply(p)
        denom = inner(p, Ap)
        if denom <= 0:
            break
        alpha = rs / denom
        x = x + alpha * p
        r = r - alpha * Ap
        rs_new = inner(r, r)
        if math.sqrt(rs_new) <= tol * b_norm:
            return ReconstructionResult(x, True, it, math.sqrt(rs_new) / b_norm)
        p = r + (rs_new / rs) * p
        rs = rs_new
    return ReconstructionResult(x, False, iterations, math.sqrt(rs) / b_norm)


# ---------------------------------------------------------------------------
# stability ratios
# ---------------------------------------------------------------------------

@dataclass
class StabilityEntry:
    pair_id: int
    numerator: float
    h3_term: float
    boundary_terms: float
    ratio: float
    excluded: bool = False
    violation: bool = False

    def as_dict(self) -> dict:
        return {"pair_id": self.pair_id, "num": self.numerator,
                "h3_term": self.h3_term, "boundary_terms": self.boundary_terms,
                "ratio": self.ratio, "excluded": self.excluded,
                "violation": self.violation}


@dataclass
class StabilityReport:
    entries: list
    max_ratio: float
    median_ratio: float
    violations: int
    excluded_count: int

    def as_dict(self) -> dict:
        return {"entries": [e.as_dict() for e in self.entries],
                "max_ratio": self.max_ratio, "median_ratio": self.median_ratio,
                "violations": self.violations,
                "excluded_count": self.excluded_count}


def _summarize(entries) -> StabilityReport:
    ratios = [e.ratio for e in entries if not e.excluded and not e.violation]
    max_ratio = float(np.max(ratios)) if ratios else float("nan")
    med_ratio = float(np.median(ratios)) if ratios else float("nan")
    return StabilityReport(list(entries), max_ratio, med_ratio,
                           sum(e.violation for e in entries),
                           sum(e.excluded for e in entries))


def _trace_l2_norm(grid: SpaceTimeGrid, traces: dict, order: int) -> float:
    wt = time_weights(grid.ts)
    total = 0.0
    for (face, k), tr in traces.items():
        if k != order:
            continue
        wf = face_weights(grid, face)
        if grid.dim == 1:
            total += float(np.sum(wt * np.abs(tr) ** 2))
        else:
            total += float(np.sum(wt[:, None] * wf[None, :] * np.abs(tr) ** 2))
    return math.sqrt(total)


def data_difference_norms(coeffs: CoefficientSet, u: GridFunction,
                          u_tilde: GridFunction):
    """(H^3 final-time term, summed Sigma_0 trace terms) of u - u_tilde."""
    grid = coeffs.grid
    diff_final = u.values[-1] - u_tilde.values[-1]
    h3 = h3_tau_norm(diff_final, grid, 0.0)
    traces = {}
    for face in sorted(grid.domain.observed):
        for k in (0, 1):
            traces[(face, k)] = (neumann_trace(u, face, k).values
                                 - neumann_trace(u_tilde, face, k).values)
    boundary = _trace_l2_norm(grid, traces, 0) + _trace_l2_norm(grid, traces, 1)
    return h3, boundary


def stability_pair_ratio(coeffs: CoefficientSet, f: np.ndarray,
                         f_tilde: np.ndarray, u0=None, u0_tilde=None,
                         pair_id: int = 0) -> StabilityEntry:
    """Ratio ||f - f~||_L2 / (||u(T) - u~(T)||_H3 + trace terms) for one
    pair of source problems."""
    grid = coeffs.grid
    spec = coeffs.spec
    wq = space_weights(grid)
    f = np.asarray(f, dtype=float)
    f_tilde = np.asarray(f_tilde, dtype=float)
    u = solve_ivp(coeffs, lambda t, *X: spec.R(t, *X) * f, u0=u0)
    ut = solve_ivp(coeffs, lambda t, *X: spec.R(t, *X) * f_tilde, u0=u0_tilde)
    num = math.sqrt(float(np.sum(wq * (f - f_tilde) ** 2)))
    h3, boundary = data_difference_norms(coeffs, u, ut)
    den = h3 + boundary
    scale = max(math.sqrt(float(np.sum(wq * f ** 2))),
                math.sqrt(float(np.sum(wq * f_tilde ** 2))), 1.0)
    if num <= 1e-13 * scale and den <= 1e-11 * scale:
        return StabilityEntry(pair_id, num, h3, boundary, float("nan"), excluded=True)
    if den <= 1e-13 * scale:
        return StabilityEntry(pair_id, num, h3, boundary, float("inf"), violation=True)
    return StabilityEntry(pair_id, num, h3, boundary, num / den)


def random_band_limited(grid: SpaceTimeGrid, rng: np.random.Generator,
                        band_limit: int = 6) -> np.ndarray:
    """Real band-limited field: seeded truncated sine expansion, normalized
    to unit L2 norm."""
    wq = space_weights(grid)
    out = np.zeros(grid.space_shape)
    if grid.dim == 1:
        lo, hi = grid.domain.bounds[0]
        x = (grid.axes[0] - lo) / (hi - lo)
        for m in range(1, band_limit + 1):
            out += rng.standard_normal() * np.sin(m * np.pi * x)
    else:
        (lx, hx), (ly, hy) = grid.domain.bounds
        X, Y = grid.meshes
        xs = (X - lx) / (hx - lx)
        ys = (Y - ly) / (hy - ly)
        for m in range(1, band_limit + 1):
            for n in range(1, band_limit + 1):
                out += rng.standard_normal() * np.sin(m * np.pi * xs) * np.sin(n * np.pi * ys)
    nrm = math.sqrt(float(np.sum(wq * out ** 2)))
    return out / nrm if nrm > 0 else out


def stability_sweep(coeffs: CoefficientSet, count: int = 50,
                    band_limit: int = 6, seed: int = 0) -> StabilityReport:
    """Stability ratios over ``count`` random band-limited source pairs
    (zero initial data); deterministic under a fixed seed."""
    if count < 2:
        raise ValueError("need at least two pairs")
    rng = np.random.default_rng(seed)
    entries = []
    for k in range(count):
        f = random_band_limited(coeffs.grid, rng, band_limit)
        f_tilde = random_band_limited(coeffs.grid, rng, band_limit)
        entries.append(stability_pair_ratio(coeffs, f, f_tilde, pair_id=k))
    return _summarize(entries)


def reconstruction_noise_sweep(coeffs: CoefficientSet, f_true: np.ndarray,
                               noise_levels: Sequence[float], seed: int = 0,
                               reg: float = 1e-12, max_iters: int = 500,
                               tol: float = 1e-10):
    """Reconstruction error against noise amplitude; the fitted log-log
    slope near 1 exhibits the Lipschitz (not Hoelder) scaling."""
    wq = space_weights(coeffs.grid)
    fn = math.sqrt(float(np.sum(wq * np.asarray(f_true) ** 2)))
    errors = []
    for i, level in enumerate(noise_levels):
        data = synthesize_data(coeffs, f_true, noise_level=level, seed=seed + i)
        rec = reconstruct_source(coeffs, data, reg=reg, max_iters=max_iters, tol=tol)
        err = math.sqrt(float(np.sum(wq * (rec.f_hat - f_true) ** 2)))
        errors.append(err / fn)
    slope = loglog_slope(list(noise_levels), errors)
    return errors, slope


# ---------------------------------------------------------------------------
# multiplication transform check (coefficient-problem machinery)
# ---------------------------------------------------------------------------

def _conj_R_fields(spec: CoefficientSpec):
    """Symbolic correction coefficients of the transformed operator acting
    on w~ = i conj(R) w."""
    d = spec.dim
    xs = space_symbols(d)
    Rb = sp.conjugate(spec.R_expr)
    la_Rb = sum(sp.diff(spec.a_exprs[l][j] * sp.diff(Rb, xs[j]), xs[l])
                for l in range(d) for j in range(d))
    b_gradRb = sum(spec.b_exprs[l] * sp.diff(Rb, xs[l]) for l in range(d))
    zero_order = (-2 / Rb ** 2 * sum(spec.a_exprs[l][j] * sp.diff(Rb, xs[l]) * sp.diff(Rb, xs[j])
                                     for l in range(d) for j in range(d))
                  - (sp.I * sp.diff(Rb, T_SYM) - la_Rb + b_gradRb) / Rb)
    grad_coefs = [ScalarField(2 / Rb * sum(spec.a_exprs[l][j] * sp.diff(Rb, xs[l])
                                           for l in range(d)), d)
                  for j in range(d)]
    return ScalarField(zero_order, d), grad_coefs


def verify_transformation(coeffs: CoefficientSet, w: GridFunction,
                          q: np.ndarray) -> float:
    """Relative residual of the transformed problem: with w solving
    P w = R q, the field w~ = i conj(R) w must satisfy the transformed
    equation with right side i |R|^2 q."""
    grid = coeffs.grid
    spec = coeffs.spec
    r_min = float(np.min(np.abs(coeffs.R)))
    if r_min <= 1e-12:
        raise ValueError("R vanishes on the grid; transform undefined")
    q = np.asarray(q)
    w_t = GridFunction(grid, 1j * np.conj(coeffs.R) * w.values)
    base = apply_operator(coeffs, w_t)
    zero_f, grad_fs = _conj_R_fields(spec)
    tcol = grid.time_col(grid.ts)
    corr = zero_f(tcol, *grid.meshes) * w_t.values
    gw = _space_grad(w_t.values, grid)
    for j in range(grid.dim):
        corr = corr + grad_fs[j](tcol, *grid.meshes) * gw[j]
    target = 1j * np.abs(coeffs.R) ** 2 * q
    sl = (slice(1, -1),) * (grid.dim + 1)
    res = base[sl] + corr[sl] - target[sl]
    denom = float(np.linalg.norm(target[sl].ravel()))
    if denom == 0:
        return float("nan")
    return float(np.linalg.norm(res.ravel())) / denom


# ---------------------------------------------------------------------------
# zero-order coefficient problem, reduced to a source problem
# ---------------------------------------------------------------------------

@dataclass
class CoefficientPairResult:
    entry: StabilityEntry
    reduction_residual: float
    u2_min_abs: float
    beta_floor: float


def coefficient_reduction(base: CoefficientSpec, grid: SpaceTimeGrid,
                          c1, c2, lifting, pair_id: int = 0,
                          beta_floor_frac: float = 0.1) -> CoefficientPairResult:
    """Run the two zero-order-coefficient problems sharing Dirichlet data
    (realized through an analytic lifting), verify the reduction of their
    difference to a source problem, and compute the stability ratio of the
    coefficient difference against the final-time/trace data.

    ``c1``/``c2`` are real spatial expressions; ``lifting`` is an analytic
    field carrying the boundary values (both runs start from lifting(0)).
    """
    xs = space_symbols(base.dim)
    c1e, c2e = parse_expr(c1), parse_expr(c2)
    for ce in (c1e, c2e):
        if ce.has(sp.I) or T_SYM in ce.free_symbols:
            raise ValueError("c1, c2 must be real spatial expressions")
    lift = ScalarField(lifting, base.dim)
    spec1 = CoefficientSpec(base.dim, base.a_exprs, base.b_exprs, c1e, base.R_expr)
    spec2 = CoefficientSpec(base.dim, base.a_exprs, base.b_exprs, c2e, base.R_expr)
    cs1 = sample_coefficients(spec1, grid)
    cs2 = sample_coefficients(spec2, grid)

    from .analytic import apply_operator_symbolic
    y_runs = []
    for spec_j in (spec1, spec2):
        g_expr = -apply_operator_symbolic(spec_j, lift.expr)
        y = solve_ivp(sample_coefficients(spec_j, grid), ScalarField(g_expr, base.dim))
        y_runs.append(y)
    y1, y2 = y_runs
    lift_vals = lift(grid.time_col(grid.ts), *grid.meshes)
    u1 = GridFunction(grid, lift_vals + y1.values)
    u2 = GridFunction(grid, lift_vals + y2.values)

    u2_min = float(np.min(np.abs(u2.values)))
    floor = beta_floor_frac * float(np.max(np.abs(u2.values)))
    wq = space_weights(grid)
    c1v = ScalarField(c1e, base.dim, float)(0.0, *grid.meshes)
    c2v = ScalarField(c2e, base.dim, float)(0.0, *grid.meshes)
    num = math.sqrt(float(np.sum(wq * (c1v - c2v) ** 2)))

    w = GridFunction(grid, y1.values - y2.values)
    pw = apply_operator(cs1, w)
    target = (c2v - c1v) * u2.values
    sl = (slice(1, -1),) * (grid.dim + 1)
    tnorm = float(np.linalg.norm(target[sl].ravel()))
    if tnorm > 0:
        residual = float(np.linalg.norm((pw[sl] - target[sl]).ravel())) / tnorm
    else:
        residual = float("nan")

    h3, boundary = data_difference_norms(cs1, u1, u2)
    den = h3 + boundary
    scale = max(float(np.max(np.abs(c1v))), float(np.max(np.abs(c2v))), 1.0)
    if u2_min < floor:
        entry = StabilityEntry(pair_id, num, h3, boundary, float("nan"), excluded=True)
    elif num <= 1e-13 * scale and den <= 1e-10 * scale:
        entry = StabilityEntry(pair_id, num, h3, boundary, float("nan"), excluded=True)
    elif den <= 1e-13 * scale:
        entry = StabilityEntry(pair_id, num, h3, boundary, float("inf"), violation=True)
    else:
        entry = StabilityEntry(pair_id, num, h3, boundary, num / den)
    return CoefficientPairResult(entry, residual, u2_min, floor)
