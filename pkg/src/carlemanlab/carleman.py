"""Carleman weights, conjugated operators, and numerical evaluation of both
sides of the weighted energy inequality.

Weighted products are assembled in log space (exp applied once per product)
because alpha is of order -exp(2 lam sup|psi|)/t and naive exponentiation
underflows mid-expression; underflow to exact zero near t_floor is accepted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import sympy as sp

from .analytic import T as T_SYM, space_symbols, ScalarField
from .geometry import CoefficientSet, SpaceTimeGrid
from .numerics import (deriv_matrix, apply_axis, space_weights, face_weights,
                       trapezoid_weights, multi_indices, apply_multi_deriv,
                       loglog_slope)
from .solver import GridFunction, neumann_trace, _trace_stencil
from .symbols import WeightFunction


@dataclass
class CarlemanWeights:
    """Sampled weight fields phi = exp(lam psi)/t and
    alpha = (exp(lam psi) - exp(2 lam sup|psi|))/t for t >= t_floor."""

    psi: WeightFunction
    lam: float
    tau: float
    grid: SpaceTimeGrid
    phi: np.ndarray        # (n_t, *space), levels 1..n_t
    alpha: np.ndarray
    log_phi: np.ndarray
    psi_vals: np.ndarray
    grad_psi: np.ndarray   # (dim, *space)
    hess_psi: np.ndarray   # (dim, dim, *space)

    @property
    def levels(self) -> np.ndarray:
        return self.grid.ts[1:]

    @property
    def exp_tau_alpha(self) -> np.ndarray:
        return np.exp(self.tau * self.alpha)

    def weighted_power(self, p: float, extra_exponent: Optional[np.ndarray] = None) -> np.ndarray:
        """(tau phi)^p * exp(2 tau alpha), assembled in log space."""
        expo = p * (math.log(self.tau) + self.log_phi) + 2 * self.tau * self.alpha
        if extra_exponent is not None:
            expo = expo + extra_exponent
        return np.exp(expo)


def build_weights(psi: WeightFunction, lam: float, tau: float,
                  grid: SpaceTimeGrid) -> CarlemanWeights:
    if lam <= 0 or tau <= 0:
        raise ValueError("lam and tau must be positive")
    psi_vals = psi.psi(*grid.meshes)
    grad = psi.grad(*grid.meshes)
    hess = psi.hess(*grid.meshes)
    tinv = grid.time_col(1.0 / grid.ts[1:])
    e_psi = np.exp(lam * psi_vals)
    ceiling = math.exp(2 * lam * psi.sup_norm)
    phi = e_psi * tinv
    alpha = (e_psi - ceiling) * tinv
    log_phi = lam * psi_vals - np.log(grid.time_col(grid.ts[1:]))
    if not np.all(alpha < 0):
        raise AssertionError("alpha must be strictly negative on the grid")
    if not np.all(phi > 0):
        raise AssertionError("phi must be strictly positive on the grid")
    return CarlemanWeights(psi, float(lam), float(tau), grid,
                           phi, alpha, log_phi, psi_vals, grad, hess)


# ---------------------------------------------------------------------------
# pointwise geometric fields shared by the operators and the identity
# ---------------------------------------------------------------------------

class _Fields:
    """Coefficient/weight contractions sampled on levels 1..n_t."""

    def __init__(self, coeffs: CoefficientSet, weights: CarlemanWeights):
        grid = coeffs.grid
        spec = coeffs.spec
        self.grid, self.spec, self.weights = grid, spec, weights
        d = spec.dim
        tcol = grid.time_col(grid.ts[1:])
        self.A = spec.a(tcol, *grid.meshes)            # (d, d, n_t, *sp)
        self.A_dt = spec.a_dt(tcol, *grid.meshes)
        self.A_dx = np.array([spec.a_dx(p, tcol, *grid.meshes) for p in range(d)])
        self.divA = spec.div_a(tcol, *grid.meshes)     # (d, n_t, *sp)
        g = weights.grad_psi
        H = weights.hess_psi
        self.g = g
        self.V = np.einsum("kj...,j...->k...", self.A, g[(slice(None),) + (None,)])
        self.V_dt = np.einsum("kj...,j...->k...", self.A_dt, g[(slice(None),) + (None,)])
        # dV[j, k] = d_{x_j} V_k = sum_l (d_j a_kl) psi_l + a_kl psi_jl
        self.dV = (np.einsum("jkl...,l...->jk...", self.A_dx, g[(slice(None),) + (None,)])
                   + np.einsum("kl...,jl...->jk...", self.A, H[(slice(None), slice(None)) + (None,)]))
        self.H_a = np.einsum("kj...,kj...->...", self.A,
                             H[(slice(None), slice(None)) + (None,)])
        self.agg = np.einsum("k...,k...->...", self.V, g[(slice(None),) + (None,)])
        self.m = np.einsum("j...,j...->...", self.divA, g[(slice(None),) + (None,)])
        self.theta = weights.tau * weights.lam * weights.phi
        self.mu = weights.lam * self.agg + self.m
        self.sigma = (weights.tau * weights.lam) ** 2 * weights.phi ** 2 * self.agg


def _sym_aux_fields(coeffs: CoefficientSet, psi: WeightFunction, lam: float, tau: float):
    """Symbolic zero-order and tau^3 volume coefficients of the identity
    (they involve up to third derivatives of psi and second of a)."""
    spec = coeffs.spec
    d = spec.dim
    xs = space_symbols(d)
    psi_e = psi.spec.expr
    a = spec.a_exprs
    lam_s, tau_s = sp.Float(lam), sp.Float(tau)
    phi = sp.exp(lam_s * psi_e) / T_SYM
    theta = tau_s * lam_s * phi
    gpsi = [sp.diff(psi_e, x) for x in xs]
    V = [sum(a[k][j] * gpsi[j] for j in range(d)) for k in range(d)]
    agg = sum(V[k] * gpsi[k] for k in range(d))
    m = sum(sp.diff(a[k][j], xs[k]) * gpsi[j] for k in range(d) for j in range(d))
    mu = lam_s * agg + m
    divA = [sum(sp.diff(a[k][j], xs[k]) for k in range(d)) for j in range(d)]
    tm = theta * mu
    z_expr = (sum(sp.diff(sum(a[j][k] * sp.diff(tm, xs[k]) for k in range(d)), xs[j])
                  for j in range(d))
              + sum(sp.diff(tm * divA[j], xs[j]) for j in range(d))) / 2
    rho = tau_s ** 3 * lam_s ** 3 * phi ** 3
    Ha = sum(a[k][j] * sp.diff(psi_e, xs[k], xs[j]) for k in range(d) for j in range(d))
    tau3_expr = rho * (2 * lam_s * agg ** 2
                       + sum(V[l] * sp.diff(agg, xs[l]) for l in range(d))
                       + agg * Ha)
    return (ScalarField(z_expr, d, float), ScalarField(tau3_expr, d, float))


# ---------------------------------------------------------------------------
# conjugated operators
# ---------------------------------------------------------------------------

def _sub_time_deriv(vals: np.ndarray, grid: SpaceTimeGrid) -> np.ndarray:
    """d/dt on the t >= t_floor level range (centered inside, one-sided at
    the range ends)."""
    Dt = deriv_matrix(vals.shape[0], grid.dt, 1)
    return apply_axis(vals, Dt, 0)


def _space_grad(vals: np.ndarray, grid: SpaceTimeGrid) -> np.ndarray:
    return np.stack([
        apply_axis(vals, deriv_matrix(grid.n_x + 1, grid.h[ax], 1), vals.ndim - grid.dim + ax)
        for ax in range(grid.dim)])


def _space_hess_contract(vals: np.ndarray, A: np.ndarray, grid: SpaceTimeGrid) -> np.ndarray:
    """sum_lj a_lj d2_{x_l x_j} v with centered stencils."""
    dim = grid.dim
    out = np.zeros_like(vals)
    for l in range(dim):
        ax_l = vals.ndim - dim + l
        for j in range(dim):
            ax_j = vals.ndim - dim + j
            if l == j:
                d2 = apply_axis(vals, deriv_matrix(grid.n_x + 1, grid.h[l], 2), ax_l)
            else:
                d1 = apply_axis(vals, deriv_matrix(grid.n_x + 1, grid.h[j], 1), ax_j)
                d2 = apply_axis(d1, deriv_matrix(grid.n_x + 1, grid.h[l], 1), ax_l)
            out = out + A[l, j] * d2
    return out


def apply_conjugated_operators(coeffs: CoefficientSet, weights: CarlemanWeights,
                               v: GridFunction):
    """(P1 v, P2 v) on the levels t >= t_floor.

    P1 v = 2 tau phi lam a(grad psi, grad v) + tau lam^2 phi a(grad psi, grad psi) v
           + tau phi lam (sum_kj d_k a_kj d_j psi) v
    P2 v = i dv/dt - sum_lj a_lj d2_{lj} v - lam^2 tau^2 phi^2 a(grad psi, grad psi) v
    """
    F = _Fields(coeffs, weights)
    grid = coeffs.grid
    w = v.values[1:]
    gw = _space_grad(w, grid)
    a_gpsi_gw = np.einsum("k...,k...->...", F.V, gw)
    p1 = F.theta * (2.0 * a_gpsi_gw + (weights.lam * F.agg + F.m) * w)
    dtw = _sub_time_deriv(w, grid)
    p2 = 1j * dtw - _space_hess_contract(w, F.A, grid) - F.sigma * w
    return p1, p2


# ---------------------------------------------------------------------------
# budget of the weighted inequality
# ---------------------------------------------------------------------------

@dataclass
class CarlemanBudgetRow:
    tau: float
    lhs_volume: float
    lhs_p1p2: float
    rhs_final: float
    rhs_source: float
    rhs_boundary: float
    empirical_C: float
    degenerate: bool = False

    def as_dict(self) -> dict:
        return {
            "tau": self.tau, "lhs_volume": self.lhs_volume,
            "lhs_p1p2": self.lhs_p1p2, "rhs_final": self.rhs_final,
            "rhs_source": self.rhs_source, "rhs_boundary": self.rhs_boundary,
            "empirical_C": self.empirical_C, "degenerate": self.degenerate,
        }


def carleman_budget(coeffs: CoefficientSet, weights: CarlemanWeights,
                    z: GridFunction, g_source) -> CarlemanBudgetRow:
    """Every term of the weighted inequality for one solution z of the
    boundary value problem with source g."""
    grid = coeffs.grid
    if z.boundary_maxabs() > 0:
        raise ValueError("z must satisfy the homogeneous Dirichlet condition")
    wq = space_weights(grid)
    wt = trapezoid_weights(grid.n_t, grid.dt)  # levels 1..n_t
    wt_col = grid.time_col(wt)

    zl = z.values[1:]
    grad_z = _space_grad(zl, grid)
    grad_sq = np.sum(np.abs(grad_z) ** 2, axis=0)
    w1 = weights.weighted_power(1.0)
    w3 = weights.weighted_power(3.0)
    lhs_volume = float(np.sum(wt_col * wq * (w1 * grad_sq + w3 * np.abs(zl) ** 2)))

    e_ta = weights.exp_tau_alpha
    wfield = GridFunction(grid, np.concatenate(
        [np.zeros((1,) + grid.space_shape, dtype=complex), zl * e_ta], axis=0))
    p1, p2 = apply_conjugated_operators(coeffs, weights, wfield)
    lhs_p1p2 = float(np.sum(wt_col * wq * (np.abs(p1) ** 2 + np.abs(p2) ** 2)))

    pairing = 1j * wfield.values[-1] * np.conj(p1[-1])
    rhs_final = abs(float(np.sum(wq * pairing.real)))

    if callable(g_source):
        gvals = np.stack([np.broadcast_to(
            np.asarray(g_source(t, *grid.meshes), dtype=complex), grid.space_shape)
            for t in grid.ts[1:]])
    else:
        gvals = np.asarray(g_source, dtype=complex)[1:]
    e2ta = np.exp(2 * weights.tau * weights.alpha)
    rhs_source = float(np.sum(wt_col * wq * np.abs(gvals) ** 2 * e2ta))

    rhs_boundary = 0.0
    wt_face = wt.reshape((-1,) + (1,) * (grid.dim - 1))
    for face in sorted(grid.domain.observed):
        tr = neumann_trace(z, face, 0).values[1:]
        idx = grid.face_indexer(face)
        w1_face = w1[(slice(None),) + idx]
        wf = face_weights(grid, face)
        rhs_boundary += float(np.sum(wt_face * wf * w1_face * np.abs(tr) ** 2))

    denom = rhs_final + rhs_source + rhs_boundary
    numer = lhs_volume + lhs_p1p2
    if denom == 0.0:
        return CarlemanBudgetRow(weights.tau, lhs_volume, lhs_p1p2, rhs_final,
                                 rhs_source, rhs_boundary, float("nan"),
                                 degenerate=True)
    return CarlemanBudgetRow(weights.tau, lhs_volume, lhs_p1p2, rhs_final,
                             rhs_source, rhs_boundary, numer / denom)


@dataclass
class CarlemanReport:
    rows: list                    # worst-member budget per tau
    max_empirical_C: list         # (tau, max C) per tau
    tau0_star: Optional[float]
    stabilized_C: float
    member_table: list            # (tau, member, empirical_C, degenerate)
    excluded_members: int

    def as_dict(self) -> dict:
        return {
            "rows": [r.as_dict() for r in self.rows],
            "max_empirical_C": [list(p) for p in self.max_empirical_C],
            "tau0_star": self.tau0_star,
            "stabilized_C": self.stabilized_C,
            "member_table": [list(m) for m in self.member_table],
            "excluded_members": self.excluded_members,
        }


def carleman_sweep(coeffs: CoefficientSet, psi: WeightFunction, lam: float,
                   ensemble, tau_grid: Sequence[float],
                   stabilization_rtol: float = 0.10) -> CarlemanReport:
    """Budget the inequality for every (tau, ensemble member) and locate the
    stabilization point of the per-tau maximum of the empirical constant.

    ``ensemble`` is a sequence of (z, g) pairs from the solver.  tau0_star is
    the smallest tau such that all later per-tau maxima vary by at most
    ``stabilization_rtol`` relative to their largest value.
    """
    taus = sorted(float(t) for t in tau_grid)
    if taus != list(tau_grid):
        raise ValueError("tau grid must be increasing")
    rows = []
    max_per_tau = []
    member_table = []
    excluded = 0
    for tau in taus:
        weights = build_weights(psi, lam, tau, coeffs.grid)
        best_row = None
        for k, (z, g) in enumerate(ensemble):
            row = carleman_budget(coeffs, weights, z, g)
            member_table.append((tau, k, row.empirical_C, row.degenerate))
            if row.degenerate:
                excluded += 1
                continue
            if best_row is None or row.empirical_C > best_row.empirical_C:
                best_row = row
        if best_row is None:
            best_row = CarlemanBudgetRow(tau, 0, 0, 0, 0, 0, float("nan"), True)
        rows.append(best_row)
        max_per_tau.append((tau, best_row.empirical_C))
    tau0 = None
    cs = [c for _, c in max_per_tau]
    for i in range(len(cs)):
        tail = cs[i:]
        if len(tail) >= 2 and all(np.isfinite(tail)):
            spread = (max(tail) - min(tail)) / max(tail)
            if spread <= stabilization_rtol:
                tau0 = taus[i]
                break
    top = [c for c in cs[len(cs) // 2:] if np.isfinite(c)]
    stabilized = float(np.median(top)) if top else float("nan")
    return CarlemanReport(rows, max_per_tau, tau0, stabilized, member_table, excluded)


# ---------------------------------------------------------------------------
# the exact energy identity behind the inequality
# ---------------------------------------------------------------------------

@dataclass
class EnergyIdentityResult:
    lhs: float
    rhs: float
    relative_discrepancy: float
    terms: dict


def energy_identity_check(coeffs: CoefficientSet, weights: CarlemanWeights,
                          w: GridFunction) -> EnergyIdentityResult:
    """Quadrature evaluation of both sides of the integration-by-parts
    identity for Re (P1 w, P2 w) over [t_floor, T] x Omega.

    The right side carries: the endpoint terms, the phi-decay and
    coefficient-time-derivative groups, the Hessian-trace time group, the
    (vanishing under Dirichlet) lateral dw/dt term, four gradient volume
    groups, the zero-order volume group, the tau^3 volume group, and the
    boundary groups in their |d_nu w|^2 Dirichlet-reduced form.
    """
    grid = coeffs.grid
    if w.boundary_maxabs() > 0:
        raise ValueError("w must vanish on the lateral boundary")
    F = _Fields(coeffs, weights)
    wq = space_weights(grid)
    wt = trapezoid_weights(grid.n_t, grid.dt)
    wt_col = grid.time_col(wt)

    wl = w.values[1:]
    p1, p2 = apply_conjugated_operators(coeffs, weights, w)
    lhs = float(np.sum(wt_col * wq * (p1 * np.conj(p2)).real))

    theta = F.theta
    gw = _space_grad(wl, grid)
    dtw = _sub_time_deriv(wl, grid)
    V_gw = np.einsum("k...,k...->...", F.V, gw)
    Vdt_gw = np.einsum("k...,k...->...", F.V_dt, gw)
    A_gwbar = np.einsum("kj...,j...->k...", F.A, np.conj(gw))

    def vol(x):
        return float(np.sum(wt_col * wq * x))

    terms = {}
    # endpoint terms: (1/2) Im int P1 w conj(w) at T minus at t_floor
    endpoint = 0.5 * (np.sum(wq * (p1[-1] * np.conj(wl[-1])).imag)
                      - np.sum(wq * (p1[0] * np.conj(wl[0])).imag))
    terms["time_endpoints"] = float(endpoint)

    tinv = grid.time_col(1.0 / grid.ts[1:])
    terms["phi_decay"] = vol((theta * tinv) * (V_gw * np.conj(wl)).imag)
    terms["coeff_dt"] = vol(-theta * (Vdt_gw * np.conj(wl)).imag)
    terms["hessian_time"] = vol(theta * F.H_a * (dtw * np.conj(wl)).imag)

    # lateral dw/dt group: vanishes identically under the Dirichlet
    # condition; evaluated from the discrete trace as an enforcement check
    from .geometry import outward_normal
    wt_face = wt.reshape((-1,) + (1,) * (grid.dim - 1))
    lateral = 0.0
    for face in grid.domain.faces:
        nu = outward_normal(grid.domain, face)
        idx = grid.face_indexer(face)
        wface = wl[(slice(None),) + idx]
        dtw_face = _sub_time_deriv(np.asarray(wface), grid)
        A_face = F.A[(slice(None), slice(None), slice(None)) + idx]
        g_face = F.g[(slice(None),) + idx]
        agpsinu = np.einsum("k,kj...,j...->...", nu, A_face, g_face)
        theta_face = theta[(slice(None),) + idx]
        wf = face_weights(grid, face)
        integ = -theta_face * agpsinu * (dtw_face * np.conj(wface)).imag
        lateral += float(np.sum(wt_face * wf * integ))
    terms["lateral_time"] = lateral

    terms["grad_sq"] = vol(2 * weights.lam * theta * np.abs(V_gw) ** 2)
    terms["grad_dV"] = vol(2 * theta * np.einsum("k...,jk...,j...->...",
                                                 gw, F.dV, A_gwbar).real)
    agw = np.einsum("kj...,k...,j...->...", F.A, gw, np.conj(gw)).real
    terms["grad_hess"] = vol(-theta * F.H_a * agw)
    adk_k = np.einsum("klj...,l...,j...->k...", F.A_dx, gw, np.conj(gw)).real
    terms["grad_adk"] = vol(-theta * np.einsum("k...,k...->...", F.V, adk_k))
    diva_gwbar = np.einsum("j...,j...->...", F.divA, np.conj(gw))
    terms["grad_diva"] = vol(2 * theta * (V_gw * diva_gwbar).real)

    z_field, tau3_field = _sym_aux_fields(coeffs, weights.psi, weights.lam, weights.tau)
    tcol = grid.time_col(grid.ts[1:])
    terms["zero_order"] = vol(-z_field(tcol, *grid.meshes) * np.abs(wl) ** 2)
    terms["tau3_volume"] = vol(tau3_field(tcol, *grid.meshes) * np.abs(wl) ** 2)

    # gradient boundary groups, Dirichlet-reduced: -theta a(nu,nu) a(grad psi,nu) |d_nu w|^2
    bsum = 0.0
    for face in grid.domain.faces:
        nu = outward_normal(grid.domain, face)
        idx = grid.face_indexer(face)
        tr = neumann_trace(w, face, 0).values[1:]
        A_face = F.A[(slice(None), slice(None), slice(None)) + idx]
        g_face = F.g[(slice(None),) + idx]
        anunu = np.einsum("k,kj...,j->...", nu, A_face, nu)
        agpsinu = np.einsum("k,kj...,j...->...", nu, A_face, g_face)
        theta_face = theta[(slice(None),) + idx]
        wf = face_weights(grid, face)
        integ = -theta_face * anunu * agpsinu * np.abs(tr) ** 2
        bsum += float(np.sum(wt_face * wf * integ))
    terms["grad_boundary"] = bsum

    rhs = float(sum(v for v in terms.values() if np.isfinite(v)))
    denom = abs(lhs) + abs(rhs)
    rel = abs(lhs - rhs) / denom if denom > 0 else 0.0
    return EnergyIdentityResult(lhs, rhs, rel, terms)


def energy_identity_refinement(coeffs_factory, weights_factory, w_factory,
                               grids: Sequence[SpaceTimeGrid]):
    """Run the identity check across refinement levels; returns
    (discrepancies, fitted order)."""
    discrepancies = []
    hs = []
    for grid in grids:
        coeffs = coeffs_factory(grid)
        weights = weights_factory(grid)
        w = w_factory(grid)
        res = energy_identity_check(coeffs, weights, w)
        discrepancies.append(res.relative_discrepancy)
        hs.append(grid.h[0])
    order = loglog_slope(hs, discrepancies)
    return discrepancies, order


# ---------------------------------------------------------------------------
# per-slice elliptic estimate and the parameter-weighted Sobolev norm
# ---------------------------------------------------------------------------

@dataclass
class SliceCheckResult:
    lhs: float
    rhs: float
    ratio: float
    excluded: bool = False


def elliptic_slice_check(coeffs: CoefficientSet, weights: CarlemanWeights,
                         w_slice: np.ndarray, q_slice: np.ndarray,
                         dtw_slice: np.ndarray, level: int) -> SliceCheckResult:
    """Both sides of the per-slice elliptic weighted estimate at time level
    ``level`` (1-based within the t >= t_floor range)."""
    grid = coeffs.grid
    if level < 1 or level > grid.n_t:
        raise ValueError("level must be in 1..n_t")
    li = level - 1
    wq = space_weights(grid)
    phi = weights.phi[li]
    alpha = weights.alpha[li]
    tau = weights.tau
    e2ta = np.exp(2 * tau * alpha)
    hess_sq = np.zeros(grid.space_shape)
    for l in range(grid.dim):
        for j in range(grid.dim):
            if l == j:
                d2 = apply_multi_deriv(w_slice, grid,
                                       tuple(2 if ax == l else 0 for ax in range(grid.dim)))
            else:
                d2 = apply_multi_deriv(w_slice, grid,
                                       tuple(1 if ax in (l, j) else 0 for ax in range(grid.dim)))
            hess_sq += np.abs(d2) ** 2
    grad_sq = sum(np.abs(apply_multi_deriv(
        w_slice, grid, tuple(1 if ax == k else 0 for ax in range(grid.dim)))) ** 2
        for k in range(grid.dim))
    lhs = float(np.sum(wq * (hess_sq / (tau * phi) + tau * phi * grad_sq
                             + (tau * phi) ** 3 * np.abs(w_slice) ** 2) * e2ta))
    rhs = float(np.sum(wq * (np.abs(q_slice) ** 2 + np.abs(dtw_slice) ** 2) * e2ta))
    for face in sorted(grid.domain.observed):
        idxs, coefs = _trace_stencil(grid, face)
        tr = sum(c * w_slice[idx] for idx, c in zip(idxs, coefs))
        fidx = grid.face_indexer(face)
        wf = face_weights(grid, face)
        rhs += float(np.sum(wf * tau * phi[fidx] * np.abs(tr) ** 2))
    if lhs == 0.0 and rhs == 0.0:
        return SliceCheckResult(0.0, 0.0, float("nan"), excluded=True)
    return SliceCheckResult(lhs, rhs, lhs / rhs if rhs > 0 else float("inf"))


def h3_tau_norm(v: np.ndarray, grid: SpaceTimeGrid, tau: float) -> float:
    """Parameter-weighted Sobolev norm: full discrete H^3 norm plus
    tau^3 times the L2 norm."""
    if grid.n_x < 8:
        raise ValueError("grid too coarse for third differences (n_x < 8)")
    wq = space_weights(grid)
    total = float(np.sum(wq * np.abs(v) ** 2))
    for alpha in multi_indices(grid.dim, 3):
        dv = apply_multi_deriv(v, grid, alpha)
        total += float(np.sum(wq * np.abs(dv) ** 2))
    l2 = float(np.sqrt(np.sum(wq * np.abs(v) ** 2)))
    return float(np.sqrt(total)) + tau ** 3 * l2
