"""Finite-difference stencils, quadrature weights and discrete norms.

All stencils are second order: centered in the interior, one-sided (with a
wide enough window) at boundaries.  Derivative operators are small dense
matrices applied along one axis, which keeps their transposes trivially
available for adjoint computations.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np


def fd_weights(z: float, xs: np.ndarray, m: int) -> np.ndarray:
    """Finite-difference weights for the m-th derivative at z from nodes xs
    (Fornberg's recursion)."""
    n = len(xs)
    c = np.zeros((n, m + 1))
    c1 = 1.0
    c4 = xs[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = xs[i] - z
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


@lru_cache(maxsize=None)
def deriv_matrix(n_nodes: int, h: float, m: int) -> np.ndarray:
    """Dense one-axis derivative matrix of order m on a uniform grid."""
    if m == 0:
        return np.eye(n_nodes)
    half = 2 if m == 3 else 1
    n_side = m + 2  # one-sided window guaranteeing second order
    if n_nodes < max(2 * half + 1, n_side):
        raise ValueError(f"grid too coarse for order-{m} differences")
    xs = np.arange(n_nodes, dtype=float) * h
    D = np.zeros((n_nodes, n_nodes))
    for i in range(n_nodes):
        if half <= i <= n_nodes - 1 - half:
            lo, hi = i - half, i + half + 1
        else:
            width = max(2 * half + 1, n_side)
            lo = min(max(i - width // 2, 0), n_nodes - width)
            hi = lo + width
        D[i, lo:hi] = fd_weights(xs[i], xs[lo:hi], m)
    return D


def apply_axis(v: np.ndarray, M: np.ndarray, axis: int) -> np.ndarray:
    """Apply a one-axis matrix along the given axis of v."""
    return np.moveaxis(np.tensordot(M, v, axes=(1, axis)), 0, axis)


def deriv(v: np.ndarray, h: float, m: int, axis: int) -> np.ndarray:
    return apply_axis(v, deriv_matrix(v.shape[axis], h, m), axis)


def trapezoid_weights(n_nodes: int, h: float) -> np.ndarray:
    w = np.full(n_nodes, h)
    w[0] = w[-1] = h / 2
    return w


def space_weights(grid) -> np.ndarray:
    """Trapezoid quadrature weights on the spatial nodes."""
    ws = [trapezoid_weights(grid.n_x + 1, h) for h in grid.h]
    if grid.dim == 1:
        return ws[0]
    return np.multiply.outer(ws[0], ws[1])


def time_weights(ts: np.ndarray) -> np.ndarray:
    if len(ts) < 2:
        raise ValueError("need at least two time levels")
    dt = ts[1] - ts[0]
    return trapezoid_weights(len(ts), dt)


def face_weights(grid, face: str) -> np.ndarray:
    """Trapezoid weights on the nodes of a boundary face."""
    if grid.dim == 1:
        return np.array(1.0)
    tang_axis = 1 - grid.face_axis(face)
    return trapezoid_weights(grid.n_x + 1, grid.h[tang_axis])


def l2_weighted(v: np.ndarray, w: np.ndarray) -> float:
    return float(np.sqrt(np.sum(w * np.abs(v) ** 2).real))


def spatial_gradient(v: np.ndarray, grid) -> np.ndarray:
    """Gradient components stacked along a leading axis."""
    return np.stack([deriv(v, grid.h[ax], 1, axis=v.ndim - grid.dim + ax)
                     for ax in range(grid.dim)])


def multi_indices(dim: int, max_order: int):
    """All spatial multi-indices with 1 <= |alpha| <= max_order."""
    out = []
    if dim == 1:
        for m in range(1, max_order + 1):
            out.append((m,))
    else:
        for total in range(1, max_order + 1):
            for mx in range(total + 1):
                out.append((mx, total - mx))
    return out


def apply_multi_deriv(v: np.ndarray, grid, alpha, transpose=False) -> np.ndarray:
    """Apply D^alpha (or its transpose) along the trailing spatial axes."""
    out = v
    for ax, m in enumerate(alpha):
        if m == 0:
            continue
        M = deriv_matrix(grid.n_x + 1, grid.h[ax], m)
        if transpose:
            M = M.T
        out = apply_axis(out, M, out.ndim - grid.dim + ax)
    return out


def sobolev_norm_sq(v: np.ndarray, grid, max_order: int = 3) -> float:
    """Squared discrete Sobolev norm: sum over |alpha| <= max_order of the
    trapezoid L2 norm of D^alpha v."""
    w = space_weights(grid)
    total = float(np.sum(w * np.abs(v) ** 2))
    for alpha in multi_indices(grid.dim, max_order):
        dv = apply_multi_deriv(v, grid, alpha)
        total += float(np.sum(w * np.abs(dv) ** 2))
    return total


def sobolev_gram_apply(v: np.ndarray, grid, max_order: int = 3) -> np.ndarray:
    """Apply the Gram operator of the discrete Sobolev inner product,
    G v = sum_alpha (D^alpha)^T W D^alpha v, matrix-free."""
    w = space_weights(grid)
    out = w * v
    for alpha in multi_indices(grid.dim, max_order):
        dv = apply_multi_deriv(v, grid, alpha)
        out = out + apply_multi_deriv(w * dv, grid, alpha, transpose=True)
    return out


def loglog_slope(xs, ys) -> float:
    """Least-squares slope of log(ys) against log(xs)."""
    xs = np.log(np.asarray(xs, dtype=float))
    ys = np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(xs, ys, 1)[0])
