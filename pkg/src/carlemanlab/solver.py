"""Crank-Nicolson solver for the variable-coefficient evolution problem,
trace extraction, manufactured sources and the exact discrete adjoint of the
source-to-data map.

The scheme evaluates coefficients at half levels t_{j+1/2}, discretizes the
divergence-form diffusion with midpoint fluxes (plus symmetric centered
stencils for the mixed 2D terms) and enforces the homogeneous Dirichlet
condition exactly.  With b = 0, real c and a real symmetric time-independent
matrix the step operator is a Cayley transform and conserves the discrete
L2 norm.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from .analytic import CoefficientSpec, SolutionSpec, apply_operator_symbolic, ScalarField
from .geometry import CoefficientSet, SpaceTimeGrid
from .numerics import (deriv_matrix, apply_axis, space_weights, time_weights,
                       face_weights, sobolev_gram_apply, multi_indices,
                       apply_multi_deriv)


@dataclass
class GridFunction:
    """Complex field on all (time level, spatial node) pairs."""

    grid: SpaceTimeGrid
    values: np.ndarray

    def __post_init__(self):
        expected = (self.grid.n_t + 1,) + self.grid.space_shape
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != {expected}")

    def boundary_maxabs(self) -> float:
        mask = self.grid.boundary_mask()
        return float(np.max(np.abs(self.values[:, mask]))) if mask.any() else 0.0

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy())


@dataclass
class BoundaryTrace:
    face: str
    kind: str  # "neumann" or "neumann_dt"
    values: np.ndarray  # (n_t + 1,) + face node shape
    grid: SpaceTimeGrid


class StepFailure(RuntimeError):
    def __init__(self, level: int, msg: str):
        super().__init__(f"linear solve failed at time level {level}: {msg}")
        self.level = level


# ---------------------------------------------------------------------------
# spatial operator assembly (interior unknowns, Dirichlet eliminated)
# ---------------------------------------------------------------------------

def _midpoints(axis_nodes: np.ndarray) -> np.ndarray:
    return 0.5 * (axis_nodes[:-1] + axis_nodes[1:])


class SpatialOperator1D:
    """Tridiagonal S with (S u)_i ~ (a u')' - b u' - c u on interior nodes."""

    def __init__(self, spec: CoefficientSpec, grid: SpaceTimeGrid, t: float):
        xs = grid.axes[0]
        h = grid.h[0]
        xm = _midpoints(xs)
        a_mid = spec.a(t, xm)[0, 0]
        xi = xs[1:-1]
        b = spec.b(t, xi)[0]
        c = spec.c(t, xi)
        m = len(xi)
        self.lower = np.zeros(m, dtype=complex)
        self.diag = np.zeros(m, dtype=complex)
        self.upper = np.zeros(m, dtype=complex)
        aw = a_mid[:-1]  # a_{i-1/2} for interior node i
        ae = a_mid[1:]
        self.lower[:] = aw / h ** 2 + b / (2 * h)
        self.upper[:] = ae / h ** 2 - b / (2 * h)
        self.diag[:] = -(aw + ae) / h ** 2 - c

    def matvec(self, u: np.ndarray) -> np.ndarray:
        out = self.diag * u
        out[1:] += self.lower[1:] * u[:-1]
        out[:-1] += self.upper[:-1] * u[1:]
        return out

    def step_bands(self, z: complex):
        """Banded form of I + z S for scipy solve_banded."""
        m = len(self.diag)
        ab = np.zeros((3, m), dtype=complex)
        ab[0, 1:] = z * self.upper[:-1]
        ab[1, :] = 1.0 + z * self.diag
        ab[2, :-1] = z * self.lower[1:]
        return ab


def _banded_solve(ab, rhs, level):
    try:
        return sla.solve_banded((1, 1), ab, rhs)
    except (ValueError, np.linalg.LinAlgError) as exc:  # pragma: no cover
        raise StepFailure(level, str(exc))


def _banded_adjoint(ab):
    """Banded form of the conjugate transpose of a tridiagonal matrix."""
    out = np.zeros_like(ab)
    out[1, :] = np.conj(ab[1, :])
    out[0, 1:] = np.conj(ab[2, :-1])
    out[2, :-1] = np.conj(ab[0, 1:])
    return out


class SpatialOperator2D:
    """Sparse S on the interior unknowns of a rectangle grid."""

    def __init__(self, spec: CoefficientSpec, grid: SpaceTimeGrid, t: float):
        xs, ys = grid.axes
        hx, hy = grid.h
        n = grid.n_x
        Xi, Yi = np.meshgrid(xs[1:-1], ys[1:-1], indexing="ij")
        mi = n - 1
        size = mi * mi

        def flat(i, j):
            return i * mi + j

        I, J, V = [], [], []

        def add(ci, cj, vals):
            # coefficient vals[k,l] links interior node (k,l) to (k+ci, l+cj)
            ii, jj = np.meshgrid(np.arange(mi), np.arange(mi), indexing="ij")
            src = flat(ii, jj).ravel()
            ti, tj = ii + ci, jj + cj
            keep = (ti >= 0) & (ti < mi) & (tj >= 0) & (tj < mi)
            I.extend(src[keep.ravel()])
            J.extend(flat(ti, tj).ravel()[keep.ravel()])
            V.extend(np.asarray(vals, dtype=complex).ravel()[keep.ravel()])

        Xe, Ye = np.meshgrid(_midpoints(xs), ys[1:-1], indexing="ij")
        a11_mid_x = spec.a(t, Xe, Ye)[0, 0]      # (n, mi): a at (x_{i+1/2}, y_j)
        Xs, Ys = np.meshgrid(xs[1:-1], _midpoints(ys), indexing="ij")
        a22_mid_y = spec.a(t, Xs, Ys)[1, 1]      # (mi, n)

        ae = a11_mid_x[1:, :] / hx ** 2          # east flux of interior node i
        aw = a11_mid_x[:-1, :] / hx ** 2
        an = a22_mid_y[:, 1:] / hy ** 2
        as_ = a22_mid_y[:, :-1] / hy ** 2

        b = spec.b(t, Xi, Yi)
        c = spec.c(t, Xi, Yi)

        add(1, 0, ae - b[0] / (2 * hx))
        add(-1, 0, aw + b[0] / (2 * hx))
        add(0, 1, an - b[1] / (2 * hy))
        add(0, -1, as_ + b[1] / (2 * hy))
        add(0, 0, -(ae + aw + an + as_) - c)

        # mixed term d_x(a12 d_y u) + d_y(a12 d_x u), centered differences;
        # neighbors on the Dirichlet boundary drop out of the interior block
        Xf, Yf = grid.meshes
        a12 = spec.a(t, Xf, Yf)[0, 1]
        q = 1.0 / (4 * hx * hy)
        iI = np.arange(1, n)
        a12_e = a12[np.ix_(iI + 1, iI)] * q   # a12_{i+1, j}
        a12_w = a12[np.ix_(iI - 1, iI)] * q
        a12_n = a12[np.ix_(iI, iI + 1)] * q
        a12_s = a12[np.ix_(iI, iI - 1)] * q
        add(1, 1, a12_e + a12_n)
        add(1, -1, -(a12_e + a12_s))
        add(-1, 1, -(a12_w + a12_n))
        add(-1, -1, a12_w + a12_s)

        self.mat = sparse.csr_matrix((V, (I, J)), shape=(size, size))
        self.mi = mi

    def matvec(self, u: np.ndarray) -> np.ndarray:
        return self.mat @ u


class _Stepper:
    """Half-level operators and factorizations of the CN step matrices."""

    def __init__(self, coeffs: CoefficientSet):
        coeffs.require_valid()
        self.coeffs = coeffs
        self.grid = coeffs.grid
        self.spec = coeffs.spec
        self._cache = {}
        self._static = self.spec.evolution_time_independent

    def _build(self, t_half: float):
        key = None if self._static else t_half
        if key in self._cache:
            return self._cache[key]
        grid = self.grid
        z = 0.5j * grid.dt
        if grid.dim == 1:
            S = SpatialOperator1D(self.spec, grid, t_half)
            entry = {
                "S": S,
                "M": S.step_bands(z),
                "Mh": _banded_adjoint(S.step_bands(z)),
                "Nz": -z,
            }
        else:
            S = SpatialOperator2D(self.spec, grid, t_half)
            eye = sparse.identity(S.mat.shape[0], format="csr", dtype=complex)
            M = (eye + z * S.mat).tocsc()
            entry = {
                "S": S,
                "M_lu": spla.splu(M),
                "Mh_lu": spla.splu(M.conj().T.tocsc()),
                "N": (eye - z * S.mat).tocsr(),
            }
        self._cache[key] = entry
        return entry

    def half_time(self, n: int) -> float:
        return (n + 0.5) * self.grid.dt

    def apply_N(self, entry, u):
        if self.grid.dim == 1:
            return u - 0.5j * self.grid.dt * entry["S"].matvec(u)
        return entry["N"] @ u

    def apply_Nh(self, entry, u):
        if self.grid.dim == 1:
            S = entry["S"]
            shu = np.conj(S.diag) * u
            shu[:-1] += np.conj(S.lower[1:]) * u[1:]
            shu[1:] += np.conj(S.upper[:-1]) * u[:-1]
            return u - np.conj(0.5j * self.grid.dt) * shu
        return entry["N"].conj().T @ u

    def solve_M(self, entry, rhs, level):
        if self.grid.dim == 1:
            return _banded_solve(entry["M"], rhs, level)
        try:
            return entry["M_lu"].solve(rhs)
        except RuntimeError as exc:  # pragma: no cover
            raise StepFailure(level, str(exc))

    def solve_Mh(self, entry, rhs, level):
        if self.grid.dim == 1:
            return _banded_solve(entry["Mh"], rhs, level)
        try:
            return entry["Mh_lu"].solve(rhs)
        except RuntimeError as exc:  # pragma: no cover
            raise StepFailure(level, str(exc))


def _interior_ravel(grid: SpaceTimeGrid, field: np.ndarray) -> np.ndarray:
    return field[grid.interior()].ravel()


def _embed_interior(grid: SpaceTimeGrid, vec: np.ndarray) -> np.ndarray:
    out = np.zeros(grid.space_shape, dtype=complex)
    if grid.dim == 1:
        out[1:-1] = vec
    else:
        out[1:-1, 1:-1] = vec.reshape(grid.n_x - 1, grid.n_x - 1)
    return out


def _source_at(grid: SpaceTimeGrid, source, t: float) -> np.ndarray:
    if source is None:
        return np.zeros(grid.space_shape, dtype=complex)
    if callable(source):
        vals = np.asarray(source(t, *grid.meshes), dtype=complex)
        return np.broadcast_to(vals, grid.space_shape)
    raise TypeError("source must be None or callable(t, *meshes)")


def solve_ivp(coeffs: CoefficientSet, source=None, u0: Optional[np.ndarray] = None,
              direction: str = "forward",
              terminal: Optional[np.ndarray] = None) -> GridFunction:
    """March the Crank-Nicolson scheme across all time levels.

    ``source`` is a callable g(t, *meshes) evaluated at half levels (None
    means zero).  For direction "forward", u0 is the initial field (zero on
    the boundary); for "backward" the terminal field is given and the step
    recursion is inverted exactly.
    """
    stepper = _Stepper(coeffs)
    grid = coeffs.grid
    n_t = grid.n_t
    vals = np.zeros((n_t + 1,) + grid.space_shape, dtype=complex)

    def check_boundary(field):
        mask = grid.boundary_mask()
        if np.max(np.abs(field[mask])) > 0:
            raise ValueError("initial/terminal data must vanish on the boundary")

    if direction == "forward":
        if u0 is not None:
            u0 = np.asarray(u0, dtype=complex)
            check_boundary(u0)
            vals[0] = u0
        u = _interior_ravel(grid, vals[0])
        for n in range(n_t):
            entry = stepper._build(stepper.half_time(n))
            g = _interior_ravel(grid, _source_at(grid, source, stepper.half_time(n)))
            rhs = stepper.apply_N(entry, u) - 1j * grid.dt * g
            u = stepper.solve_M(entry, rhs, n + 1)
            vals[n + 1] = _embed_interior(grid, u)
    elif direction == "backward":
        if terminal is None:
            raise ValueError("backward direction requires the terminal field")
        terminal = np.asarray(terminal, dtype=complex)
        check_boundary(terminal)
        vals[n_t] = terminal
        u = _interior_ravel(grid, terminal)
        for n in range(n_t - 1, -1, -1):
            entry = stepper._build(stepper.half_time(n))
            g = _interior_ravel(grid, _source_at(grid, source, stepper.half_time(n)))
            # invert (I + zS) u^{n+1} = (I - zS) u^n - i dt g for u^n
            rhs_next = u + 0.5j * grid.dt * (
                entry["S"].matvec(u) if grid.dim == 1 else entry["S"].mat @ u)
            rhs = rhs_next + 1j * grid.dt * g
            if grid.dim == 1:
                ab = entry["S"].step_bands(-0.5j * grid.dt)
                u = _banded_solve(ab, rhs, n)
            else:
                eye = sparse.identity(entry["N"].shape[0], format="csr", dtype=complex)
                key = "Nb_lu"
                if key not in entry:
                    entry[key] = spla.splu(entry["N"].tocsc())
                u = entry[key].solve(rhs)
            vals[n] = _embed_interior(grid, u)
    else:
        raise ValueError("direction must be 'forward' or 'backward'")
    return GridFunction(grid, vals)


def apply_operator(coeffs: CoefficientSet, u: GridFunction) -> np.ndarray:
    """Discrete residual field P u (centered time difference on interior
    levels).  The returned array is full shaped; rows 0 and n_t and boundary
    nodes are zero padding."""
    grid = coeffs.grid
    spec = coeffs.spec
    out = np.zeros_like(u.values)
    dt = grid.dt
    for n in range(1, grid.n_t):
        dudt = (u.values[n + 1] - u.values[n - 1]) / (2 * dt)
        if grid.dim == 1:
            S = SpatialOperator1D(spec, grid, grid.ts[n])
            su = S.matvec(_interior_ravel(grid, u.values[n]))
        else:
            S = SpatialOperator2D(spec, grid, grid.ts[n])
            su = S.matvec(_interior_ravel(grid, u.values[n]))
        res = 1j * _interior_ravel(grid, dudt) - su
        out[n] = _embed_interior(grid, res)
    return out


def manufactured_source(coeffs, u_exact) -> ScalarField:
    """Exact source g = P u_exact for an analytic solution spec."""
    spec = coeffs.spec if isinstance(coeffs, CoefficientSet) else coeffs
    if isinstance(u_exact, SolutionSpec):
        expr = u_exact.expr
    else:
        expr = SolutionSpec(u_exact, spec.dim).expr
    return ScalarField(apply_operator_symbolic(spec, expr), spec.dim)


# ---------------------------------------------------------------------------
# Neumann traces
# ---------------------------------------------------------------------------

def _trace_stencil(grid: SpaceTimeGrid, face: str):
    """Index tuples and coefficients realizing the one-sided second order
    normal derivative at the nodes of a face."""
    ax = grid.face_axis(face)
    h = grid.h[ax]
    n = grid.n_x
    lo_side = face in ("left", "x_lo", "y_lo")
    if lo_side:
        rows, coefs = (0, 1, 2), (-3.0, 4.0, -1.0)
        nu_comp = -1.0
    else:
        rows, coefs = (n, n - 1, n - 2), (3.0, -4.0, 1.0)
        nu_comp = 1.0
    coefs = tuple(nu_comp * c / (2 * h) for c in coefs)
    idxs = []
    for r in rows:
        if grid.dim == 1:
            idxs.append((r,))
        else:
            idxs.append((r, slice(None)) if ax == 0 else (slice(None), r))
    return idxs, coefs


def neumann_trace(u: GridFunction, face: str, order_dt: int = 0) -> BoundaryTrace:
    """One-sided second-order normal derivative on a face; order_dt = 1
    additionally applies the (centered / one-sided at the ends) time
    difference to the trace."""
    grid = u.grid
    if face not in grid.domain.faces:
        raise ValueError(f"face {face!r} not on the domain boundary")
    if order_dt not in (0, 1):
        raise ValueError("order_dt must be 0 or 1")
    idxs, coefs = _trace_stencil(grid, face)
    tr = sum(c * u.values[(slice(None),) + idx] for idx, c in zip(idxs, coefs))
    if order_dt == 1:
        Dt = deriv_matrix(grid.n_t + 1, grid.dt, 1)
        tr = apply_axis(np.asarray(tr), Dt, 0)
    kind = "neumann" if order_dt == 0 else "neumann_dt"
    return BoundaryTrace(face, kind, np.asarray(tr), grid)


# ---------------------------------------------------------------------------
# source-to-data map and its exact discrete adjoint
# ---------------------------------------------------------------------------

@dataclass
class DataVector:
    """Observation bundle: final-time field plus Neumann traces on the
    observed faces for time-derivative orders 0 and 1."""

    u_final: np.ndarray
    traces: dict  # (face, order) -> (n_t + 1,) + face shape

    def channel_items(self):
        yield ("u_final", self.u_final)
        for key in sorted(self.traces):
            yield (key, self.traces[key])

    def scaled(self, s) -> "DataVector":
        return DataVector(self.u_final * s,
                          {k: v * s for k, v in self.traces.items()})

    def add(self, other: "DataVector") -> "DataVector":
        return DataVector(self.u_final + other.u_final,
                          {k: self.traces[k] + other.traces[k] for k in self.traces})


class SourceForwardMap:
    """Linear map from a real spatial source factor f to the observations of
    the problem P u = R f with u(0) = 0 and homogeneous Dirichlet data.

    The adjoint is the exact adjoint of the assembled step operators with
    respect to the weighted data inner product (Sobolev order-3 on the final
    channel, trapezoid L2 on Sigma_0 trace channels) and the trapezoid L2
    inner product on source space.
    """

    def __init__(self, coeffs: CoefficientSet, trace_orders=(0, 1)):
        self.coeffs = coeffs
        self.grid = coeffs.grid
        self.stepper = _Stepper(coeffs)
        self.trace_orders = tuple(trace_orders)
        self.faces = tuple(sorted(coeffs.grid.domain.observed))
        grid = self.grid
        self._wspace = space_weights(grid)
        self._wtime = time_weights(grid.ts)
        self._R_half = [coeffs.spec.R((n + 0.5) * grid.dt, *grid.meshes)
                        for n in range(grid.n_t)]
        self._Dt = deriv_matrix(grid.n_t + 1, grid.dt, 1)

    # forward -------------------------------------------------------------
    def solve(self, f: np.ndarray) -> GridFunction:
        f = np.asarray(f)
        grid = self.grid
        vals = np.zeros((grid.n_t + 1,) + grid.space_shape, dtype=complex)
        u = _interior_ravel(grid, vals[0])
        for n in range(grid.n_t):
            entry = self.stepper._build(self.stepper.half_time(n))
            g = _interior_ravel(grid, self._R_half[n] * f)
            rhs = self.stepper.apply_N(entry, u) - 1j * grid.dt * g
            u = self.stepper.solve_M(entry, rhs, n + 1)
            vals[n + 1] = _embed_interior(grid, u)
        return GridFunction(grid, vals)

    def observe(self, u: GridFunction) -> DataVector:
        traces = {}
        for face in self.faces:
            for k in self.trace_orders:
                traces[(face, k)] = neumann_trace(u, face, k).values
        return DataVector(u.values[-1].copy(), traces)

    def apply(self, f: np.ndarray) -> DataVector:
        return self.observe(self.solve(f))

    # inner products --------------------------------------------------------
    def data_inner(self, d1: DataVector, d2: DataVector) -> complex:
        grid = self.grid
        total = 0.0 + 0.0j
        v, w = d1.u_final, d2.u_final
        total += np.sum(self._wspace * v * np.conj(w))
        for alpha in multi_indices(grid.dim, 3):
            dv = apply_multi_deriv(v, grid, alpha)
            dw = apply_multi_deriv(w, grid, alpha)
            total += np.sum(self._wspace * dv * np.conj(dw))
        for key in d1.traces:
            wt = self._trace_weights(key[0])
            total += np.sum(wt * d1.traces[key] * np.conj(d2.traces[key]))
        return complex(total)

    def data_norm(self, d: DataVector) -> float:
        return float(np.sqrt(self.data_inner(d, d).real))

    def source_inner(self, f1, f2) -> complex:
        return complex(np.sum(self._wspace * f1 * np.conj(f2)))

    def _trace_weights(self, face):
        wt = self._wtime
        wf = face_weights(self.grid, face)
        if self.grid.dim == 1:
            return wt
        return wt[:, None] * wf[None, :]

    # adjoint ---------------------------------------------------------------
    def _extraction_adjoint(self, r: DataVector):
        """Per-level interior fields g^n with <data(u), r> = sum_n <u^n, g^n>."""
        grid = self.grid
        n_t = grid.n_t
        g_levels = [np.zeros(grid.space_shape, dtype=complex) for _ in range(n_t + 1)]
        g_levels[n_t] += sobolev_gram_apply(r.u_final, grid, 3)
        for (face, k), rv in r.traces.items():
            s = self._trace_weights(face) * rv
            if k == 1:
                s = apply_axis(np.asarray(s, dtype=complex), self._Dt.T, 0)
            idxs, coefs = _trace_stencil(grid, face)
            for n in range(n_t + 1):
                sn = s[n]
                for idx, c in zip(idxs, coefs):
                    g_levels[n][idx] += c * sn
        return [_interior_ravel(grid, g) for g in g_levels]

    def adjoint(self, r: DataVector) -> np.ndarray:
        """Complex field a with data_inner(apply(f), r) = source_inner(f, a)."""
        grid = self.grid
        g_levels = self._extraction_adjoint(r)
        p = g_levels[grid.n_t]
        acc = np.zeros_like(p)
        d = -1j * grid.dt
        for n in range(grid.n_t - 1, -1, -1):
            entry = self.stepper._build(self.stepper.half_time(n))
            q = self.stepper.solve_Mh(entry, p, n)
            acc += np.conj(d * _interior_ravel(grid, self._R_half[n])) * q
            p = g_levels[n] + self.stepper.apply_Nh(entry, q)
        out = _embed_interior(grid, acc / _interior_ravel(grid, self._wspace + 0j))
        return out


def adjoint_apply(coeffs: CoefficientSet, residual: DataVector,
                  trace_orders=(0, 1)) -> np.ndarray:
    """Adjoint of the source-to-data map applied to a data-space residual."""
    return SourceForwardMap(coeffs, trace_orders).adjoint(residual)
