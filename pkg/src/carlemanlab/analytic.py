"""Analytic (symbolic) field specifications.

Coefficients, weight functions and manufactured solutions are given as sympy
expressions in (t, x) or (t, x, y).  Sampling them on a grid is exact, and so
are all the derivatives the rest of the package needs (coefficient derivative
forms, manufactured sources, transformed-operator corrections).
"""
from __future__ import annotations

import numpy as np
import sympy as sp

T = sp.Symbol("t", real=True)
X = sp.Symbol("x", real=True)
Y = sp.Symbol("y", real=True)

_SPACE = (X, Y)

#: namespace available when parsing expression strings from config files
PARSE_LOCALS = {
    "t": T, "x": X, "y": Y, "I": sp.I, "pi": sp.pi, "E": sp.E,
    "sin": sp.sin, "cos": sp.cos, "tan": sp.tan, "exp": sp.exp,
    "log": sp.log, "sqrt": sp.sqrt, "sinh": sp.sinh, "cosh": sp.cosh,
    "Abs": sp.Abs,
}


def space_symbols(dim: int):
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    return _SPACE[:dim]


def parse_expr(text) -> sp.Expr:
    """Parse an expression string (or pass through numbers/sympy objects)."""
    if isinstance(text, sp.Expr):
        return text
    if isinstance(text, (int, float, complex)):
        return sp.sympify(text)
    return sp.sympify(text, locals=PARSE_LOCALS)


def _broadcast_eval(fn, t, Xm, dtype):
    """Evaluate a lambdified function on meshgrid arrays, broadcasting
    constants to the full grid shape."""
    out = fn(t, *Xm)
    shape = np.broadcast_shapes(np.shape(t), *(np.shape(x) for x in Xm))
    arr = np.asarray(out, dtype=dtype)
    return np.broadcast_to(arr, shape).copy() if arr.shape != shape else arr


class ScalarField:
    """Scalar analytic field on (t, x).  Callable as field(t, *X)."""

    def __init__(self, expr, dim: int, dtype=complex):
        self.expr = parse_expr(expr)
        self.dim = dim
        self.dtype = dtype
        args = (T, *space_symbols(dim))
        self._fn = sp.lambdify(args, self.expr, modules="numpy")

    def __call__(self, t, *Xm):
        return _broadcast_eval(self._fn, t, Xm, self.dtype)

    def diff(self, var) -> "ScalarField":
        return ScalarField(sp.diff(self.expr, var), self.dim, self.dtype)

    @property
    def is_time_independent(self) -> bool:
        return T not in self.expr.free_symbols


def lambdify_field(expr, dim: int, dtype=complex) -> ScalarField:
    return ScalarField(expr, dim, dtype)


class CoefficientSpec:
    """Analytic coefficients of the evolution operator

        P u = i u_t - sum_lj d_l(a_lj d_j u) + sum_l b_l d_l u + c u,

    with the right-hand-side modulation R(t, x).

    ``a`` must be symmetric with real entries; ``b``, ``c`` and ``R`` may be
    complex.  All entries are sympy expressions in (t, x[, y]).
    """

    def __init__(self, dim: int, a, b=None, c=0, R=1):
        self.dim = dim
        xs = space_symbols(dim)
        a = [[parse_expr(a[l][j]) for j in range(dim)] for l in range(dim)]
        for l in range(dim):
            for j in range(dim):
                if sp.simplify(a[l][j] - a[j][l]) != 0:
                    raise ValueError(f"a[{l}][{j}] != a[{j}][{l}]: matrix spec not symmetric")
                if a[l][j].has(sp.I):
                    raise ValueError("entries of a must be real-valued")
        if b is None:
            b = [0] * dim
        self.a_exprs = a
        self.b_exprs = [parse_expr(be) for be in b]
        self.c_expr = parse_expr(c)
        self.R_expr = parse_expr(R)

        self._a = [[ScalarField(a[l][j], dim, float) for j in range(dim)] for l in range(dim)]
        self._a_dt = [[ScalarField(sp.diff(a[l][j], T), dim, float) for j in range(dim)]
                      for l in range(dim)]
        self._a_dx = [[[ScalarField(sp.diff(a[l][j], xs[p]), dim, float) for j in range(dim)]
                       for l in range(dim)] for p in range(dim)]
        self._b = [ScalarField(be, dim) for be in self.b_exprs]
        self._c = ScalarField(self.c_expr, dim)
        self._R = ScalarField(self.R_expr, dim)

    # -- evaluation helpers; Xm are meshgrid arrays ------------------------
    def a(self, t, *Xm):
        d = self.dim
        return np.array([[self._a[l][j](t, *Xm) for j in range(d)] for l in range(d)])

    def a_dt(self, t, *Xm):
        d = self.dim
        return np.array([[self._a_dt[l][j](t, *Xm) for j in range(d)] for l in range(d)])

    def a_dx(self, p, t, *Xm):
        """Spatial derivative d_{x_p} of every entry of a (p is 0-based)."""
        d = self.dim
        return np.array([[self._a_dx[p][l][j](t, *Xm) for j in range(d)] for l in range(d)])

    def b(self, t, *Xm):
        return np.array([self._b[l](t, *Xm) for l in range(self.dim)])

    def c(self, t, *Xm):
        return self._c(t, *Xm)

    def R(self, t, *Xm):
        return self._R(t, *Xm)

    def div_a(self, t, *Xm):
        """(div a)_j = sum_k d_{x_k} a_kj."""
        d = self.dim
        out = []
        for j in range(d):
            s = 0
            for k in range(d):
                s = s + self._a_dx[k][k][j](t, *Xm)
            out.append(s)
        return np.array(out)

    @property
    def evolution_time_independent(self) -> bool:
        """True when a, b and c carry no t dependence (R may still)."""
        exprs = [e for row in self.a_exprs for e in row] + list(self.b_exprs) + [self.c_expr]
        return all(T not in e.free_symbols for e in exprs)

    def gamma_bound(self, grid) -> float:
        """sup-norm bound on the first/zero order coefficients (metadata only)."""
        tt = grid.ts[1:, None] if grid.dim == 1 else grid.ts[1:, None, None]
        total = 0.0
        for l in range(self.dim):
            total += float(np.max(np.abs(self._b[l](tt, *grid.meshes))))
        total += float(np.max(np.abs(self._c(tt, *grid.meshes))))
        return total


class WeightSpec:
    """Analytic weight function psi(x) with gradient and Hessian."""

    def __init__(self, expr, dim: int):
        xs = space_symbols(dim)
        self.expr = parse_expr(expr)
        if self.expr.has(sp.I):
            raise ValueError("weight function must be real-valued")
        if T in self.expr.free_symbols:
            raise ValueError("weight function must not depend on t")
        self.dim = dim
        self._psi = ScalarField(self.expr, dim, float)
        self._grad = [ScalarField(sp.diff(self.expr, xs[k]), dim, float) for k in range(dim)]
        self._hess = [[ScalarField(sp.diff(self.expr, xs[k], xs[l]), dim, float)
                       for l in range(dim)] for k in range(dim)]

    def psi(self, *Xm):
        return self._psi(0.0, *Xm)

    def grad(self, *Xm):
        return np.array([g(0.0, *Xm) for g in self._grad])

    def hess(self, *Xm):
        d = self.dim
        return np.array([[self._hess[k][l](0.0, *Xm) for l in range(d)] for k in range(d)])


class SolutionSpec:
    """Manufactured solution u(t, x) with enough derivatives to apply P."""

    def __init__(self, expr, dim: int):
        self.expr = parse_expr(expr)
        self.dim = dim
        self.field = ScalarField(self.expr, dim)

    def __call__(self, t, *Xm):
        return self.field(t, *Xm)

    def source_for(self, coeffs: CoefficientSpec) -> ScalarField:
        """Exact source g = P u for the given coefficients."""
        return ScalarField(apply_operator_symbolic(coeffs, self.expr), self.dim)


def apply_operator_symbolic(coeffs: CoefficientSpec, u_expr) -> sp.Expr:
    """P u for a sympy expression u, applied symbolically."""
    xs = space_symbols(coeffs.dim)
    u = parse_expr(u_expr)
    g = sp.I * sp.diff(u, T)
    for l in range(coeffs.dim):
        for j in range(coeffs.dim):
            g -= sp.diff(coeffs.a_exprs[l][j] * sp.diff(u, xs[j]), xs[l])
    for l in range(coeffs.dim):
        g += coeffs.b_exprs[l] * sp.diff(u, xs[l])
    g += coeffs.c_expr * u
    return sp.expand(g)


# ---------------------------------------------------------------------------
# Named presets used by config files and tests
# ---------------------------------------------------------------------------

def coefficient_preset(name: str, dim: int, **params) -> CoefficientSpec:
    if name == "identity":
        a = [[1 if l == j else 0 for j in range(dim)] for l in range(dim)]
        return CoefficientSpec(dim, a)
    if name == "anisotropic_constant":
        if dim != 2:
            raise ValueError("anisotropic_constant preset is 2D")
        return CoefficientSpec(2, [[2, 1], [1, 2]])
    if name == "variable_a11":
        # a11 = 1 + x^2/2, remaining structure diagonal identity
        a = [[1 if l == j else 0 for j in range(dim)] for l in range(dim)]
        a[0][0] = 1 + X**2 / 2
        return CoefficientSpec(dim, a)
    if name == "rotating_source":
        a = [[1 if l == j else 0 for j in range(dim)] for l in range(dim)]
        return CoefficientSpec(dim, a, R=sp.exp(sp.I * T))
    raise ValueError(f"unknown coefficient preset {name!r}")


def weight_preset(name: str, dim: int, **params) -> WeightSpec:
    if name == "shifted_square":
        # (x + shift)^2 / scale; nonvanishing gradient on (0, 1)
        shift = params.get("shift", 1.0)
        scale = params.get("scale", 1.0)
        return WeightSpec((X + shift) ** 2 / scale, dim)
    if name == "distance_sq":
        center = params.get("center", [-1.0] * dim)
        scale = params.get("scale", 1.0)
        xs = space_symbols(dim)
        expr = sum((xs[k] - center[k]) ** 2 for k in range(dim)) / scale
        return WeightSpec(expr, dim)
    if name == "linear":
        direction = params.get("direction", [1.0] * dim)
        xs = space_symbols(dim)
        return WeightSpec(sum(direction[k] * xs[k] for k in range(dim)), dim)
    raise ValueError(f"unknown weight preset {name!r}")
