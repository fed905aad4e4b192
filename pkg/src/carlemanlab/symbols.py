"""Principal symbol, convexity forms and pseudo-convexity checks.

The central object is the scaled Poisson bracket of the conjugated principal
symbol.  It is evaluated two independent ways: a closed form assembled from
the coefficient matrix, its derivatives and the weight's gradient/Hessian,
and a direct finite-difference bracket oracle.  Their agreement is the
master test of this module.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .analytic import CoefficientSpec, WeightSpec
from .geometry import CoefficientSet, SpaceTimeGrid, outward_normal


class BracketResidualError(ValueError):
    """The bracket oracle produced a non-negligible imaginary part."""


@dataclass(frozen=True)
class Covector:
    """Frequency-side point (xi0, xi', tau)."""
    xi0: float
    xi: np.ndarray
    tau: float

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")


@dataclass(frozen=True)
class WeightFunction:
    """Weight psi bound to a grid: analytic derivatives plus the sup norm
    of psi over the grid nodes (used by the Carleman weight alpha)."""

    spec: WeightSpec
    grid: SpaceTimeGrid
    sup_norm: float

    @classmethod
    def on_grid(cls, spec: WeightSpec, grid: SpaceTimeGrid) -> "WeightFunction":
        if spec.dim != grid.dim:
            raise ValueError("weight dimension does not match grid")
        psi_vals = spec.psi(*grid.meshes)
        grad = spec.grad(*grid.meshes)
        gnorm = np.sqrt(np.sum(grad ** 2, axis=0))
        if np.min(gnorm) <= 0:
            raise ValueError("grad psi vanishes at a grid node")
        return cls(spec, grid, float(np.max(np.abs(psi_vals))))

    @property
    def dim(self) -> int:
        return self.spec.dim

    def psi(self, *Xm):
        return self.spec.psi(*Xm)

    def grad(self, *Xm):
        return self.spec.grad(*Xm)

    def hess(self, *Xm):
        return self.spec.hess(*Xm)


@dataclass(frozen=True)
class PseudoconvexityReport:
    """Outcome of the weight checks for one configuration.

    ``convexity_min`` is the minimum of the sufficient convexity form over
    the tangent sample set, ``boundary_sign_max`` the maximum of
    a(t, x, nu, grad psi) over the unobserved boundary.
    """

    convexity_min: float
    boundary_sign_max: float
    garding_constant: float
    lam: float
    sample_count: int
    verdict: bool
    convexity_vacuous: bool = False
    boundary_vacuous: bool = False
    lambda_found: bool = False
    lambda_q_min: float = float("nan")

    def as_dict(self) -> dict:
        return {
            "convexity_min": self.convexity_min,
            "boundary_sign_max": self.boundary_sign_max,
            "garding_constant": self.garding_constant,
            "lambda": self.lam,
            "sample_count": self.sample_count,
            "verdict": self.verdict,
            "convexity_vacuous": self.convexity_vacuous,
            "boundary_vacuous": self.boundary_vacuous,
            "lambda_found": self.lambda_found,
            "lambda_q_min": self.lambda_q_min,
        }


# ---------------------------------------------------------------------------
# pointwise forms
# ---------------------------------------------------------------------------

def _spec_of(coeffs) -> CoefficientSpec:
    return coeffs.spec if isinstance(coeffs, CoefficientSet) else coeffs


def quad_form(coeffs, t, x, v, w) -> float:
    """sum_kj a_kj(t, x) v_k w_j; symmetrized so quad_form(v, w) equals
    quad_form(w, v) bit-exactly."""
    spec = _spec_of(coeffs)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if v.shape != (spec.dim,) or w.shape != (spec.dim,):
        raise ValueError(f"vectors must have dimension {spec.dim}")
    A = spec.a(t, *np.atleast_1d(x))
    return 0.5 * (float(v @ A @ w) + float(w @ A @ v))


def derivative_form(coeffs, p: int, t, x, v, w) -> float:
    """Coefficient-derivative form: p = 0 differentiates a in t, p >= 1 in x_p."""
    spec = _spec_of(coeffs)
    if not 0 <= p <= spec.dim:
        raise ValueError(f"p must be in 0..{spec.dim}")
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    x = np.atleast_1d(x)
    A = spec.a_dt(t, *x) if p == 0 else spec.a_dx(p - 1, t, *x)
    return float(v @ A @ w)


def principal_symbol(coeffs, t, x, xi0: float, xi) -> float:
    """-xi0 + a(t, x, xi', xi')."""
    spec = _spec_of(coeffs)
    xi = np.asarray(xi, dtype=float)
    A = spec.a(t, *np.atleast_1d(x))
    return float(-xi0 + xi @ A @ xi)


def _derivative_tensor(spec: CoefficientSpec, t, x) -> np.ndarray:
    """Stacked spatial-derivative matrices d_{x_p} a, shape (dim, dim, dim)."""
    return np.array([spec.a_dx(p, t, *x) for p in range(spec.dim)])


def bracket_core(A, A_dx, grad, hess, xi, tau) -> float:
    """Closed-form convexity symbol for arbitrary weight fields (grad, hess).

    A is the coefficient matrix at the point, A_dx[p] its d_{x_p} derivative,
    grad/hess the weight's first/second derivatives, xi the spatial covector.
    """
    xi = np.asarray(xi, dtype=float)
    g = np.asarray(grad, dtype=float)
    Axi = A @ xi
    Ag = A @ g
    val = 4.0 * (Axi @ hess @ Axi + tau ** 2 * (Ag @ hess @ Ag))
    for k in range(len(g)):
        ak = A_dx[k]
        val -= 2.0 * Ag[k] * (xi @ ak @ xi - tau ** 2 * (g @ ak @ g))
        val += 4.0 * Axi[k] * (xi @ ak @ g)
    return float(val)


def bracket_closed_form(coeffs, psi, t, x, xi, tau: float) -> float:
    """Closed form of the scaled conjugated-symbol bracket for weight psi."""
    spec = _spec_of(coeffs)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    wspec = psi.spec if isinstance(psi, WeightFunction) else psi
    g = wspec.grad(*x).reshape(spec.dim)
    if not np.any(g):
        raise ValueError("grad psi vanishes at the evaluation point")
    H = wspec.hess(*x).reshape(spec.dim, spec.dim)
    A = spec.a(t, *x).reshape(spec.dim, spec.dim)
    A_dx = _derivative_tensor(spec, t, x).reshape(spec.dim, spec.dim, spec.dim)
    return bracket_core(A, A_dx, g, H, xi, tau)


def bracket_oracle(coeffs, psi, t, x, xi0: float, xi, tau: float,
                   fd_step: Optional[float] = None, imag_tol: float = 1e-8) -> float:
    """Direct evaluation of {p(xi - i tau grad psi), p(xi + i tau grad psi)} / (2 i tau).

    xi-derivatives of the symbol are analytic (p is quadratic in xi); (t, x)
    derivatives use central differences of step fd_step, which re-evaluate
    both the coefficients and grad psi at the shifted points.
    """
    spec = _spec_of(coeffs)
    grid = coeffs.grid if isinstance(coeffs, CoefficientSet) else None
    wspec = psi.spec if isinstance(psi, WeightFunction) else psi
    if tau <= 0:
        raise ValueError("tau must be positive")
    if fd_step is None:
        diam = grid.domain.diameter if grid is not None else 1.0
        fd_step = 1e-5 * diam
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xi = np.asarray(xi, dtype=float)
    d = spec.dim

    def symbol(sgn, tt, xx):
        zeta = xi + sgn * 1j * tau * wspec.grad(*xx).reshape(d)
        A = spec.a(tt, *xx).reshape(d, d)
        return -xi0 + zeta @ A @ zeta

    def dxi(sgn, tt, xx):
        zeta = xi + sgn * 1j * tau * wspec.grad(*xx).reshape(d)
        A = spec.a(tt, *xx).reshape(d, d)
        return 2.0 * (A @ zeta)

    f_dt = (symbol(-1, t + fd_step, x) - symbol(-1, t - fd_step, x)) / (2 * fd_step)
    g_dt = (symbol(+1, t + fd_step, x) - symbol(+1, t - fd_step, x)) / (2 * fd_step)
    # k = 0 term of the bracket: (-1) dg/dt - df/dt (-1)
    bracket = f_dt - g_dt
    f_xi = dxi(-1, t, x)
    g_xi = dxi(+1, t, x)
    for k in range(d):
        xp = x.copy()
        xm = x.copy()
        xp[k] += fd_step
        xm[k] -= fd_step
        f_dx = (symbol(-1, t, xp) - symbol(-1, t, xm)) / (2 * fd_step)
        g_dx = (symbol(+1, t, xp) - symbol(+1, t, xm)) / (2 * fd_step)
        bracket += f_xi[k] * g_dx - f_dx * g_xi[k]
    val = bracket / (2j * tau)
    if abs(val.imag) > imag_tol * (1.0 + abs(val.real)):
        raise BracketResidualError(
            f"imaginary bracket residual {val.imag:.3e} exceeds tolerance")
    return float(val.real)


# ---------------------------------------------------------------------------
# sampling helpers
# ---------------------------------------------------------------------------

def _sample_points(grid: SpaceTimeGrid, n_samples: int):
    """Deterministic strided sample of (t, x) pairs over the grid
    (t restricted to t >= t_floor)."""
    ts = grid.ts[1:]
    if grid.dim == 1:
        nodes = [(x,) for x in grid.axes[0]]
    else:
        Xm, Ym = grid.meshes
        nodes = list(zip(Xm.ravel(), Ym.ravel()))
    pairs = [(t, np.array(node)) for t in ts for node in nodes]
    if n_samples >= len(pairs):
        return pairs
    idx = np.linspace(0, len(pairs) - 1, n_samples).astype(int)
    return [pairs[i] for i in idx]


def _tangent_directions(A: np.ndarray, g: np.ndarray):
    """Unit spatial covectors with a(grad psi, xi) = 0, i.e. orthogonal to
    A grad psi.  Empty in 1D."""
    v = A @ g
    if len(g) == 1:
        return []
    e = np.array([-v[1], v[0]])
    nrm = np.linalg.norm(e)
    if nrm == 0:
        raise ValueError("A grad psi vanished; cannot build tangent directions")
    return [e / nrm]


@dataclass(frozen=True)
class ConvexityCheck:
    minimum: float
    vacuous: bool
    sample_count: int


def check_convexity_condition(coeffs: CoefficientSet, psi: WeightFunction,
                              n_space_samples: int = 400,
                              n_sphere_samples: int = 1) -> ConvexityCheck:
    """Minimum over the tangent sample set of the sufficient convexity form
    (the lambda-free part of the bracket symbol at tau = 0).

    In 1D the constraint set {|xi| = 1, a(grad psi, xi) = 0} is empty and the
    check is vacuously true (+inf).
    """
    spec = coeffs.spec
    if spec.dim == 1:
        return ConvexityCheck(math.inf, True, 0)
    best = math.inf
    count = 0
    for t, x in _sample_points(coeffs.grid, n_space_samples):
        g = psi.grad(*x).reshape(spec.dim)
        if not np.any(g):
            raise ValueError("grad psi vanishes at a sample point")
        A = spec.a(t, *x).reshape(spec.dim, spec.dim)
        A_dx = _derivative_tensor(spec, t, x).reshape(spec.dim, spec.dim, spec.dim)
        H = psi.hess(*x).reshape(spec.dim, spec.dim)
        for e in _tangent_directions(A, g):
            val = bracket_core(A, A_dx, g, H, e, 0.0)
            best = min(best, val)
            count += 1
    return ConvexityCheck(best, False, count)


@dataclass(frozen=True)
class BoundarySignCheck:
    maximum: float
    vacuous: bool


def check_boundary_sign(coeffs: CoefficientSet, psi: WeightFunction) -> BoundarySignCheck:
    """Maximum of a(t, x, nu, grad psi) over the unobserved boundary faces
    and all time levels; negative means the sign condition holds."""
    grid = coeffs.grid
    domain = grid.domain
    spec = coeffs.spec
    if not domain.unobserved:
        return BoundarySignCheck(-math.inf, True)
    worst = -math.inf
    for face in domain.unobserved:
        nu = outward_normal(domain, face)
        coords = grid.face_meshes(face)
        g = psi.grad(*coords)
        for t in grid.ts:
            A = spec.a(t, *coords)
            vals = np.einsum("l,lj...,j...->...", nu, A, g)
            worst = max(worst, float(np.max(vals)))
    return BoundarySignCheck(worst, False)


def _exp_weight_fields(g: np.ndarray, H: np.ndarray, lam: float):
    """Gradient/Hessian structure of exp(lam psi) with the overall factor
    exp(lam psi) * lam removed (positivity of the bracket is unaffected)."""
    G = g
    HH = H + lam * np.outer(g, g)
    return G, HH


@dataclass(frozen=True)
class LambdaSearchResult:
    lambda_star: Optional[float]
    q_min: float
    found: bool
    per_lambda: tuple  # ((lambda, q_min), ...)

    def as_dict(self) -> dict:
        return {
            "lambda_star": self.lambda_star,
            "q_min": self.q_min,
            "found": self.found,
            "per_lambda": [list(p) for p in self.per_lambda],
        }


def characteristic_samples(A, A_dx, g, H, lam: float, tau_hats: Sequence[float]):
    """Evaluate the exp-weight bracket symbol on the characteristic sample
    set, returning the minimum.

    Directions: unit tangent covectors (a(grad, xi) = 0) in 2D, xi = 0 in 1D,
    combined with relative tau values in [0, 1]; tau_hat = 0 probes the
    closure of the set, where positivity is the binding constraint.  For each
    direction xi0 is eliminated through the characteristic equation and the
    sample normalized to |xi0| + |xi|^2 + tau^2 = 1.
    """
    G, HH = _exp_weight_fields(g, H, lam)
    dim = len(g)
    dirs = _tangent_directions(A, g)
    agg = float(g @ A @ g)
    candidates = []
    for that in tau_hats:
        if dim == 1:
            candidates.append((np.zeros(1), that))
        else:
            for e in dirs:
                candidates.append((e, that))
                candidates.append((-e, that))
            if that > 0:
                candidates.append((np.zeros(dim), that))
    best = math.inf
    for xi_hat, that in candidates:
        if not np.any(xi_hat) and that == 0:
            continue
        xi0_hat = float(xi_hat @ A @ xi_hat) - that ** 2 * agg
        s2 = 1.0 / (abs(xi0_hat) + xi_hat @ xi_hat + that ** 2)
        # the full exp-weight bracket equals exp(lam psi) * lam times this
        # value with tau_hat playing the rescaled large parameter; the
        # positive prefactor cannot change the sign being tested
        val = bracket_core(A, A_dx, G, HH, xi_hat, that)
        best = min(best, s2 * val)
    return best


def find_min_lambda(coeffs: CoefficientSet, psi: WeightFunction,
                    lambda_grid: Optional[Sequence[float]] = None,
                    n_space_samples: int = 200,
                    n_tau_samples: int = 5) -> LambdaSearchResult:
    """Smallest lambda on the grid making exp(lambda psi) pseudo-convex on
    the sampled characteristic set (strictly positive bracket minimum)."""
    spec = coeffs.spec
    if lambda_grid is None:
        lambda_grid = [2.0 ** k for k in range(11)]
    lambda_grid = sorted(float(v) for v in lambda_grid)
    if any(v <= 0 for v in lambda_grid):
        raise ValueError("lambda grid must be positive")
    tau_hats = np.linspace(0.0, 1.0, n_tau_samples + 1)
    points = _sample_points(coeffs.grid, n_space_samples)
    per_lambda = []
    for lam in lambda_grid:
        worst = math.inf
        for t, x in points:
            g = psi.grad(*x).reshape(spec.dim)
            H = psi.hess(*x).reshape(spec.dim, spec.dim)
            A = spec.a(t, *x).reshape(spec.dim, spec.dim)
            A_dx = _derivative_tensor(spec, t, x).reshape(spec.dim, spec.dim, spec.dim)
            worst = min(worst, characteristic_samples(A, A_dx, g, H, lam, tau_hats))
        per_lambda.append((lam, worst))
        if worst > 0:
            return LambdaSearchResult(lam, worst, True, tuple(per_lambda))
    return LambdaSearchResult(None, per_lambda[-1][1], False, tuple(per_lambda))


def estimate_garding_constant(coeffs: CoefficientSet, psi: WeightFunction,
                              lam: float, tau_values: Sequence[float] = (1.0, 10.0),
                              n_space_samples: int = 200,
                              n_dir_samples: int = 8) -> float:
    """Empirical constant of the lower bound

        q_alpha(t, x, xi, tau) >= C (|xi|^2 + tau^2 phi^2),

    where q_alpha is the closed bracket form evaluated with the spatial
    derivatives of the Carleman exponent alpha (grad = lam phi grad psi)."""
    spec = coeffs.spec
    grid = coeffs.grid
    if any(tau <= 0 for tau in tau_values):
        raise ValueError("tau_values must be positive (the sampler never "
                         "emits the degenerate xi = 0, tau = 0 point)")
    best = math.inf
    for t, x in _sample_points(grid, n_space_samples):
        phi = math.exp(lam * float(psi.psi(*x))) / t
        g = psi.grad(*x).reshape(spec.dim)
        H = psi.hess(*x).reshape(spec.dim, spec.dim)
        A = spec.a(t, *x).reshape(spec.dim, spec.dim)
        A_dx = _derivative_tensor(spec, t, x).reshape(spec.dim, spec.dim, spec.dim)
        G_a = lam * phi * g
        H_a = lam * phi * (H + lam * np.outer(g, g))
        if spec.dim == 1:
            dirs = [np.array([1.0]), np.array([-1.0])]
        else:
            angles = np.linspace(0.0, np.pi, n_dir_samples, endpoint=False)
            dirs = [np.array([np.cos(a), np.sin(a)]) for a in angles]
        for tau in tau_values:
            for xi_hat in dirs + [np.zeros(spec.dim)]:
                denom = float(xi_hat @ xi_hat) + tau ** 2 * phi ** 2
                if denom == 0:
                    continue
                q = bracket_core(A, A_dx, G_a, H_a, xi_hat, tau)
                best = min(best, q / denom)
    return best


def pseudoconvexity_report(coeffs: CoefficientSet, psi: WeightFunction,
                           lambda_grid=None, tau_values=(1.0, 10.0),
                           n_space_samples: int = 200,
                           n_tau_samples: int = 5) -> PseudoconvexityReport:
    conv = check_convexity_condition(coeffs, psi, n_space_samples)
    bnd = check_boundary_sign(coeffs, psi)
    search = find_min_lambda(coeffs, psi, lambda_grid, n_space_samples, n_tau_samples)
    lam = search.lambda_star if search.found else (
        lambda_grid[-1] if lambda_grid else 1.0)
    garding = estimate_garding_constant(coeffs, psi, lam, tau_values, n_space_samples)
    return PseudoconvexityReport(
        convexity_min=conv.minimum,
        boundary_sign_max=bnd.maximum,
        garding_constant=garding,
        lam=float(lam),
        sample_count=conv.sample_count,
        verdict=(conv.minimum > 0) and (bnd.maximum < 0),
        convexity_vacuous=conv.vacuous,
        boundary_vacuous=bnd.vacuous,
        lambda_found=search.found,
        lambda_q_min=search.q_min,
    )
