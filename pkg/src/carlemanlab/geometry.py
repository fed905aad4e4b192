"""Domains, space-time grids, sampled coefficients and standing assumptions."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .analytic import CoefficientSpec

FACES_1D = ("left", "right")
FACES_2D = ("x_lo", "x_hi", "y_lo", "y_hi")

_NORMALS = {
    "left": (-1.0,), "right": (1.0,),
    "x_lo": (-1.0, 0.0), "x_hi": (1.0, 0.0),
    "y_lo": (0.0, -1.0), "y_hi": (0.0, 1.0),
}


@dataclass(frozen=True)
class SpatialDomain:
    """Interval (dim 1) or axis-aligned rectangle (dim 2) with a marked
    observed part of the boundary."""

    bounds: tuple  # ((lo, hi),) or ((lo, hi), (lo, hi))
    observed: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        bounds = tuple(tuple(float(v) for v in ax) for ax in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        if self.dim not in (1, 2):
            raise ValueError("only dim 1 and 2 supported")
        for lo, hi in bounds:
            if not lo < hi:
                raise ValueError(f"degenerate axis bounds [{lo}, {hi}]")
        observed = frozenset(self.observed)
        unknown = observed - set(self.faces)
        if unknown:
            raise ValueError(f"unknown observed faces {sorted(unknown)}")
        if not observed:
            raise ValueError("observed face set must be nonempty")
        object.__setattr__(self, "observed", observed)

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def faces(self) -> tuple:
        return FACES_1D if self.dim == 1 else FACES_2D

    @property
    def unobserved(self) -> tuple:
        return tuple(f for f in self.faces if f not in self.observed)

    @property
    def diameter(self) -> float:
        return float(np.sqrt(sum((hi - lo) ** 2 for lo, hi in self.bounds)))


def outward_normal(domain: SpatialDomain, face: str) -> np.ndarray:
    if face not in domain.faces:
        raise ValueError(f"face {face!r} not on a {domain.dim}D domain")
    return np.array(_NORMALS[face])


def interval(lo=0.0, hi=1.0, observed=("right",)) -> SpatialDomain:
    return SpatialDomain(((lo, hi),), frozenset(observed))


def rectangle(bounds=((0.0, 1.0), (0.0, 1.0)), observed=("x_hi", "y_hi")) -> SpatialDomain:
    return SpatialDomain(tuple(bounds), frozenset(observed))


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform tensor grid over (0, T] x Omega.

    ``n_x`` counts cells per axis (nodes per axis = n_x + 1), ``n_t`` counts
    time steps (levels t_j = j dt, j = 0..n_t).  Weight functions are only
    ever evaluated for t >= t_floor = dt, where the 1/t factors are finite.
    """

    domain: SpatialDomain
    n_x: int
    n_t: int
    T: float

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("final time T must be positive")
        if self.n_x < 8 or self.n_t < 8:
            raise ValueError("need n_x >= 8 and n_t >= 8")

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def dt(self) -> float:
        return self.T / self.n_t

    @property
    def t_floor(self) -> float:
        return self.dt

    @property
    def ts(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_t + 1)

    @property
    def axes(self) -> tuple:
        return tuple(np.linspace(lo, hi, self.n_x + 1) for lo, hi in self.domain.bounds)

    @property
    def h(self) -> tuple:
        return tuple((hi - lo) / self.n_x for lo, hi in self.domain.bounds)

    @property
    def meshes(self) -> tuple:
        if self.dim == 1:
            return (self.axes[0],)
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @property
    def space_shape(self) -> tuple:
        return (self.n_x + 1,) * self.dim

    @property
    def n_space_nodes(self) -> int:
        return (self.n_x + 1) ** self.dim

    def time_col(self, t):
        """Reshape a time vector so it broadcasts against spatial meshes."""
        t = np.asarray(t, dtype=float)
        return t.reshape(t.shape + (1,) * self.dim)

    def interior(self) -> tuple:
        return (slice(1, -1),) * self.dim

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.space_shape, dtype=bool)
        for ax in range(self.dim):
            mask[(slice(None),) * ax + (0,)] = True
            mask[(slice(None),) * ax + (-1,)] = True
        return mask

    def face_indexer(self, face: str):
        """Index tuple selecting the nodes of a face in a spatial array."""
        if face not in self.domain.faces:
            raise ValueError(f"face {face!r} not on domain")
        if self.dim == 1:
            return (0,) if face == "left" else (-1,)
        axis = 0 if face.startswith("x") else 1
        side = 0 if face.endswith("lo") else -1
        return (side, slice(None)) if axis == 0 else (slice(None), side)

    def face_axis(self, face: str) -> int:
        if self.dim == 1:
            return 0
        return 0 if face.startswith("x") else 1

    def face_meshes(self, face: str) -> tuple:
        """Coordinates of the nodes on a face."""
        idx = self.face_indexer(face)
        return tuple(m[idx] for m in self.meshes)

    def refine(self, factor: int = 2) -> "SpaceTimeGrid":
        return SpaceTimeGrid(self.domain, self.n_x * factor, self.n_t * factor, self.T)


def build_grid(domain: SpatialDomain, n_x: int, n_t: int, T: float) -> SpaceTimeGrid:
    return SpaceTimeGrid(domain, n_x, n_t, float(T))


def _min_eigenvalue_field(a: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of a sampled symmetric matrix field, exactly.

    ``a`` has shape (dim, dim) + spatial/time shape, dim <= 2.
    """
    dim = a.shape[0]
    if dim == 1:
        return a[0, 0]
    tr = a[0, 0] + a[1, 1]
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    disc = np.sqrt(np.maximum((tr / 2) ** 2 - det, 0.0))
    return tr / 2 - disc


def _min_eig_witness_direction(a2: np.ndarray) -> np.ndarray:
    """Unit eigenvector for the smallest eigenvalue of a single 2x2 matrix."""
    w, v = np.linalg.eigh(a2)
    return v[:, 0]


@dataclass(frozen=True)
class AssumptionReport:
    symmetry_defect: float
    ellipticity_min: float
    ellipticity_witness: Optional[tuple]  # ((t_index, node_index...), eta)
    r_final_min: float
    r_final_witness: Optional[tuple]
    symmetry_ok: bool
    ellipticity_ok: bool
    r_final_ok: bool

    @property
    def all_ok(self) -> bool:
        return self.symmetry_ok and self.ellipticity_ok and self.r_final_ok

    def as_dict(self) -> dict:
        return {
            "symmetry_defect": self.symmetry_defect,
            "ellipticity_min": self.ellipticity_min,
            "ellipticity_witness": list(self.ellipticity_witness[0]) if self.ellipticity_witness else None,
            "r_final_min": self.r_final_min,
            "r_final_witness": list(self.r_final_witness) if self.r_final_witness else None,
            "symmetry_ok": self.symmetry_ok,
            "ellipticity_ok": self.ellipticity_ok,
            "r_final_ok": self.r_final_ok,
            "all_ok": self.all_ok,
        }


@dataclass(frozen=True)
class CoefficientSet:
    """Coefficients sampled on a grid, plus the analytic spec they came from.

    The sampled arrays carry the leading component axes (dim, dim) for ``a``
    and (dim,) for ``b``; the trailing axes are (time level, spatial nodes).
    """

    spec: CoefficientSpec
    grid: SpaceTimeGrid
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    R: np.ndarray
    beta: float
    beta1: float
    validation: AssumptionReport

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def gamma(self) -> float:
        """Sup-norm of the lower-order coefficients (metadata only; enters
        the theory through the weight thresholds, never computed with)."""
        return self.spec.gamma_bound(self.grid)

    def require_valid(self):
        if not self.validation.all_ok:
            raise ValueError("coefficient set violates the standing assumptions; "
                             "see validate_assumptions report")


def sample_coefficients(spec: CoefficientSpec, grid: SpaceTimeGrid) -> CoefficientSet:
    if spec.dim != grid.dim:
        raise ValueError("coefficient spec dimension does not match grid")
    tcol = grid.time_col(grid.ts)
    a = spec.a(tcol, *grid.meshes)
    b = spec.b(tcol, *grid.meshes)
    c = spec.c(tcol, *grid.meshes)
    R = spec.R(tcol, *grid.meshes)
    if not np.all(np.isfinite(a)) or not np.all(np.isfinite(b)) \
            or not np.all(np.isfinite(c)) or not np.all(np.isfinite(R)):
        raise ValueError("coefficient evaluation produced non-finite values")
    report = _validate(a, R)
    beta = report.ellipticity_min
    beta1 = report.r_final_min
    return CoefficientSet(spec, grid, a, b, c, R, beta, beta1, report)


def _validate(a: np.ndarray, R: np.ndarray) -> AssumptionReport:
    dim = a.shape[0]
    sym_defect = 0.0
    if dim == 2:
        sym_defect = float(np.max(np.abs(a[0, 1] - a[1, 0])))
    lam_min = _min_eigenvalue_field(a)
    flat = int(np.argmin(lam_min))
    widx = np.unravel_index(flat, lam_min.shape)
    ell_min = float(lam_min[widx])
    if dim == 1:
        eta = np.array([1.0])
    else:
        eta = _min_eig_witness_direction(a[(slice(None), slice(None)) + widx])
    rT = np.abs(R[-1])
    rflat = int(np.argmin(rT))
    rwidx = np.unravel_index(rflat, rT.shape)
    r_min = float(rT[rwidx])
    return AssumptionReport(
        symmetry_defect=sym_defect,
        ellipticity_min=ell_min,
        ellipticity_witness=(widx, tuple(float(v) for v in eta)),
        r_final_min=r_min,
        r_final_witness=rwidx,
        symmetry_ok=sym_defect <= 1e-12,
        ellipticity_ok=ell_min > 0.0,
        r_final_ok=r_min > 0.0,
    )


def validate_assumptions(coeffs: CoefficientSet) -> AssumptionReport:
    """Check matrix symmetry, uniform ellipticity and the final-time lower
    bound on |R|; failures record the violating node."""
    return _validate(coeffs.a, coeffs.R)
