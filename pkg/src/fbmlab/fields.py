"""Matrix-valued coefficient fields, mollification and integral norms.

A field maps points of R^d to d x n matrices.  The running singular
example is sigma(x) = |x|**(-gamma) * Id restricted to the ball of radius
K; it belongs to L^p exactly when gamma < d / p, which the quadrature
below can confirm or refute numerically.

Mollification convolves the field with a fixed polynomial bump after a
smooth cut-off: sigma_eps = rho_eps * (phi_eps * sigma), where rho_eps has
support in the ball of radius eps and unit mass, and phi_eps equals 1 on
the ball of radius 1/(2 eps) and 0 outside radius 1/eps.  The convolution
runs entry by entry on a sampling grid via zero-padded FFT, and the result
evaluates anywhere through multilinear interpolation (zero outside the
sampled box, matching the compact support of the mollified field).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import gamma as gamma_fn

from .errors import (ClampWarning, IntegrabilityWarning, ParameterError,
                     ResolutionError)
from .occupation import SpatialGrid, multilinear_interpolate

# Value returned when a singular field is evaluated exactly at its
# singular point; large enough to poison any identity the evaluation
# should not have entered, finite so arrays stay usable.
CLAMP_VALUE = 1.0e9


class MatrixField:
    """Pointwise d x n matrix field with a vectorized oracle.

    oracle(points) must accept arrays of shape (..., d) and return
    (..., d, n).  Fields are immutable after construction and safe to
    share between threads.
    """

    def __init__(self, oracle, d: int, n: int, *, p_tag: float | None = None,
                 support_radius: float | None = None,
                 singular_points: tuple = (), label: str = "field",
                 grid: SpatialGrid | None = None,
                 grid_values: np.ndarray | None = None):
        self._oracle = oracle
        self.d = int(d)
        self.n = int(n)
        self.p_tag = p_tag
        self.support_radius = support_radius
        self.singular_points = tuple(np.asarray(q, dtype=float) for q in singular_points)
        self.label = label
        self.grid = grid
        self.grid_values = grid_values

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1] != self.d:
            raise ParameterError(f"points have dimension {pts.shape[-1]}, field has {self.d}")
        out = np.asarray(self._oracle(pts), dtype=float)
        if out.shape != pts.shape[:-1] + (self.d, self.n):
            raise ParameterError(
                f"oracle returned shape {out.shape}, expected {pts.shape[:-1] + (self.d, self.n)}")
        return out

    def sample(self, grid: SpatialGrid) -> np.ndarray:
        """Values at all bin centers, shape grid.shape + (d, n)."""
        if grid == self.grid and self.grid_values is not None:
            return self.grid_values
        return self(grid.centers_mesh())

    def _combine(self, other: "MatrixField", op, label: str) -> "MatrixField":
        if (self.d, self.n) != (other.d, other.n):
            raise ParameterError("field shapes differ")
        radius = None
        if self.support_radius is not None and other.support_radius is not None:
            radius = max(self.support_radius, other.support_radius)
        return MatrixField(lambda x: op(self(x), other(x)), self.d, self.n,
                           support_radius=radius,
                           singular_points=self.singular_points + other.singular_points,
                           label=label)

    def __add__(self, other: "MatrixField") -> "MatrixField":
        return self._combine(other, np.add, f"({self.label}+{other.label})")

    def __sub__(self, other: "MatrixField") -> "MatrixField":
        return self._combine(other, np.subtract, f"({self.label}-{other.label})")

    def __mul__(self, scalar: float) -> "MatrixField":
        c = float(scalar)
        return MatrixField(lambda x: c * self(x), self.d, self.n,
                           p_tag=self.p_tag, support_radius=self.support_radius,
                           singular_points=self.singular_points,
                           label=f"{c}*{self.label}")

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"MatrixField({self.label}, d={self.d}, n={self.n})"


class ScalarField:
    """Scalar field wrapper used for squared norms and averaging inputs."""

    def __init__(self, oracle, d: int, *, singular_points: tuple = (),
                 label: str = "scalar"):
        self._oracle = oracle
        self.d = int(d)
        self.singular_points = tuple(np.asarray(q, dtype=float) for q in singular_points)
        self.label = label

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return np.asarray(self._oracle(pts), dtype=float)

    def sample(self, grid: SpatialGrid) -> np.ndarray:
        return self(grid.centers_mesh())

    def __repr__(self) -> str:
        return f"ScalarField({self.label}, d={self.d})"


def constant_field(matrix: np.ndarray) -> MatrixField:
    mat = np.asarray(matrix, dtype=float)
    if mat.ndim != 2:
        raise ParameterError("constant_field expects a 2-d matrix")
    d, n = mat.shape

    def oracle(pts):
        return np.broadcast_to(mat, pts.shape[:-1] + (d, n)).copy()

    return MatrixField(oracle, d, n, label="const")


def identity_field(d: int, scale: float = 1.0) -> MatrixField:
    return constant_field(scale * np.eye(d))


def singular_example(gamma: float, radius: float, d: int) -> MatrixField:
    """sigma(x) = |x|**(-gamma) * Id on the ball |x| <= radius, 0 outside.

    In L^p exactly when gamma < d / p.  Evaluation exactly at the origin
    returns CLAMP_VALUE and emits ClampWarning; the half-offset grids used
    elsewhere keep quadrature nodes away from that point.
    """
    if gamma <= 0.0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    if radius <= 0.0:
        raise ParameterError(f"radius must be positive, got {radius}")
    if not gamma < 1.0:
        raise ParameterError(f"the example requires gamma < 1, got {gamma}")
    if not 2.0 < d / gamma:
        raise ParameterError(f"the example requires d/gamma > 2, got {d / gamma}")
    eye = np.eye(d)

    def oracle(pts):
        r = np.linalg.norm(pts, axis=-1)
        at_origin = r == 0.0
        if np.any(at_origin):
            warnings.warn("singular field evaluated exactly at the origin; "
                          f"clamped to {CLAMP_VALUE:.1e}", ClampWarning, stacklevel=3)
        safe = np.where(at_origin, 1.0, r)
        amp = np.where(at_origin, CLAMP_VALUE, safe ** (-gamma))
        amp = np.where(r <= radius, amp, 0.0)
        return amp[..., None, None] * eye

    fld = MatrixField(oracle, d, d, p_tag=d / gamma, support_radius=radius,
                      singular_points=(np.zeros(d),),
                      label=f"|x|^-{gamma} on |x|<={radius}")
    fld.gamma = gamma
    fld.radius = radius
    return fld


def hs_norm_sq(field: MatrixField) -> ScalarField:
    """x -> squared Hilbert-Schmidt (Frobenius) norm of field(x)."""
    def oracle(pts):
        mats = field(pts)
        return np.sum(mats * mats, axis=(-2, -1))

    return ScalarField(oracle, field.d, singular_points=field.singular_points,
                       label=f"|{field.label}|_HS^2")


@dataclass(frozen=True)
class MollifierSpec:
    """Mollification kernel and cut-off conventions.

    rho(u) = c_d * (1 - |u|^2)**bump_power on the unit ball, normalized to
    unit mass with the exact beta-integral constant; the scaled kernel is
    rho_eps(x) = eps**(-d) * rho(x / eps).  The cut-off is 1 on
    |x| <= 1/(2 eps), 0 on |x| >= 1/eps, with a C^2 quintic ramp between.
    """

    epsilon: float
    bump_power: int = 4

    def __post_init__(self):
        if not (0.0 < self.epsilon and math.isfinite(self.epsilon)):
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        if self.bump_power < 1:
            raise ParameterError("bump_power must be >= 1")

    def bump_mass(self, d: int) -> float:
        """integral over the unit ball of (1 - |u|^2)**bump_power, exactly."""
        k = self.bump_power
        return math.pi ** (d / 2.0) * gamma_fn(k + 1) / gamma_fn(d / 2.0 + k + 1)

    def rho(self, points) -> np.ndarray:
        """Unit-mass bump on the unit ball, evaluated at points (..., d)."""
        pts = np.asarray(points, dtype=float)
        d = pts.shape[-1]
        r2 = np.sum(pts * pts, axis=-1)
        c = 1.0 / self.bump_mass(d)
        return c * np.clip(1.0 - r2, 0.0, None) ** self.bump_power

    def rho_scaled(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        d = pts.shape[-1]
        return self.rho(pts / self.epsilon) / self.epsilon ** d

    def cutoff(self, points) -> np.ndarray:
        """1 inside radius 1/(2 eps), 0 outside 1/eps, quintic in between."""
        pts = np.asarray(points, dtype=float)
        r = np.linalg.norm(pts, axis=-1)
        inner = 0.5 / self.epsilon
        outer = 1.0 / self.epsilon
        u = np.clip((r - inner) / (outer - inner), 0.0, 1.0)
        ramp = u ** 3 * (10.0 - 15.0 * u + 6.0 * u * u)
        return 1.0 - ramp

    def metadata(self) -> dict:
        return {"epsilon": self.epsilon, "kernel": "polynomial_bump",
                "bump_power": self.bump_power,
                "cutoff": "quintic_ramp", "cutoff_inner_radius": 0.5 / self.epsilon,
                "cutoff_outer_radius": 1.0 / self.epsilon}


def mollify(field: MatrixField, spec: MollifierSpec, grid: SpatialGrid) -> MatrixField:
    """Entry-wise zero-padded FFT convolution of the cut-off field with the bump.

    The grid must resolve the kernel: h <= eps / 4.  The discrete kernel is
    renormalized to unit sum, so constant fields pass through unchanged on
    the deep interior.  Off the grid the result evaluates to 0, consistent
    with support inside the ball of radius 1/eps + eps.
    """
    eps = spec.epsilon
    if grid.h > eps / 4.0 + 1e-15:
        raise ResolutionError(
            f"grid h={grid.h} too coarse for eps={eps}; need h <= eps/4")
    if grid.dimension != field.d:
        raise ParameterError("grid and field dimensions differ")
    mesh = grid.centers_mesh()
    cut = spec.cutoff(mesh)
    samples = field(mesh) * cut[..., None, None]

    reach = int(math.ceil(eps / grid.h))
    axes = np.meshgrid(*([np.arange(-reach, reach + 1) * grid.h] * grid.dimension),
                       indexing="ij")
    offsets = np.stack(axes, axis=-1)
    kernel = spec.rho_scaled(offsets) * grid.cell_volume
    total = kernel.sum()
    if total <= 0.0:
        raise ResolutionError("mollifier kernel vanished on the grid")
    kernel = kernel / total

    out = np.empty_like(samples)
    for i in range(field.d):
        for j in range(field.n):
            out[..., i, j] = fftconvolve(samples[..., i, j], kernel, mode="same")

    lower = np.asarray(grid.lower)
    radius = 1.0 / eps + eps
    if field.support_radius is not None:
        radius = min(radius, field.support_radius + eps)

    def oracle(pts):
        flat = np.empty(pts.shape[:-1] + (field.d, field.n))
        for a in range(field.d):
            for b in range(field.n):
                flat[..., a, b] = multilinear_interpolate(
                    lower, grid.h, out[..., a, b], pts, fill=0.0)
        # The convolution support is a ball; clip FFT dust outside it.
        outside = np.linalg.norm(pts, axis=-1) > radius
        if outside.ndim == 0:
            if bool(outside):
                flat[...] = 0.0
        else:
            flat[outside] = 0.0
        return flat
    return MatrixField(oracle, field.d, field.n, p_tag=field.p_tag,
                       support_radius=radius, label=f"mollified({field.label},{eps})",
                       grid=grid, grid_values=out)


def _norm_power(field, pts: np.ndarray, p: float) -> np.ndarray:
    vals = field(pts)
    if isinstance(field, ScalarField) or vals.ndim == pts.ndim - 1:
        mag = np.abs(vals)
    else:
        mag = np.sqrt(np.sum(vals * vals, axis=(-2, -1)))
    return mag ** p


def _refine_singular_cell(field, p: float, lo: np.ndarray, size: float,
                          point: np.ndarray, max_depth: int, rtol: float,
                          budget: float) -> float:
    """Adaptive dyadic refinement of one cell whose corner holds the singular point.

    Splits the cell in 2**d; subcells away from the point get midpoint
    quadrature, the one containing it recurses.  Stops when the inner-cell
    estimate is negligible, warns when contributions keep growing, which is
    how a non-integrable exponent shows up.
    """
    d = lo.size
    total = 0.0
    last_inner = math.inf
    grew = 0
    for _depth in range(max_depth):
        half = size / 2.0
        inner_lo = None
        for corner in range(1 << d):
            offs = np.array([(corner >> a) & 1 for a in range(d)], dtype=float)
            c_lo = lo + offs * half
            if inner_lo is None and np.all((point >= c_lo) & (point <= c_lo + half)):
                inner_lo = c_lo
                continue
            mid = c_lo + half / 2.0
            total += float(_norm_power(field, mid[None, :], p)[0]) * half ** d
        if inner_lo is None:
            # Point lost to roundoff at a face; all subcells were summed above.
            return total
        inner_mid = inner_lo + half / 2.0
        inner_est = float(_norm_power(field, inner_mid[None, :], p)[0]) * half ** d
        if inner_est >= last_inner:
            grew += 1
            if grew >= 3:
                warnings.warn(
                    "cell mass keeps growing under refinement near the singular "
                    "point; the field looks non-integrable at this exponent",
                    IntegrabilityWarning, stacklevel=3)
                return total + inner_est
        else:
            grew = 0
        last_inner = inner_est
        lo, size = inner_lo, half
        if inner_est <= rtol * max(budget + total, 1e-300):
            return total + inner_est
    mid = lo + size / 2.0
    return total + float(_norm_power(field, mid[None, :], p)[0]) * size ** d


def lp_norm(field, p: float, grid: SpatialGrid, *, refine_singular: bool = True,
            max_depth: int = 48, rtol: float = 1e-7) -> float:
    """(sum over bins of |field|^p * h^d) ** (1/p) with singular-bin refinement.

    Bins whose closure contains a flagged singular point are re-integrated
    by adaptive dyadic refinement, which removes the midpoint-rule bias the
    singularity would otherwise cause.
    """
    if p <= 0.0:
        raise ParameterError(f"p must be positive, got {p}")
    mesh = grid.centers_mesh()
    powers = _norm_power(field, mesh, p)
    vol = grid.cell_volume
    total = float(powers.sum()) * vol
    if refine_singular:
        lo = np.asarray(grid.lower)
        shape = np.asarray(grid.shape)
        for q in getattr(field, "singular_points", ()):  # re-do cells touching q
            u = (np.asarray(q) - lo) / grid.h
            if np.any(u < 0.0) or np.any(u > shape):
                continue
            lo_idx = np.maximum(np.ceil(u - 1.0 - 1e-9).astype(int), 0)
            hi_idx = np.minimum(np.floor(u + 1e-9).astype(int), shape - 1)
            for flat in np.ndindex(*(hi_idx - lo_idx + 1)):
                idx = lo_idx + np.asarray(flat)
                center = lo + (idx + 0.5) * grid.h
                total -= float(_norm_power(field, center[None, :], p)[0]) * vol
                total += _refine_singular_cell(field, p, lo + idx * grid.h, grid.h,
                                               np.asarray(q, dtype=float),
                                               max_depth, rtol, total)
    return total ** (1.0 / p)
