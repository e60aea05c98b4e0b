"""Occupation measures and local-time fields on uniform spatial grids.

The occupation measure of a path over a window [s, t) assigns to each bin
the amount of time the path spends there, estimated by left-endpoint
quadrature: every sample t_k in [s, t) deposits dt into the bin holding
w(t_k).  Dividing bin mass by the bin volume h**d gives the local-time
density estimator.

Bins store integer visit counts, so window additivity of measures and
local-time fields holds exactly at bit level, not just approximately.

Grids are half-offset: bin centers sit at lower + (i + 0.5) * h, and the
constructor rejects grids that would place a center exactly at the
coordinate origin, because singular coefficient fields are evaluated at
bin centers downstream.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

_ORIGIN_RTOL = 1e-9


@dataclass(frozen=True)
class SpatialGrid:
    """Axis-aligned box with a common bin width h along every axis.

    lower[a] and bins[a] fix the box on axis a; the box is
    [lower[a], lower[a] + bins[a] * h].
    """

    lower: tuple[float, ...]
    h: float
    bins: tuple[int, ...]
    allow_origin_center: bool = False

    def __post_init__(self):
        if not (self.h > 0.0 and math.isfinite(self.h)):
            raise ParameterError(f"bin width must be positive, got {self.h}")
        if len(self.lower) != len(self.bins) or not self.lower:
            raise ParameterError("lower and bins must have equal positive length")
        if any(m < 1 for m in self.bins):
            raise ParameterError(f"bins must all be >= 1, got {self.bins}")
        if not self.allow_origin_center and self._has_origin_center():
            raise ParameterError(
                "a bin center coincides with the coordinate origin; "
                "shift the box by half a bin")

    def _has_origin_center(self) -> bool:
        for lo, m in zip(self.lower, self.bins):
            if not (lo < 0.0 < lo + m * self.h):
                return False
            frac = -lo / self.h - 0.5
            if abs(frac - round(frac)) > _ORIGIN_RTOL:
                return False
        return True

    @property
    def dimension(self) -> int:
        return len(self.bins)

    @property
    def upper(self) -> tuple[float, ...]:
        return tuple(lo + m * self.h for lo, m in zip(self.lower, self.bins))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.bins

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dimension

    def centers(self, axis: int = 0) -> np.ndarray:
        return self.lower[axis] + (np.arange(self.bins[axis]) + 0.5) * self.h

    def centers_mesh(self) -> np.ndarray:
        """All bin centers, shape bins + (dimension,)."""
        axes = [self.centers(a) for a in range(self.dimension)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def bin_indices(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-axis bin indices and an inside-the-box mask.

        points has shape (..., dimension); indices are floor((x - lower)/h),
        which makes the assignment deterministic at bin boundaries
        (left-closed, right-open bins).
        """
        pts = np.asarray(points, dtype=float)
        lo = np.asarray(self.lower)
        idx = np.floor((pts - lo) / self.h).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < np.asarray(self.bins)), axis=-1)
        return idx, inside

    def quantize(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Snap points to the center of their bin; outside points pass through."""
        idx, inside = self.bin_indices(points)
        lo = np.asarray(self.lower)
        snapped = lo + (idx + 0.5) * self.h
        pts = np.asarray(points, dtype=float)
        return np.where(inside[..., None], snapped, pts), inside

    @classmethod
    def from_box(cls, a: float, b: float, bins: int, dimension: int = 1,
                 allow_origin_center: bool = False) -> "SpatialGrid":
        """Same interval [a, b] with the same bin count on every axis."""
        if not b > a:
            raise ParameterError(f"need b > a, got a={a}, b={b}")
        h = (b - a) / bins
        return cls((a,) * dimension, h, (bins,) * dimension,
                   allow_origin_center=allow_origin_center)

    @classmethod
    def cover(cls, points: np.ndarray, h: float, pad: float = 0.0) -> "SpatialGrid":
        """Smallest half-offset-safe grid of width h covering the points.

        The lower corner is snapped to an integer multiple of h, so centers
        sit at half-integer multiples and the origin stays on a bin edge.
        """
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        lo = pts.min(axis=0) - pad
        hi = pts.max(axis=0) + pad
        lower = np.floor(lo / h) * h
        bins = np.maximum(np.ceil((hi - lower) / h).astype(int) + 1, 1)
        return cls(tuple(float(v) for v in lower), h,
                   tuple(int(m) for m in bins))


def _window_slice(path_grid, s: float, t: float) -> tuple[int, int]:
    k0 = path_grid.node_index(s)
    k1 = path_grid.node_index(t)
    if not k0 < k1:
        raise ParameterError(f"need s < t on the grid, got s={s}, t={t}")
    return k0, k1


def _count_window(path_values: np.ndarray, grid: SpatialGrid,
                  k0: int, k1: int) -> tuple[np.ndarray, int]:
    pts = path_values[:, k0:k1].T  # (samples, d)
    idx, inside = grid.bin_indices(pts)
    flat = np.ravel_multi_index(tuple(idx[inside].T), grid.shape)
    counts = np.bincount(flat, minlength=int(np.prod(grid.shape)))
    return counts.reshape(grid.shape), int((~inside).sum())


@dataclass(frozen=True, eq=False)
class OccupationMeasure:
    """Bin visit counts times dt over a window [s, t)."""

    grid: SpatialGrid
    s: float
    t: float
    dt: float
    counts: np.ndarray = field(repr=False)
    escaped_count: int = 0

    @property
    def masses(self) -> np.ndarray:
        return self.counts * self.dt

    @property
    def covered_mass(self) -> float:
        return float(self.counts.sum() * self.dt)

    @property
    def escaped_mass(self) -> float:
        return self.escaped_count * self.dt

    @property
    def escaped_fraction(self) -> float:
        total = self.counts.sum() + self.escaped_count
        return self.escaped_count / total if total else 0.0

    def __add__(self, other: "OccupationMeasure") -> "OccupationMeasure":
        _check_mergeable(self, other)
        return OccupationMeasure(self.grid, self.s, other.t, self.dt,
                                 self.counts + other.counts,
                                 self.escaped_count + other.escaped_count)


@dataclass(frozen=True, eq=False)
class LocalTimeField:
    """Occupation density estimate: bin mass divided by bin volume."""

    grid: SpatialGrid
    s: float
    t: float
    dt: float
    counts: np.ndarray = field(repr=False)
    escaped_count: int = 0

    @property
    def values(self) -> np.ndarray:
        return self.counts * (self.dt / self.grid.cell_volume)

    @property
    def covered_mass(self) -> float:
        return float(self.counts.sum() * self.dt)

    @property
    def escaped_mass(self) -> float:
        return self.escaped_count * self.dt

    @property
    def escaped_fraction(self) -> float:
        total = self.counts.sum() + self.escaped_count
        return self.escaped_count / total if total else 0.0

    def __add__(self, other: "LocalTimeField") -> "LocalTimeField":
        _check_mergeable(self, other)
        return LocalTimeField(self.grid, self.s, other.t, self.dt,
                              self.counts + other.counts,
                              self.escaped_count + other.escaped_count)

    def to_csv(self, fh) -> None:
        fh.write(f"# s={self.s} t={self.t} dt={self.dt} h={self.grid.h}\n")
        axes = ",".join(f"z_{a + 1}" for a in range(self.grid.dimension))
        fh.write(f"{axes},L\n")
        mesh = self.grid.centers_mesh().reshape(-1, self.grid.dimension)
        for center, val in zip(mesh, self.values.ravel()):
            coords = ",".join(repr(float(c)) for c in center)
            fh.write(f"{coords},{float(val)!r}\n")


def _check_mergeable(a, b) -> None:
    if a.grid != b.grid:
        raise ParameterError("windows live on different spatial grids")
    if a.dt != b.dt:
        raise ParameterError("windows have different time steps")
    if a.t != b.s:
        raise ParameterError(f"windows are not contiguous: [{a.s},{a.t}) + [{b.s},{b.t})")


def occupation_measure(path, grid: SpatialGrid, s: float, t: float) -> OccupationMeasure:
    """Histogram occupation measure of the path over [s, t)."""
    if path.dimension != grid.dimension:
        raise ParameterError(
            f"path dimension {path.dimension} != grid dimension {grid.dimension}")
    k0, k1 = _window_slice(path.grid, s, t)
    counts, escaped = _count_window(path.values, grid, k0, k1)
    return OccupationMeasure(grid, s, t, path.grid.dt, counts, escaped)


def local_time(path, grid: SpatialGrid, s: float, t: float) -> LocalTimeField:
    """Local-time density estimate of the path over [s, t).

    The density interpretation requires the occupation measure to be
    absolutely continuous; for fBm that holds when hurst * dimension < 1,
    which is checked here and warned about, not enforced.
    """
    hurst = getattr(path, "hurst", None)
    if hurst is not None and hurst * grid.dimension >= 1.0:
        warnings.warn(
            f"hurst*dimension = {hurst * grid.dimension:.3f} >= 1: the occupation "
            "measure may have no density; treat this field as a histogram only",
            RuntimeWarning, stacklevel=2)
    if path.dimension != grid.dimension:
        raise ParameterError(
            f"path dimension {path.dimension} != grid dimension {grid.dimension}")
    k0, k1 = _window_slice(path.grid, s, t)
    counts, escaped = _count_window(path.values, grid, k0, k1)
    return LocalTimeField(grid, s, t, path.grid.dt, counts, escaped)


def occupation_formula_residual(f, path, grid: SpatialGrid, t: float) -> float:
    """|time quadrature of f(w) - space quadrature against the occupation measure|.

    Left side: sum over t_k in [0, t) of f(w(t_k)) * dt.  Right side: sum
    over bins of f(center) * mass.  Both sums run through math.fsum, so for
    f constant on bins the two sides agree to the last bit and the residual
    is exactly zero.  Escaped samples contribute to the left side only;
    choose the box to cover the path when using this as a convergence
    diagnostic.
    """
    k0, k1 = _window_slice(path.grid, 0.0, t)
    pts = path.values[:, k0:k1].T
    left = math.fsum(np.asarray(f(pts), dtype=float)) * path.grid.dt
    idx, inside = grid.bin_indices(pts)
    lo = np.asarray(grid.lower)
    centers = lo + (idx[inside] + 0.5) * grid.h
    right = math.fsum(np.asarray(f(centers), dtype=float)) * path.grid.dt
    return abs(left - right)


def multilinear_interpolate(lower, h: float, values: np.ndarray, points,
                            fill: float = 0.0, clamp: bool = False) -> np.ndarray:
    """Multilinear interpolation between lattice samples.

    values[i_1, .., i_d] is the sample at lower + (i + 0.5) * h (bin
    centers).  Outside the center lattice the result is `fill`, or the edge
    value when clamp is True.  Works for any dimension; points has shape
    (..., d).
    """
    pts = np.asarray(points, dtype=float)
    lo = np.asarray(lower, dtype=float)
    d = values.ndim
    if pts.shape[-1] != d:
        raise ParameterError(f"points dimension {pts.shape[-1]} != field dimension {d}")
    # Position in center-lattice units.
    u = (pts - lo) / h - 0.5
    shape = np.asarray(values.shape)
    if clamp:
        u = np.clip(u, 0.0, shape - 1.0)
        in_range = np.ones(pts.shape[:-1], dtype=bool)
    else:
        in_range = np.all((u >= 0.0) & (u <= shape - 1.0), axis=-1)
        u = np.clip(u, 0.0, shape - 1.0)
    base = np.maximum(np.minimum(np.floor(u).astype(np.int64), shape - 2), 0)
    frac = u - base
    out = np.zeros(pts.shape[:-1])
    for corner in range(1 << d):
        offs = [(corner >> a) & 1 for a in range(d)]
        weight = np.ones(pts.shape[:-1])
        for a in range(d):
            weight = weight * (frac[..., a] if offs[a] else 1.0 - frac[..., a])
        # Clamp covers size-1 axes, where the far corner has zero weight.
        idx = tuple(np.minimum(base[..., a] + offs[a], shape[a] - 1) for a in range(d))
        out += weight * values[idx]
    return np.where(in_range, out, fill)
