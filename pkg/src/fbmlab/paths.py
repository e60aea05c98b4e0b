"""Exact simulation of fractional Brownian and Brownian paths on uniform grids.

Fractional Brownian motion with Hurst parameter H has covariance

    R(s, t) = 0.5 * (s**(2H) + t**(2H) - abs(t - s)**(2H))

so its increments over a uniform grid with spacing dt form a stationary
Gaussian sequence with autocovariance

    gamma(k) = 0.5 * dt**(2H) * (|k+1|**(2H) - 2|k|**(2H) + |k-1|**(2H)).

Sampling embeds the Toeplitz covariance of that sequence into a circulant
matrix of size 2N whose eigenvalues are the FFT of the first row; when all
eigenvalues are nonnegative the construction below draws from the exact
Gaussian law (Davies-Harte).  If the embedding fails to be nonnegative
definite the generator falls back to a dense Cholesky factorization of the
increment covariance, which is exact as well, just slower.

Randomness is counter-based: each (seed, path_index, component) triple keys
an independent Philox stream, so ensembles can be generated in any order,
or in parallel, without coupling between paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import toeplitz

from .errors import GenerationError, ParameterError

_MASK64 = 0xFFFFFFFFFFFFFFFF
_MASK32 = 0xFFFFFFFF

# Relative tolerance for clipping roundoff-negative circulant eigenvalues.
_EIG_CLIP_RTOL = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = k * horizon / steps, k = 0..steps."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not (self.horizon > 0.0 and math.isfinite(self.horizon)):
            raise ParameterError(f"horizon must be positive and finite, got {self.horizon}")
        if self.steps < 1:
            raise ParameterError(f"steps must be >= 1, got {self.steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)

    def node_index(self, time: float, rtol: float = 1e-9) -> int:
        """Index k with t_k == time, or ParameterError if time is off-grid."""
        k = round(time / self.dt)
        if k < 0 or k > self.steps or abs(k * self.dt - time) > rtol * max(self.horizon, 1.0):
            raise ParameterError(f"time {time} is not aligned to the grid (dt={self.dt})")
        return int(k)

    def subsample(self, factor: int) -> "TimeGrid":
        if factor < 1 or self.steps % factor != 0:
            raise ParameterError(f"factor {factor} does not divide steps {self.steps}")
        return TimeGrid(self.horizon, self.steps // factor)

    def dyadic_windows(self, max_level: int) -> list[tuple[int, int]]:
        """Node index pairs (k0, k1) of all dyadic windows up to max_level.

        Level j splits [0, horizon] into 2**j equal windows; steps must be
        divisible by 2**max_level so every window is node aligned.
        """
        if max_level < 0:
            raise ParameterError("max_level must be >= 0")
        if self.steps % (1 << max_level) != 0:
            raise ParameterError(
                f"steps {self.steps} not divisible by 2**{max_level}")
        out = []
        for j in range(max_level + 1):
            width = self.steps >> j
            for i in range(1 << j):
                out.append((i * width, (i + 1) * width))
        return out


@dataclass(frozen=True, eq=False)
class FbmPath:
    """One fractional Brownian path: values[c, k] = w^c(t_k), w(0) = 0."""

    hurst: float
    dimension: int
    grid: TimeGrid
    values: np.ndarray = field(repr=False)
    increments: np.ndarray = field(repr=False)
    seed: int
    path_index: int = 0

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def to_csv(self, fh) -> None:
        _write_path_csv(fh, self, header=f"# H={self.hurst} d={self.dimension} "
                        f"seed={self.seed} N={self.grid.steps} T={self.grid.horizon}",
                        prefix="w")


@dataclass(frozen=True, eq=False)
class BmPath:
    """One standard Brownian path: values[c, k] = B^c(t_k), B(0) = 0."""

    dimension: int
    grid: TimeGrid
    values: np.ndarray = field(repr=False)
    increments: np.ndarray = field(repr=False)
    seed: int
    path_index: int = 0

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def to_csv(self, fh) -> None:
        _write_path_csv(fh, self, header=f"# n={self.dimension} seed={self.seed} "
                        f"N={self.grid.steps} T={self.grid.horizon}", prefix="b")


def _write_path_csv(fh, path, header: str, prefix: str) -> None:
    fh.write(header + "\n")
    cols = ",".join(f"{prefix}_{i + 1}" for i in range(path.dimension))
    fh.write(f"t,{cols}\n")
    for k, t in enumerate(path.times):
        row = ",".join(repr(float(v)) for v in path.values[:, k])
        fh.write(f"{float(t)!r},{row}\n")


def fbm_covariance(s, t, hurst: float):
    """Exact covariance R(s, t) of scalar fBm."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    h2 = 2.0 * hurst
    return 0.5 * (np.abs(s) ** h2 + np.abs(t) ** h2 - np.abs(t - s) ** h2)


def _component_rng(seed: int, path_index: int, component: int) -> np.random.Generator:
    """Philox stream keyed by (seed, path_index, component)."""
    if path_index < 0 or component < 0:
        raise ParameterError("path_index and component must be nonnegative")
    key = np.array([seed & _MASK64,
                    ((path_index & _MASK32) << 32) | (component & _MASK32)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _fgn_autocov(hurst: float, n_steps: int, dt: float) -> np.ndarray:
    """gamma(0..n_steps) for fractional Gaussian noise with spacing dt."""
    k = np.arange(n_steps + 1, dtype=float)
    h2 = 2.0 * hurst
    g = 0.5 * ((k + 1.0) ** h2 - 2.0 * k ** h2 + np.abs(k - 1.0) ** h2)
    return g * dt ** h2


def _circulant_eigenvalues(gamma: np.ndarray) -> np.ndarray | None:
    """Eigenvalues of the 2N circulant embedding, or None if not nonneg definite."""
    first_row = np.concatenate([gamma, gamma[-2:0:-1]])
    lam = np.fft.fft(first_row).real
    floor = -_EIG_CLIP_RTOL * lam.max()
    if lam.min() < floor:
        return None
    return np.clip(lam, 0.0, None)


def _fgn_from_normals(lam: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Map 2N iid standard normals through the circulant square root.

    The map is linear, so its exactness can be audited by pushing basis
    vectors through and comparing the implied covariance with gamma.
    """
    m = lam.size
    n = m // 2
    w = np.zeros(m, dtype=complex)
    w[0] = math.sqrt(lam[0] / m) * z[0]
    w[n] = math.sqrt(lam[n] / m) * z[1]
    if n > 1:
        u = z[2:n + 1]
        v = z[n + 1:]
        amp = np.sqrt(lam[1:n] / (2.0 * m))
        w[1:n] = amp * (u + 1j * v)
        w[m - 1:n:-1] = amp * (u - 1j * v)
    return np.fft.fft(w).real[:n]


def _fgn_cholesky(gamma: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Dense exact fallback: lower Cholesky of the Toeplitz increment covariance."""
    cov = toeplitz(gamma[:-1])
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        eigs = np.linalg.eigvalsh(cov)
        raise GenerationError(
            f"increment covariance is numerically singular "
            f"(min eigenvalue {eigs.min():.3e}, max {eigs.max():.3e})") from exc
    return chol @ z


def _validate_hurst(hurst: float) -> None:
    if not (0.0 < hurst < 1.0):
        raise ParameterError(f"hurst must lie in (0, 1), got {hurst}")


def generate_fbm(hurst: float, dimension: int, grid: TimeGrid, seed: int,
                 path_index: int = 0) -> FbmPath:
    """Sample one fBm path with independent components, exactly.

    Deterministic: the same (hurst, dimension, grid, seed, path_index)
    always returns bit-identical values.
    """
    _validate_hurst(hurst)
    if dimension < 1:
        raise ParameterError(f"dimension must be >= 1, got {dimension}")
    gamma = _fgn_autocov(hurst, grid.steps, grid.dt)
    lam = _circulant_eigenvalues(gamma)
    inc = np.empty((dimension, grid.steps))
    for c in range(dimension):
        rng = _component_rng(seed, path_index, c)
        if lam is not None:
            inc[c] = _fgn_from_normals(lam, rng.standard_normal(2 * grid.steps))
        else:
            inc[c] = _fgn_cholesky(gamma, rng.standard_normal(grid.steps))
    values = np.concatenate([np.zeros((dimension, 1)), np.cumsum(inc, axis=1)], axis=1)
    return FbmPath(hurst, dimension, grid, values, inc, seed, path_index)


def generate_bm(dimension: int, grid: TimeGrid, seed: int, path_index: int = 0) -> BmPath:
    """Sample one standard Brownian path with independent components."""
    if dimension < 1:
        raise ParameterError(f"dimension must be >= 1, got {dimension}")
    scale = math.sqrt(grid.dt)
    inc = np.empty((dimension, grid.steps))
    for c in range(dimension):
        rng = _component_rng(seed, path_index, c)
        inc[c] = scale * rng.standard_normal(grid.steps)
    values = np.concatenate([np.zeros((dimension, 1)), np.cumsum(inc, axis=1)], axis=1)
    return BmPath(dimension, grid, values, inc, seed, path_index)


def generate_fbm_batch(hurst: float, dimension: int, grid: TimeGrid, seed: int,
                       count: int) -> np.ndarray:
    """Values array of shape (count, dimension, steps + 1).

    Path i equals generate_fbm(..., path_index=i).values bit for bit; the
    batch form only avoids recomputing the embedding eigenvalues.
    """
    _validate_hurst(hurst)
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    gamma = _fgn_autocov(hurst, grid.steps, grid.dt)
    lam = _circulant_eigenvalues(gamma)
    chol = None
    if lam is None:
        cov = toeplitz(gamma[:-1])
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise GenerationError("increment covariance is numerically singular") from exc
    out = np.empty((count, dimension, grid.steps + 1))
    out[:, :, 0] = 0.0
    for i in range(count):
        for c in range(dimension):
            rng = _component_rng(seed, i, c)
            if lam is not None:
                inc = _fgn_from_normals(lam, rng.standard_normal(2 * grid.steps))
            else:
                inc = chol @ rng.standard_normal(grid.steps)
            np.cumsum(inc, out=out[i, c, 1:])
    return out


def generate_bm_increments(dimension: int, grid: TimeGrid, seed: int,
                           count: int) -> np.ndarray:
    """Increment array of shape (count, dimension, steps) for a driver ensemble."""
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    scale = math.sqrt(grid.dt)
    out = np.empty((count, dimension, grid.steps))
    for i in range(count):
        for c in range(dimension):
            rng = _component_rng(seed, i, c)
            out[i, c] = scale * rng.standard_normal(grid.steps)
    return out
