"""Occupation measures, local times and the half-offset grid conventions."""

import math
from dataclasses import dataclass, field

import numpy as np
import pytest

from fbmlab import (ParameterError, SpatialGrid, TimeGrid, generate_fbm,
                    local_time, multilinear_interpolate,
                    occupation_formula_residual, occupation_measure)


@dataclass(frozen=True, eq=False)
class RawPath:
    """Array-backed stand-in for a sampled path."""

    dimension: int
    grid: TimeGrid
    values: np.ndarray = field(repr=False)
    hurst: float | None = None


def test_grid_rejects_origin_centered_bins():
    # Centers at lower + (i + 0.5) h; lower = -0.5, h = 1 puts one at 0.
    with pytest.raises(ParameterError):
        SpatialGrid((-0.5,), 1.0, (2,))
    SpatialGrid((-0.5,), 1.0, (2,), allow_origin_center=True)
    # Shifting by half a bin keeps the origin on an edge.
    SpatialGrid((-1.0,), 1.0, (2,))


def test_grid_parameter_validation():
    with pytest.raises(ParameterError):
        SpatialGrid((0.0,), 0.0, (4,))
    with pytest.raises(ParameterError):
        SpatialGrid((0.0,), 1.0, (0,))
    with pytest.raises(ParameterError):
        SpatialGrid((0.0, 0.0), 1.0, (4,))


def test_cover_snaps_to_integer_multiples():
    pts = np.array([[-1.37], [0.12], [2.9]])
    h = 0.25
    grid = SpatialGrid.cover(pts, h)
    assert grid.lower[0] / h == round(grid.lower[0] / h)
    _, inside = grid.bin_indices(pts)
    assert inside.all()
    # Centers land on half-integer multiples of h, never on the origin.
    assert np.min(np.abs(grid.centers(0))) >= 0.4 * h


def test_cover_handles_2d_and_padding():
    pts = np.array([[0.1, -0.2], [1.4, 0.7]])
    grid = SpatialGrid.cover(pts, 0.5, pad=0.25)
    assert grid.dimension == 2
    _, inside = grid.bin_indices(pts)
    assert inside.all()
    assert grid.upper[0] >= 1.65 and grid.lower[1] <= -0.45


def test_quantize_maps_centers_to_themselves():
    grid = SpatialGrid.from_box(-1.0, 1.0, 8)
    centers = grid.centers_mesh().reshape(-1, 1)
    snapped, inside = grid.quantize(centers)
    assert inside.all()
    assert np.array_equal(snapped, centers)
    out, inside = grid.quantize(np.array([[5.0]]))
    assert not inside.any()
    assert out[0, 0] == 5.0


def test_occupation_counts_and_masses():
    grid_t = TimeGrid(1.0, 8)
    vals = np.array([[0.1, 0.1, 0.6, 0.6, 0.6, -0.3, 0.1, 0.9, 0.9]])
    path = RawPath(1, grid_t, vals)
    box = SpatialGrid((-1.0,), 0.5, (4,))
    occ = occupation_measure(path, box, 0.0, 1.0)
    # Left endpoints 0.1 x3, 0.6 x3, -0.3, 0.9, each worth dt = 1/8.
    assert occ.counts.dtype.kind == "i"
    assert occ.counts.tolist() == [0, 1, 3, 4]
    assert occ.covered_mass == pytest.approx(1.0, abs=1e-15)
    assert occ.escaped_count == 0
    assert np.all(occ.masses >= 0.0)


def test_escaped_mass_is_tracked():
    grid_t = TimeGrid(1.0, 4)
    path = RawPath(1, grid_t, np.array([[0.1, 9.0, 0.1, 0.1, 0.2]]))
    box = SpatialGrid((-1.0,), 0.5, (4,))
    occ = occupation_measure(path, box, 0.0, 1.0)
    assert occ.escaped_count == 1
    assert occ.escaped_mass == pytest.approx(0.25, abs=1e-15)
    assert occ.escaped_fraction == pytest.approx(0.25, abs=1e-15)


def test_window_additivity_is_bit_exact():
    grid_t = TimeGrid(1.0, 512)
    path = generate_fbm(0.3, 1, grid_t, 21)
    box = SpatialGrid.cover(path.values.T, 0.05)
    whole = occupation_measure(path, box, 0.0, 1.0)
    first = occupation_measure(path, box, 0.0, 0.375)
    second = occupation_measure(path, box, 0.375, 1.0)
    merged = first + second
    assert np.array_equal(merged.counts, whole.counts)
    assert merged.escaped_count == whole.escaped_count
    lt = local_time(path, box, 0.0, 0.375) + local_time(path, box, 0.375, 1.0)
    assert np.array_equal(lt.counts, local_time(path, box, 0.0, 1.0).counts)


def test_incompatible_windows_do_not_merge():
    grid_t = TimeGrid(1.0, 16)
    path = RawPath(1, grid_t, np.zeros((1, 17)) + 0.3)
    box = SpatialGrid((-1.0,), 0.5, (4,))
    a = occupation_measure(path, box, 0.0, 0.5)
    b = occupation_measure(path, box, 0.5, 1.0)
    c = occupation_measure(path, SpatialGrid((-1.0,), 0.25, (8,)), 0.5, 1.0)
    with pytest.raises(ParameterError):
        _ = b + a  # not contiguous in that order
    with pytest.raises(ParameterError):
        _ = a + c  # different grids
    with pytest.raises(ParameterError):
        occupation_measure(path, box, 0.5, 0.5)


def test_local_time_density_scaling():
    grid_t = TimeGrid(1.0, 8)
    path = RawPath(1, grid_t, np.full((1, 9), 0.3))
    box = SpatialGrid((-1.0,), 0.5, (4,))
    lt = local_time(path, box, 0.0, 1.0)
    # All 8 samples in one bin: mass 1, density 1 / h.
    assert lt.values.max() == pytest.approx(2.0, rel=1e-15)
    assert lt.covered_mass == pytest.approx(1.0, abs=1e-15)


def test_local_time_warns_outside_density_regime():
    grid_t = TimeGrid(1.0, 64)
    path = generate_fbm(0.6, 2, grid_t, 4)
    box = SpatialGrid.cover(path.values.T, 0.25)
    with pytest.warns(RuntimeWarning, match="may have no density"):
        local_time(path, box, 0.0, 1.0)


def test_occupation_formula_exact_for_bin_constant_fields():
    grid_t = TimeGrid(1.0, 256)
    path = generate_fbm(0.25, 1, grid_t, 8)
    box = SpatialGrid.cover(path.values.T, 0.125)
    lo, h = box.lower[0], box.h

    def f(pts):
        # Indicator of a union of whole bins, evaluated through bin lookup.
        idx = np.floor((pts[..., 0] - lo) / h).astype(int)
        return (idx % 2 == 0).astype(float)

    assert occupation_formula_residual(f, path, box, 1.0) == 0.0


def test_occupation_formula_residual_within_lipschitz_budget():
    grid_t = TimeGrid(1.0, 1 << 10)
    path = generate_fbm(0.25, 1, grid_t, 5)
    h = 2.0 ** -7

    def f(pts):
        return np.abs(pts[..., 0])

    box = SpatialGrid.cover(path.values.T, h)
    res = occupation_formula_residual(f, path, box, 1.0)
    # Each snapped argument moves by at most h/2; Lip(f) = 1.
    assert res <= 0.5 * h * 1.0
    # Signed cancellation makes the residual non-monotone in h, so the
    # finer grid is held to its own budget rather than to the coarse value.
    finer = SpatialGrid.cover(path.values.T, h / 4)
    assert occupation_formula_residual(f, path, finer, 1.0) <= 0.5 * (h / 4)


def test_local_time_csv_layout():
    import io

    grid_t = TimeGrid(1.0, 8)
    path = RawPath(1, grid_t, np.full((1, 9), 0.3))
    box = SpatialGrid((-1.0,), 0.5, (4,))
    buf = io.StringIO()
    local_time(path, box, 0.0, 1.0).to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[1] == "z_1,L"
    assert len(lines) == 2 + 4


def test_multilinear_interpolation_reproduces_affine_fields():
    lower, h = np.array([-1.0, -1.0]), 0.25
    centers = np.stack(np.meshgrid(
        lower[0] + (np.arange(8) + 0.5) * h,
        lower[1] + (np.arange(8) + 0.5) * h, indexing="ij"), axis=-1)
    values = 2.0 * centers[..., 0] - 3.0 * centers[..., 1] + 0.5
    rng = np.random.Generator(np.random.Philox(key=1))
    pts = rng.uniform(-0.7, 0.7, size=(50, 2))
    got = multilinear_interpolate(lower, h, values, pts)
    want = 2.0 * pts[:, 0] - 3.0 * pts[:, 1] + 0.5
    assert np.max(np.abs(got - want)) < 1e-12
    # Outside the center lattice the fill value applies.
    assert multilinear_interpolate(lower, h, values, np.array([[5.0, 0.0]]))[0] == 0.0
    edge = multilinear_interpolate(lower, h, values, np.array([[5.0, 0.0]]),
                                   clamp=True)[0]
    assert math.isfinite(edge) and edge != 0.0
