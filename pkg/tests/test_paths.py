"""Driver sampling: exact covariance, linear-map audit, determinism."""

import math

import numpy as np
import pytest
from scipy.linalg import toeplitz

from fbmlab import (ParameterError, TimeGrid, fbm_covariance, generate_bm,
                    generate_bm_increments, generate_fbm, generate_fbm_batch)
from fbmlab.paths import (_circulant_eigenvalues, _fgn_autocov,
                          _fgn_from_normals)


def test_covariance_closed_form_values():
    # R(s,t) = (s^2H + t^2H - |t-s|^2H)/2; at s=1/4, t=1/2, H=1/4 the three
    # powers are 1/2, sqrt(1/2), 1/2, so R = sqrt(1/2)/2.
    assert fbm_covariance(0.25, 0.5, 0.25) == pytest.approx(
        0.5 * math.sqrt(0.5), rel=1e-15)
    assert fbm_covariance(0.25, 0.5, 0.25) == 0.35355339059327373
    # H = 1/2 reduces to the Brownian covariance min(s, t).
    for s, t in [(0.125, 0.75), (0.5, 0.5), (1.0, 0.25)]:
        assert fbm_covariance(s, t, 0.5) == min(s, t)
    assert fbm_covariance(0.3, 0.7, 0.1) == fbm_covariance(0.7, 0.3, 0.1)
    assert fbm_covariance(0.6, 0.6, 0.3) == pytest.approx(0.6 ** 0.6, rel=1e-15)


@pytest.mark.parametrize("hurst", [0.1, 0.25, 0.5, 0.75, 0.9])
def test_circulant_map_is_exact(hurst):
    """Push basis vectors through the sampling map and recover the covariance.

    The generator is a fixed linear map z -> A z of 2N iid normals; the
    implied increment covariance A A^T must equal the Toeplitz matrix of the
    fractional Gaussian noise autocovariance.
    """
    n = 64
    gamma = _fgn_autocov(hurst, n, 1.0 / n)
    lam = _circulant_eigenvalues(gamma)
    assert lam is not None
    cols = [_fgn_from_normals(lam, e) for e in np.eye(2 * n)]
    a = np.stack(cols, axis=1)
    err = np.max(np.abs(a @ a.T - toeplitz(gamma[:-1])))
    assert err < 1e-13


def test_brownian_autocovariance_is_diagonal():
    g = _fgn_autocov(0.5, 16, 0.25)
    assert g[0] == pytest.approx(0.25, rel=1e-15)
    assert np.max(np.abs(g[1:])) < 1e-15


def test_generation_is_deterministic():
    grid = TimeGrid(1.0, 128)
    a = generate_fbm(0.3, 2, grid, 42)
    b = generate_fbm(0.3, 2, grid, 42)
    assert np.array_equal(a.values, b.values)
    assert a.values.shape == (2, 129)
    assert np.all(a.values[:, 0] == 0.0)
    c = generate_fbm(0.3, 2, grid, 43)
    assert not np.allclose(a.values, c.values)


def test_batch_matches_per_path_bitwise():
    grid = TimeGrid(1.0, 64)
    batch = generate_fbm_batch(0.25, 2, grid, 7, 4)
    for i in (0, 3):
        single = generate_fbm(0.25, 2, grid, 7, path_index=i)
        assert np.array_equal(batch[i], single.values)


def test_bm_increment_ensemble_matches_paths():
    grid = TimeGrid(2.0, 32)
    db = generate_bm_increments(3, grid, 9, 3)
    for i in range(3):
        single = generate_bm(3, grid, 9, path_index=i)
        assert np.array_equal(db[i], single.increments)
        assert np.array_equal(np.cumsum(db[i], axis=1), single.values[:, 1:])


def test_components_and_paths_are_independent_streams():
    grid = TimeGrid(1.0, 64)
    p = generate_fbm(0.5, 2, grid, 5)
    assert not np.allclose(p.values[0], p.values[1])
    q = generate_fbm(0.5, 2, grid, 5, path_index=1)
    assert not np.allclose(p.values, q.values)


def test_empirical_covariance_tracks_formula():
    grid = TimeGrid(1.0, 64)
    batch = generate_fbm_batch(0.25, 1, grid, 17, 4000)[:, 0, :]
    s, t = 0.25, 0.75
    ks, kt = grid.node_index(s), grid.node_index(t)
    prods = batch[:, ks] * batch[:, kt]
    z = abs(prods.mean() - fbm_covariance(s, t, 0.25)) / (prods.std(ddof=1) / 63.245)
    assert z < 4.0


def test_parameter_validation():
    grid = TimeGrid(1.0, 16)
    with pytest.raises(ParameterError):
        generate_fbm(0.0, 1, grid, 1)
    with pytest.raises(ParameterError):
        generate_fbm(1.0, 1, grid, 1)
    with pytest.raises(ParameterError):
        generate_fbm(0.5, 0, grid, 1)
    with pytest.raises(ParameterError):
        generate_fbm(0.5, 1, grid, 1, path_index=-1)
    with pytest.raises(ParameterError):
        TimeGrid(0.0, 16)
    with pytest.raises(ParameterError):
        TimeGrid(1.0, 0)
    with pytest.raises(ParameterError):
        generate_fbm_batch(0.5, 1, grid, 1, 0)


def test_time_grid_node_lookup_and_subsample():
    grid = TimeGrid(1.0, 256)
    assert grid.dt == pytest.approx(1.0 / 256.0, rel=1e-15)
    assert grid.node_index(0.5) == 128
    assert grid.node_index(1.0) == 256
    with pytest.raises(ParameterError):
        grid.node_index(0.5 + 0.3 * grid.dt)
    sub = grid.subsample(4)
    assert sub.steps == 64 and sub.horizon == 1.0
    with pytest.raises(ParameterError):
        grid.subsample(3)


def test_dyadic_windows_are_node_aligned():
    grid = TimeGrid(1.0, 64)
    windows = grid.dyadic_windows(3)
    # Levels 0..3 contribute 1 + 2 + 4 + 8 windows.
    assert len(windows) == 15
    assert windows[0] == (0, 64)
    assert all(0 <= k0 < k1 <= 64 for k0, k1 in windows)
    per_level = {}
    for k0, k1 in windows:
        per_level.setdefault(k1 - k0, 0)
        per_level[k1 - k0] += 1
    assert per_level == {64: 1, 32: 2, 16: 4, 8: 8}
    with pytest.raises(ParameterError):
        grid.dyadic_windows(7)


def test_path_csv_round_trip():
    import io

    grid = TimeGrid(1.0, 8)
    path = generate_fbm(0.4, 2, grid, 3)
    buf = io.StringIO()
    path.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0].startswith("# H=0.4")
    assert lines[1] == "t,w_1,w_2"
    assert len(lines) == 2 + 9
    t0, w1, w2 = lines[2].split(",")
    assert float(t0) == 0.0 and float(w1) == 0.0 and float(w2) == 0.0
    last = [float(v) for v in lines[-1].split(",")]
    assert last[0] == 1.0
    assert last[1] == path.values[0, -1] and last[2] == path.values[1, -1]
