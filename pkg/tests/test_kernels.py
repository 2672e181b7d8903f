import os
import subprocess
import sys

import numpy as np
import pytest

from strainsurf import kernels
from strainsurf._accel import HAVE_NUMBA, NUMBA_ENABLED


def _samples(rng, shape=(5, 4, 6)):
    nz, ny, nx = shape
    return rng.normal(size=(nz, ny, nx, 3))


def test_trilinear_paths_agree(rng):
    S = _samples(rng)
    lo, hi = np.array([-1.0, 0.0, 0.5]), np.array([1.0, 2.0, 1.5])
    P = lo + rng.random((500, 3)) * (hi - lo)
    loop, vec = kernels.KERNELS["trilinear"]
    v1, j1 = loop(S, lo, hi, P, True)
    v2, j2 = vec(S, lo, hi, P, True)
    np.testing.assert_allclose(v1, v2, rtol=1e-13, atol=1e-13)
    np.testing.assert_allclose(j1, j2, rtol=1e-13, atol=1e-13)


def test_trilinear_vertices_exact_both_paths(rng):
    S = _samples(rng, (3, 3, 3)).astype(np.float32).astype(np.float64)
    lo, hi = np.zeros(3), np.array([0.3, 0.7, 1.1])
    grid = np.stack(np.meshgrid(*[np.linspace(lo[a], hi[a], 3) for a in range(3)], indexing="ij"), -1)
    P = grid.reshape(-1, 3)
    for fn in kernels.KERNELS["trilinear"]:
        v, _ = fn(S, lo, hi, P, False)
        i, j, k = np.meshgrid(range(3), range(3), range(3), indexing="ij")
        np.testing.assert_array_equal(v, S[k.ravel(), j.ravel(), i.ravel()])


def _mesh(rng, m=6, n=5, holes=True):
    Q = rng.normal(size=(m, n, 3))
    valid = np.ones((m, n), dtype=bool)
    if holes:
        valid[-1, -2:] = False
        valid[2, 4] = False
    index = -np.ones((m, n), dtype=np.int64)
    index[valid] = np.arange(valid.sum())
    return Q, index


def test_strain_paths_agree(rng):
    Q, index = _mesh(rng)
    loop, vec = kernels.KERNELS["strain_residuals"]
    r1, rows1, cols1, vals1 = loop(Q, index)
    r2, rows2, cols2, vals2 = vec(Q, index)
    np.testing.assert_allclose(r1, r2, rtol=1e-13, atol=1e-14)
    np.testing.assert_array_equal(rows1, rows2)
    np.testing.assert_array_equal(cols1, cols2)
    np.testing.assert_allclose(vals1, vals2, rtol=1e-13, atol=1e-14)


def test_strain_single_quad():
    Q = np.array([[[0, 0, 0], [0, 1, 0]], [[1, 0, 0], [2, 1, 0]]], float)
    index = np.arange(4).reshape(2, 2)
    for fn in kernels.KERNELS["strain_residuals"]:
        r, rows, cols, vals = fn(Q, index)
        assert r.tolist() == [1.0]
        assert len(rows) == 12


def test_strain_quads_with_invalid_corner_skipped(rng):
    Q, index = _mesh(rng, 3, 3, holes=False)
    index[1, 1] = -1
    for fn in kernels.KERNELS["strain_residuals"]:
        r, *_ = fn(Q, index)
        assert len(r) == 0


def test_env_flag_selects_numpy_path():
    code = "from strainsurf import kernels, _accel; print(_accel.NUMBA_ENABLED, kernels.trilinear is kernels._trilinear_numpy)"
    env = dict(os.environ, STRAINSURF_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["False", "True"]


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")
def test_default_uses_numba():
    assert NUMBA_ENABLED == (os.environ.get("STRAINSURF_NUMBA", "1").lower() not in ("0", "false", "no", "off"))
    if NUMBA_ENABLED:
        assert kernels.trilinear is kernels._trilinear_loop
