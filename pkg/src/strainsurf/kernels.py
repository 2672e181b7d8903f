"""Hot numeric kernels.

Each kernel exists twice: a loop version compiled with numba and a
vectorised numpy version.  :data:`strainsurf._accel.NUMBA_ENABLED` picks the
one exported under the public name; both stay importable for tests and the
benchmark.
"""
import numpy as np

from ._accel import NUMBA_ENABLED, njit

_SNAP = 1e-9


# --------------------------------------------------------------------------
# trilinear interpolation of vertex samples on a uniform grid


@njit
def _trilinear_loop(samples, lo, hi, points, want_jac):
    nz, ny, nx = samples.shape[0], samples.shape[1], samples.shape[2]
    dims = (nx, ny, nz)
    npts = points.shape[0]
    values = np.empty((npts, 3))
    jac = np.zeros((npts, 3, 3))
    for p in range(npts):
        idx = np.empty(3, dtype=np.int64)
        t = np.empty(3)
        for a in range(3):
            ext = hi[a] - lo[a]
            c = min(max(points[p, a], lo[a]), hi[a])
            f = (c - lo[a]) / ext * (dims[a] - 1)
            r = np.floor(f + 0.5)
            if abs(f - r) < _SNAP:
                f = r
            k = int(np.floor(f))
            if k > dims[a] - 2:
                k = dims[a] - 2
            if k < 0:
                k = 0
            idx[a] = k
            t[a] = f - k
        i, j, k = idx[0], idx[1], idx[2]
        tx, ty, tz = t[0], t[1], t[2]
        sx, sy, sz = 1.0 - tx, 1.0 - ty, 1.0 - tz
        hx = (hi[0] - lo[0]) / (nx - 1)
        hy = (hi[1] - lo[1]) / (ny - 1)
        hz = (hi[2] - lo[2]) / (nz - 1)
        for c in range(3):
            c000 = samples[k, j, i, c]
            c100 = samples[k, j, i + 1, c]
            c010 = samples[k, j + 1, i, c]
            c110 = samples[k, j + 1, i + 1, c]
            c001 = samples[k + 1, j, i, c]
            c101 = samples[k + 1, j, i + 1, c]
            c011 = samples[k + 1, j + 1, i, c]
            c111 = samples[k + 1, j + 1, i + 1, c]
            values[p, c] = (
                c000 * (sx * sy * sz)
                + c100 * (tx * sy * sz)
                + c010 * (sx * ty * sz)
                + c110 * (tx * ty * sz)
                + c001 * (sx * sy * tz)
                + c101 * (tx * sy * tz)
                + c011 * (sx * ty * tz)
                + c111 * (tx * ty * tz)
            )
            if want_jac:
                jac[p, c, 0] = (
                    (c100 - c000) * (sy * sz)
                    + (c110 - c010) * (ty * sz)
                    + (c101 - c001) * (sy * tz)
                    + (c111 - c011) * (ty * tz)
                ) / hx
                jac[p, c, 1] = (
                    (c010 - c000) * (sx * sz)
                    + (c110 - c100) * (tx * sz)
                    + (c011 - c001) * (sx * tz)
                    + (c111 - c101) * (tx * tz)
                ) / hy
                jac[p, c, 2] = (
                    (c001 - c000) * (sx * sy)
                    + (c101 - c100) * (tx * sy)
                    + (c011 - c010) * (sx * ty)
                    + (c111 - c110) * (tx * ty)
                ) / hz
    return values, jac


def _trilinear_numpy(samples, lo, hi, points, want_jac):
    nz, ny, nx = samples.shape[:3]
    dims = np.array([nx, ny, nz])
    P = np.clip(points, lo, hi)
    f = (P - lo) / (hi - lo) * (dims - 1)
    r = np.floor(f + 0.5)
    f = np.where(np.abs(f - r) < _SNAP, r, f)
    idx = np.clip(np.floor(f).astype(np.int64), 0, dims - 2)
    t = f - idx
    i, j, k = idx[:, 0], idx[:, 1], idx[:, 2]
    tx, ty, tz = (t[:, a : a + 1] for a in range(3))
    sx, sy, sz = 1.0 - tx, 1.0 - ty, 1.0 - tz
    c000 = samples[k, j, i]
    c100 = samples[k, j, i + 1]
    c010 = samples[k, j + 1, i]
    c110 = samples[k, j + 1, i + 1]
    c001 = samples[k + 1, j, i]
    c101 = samples[k + 1, j, i + 1]
    c011 = samples[k + 1, j + 1, i]
    c111 = samples[k + 1, j + 1, i + 1]
    values = (
        c000 * (sx * sy * sz)
        + c100 * (tx * sy * sz)
        + c010 * (sx * ty * sz)
        + c110 * (tx * ty * sz)
        + c001 * (sx * sy * tz)
        + c101 * (tx * sy * tz)
        + c011 * (sx * ty * tz)
        + c111 * (tx * ty * tz)
    )
    jac = np.zeros((P.shape[0], 3, 3))
    if want_jac:
        h = (hi - lo) / (dims - 1)
        jac[:, :, 0] = (
            (c100 - c000) * (sy * sz) + (c110 - c010) * (ty * sz)
            + (c101 - c001) * (sy * tz) + (c111 - c011) * (ty * tz)
        ) / h[0]
        jac[:, :, 1] = (
            (c010 - c000) * (sx * sz) + (c110 - c100) * (tx * sz)
            + (c011 - c001) * (sx * tz) + (c111 - c101) * (tx * tz)
        ) / h[1]
        jac[:, :, 2] = (
            (c001 - c000) * (sx * sy) + (c101 - c100) * (tx * sy)
            + (c011 - c010) * (sx * ty) + (c111 - c110) * (tx * ty)
        ) / h[2]
    return values, jac


# --------------------------------------------------------------------------
# strain residuals of a quad mesh and their Jacobian entries
#
# For quad (i, j): a = q[i+1,j] - q[i,j], b = q[i+1,j+1] - q[i,j+1],
# e = b - a, r = <a, e>.  dr/da = b - 2a, dr/db = a.


@njit
def _strain_loop(Q, index):
    m, n = index.shape
    count = 0
    for i in range(m - 1):
        for j in range(n - 1):
            if index[i, j] >= 0 and index[i + 1, j] >= 0 and index[i, j + 1] >= 0 and index[i + 1, j + 1] >= 0:
                count += 1
    res = np.empty(count)
    rows = np.empty(12 * count, dtype=np.int64)
    cols = np.empty(12 * count, dtype=np.int64)
    vals = np.empty(12 * count)
    q = 0
    for i in range(m - 1):
        for j in range(n - 1):
            v00 = index[i, j]
            v10 = index[i + 1, j]
            v01 = index[i, j + 1]
            v11 = index[i + 1, j + 1]
            if v00 < 0 or v10 < 0 or v01 < 0 or v11 < 0:
                continue
            r = 0.0
            for c in range(3):
                a = Q[i + 1, j, c] - Q[i, j, c]
                b = Q[i + 1, j + 1, c] - Q[i, j + 1, c]
                r += a * (b - a)
                g = b - 2.0 * a
                base = 12 * q + 4 * c
                rows[base:base + 4] = q
                cols[base] = 3 * v10 + c
                vals[base] = g
                cols[base + 1] = 3 * v00 + c
                vals[base + 1] = -g
                cols[base + 2] = 3 * v11 + c
                vals[base + 2] = a
                cols[base + 3] = 3 * v01 + c
                vals[base + 3] = -a
            res[q] = r
            q += 1
    return res, rows, cols, vals


def _strain_numpy(Q, index):
    ok = (index[:-1, :-1] >= 0) & (index[1:, :-1] >= 0) & (index[:-1, 1:] >= 0) & (index[1:, 1:] >= 0)
    ii, jj = np.nonzero(ok)
    a = Q[ii + 1, jj] - Q[ii, jj]
    b = Q[ii + 1, jj + 1] - Q[ii, jj + 1]
    res = np.einsum("ij,ij->i", a, b - a)
    g = b - 2.0 * a
    nq = ii.size
    v10, v00 = index[ii + 1, jj], index[ii, jj]
    v11, v01 = index[ii + 1, jj + 1], index[ii, jj + 1]
    comp = np.arange(3)
    # layout per quad: for each component c, four entries (v10, v00, v11, v01)
    cols = np.stack(
        [3 * v10[:, None] + comp, 3 * v00[:, None] + comp, 3 * v11[:, None] + comp, 3 * v01[:, None] + comp],
        axis=-1,
    )
    vals = np.stack([g, -g, a, -a], axis=-1)
    rows = np.repeat(np.arange(nq), 12)
    return res, rows, cols.reshape(-1).astype(np.int64), vals.reshape(-1)


if NUMBA_ENABLED:
    trilinear = _trilinear_loop
    strain_residuals = _strain_loop
else:
    trilinear = _trilinear_numpy
    strain_residuals = _strain_numpy

KERNELS = {
    "trilinear": (_trilinear_loop, _trilinear_numpy),
    "strain_residuals": (_strain_loop, _strain_numpy),
}
