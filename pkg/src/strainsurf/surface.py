"""Stream surfaces: constant-step RK4 timelines on an m x n quad mesh.

Mesh index ``i`` runs along the seed curve, ``j`` along time.  A trajectory
that leaves the box is cut there: its later vertices are flagged invalid and
keep NaN coordinates, so the mesh stays rectangular while trimming is ragged.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curves import SeedCurve
from .field import BoxDomain, VectorField

DEFAULT_MAX_STEPS = 500


class LeftDomain(ValueError):
    def __init__(self, last_point, exit_fraction, exit_point):
        super().__init__(f"trajectory left the domain after {exit_fraction:.6g} of the step")
        self.last_point = last_point
        self.exit_fraction = exit_fraction
        self.exit_point = exit_point


class EmptySurface(ValueError):
    pass


def rk4(field: VectorField, P, dt):
    """One classical RK4 step for every row of ``P``; ``dt`` may be per-row."""
    P = np.asarray(P, dtype=float)
    dt = np.asarray(dt, dtype=float)
    if dt.ndim == 1:
        dt = dt[:, None]
    k1 = field.values(P)
    k2 = field.values(P + (0.5 * dt) * k1)
    k3 = field.values(P + (0.5 * dt) * k2)
    k4 = field.values(P + dt * k3)
    return P + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step(field: VectorField, p, dt: float, direction: str = "forward", domain: BoxDomain | None = None):
    """Advance a single point; raises :class:`LeftDomain` when the step exits the box.

    The exit location is refined by bisection on the step fraction to
    ``1e-10 * diam``.
    """
    domain = domain or field.domain
    sgn = 1.0 if direction == "forward" else -1.0
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    p = np.asarray(p, dtype=float).reshape(1, 3)
    q = rk4(field, p, sgn * dt)[0]
    if domain.contains(q):
        return q
    lo, hi = 0.0, 1.0
    q_lo, q_hi = p[0], q
    while np.linalg.norm(q_hi - q_lo) > 1e-10 * domain.diam:
        mid = 0.5 * (lo + hi)
        qm = rk4(field, p, sgn * dt * mid)[0]
        if domain.contains(qm):
            lo, q_lo = mid, qm
        else:
            hi, q_hi = mid, qm
    raise LeftDomain(p[0].copy(), lo, q_lo)


def default_dt(field: VectorField, domain: BoxDomain | None = None) -> float:
    """Time step moving the fastest sampled particle by 1% of the box diameter."""
    domain = domain or field.domain
    vmax = field.max_speed(10)
    return 0.01 * domain.diam / vmax if vmax > 0 else 0.01 * domain.diam


@dataclass
class StreamSurfaceMesh:
    vertices: np.ndarray  # (m, n, 3)
    valid: np.ndarray  # (m, n) bool
    times: np.ndarray  # (n,)
    dt: float
    seed: SeedCurve
    seed_col: int = 0
    original: np.ndarray | None = None

    def __post_init__(self):
        if self.original is None:
            self.original = self.vertices.copy()

    @property
    def m(self) -> int:
        return self.vertices.shape[0]

    @property
    def n(self) -> int:
        return self.vertices.shape[1]

    def with_vertices(self, vertices) -> "StreamSurfaceMesh":
        return StreamSurfaceMesh(vertices, self.valid.copy(), self.times.copy(), self.dt, self.seed,
                                 self.seed_col, self.original)

    def steps_per_row(self) -> np.ndarray:
        """Number of valid time steps taken by every trajectory."""
        return self.valid.sum(axis=1) - 1


def _trajectories(field, domain, P0, dt, max_steps):
    m = len(P0)
    V = np.full((m, max_steps + 1, 3), np.nan)
    valid = np.zeros((m, max_steps + 1), dtype=bool)
    V[:, 0] = P0
    valid[:, 0] = True
    alive = np.ones(m, dtype=bool)
    P = P0.copy()
    last = 0
    for j in range(1, max_steps + 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        Q = rk4(field, P[idx], dt)
        ok = domain.contains(Q)
        keep = idx[ok]
        V[keep, j] = Q[ok]
        valid[keep, j] = True
        P[keep] = Q[ok]
        alive[idx[~ok]] = False
        if keep.size:
            last = j
    return V[:, : last + 1], valid[:, : last + 1]


def integrate_surface(
    field: VectorField,
    domain: BoxDomain,
    seed: SeedCurve,
    dt: float | None = None,
    max_steps: int = DEFAULT_MAX_STEPS,
    both_directions: bool = False,
) -> StreamSurfaceMesh:
    """Advect every seed sample with constant-step RK4.

    With ``both_directions`` the backward half (reversed in time) is prepended
    so that the seed sits at column ``seed_col``.
    """
    dt = default_dt(field, domain) if dt is None else float(dt)
    P0 = np.asarray(seed.points, dtype=float)
    Vf, valf = _trajectories(field, domain, P0, dt, max_steps)
    if both_directions:
        Vb, valb = _trajectories(field, domain, P0, -dt, max_steps)
        V = np.concatenate([Vb[:, :0:-1], Vf], axis=1)
        valid = np.concatenate([valb[:, :0:-1], valf], axis=1)
        nb = Vb.shape[1] - 1
        times = dt * np.arange(-nb, Vf.shape[1])
        seed_col = nb
    else:
        V, valid = Vf, valf
        times = dt * np.arange(Vf.shape[1])
        seed_col = 0
    if V.shape[1] < 2:
        raise EmptySurface("every trajectory left the domain on its first step")
    return StreamSurfaceMesh(V, valid, times, dt, seed, seed_col)


def back_integrate(field: VectorField, domain: BoxDomain, mesh: StreamSurfaceMesh, vertices=None):
    """Carry every valid vertex of timeline ``j`` back to ``t = 0`` with RK4.

    Uses the mesh's own step; returns ``(points, valid)`` shaped like the mesh,
    row ``i`` still corresponding to seed sample ``i``.
    """
    V = mesh.vertices if vertices is None else vertices
    steps = np.rint(mesh.times / mesh.dt).astype(int)
    m, n = mesh.valid.shape
    out = np.where(mesh.valid[..., None], V, np.nan)
    ok = mesh.valid.copy()
    k = np.broadcast_to(np.abs(steps)[None, :], (m, n))
    sgn = np.broadcast_to(-np.sign(steps)[None, :], (m, n)).astype(float)
    for s in range(1, int(np.abs(steps).max(initial=0)) + 1):
        act = ok & (k >= s)
        if not act.any():
            break
        P = out[act]
        Q = rk4(field, P, sgn[act] * mesh.dt)
        inside = domain.contains(Q)
        out[act] = np.where(inside[:, None], Q, np.nan)
        ii, jj = np.nonzero(act)
        ok[ii[~inside], jj[~inside]] = False
    return out, ok


# --------------------------------------------------------------------------
# export


def write_obj(path, mesh: StreamSurfaceMesh, vertices=None) -> int:
    """Triangulated OBJ of the valid part of ``mesh``; returns the vertex count."""
    V = mesh.vertices if vertices is None else vertices
    valid = mesh.valid
    index = -np.ones(valid.shape, dtype=np.int64)
    order = np.argwhere(valid)  # row-major: i outer, j inner
    index[valid] = np.arange(1, len(order) + 1)
    lines = [f"# strainsurf stream surface m={mesh.m} n={mesh.n}"]
    for i, j in order:
        x, y, z = V[i, j]
        lines.append(f"v {x:.17g} {y:.17g} {z:.17g}")
    ok = valid[:-1, :-1] & valid[1:, :-1] & valid[:-1, 1:] & valid[1:, 1:]
    for i, j in np.argwhere(ok):
        a, b, c, d = index[i, j], index[i + 1, j], index[i + 1, j + 1], index[i, j + 1]
        lines.append(f"f {a} {b} {c}")
        lines.append(f"f {a} {c} {d}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return len(order)


def write_vertex_scalars(path, mesh: StreamSurfaceMesh, scalars, vertices=None) -> None:
    """Sidecar CSV ``i,j,t,x,y,z,value`` in the same vertex order as :func:`write_obj`."""
    V = mesh.vertices if vertices is None else vertices
    rows = ["i,j,t,x,y,z,e1_local"]
    for i, j in np.argwhere(mesh.valid):
        val = scalars[i, j]
        x, y, z = V[i, j]
        rows.append(f"{i},{j},{mesh.times[j]:.17g},{x:.17g},{y:.17g},{z:.17g},{val:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")
