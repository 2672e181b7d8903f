"""Discrete strain energies of seed curves and stream surfaces.

All integrals use the trapezoidal rule on the curve's own samples, with the
arc-length coordinate taken from the polyline chords.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
from scipy.integrate import trapezoid

from .curves import SeedCurve
from .field import VectorField, k_matrix, sym


class ZeroLengthCurve(ValueError):
    pass


class ZeroVelocityOnCurve(ValueError):
    pass


class MissingNormal(ValueError):
    pass


class DegenerateMesh(ValueError):
    pass


@dataclass
class RigidMotion:
    c: np.ndarray  # angular velocity
    cbar: np.ndarray  # translational velocity
    normal_residual: float


@dataclass
class EnergyReport:
    c1: float = np.nan
    c2: float = np.nan
    E1: float = np.nan
    E2: float = np.nan
    E_in: float | None = None
    E_ortho: float = np.nan
    E_para: float = np.nan
    E_rigid: float = np.nan
    E: float = np.nan
    w: tuple = (0.0, 0.0, 0.0, 0.0)
    E_S: float = np.nan
    area: float = np.nan

    def to_dict(self) -> dict:
        d = asdict(self)
        d["w"] = list(self.w)
        return d


def _quad_forms(field: VectorField, points, tangents):
    J = field.jacobians(points)
    Jp = sym(J)
    Kp = sym(k_matrix(J))
    a = np.einsum("ni,nij,nj->n", tangents, Jp, tangents)
    b = np.einsum("ni,nij,nj->n", tangents, Kp, tangents)
    return J, a, b


def _s_and_length(curve: SeedCurve):
    s = curve.arclength
    L = float(s[-1])
    if not L > 0.0:
        raise ZeroLengthCurve("curve has zero length")
    return s, L


def taylor_coeffs(field: VectorField, curve: SeedCurve) -> tuple[float, float]:
    """First- and second-order coefficients of the arc length under the flow.

    ``length(t) ~ L + c1 t + (c2 / 2) t^2``: ``c2`` is the second derivative.
    """
    s = curve.arclength
    _, a, b = _quad_forms(field, curve.points, curve.tangents)
    return float(trapezoid(a, s)), float(trapezoid(b - a * a, s))


def e1(field: VectorField, curve: SeedCurve) -> float:
    s, L = _s_and_length(curve)
    _, a, _ = _quad_forms(field, curve.points, curve.tangents)
    return float(trapezoid(a * a, s) / L)


def e2(field: VectorField, curve: SeedCurve) -> float:
    s, L = _s_and_length(curve)
    _, _, b = _quad_forms(field, curve.points, curve.tangents)
    return float(trapezoid(b * b, s) / L)


def fit_rigid_motion(points, velocities, weights) -> RigidMotion:
    """Weighted least-squares instantaneous motion ``cbar + c x p`` fitting ``v``."""
    P = np.asarray(points, dtype=float)
    V = np.asarray(velocities, dtype=float)
    n = len(P)
    A = np.zeros((n, 3, 6))
    A[:, :, :3] = np.eye(3)
    # c x p = -[p]_x c
    x, y, z = P[:, 0], P[:, 1], P[:, 2]
    A[:, 0, 4], A[:, 0, 5] = z, -y
    A[:, 1, 3], A[:, 1, 5] = -z, x
    A[:, 2, 3], A[:, 2, 4] = y, -x
    sw = np.sqrt(np.asarray(weights, dtype=float))[:, None, None]
    Aw = (sw * A).reshape(-1, 6)
    bw = (sw[:, :, 0] * V).reshape(-1)
    sol = np.linalg.lstsq(Aw, bw, rcond=None)[0]
    ne = Aw.T @ (Aw @ sol - bw)
    scale = max(float(np.linalg.norm(Aw.T @ bw)), 1.0)
    return RigidMotion(sol[3:], sol[:3], float(np.linalg.norm(ne) / scale))


def rigid_residual(points, velocities, motion: RigidMotion) -> np.ndarray:
    P = np.asarray(points, dtype=float)
    pred = motion.cbar + np.cross(motion.c, P)
    return np.sum((pred - velocities) ** 2, axis=1)


def alt_energies(field: VectorField, curve: SeedCurve, normal=None) -> tuple:
    """``(E_in, E_ortho, E_para, E_rigid)``; ``E_in`` is ``None`` without a normal."""
    s, L = _s_and_length(curve)
    u = curve.tangents
    v = field.values(curve.points)
    J = field.jacobians(curve.points)
    e_in = None
    if normal is not None:
        m = np.asarray(normal, dtype=float)
        m = m / np.linalg.norm(m)
        speed = np.linalg.norm(v, axis=1)
        if np.any(speed <= 1e-300):
            raise ZeroVelocityOnCurve("velocity vanishes on the curve; E_in undefined")
        vin = (v @ m) / speed
        e_in = float(trapezoid(1.0 - vin * vin, s) / L)
    vu = np.einsum("ni,ni->n", v, u)
    e_ortho = float(trapezoid(vu * vu, s) / L)
    Ju = np.einsum("nij,nj->ni", J, u)
    JuJu = np.einsum("ni,ni->n", Ju, Ju)
    e_para = float(trapezoid(JuJu * JuJu, s) / L)
    w = _trap_weights(s)
    motion = fit_rigid_motion(curve.points, v, w)
    e_rigid = float(trapezoid(rigid_residual(curve.points, v, motion), s) / L)
    return e_in, e_ortho, e_para, e_rigid


def _trap_weights(s) -> np.ndarray:
    ds = np.diff(s)
    w = np.zeros(len(s))
    w[:-1] += 0.5 * ds
    w[1:] += 0.5 * ds
    return w


def combined_ranking(report: EnergyReport, w) -> float:
    """``w1 E_in + w2 E_ortho + w3 E_para + w4 E_rigid + E2``."""
    w = tuple(float(x) for x in w)
    if len(w) != 4 or any(x < 0 for x in w):
        raise ValueError("weights must be four non-negative numbers")
    if w[0] > 0 and report.E_in is None:
        raise MissingNormal("E_in needs a boundary normal (interior curve given)")
    total = report.E2
    if w[0] > 0:
        total += w[0] * report.E_in
    for wk, ek in zip(w[1:], (report.E_ortho, report.E_para, report.E_rigid)):
        if wk > 0:
            total += wk * ek
    return float(total)


def curve_report(field: VectorField, curve: SeedCurve, w=(0.0, 0.0, 0.0, 0.0)) -> EnergyReport:
    c1, c2 = taylor_coeffs(field, curve)
    e_in, e_ortho, e_para, e_rigid = alt_energies(field, curve, curve.normal)
    rep = EnergyReport(c1, c2, e1(field, curve), e2(field, curve), e_in, e_ortho, e_para, e_rigid, w=tuple(w))
    rep.E = combined_ranking(rep, w) if (w[0] == 0 or e_in is not None) else np.nan
    return rep


# --------------------------------------------------------------------------
# surfaces


def timeline_integrands(field: VectorField, vertices, valid):
    """Per-vertex ``(u J+ u)^2`` along every timeline, with finite-difference
    tangents in ``s``; entries for invalid vertices are NaN.

    Also returns, per timeline, the integral of that quantity and the length
    of the valid portions.  Each maximal run of valid vertices along ``i`` is
    treated as its own polyline; runs with fewer than two vertices or a
    zero-length segment are skipped.
    """
    valid = np.asarray(valid, dtype=bool)
    m, n = valid.shape
    local = np.full((m, n), np.nan)
    if m < 2 or not valid.any():
        return local, np.zeros(n), np.zeros(n)
    V = np.where(valid[..., None], vertices, 0.0)
    link = valid[:-1] & valid[1:]  # segment (i, i+1) inside a run
    D = V[1:] - V[:-1]
    seg = np.where(link, np.linalg.norm(D, axis=2), 0.0)

    # run labels: a new run starts at every valid vertex without a valid predecessor
    start = valid.copy()
    start[1:] &= ~valid[:-1]
    label = np.cumsum(start.ravel(order="F")).reshape((m, n), order="F")
    nlab = int(label.max()) + 1
    size = np.bincount(label[valid], minlength=nlab)
    zero = np.bincount(label[:-1][link & (seg <= 0.0)], minlength=nlab) > 0
    good_run = (size >= 2) & ~zero
    good = valid & good_run[label]
    gl = link & good[:-1]

    has_prev = np.zeros((m, n), dtype=bool)
    has_next = np.zeros((m, n), dtype=bool)
    has_prev[1:] = gl
    has_next[:-1] = gl
    h1 = np.ones((m, n))
    h2 = np.ones((m, n))
    h1[1:] = np.where(gl, seg, 1.0)
    h2[:-1] = np.where(gl, seg, 1.0)
    Pm = np.zeros_like(V)
    Pp = np.zeros_like(V)
    Pm[1:] = V[:-1]
    Pp[:-1] = V[1:]
    both = (has_prev & has_next)[..., None]
    a = h1[..., None]
    b = h2[..., None]
    # second-order non-uniform central difference inside a run, one-sided at its ends
    central = (-b / (a * (a + b))) * Pm + ((b - a) / (a * b)) * V + (a / (b * (a + b))) * Pp
    fwd = (Pp - V) / b
    bwd = (V - Pm) / a
    T = np.where(both, central, np.where(has_next[..., None], fwd, bwd))
    T = T[good]
    u = T / np.linalg.norm(T, axis=1, keepdims=True)
    q = np.einsum("ni,nij,nj->n", u, sym(field.jacobians(V[good])), u)
    local[good] = q * q

    q2 = np.where(good, local, 0.0)
    integ = np.sum(np.where(gl, 0.5 * (q2[:-1] + q2[1:]) * seg, 0.0), axis=0)
    length = np.sum(np.where(gl, seg, 0.0), axis=0)
    return local, integ, length


def mesh_area(vertices, valid) -> float:
    """Area of all quads whose four corners are valid, each split into two triangles."""
    V = vertices
    ok = valid[:-1, :-1] & valid[1:, :-1] & valid[:-1, 1:] & valid[1:, 1:]
    a, b, c, d = V[:-1, :-1][ok], V[1:, :-1][ok], V[1:, 1:][ok], V[:-1, 1:][ok]
    t1 = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    t2 = 0.5 * np.linalg.norm(np.cross(c - a, d - a), axis=1)
    return float(np.sum(t1) + np.sum(t2))


def surface_energy(field: VectorField, mesh) -> tuple[float, float]:
    """``(E_S, area)``: time integral of timeline ``E1`` divided by area."""
    area = mesh_area(mesh.vertices, mesh.valid)
    if not area > 0.0:
        raise DegenerateMesh("surface has zero area")
    _, integ, length = timeline_integrands(field, mesh.vertices, mesh.valid)
    has = length > 0
    E1_t = np.where(has, integ / np.where(has, length, 1.0), 0.0)
    t = np.asarray(mesh.times, dtype=float)
    both = has[:-1] & has[1:]
    total = float(np.sum(both * 0.5 * (E1_t[:-1] + E1_t[1:]) * np.diff(t)))
    return total / area, area


def e_surface(field: VectorField, mesh) -> float:
    return surface_energy(field, mesh)[0]
