"""Seed-curve families obtained by integrating multi-valued direction fields.

A curve is marched from its seed in both directions with a fixed arc-length
step ``h``.  At every point the admissible set (second-order vectors, the
first-order cone, or the in-face first-order pair) is solved afresh and the
member closest in angle to the previous tangent continues the curve.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import quadrics
from .field import BoxDomain, Face, VectorField, sym

SECOND_ORDER = "second_order"
BOUNDARY = "first_order_boundary"
INTERIOR = "first_order_interior"
FAMILIES = (SECOND_ORDER, BOUNDARY, INTERIOR)

MIN_LENGTH_FRACTION = 0.1
DEFAULT_H_FRACTION = 0.01
MAX_TURN = np.pi / 4  # larger turns in one step mean the tracked branch was lost


class CurveTooShort(ValueError):
    pass


class NoAdmissibleDirection(ValueError):
    pass


@dataclass
class SeedCurve:
    points: np.ndarray
    tangents: np.ndarray
    family: str
    h: float
    seed: np.ndarray | None = None
    d0: np.ndarray | None = None
    face: str | None = None
    normal: np.ndarray | None = None
    id: int = -1
    meta: dict = dc_field(default_factory=dict)

    @property
    def arclength(self) -> np.ndarray:
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def length(self) -> float:
        return float(self.arclength[-1])

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def from_points(cls, points, family: str = "custom", **kw) -> "SeedCurve":
        """Wrap a polyline; tangents come from finite differences in arc length."""
        P = np.asarray(points, dtype=float)
        s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(P, axis=0), axis=1))])
        h = kw.pop("h", float(s[-1] / max(len(P) - 1, 1)))
        return cls(P, fd_tangents(P, s), family, h, **kw)

    def reversed(self) -> "SeedCurve":
        return SeedCurve(self.points[::-1].copy(), -self.tangents[::-1], self.family, self.h,
                         self.seed, self.d0, self.face, self.normal, self.id, dict(self.meta))

    def to_dict(self) -> dict:
        out = {
            "id": self.id,
            "family": self.family,
            "h": self.h,
            "points": self.points.tolist(),
            "tangents": self.tangents.tolist(),
            "length": self.length,
        }
        if self.seed is not None:
            out["seed"] = np.asarray(self.seed).tolist()
        if self.d0 is not None:
            out["d0"] = np.asarray(self.d0).tolist()
        if self.face is not None:
            out["face"] = self.face
        if self.normal is not None:
            out["normal"] = np.asarray(self.normal).tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SeedCurve":
        opt = {k: np.asarray(d[k], dtype=float) for k in ("seed", "d0", "normal") if d.get(k) is not None}
        return cls(
            np.asarray(d["points"], dtype=float),
            np.asarray(d["tangents"], dtype=float),
            d["family"],
            float(d["h"]),
            face=d.get("face"),
            id=int(d.get("id", -1)),
            **opt,
        )


def fd_tangents(P, s=None) -> np.ndarray:
    """Unit tangents of a polyline by (non-uniform) central differences."""
    P = np.asarray(P, dtype=float)
    if s is None:
        s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(P, axis=0), axis=1))])
    if len(P) < 2:
        raise ValueError("need at least two points for tangents")
    if len(P) == 2:
        t = np.repeat((P[1] - P[0])[None, :], 2, axis=0)
    else:
        t = np.gradient(P, s, axis=0)
    return t / np.linalg.norm(t, axis=1, keepdims=True)


# --------------------------------------------------------------------------
# admissible direction sets


def admissible_set(field: VectorField, p, mode: str, face: Face | None = None) -> quadrics.DirectionSet:
    J = field.jacobians(np.asarray(p, dtype=float)[None, :])[0]
    if mode == SECOND_ORDER:
        return quadrics.second_order_vectors(J)
    if mode == INTERIOR:
        return quadrics.first_order_cone(J)
    if mode == BOUNDARY:
        if face is None:
            raise ValueError("boundary mode needs a face")
        return quadrics.boundary_first_order(J, *face.tangent_basis)
    raise ValueError(f"unknown curve family {mode!r}")


class _Marcher:
    def __init__(self, field, domain, mode, h, face, max_turn):
        self.field, self.domain, self.mode, self.h = field, domain, mode, h
        self.face, self.max_turn = face, max_turn
        self.plane = face.tangent_basis if face is not None else None

    def inside(self, p) -> bool:
        return bool(self.domain.contains(p))

    def direction(self, p, prev):
        dset = admissible_set(self.field, p, self.mode, self.face)
        u = quadrics.continue_direction(dset, prev, self.plane)
        if u is None or not np.all(np.isfinite(u)):
            return None
        if float(np.clip(u @ prev, -1.0, 1.0)) < np.cos(self.max_turn):
            return None
        return u

    def march(self, p, u, max_steps):
        pts, tans = [], []
        h = self.h
        for _ in range(max_steps):
            p_pred = p + h * u
            if not self.inside(p_pred):
                break
            u_pred = self.direction(p_pred, u)
            if u_pred is None:
                break
            w = u + u_pred
            nw = np.linalg.norm(w)
            w = u if nw < 1e-12 else w / nw
            p_new = p + h * w
            if self.face is not None:
                p_new[self.face.axis] = self.face.offset
            if not self.inside(p_new):
                break
            u_new = self.direction(p_new, u_pred)
            if u_new is None:
                break
            pts.append(p_new)
            tans.append(u_new)
            p, u = p_new, u_new
        return pts, tans


def integrate_direction_field(
    field: VectorField,
    domain: BoxDomain,
    seed,
    d0,
    mode: str,
    h: float | None = None,
    face: Face | None = None,
    max_turn: float = MAX_TURN,
    min_length: float | None = None,
) -> SeedCurve:
    """March an admissible direction field from ``seed`` along ``+d0`` and ``-d0``.

    Total length is capped at ``diam``; curves shorter than ``diam/10`` raise
    :class:`CurveTooShort`.
    """
    diam = domain.diam
    h = DEFAULT_H_FRACTION * diam if h is None else float(h)
    if h <= 0:
        raise ValueError("step h must be positive")
    seed = np.asarray(seed, dtype=float).copy()
    if face is not None:
        seed[face.axis] = face.offset
    if not domain.contains(seed):
        raise NoAdmissibleDirection(f"seed {seed.tolist()} is outside the domain")
    m = _Marcher(field, domain, mode, h, face, max_turn)
    d0 = np.asarray(d0, dtype=float)
    d0 = d0 / np.linalg.norm(d0)
    u0 = m.direction(seed, d0)
    if u0 is None:
        raise NoAdmissibleDirection(f"no admissible direction near d0 at {seed.tolist()}")
    total = int(np.floor(diam / h + 1e-9))
    fwd_p, fwd_t = m.march(seed, u0, total // 2)
    bwd_p, bwd_t = m.march(seed, -u0, total - len(fwd_p))
    left = total - len(fwd_p) - len(bwd_p)
    if left > 0 and len(fwd_p) == total // 2 and fwd_p:
        more_p, more_t = m.march(fwd_p[-1], fwd_t[-1], left)
        fwd_p += more_p
        fwd_t += more_t
    points = np.array(bwd_p[::-1] + [seed] + fwd_p)
    tangents = np.array([-t for t in bwd_t[::-1]] + [u0] + fwd_t)
    curve = SeedCurve(points, tangents, mode, h, seed=seed, d0=u0,
                      face=face.name if face is not None else None,
                      normal=face.normal.copy() if face is not None else None)
    limit = MIN_LENGTH_FRACTION * diam if min_length is None else min_length
    if curve.length < limit - 1e-12 * diam:
        raise CurveTooShort(f"curve length {curve.length:.4g} < {limit:.4g}")
    return curve


def _launch(field, domain, seed, mode, h, face, directions, **kw) -> list[SeedCurve]:
    out = []
    for d in directions:
        try:
            out.append(integrate_direction_field(field, domain, seed, d, mode, h, face=face, **kw))
        except (CurveTooShort, NoAdmissibleDirection):
            continue
    return out


def second_order_curve(field, domain, seed, h=None, **kw) -> list[SeedCurve]:
    """All accepted second-order curves through ``seed`` (possibly none)."""
    dset = admissible_set(field, seed, SECOND_ORDER)
    dirs = quadrics.representative_directions(dset, count=4)
    return _launch(field, domain, seed, SECOND_ORDER, h, None, dirs, **kw)


def boundary_curve(field, domain, face: Face, seed_on_face, h=None, **kw) -> list[SeedCurve]:
    """First-order curves inside one planar face of the box."""
    seed = np.asarray(seed_on_face, dtype=float).copy()
    seed[face.axis] = face.offset
    dset = admissible_set(field, seed, BOUNDARY, face)
    dirs = quadrics.representative_directions(dset, count=2, plane=face.tangent_basis)
    return _launch(field, domain, seed, BOUNDARY, h, face, dirs, **kw)


def interior_curve(field, domain, seed, d0, h=None, **kw) -> SeedCurve:
    """Curvature-minimising first-order curve: the previous tangent is
    projected onto the first-order cone at each new point."""
    return integrate_direction_field(field, domain, seed, d0, INTERIOR, h, **kw)


def interior_curves(field, domain, seed, h=None, count: int = 4, **kw) -> list[SeedCurve]:
    """Interior curves launched along ``count`` directions spread over the cone at ``seed``."""
    dset = admissible_set(field, seed, INTERIOR)
    dirs = quadrics.representative_directions(dset, count=count)
    return _launch(field, domain, seed, INTERIOR, h, None, dirs, **kw)


def residuals(field: VectorField, curve: SeedCurve) -> tuple[np.ndarray, np.ndarray]:
    """Per-point ``|u J+ u|`` and ``|u K+ u|`` with forms at unit Frobenius norm."""
    from .field import k_matrix

    J = field.jacobians(curve.points)
    A, B = sym(J), sym(k_matrix(J))
    na = np.linalg.norm(A, axis=(1, 2))
    nb = np.linalg.norm(B, axis=(1, 2))
    u = curve.tangents
    ra = np.abs(np.einsum("ni,nij,nj->n", u, A, u)) / np.where(na > 0, na, 1.0)
    rb = np.abs(np.einsum("ni,nij,nj->n", u, B, u)) / np.where(nb > 0, nb, 1.0)
    return ra, rb
