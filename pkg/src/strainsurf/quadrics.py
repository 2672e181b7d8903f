"""Pointwise direction solves on quadratic cones.

All directions are projective: ``d`` and ``-d`` are the same answer, and
every explicit direction returned here is unit length with its largest
component positive.  Quadratic forms are symmetrised and scaled to unit
Frobenius norm before any residual is measured.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .field import k_matrix, sym

SIG_EPS = 1e-9  # relative eigenvalue threshold for "zero"
ABS_EPS = 1e-14  # forms smaller than this (spectral norm) count as zero
RESIDUAL_TOL = 1e-10  # accept a polished common root below this residual


class NoConeExists(ValueError):
    """The form is definite, so no non-zero direction annihilates it."""


class DegenerateInput(ValueError):
    pass


# --------------------------------------------------------------------------
# signature classification


@dataclass(frozen=True)
class SignatureClass:
    positive: int
    negative: int
    zero: int

    @property
    def kind(self) -> str:
        p, n, z = self.positive, self.negative, self.zero
        if z == 3:
            return "all_space"
        if z == 0:
            return "cone" if p and n else "point"
        if z == 1:
            return "plane_pair" if p and n else "line"
        return "double_plane"

    @property
    def signs(self) -> tuple[str, ...]:
        return ("+",) * self.positive + ("-",) * self.negative + ("0",) * self.zero

    def __str__(self) -> str:
        return f"({','.join(self.signs)}) {self.kind}"


def _eig(form):
    A = sym(form)
    lam, Q = np.linalg.eigh(A)
    return A, lam, Q


def _zero_mask(lam, eps=SIG_EPS, atol=ABS_EPS):
    scale = float(np.max(np.abs(lam))) if lam.size else 0.0
    if scale <= atol:
        return np.ones(lam.shape, dtype=bool)
    return np.abs(lam) <= eps * scale


def classify(form, eps: float = SIG_EPS) -> SignatureClass:
    """Eigenvalue sign pattern of a symmetric 3x3 form.

    Purely relative: eigenvalues below ``eps`` times the spectral norm count
    as zero, so the class does not change when the form is rescaled.
    """
    _, lam, _ = _eig(form)
    zero = _zero_mask(lam, eps, atol=0.0)
    return SignatureClass(int(np.sum((lam > 0) & ~zero)), int(np.sum((lam < 0) & ~zero)), int(np.sum(zero)))


# --------------------------------------------------------------------------
# direction sets


@dataclass(frozen=True)
class Cone:
    form: np.ndarray


@dataclass(frozen=True)
class FinitelyMany:
    directions: np.ndarray  # (k, 3), k >= 1


@dataclass(frozen=True)
class PlanePair:
    normals: np.ndarray  # (2, 3); a double plane repeats one normal


@dataclass(frozen=True)
class Line:
    direction: np.ndarray


@dataclass(frozen=True)
class AllSpace:
    pass


@dataclass(frozen=True)
class Empty:
    pass


DirectionSet = Cone | FinitelyMany | PlanePair | Line | AllSpace | Empty


def canonical(d) -> np.ndarray:
    """Unit vector with its largest-magnitude component positive."""
    d = np.asarray(d, dtype=float)
    d = d / np.linalg.norm(d)
    k = int(np.argmax(np.abs(d)))
    return d if d[k] > 0 else -d


def dedupe(dirs, tol: float = 1e-9) -> np.ndarray:
    """Drop directions parallel or antiparallel to an earlier one."""
    out: list[np.ndarray] = []
    for d in dirs:
        d = canonical(d)
        if all(abs(float(d @ e)) < 1.0 - tol for e in out):
            out.append(d)
    return np.array(out).reshape(-1, 3)


def _finite(dirs) -> FinitelyMany | Empty:
    dirs = dedupe(dirs)
    return FinitelyMany(dirs) if len(dirs) else Empty()


def normalised(form) -> np.ndarray:
    A = sym(form)
    n = np.linalg.norm(A)
    return A / n if n > 0 else A


def solution_set(form, eps: float = SIG_EPS) -> DirectionSet:
    """All ``d`` with ``d^T form d = 0``, described by signature."""
    A, lam, Q = _eig(form)
    zero = _zero_mask(lam, eps)
    pos, neg = (lam > 0) & ~zero, (lam < 0) & ~zero
    if zero.all():
        return AllSpace()
    if not zero.any():
        return Cone(normalised(A)) if pos.any() and neg.any() else Empty()
    if zero.sum() == 1:
        e0 = Q[:, zero][:, 0]
        if pos.any() and neg.any():
            (ip,), (ineq,) = np.nonzero(pos)[0], np.nonzero(neg)[0]
            a, b = np.sqrt(lam[ip]), np.sqrt(-lam[ineq])
            n1 = a * Q[:, ip] + b * Q[:, ineq]
            n2 = a * Q[:, ip] - b * Q[:, ineq]
            return PlanePair(np.array([canonical(n1), canonical(n2)]))
        return Line(canonical(e0))
    (inz,) = np.nonzero(~zero)[0]
    n = canonical(Q[:, inz])
    return PlanePair(np.array([n, n]))


def first_order_cone(J) -> DirectionSet:
    """Directions ``d`` with ``d J d^T = 0``, i.e. the null cone of the strain rate."""
    return solution_set(sym(J))


def _binary_quadratic(R, eps=SIG_EPS, scale=None):
    """Solve ``[a b] R [a b]^T = 0`` for a symmetric 2x2 ``R``.

    Returns ``None`` when ``R`` vanishes (every direction solves it) or a list
    of unit 2-vectors.
    """
    mu, V = np.linalg.eigh(sym(R))
    ref = max(float(np.max(np.abs(mu))), 0.0) if scale is None else scale
    if ref <= ABS_EPS or np.max(np.abs(mu)) <= eps * ref:
        return None
    zero = np.abs(mu) <= eps * max(ref, float(np.max(np.abs(mu))))
    if zero.any():
        return [V[:, int(np.argmax(zero))]]
    if mu[0] * mu[1] > 0:
        return []
    # mu[0] < 0 < mu[1]
    a, b = np.sqrt(mu[1]), np.sqrt(-mu[0])
    sols = []
    for s in (1.0, -1.0):
        w = b * V[:, 1] + s * a * V[:, 0]
        sols.append(w / np.linalg.norm(w))
    return sols


def boundary_first_order(J, e1, e2) -> DirectionSet:
    """First-order directions inside the plane spanned by orthonormal ``e1, e2``.

    :class:`AllSpace` here means every in-plane direction is admissible.
    """
    A = sym(J)
    B = np.column_stack([e1, e2])
    R = B.T @ A @ B
    sols = _binary_quadratic(R, scale=max(float(np.linalg.norm(A, 2)), ABS_EPS))
    if sols is None:
        return AllSpace()
    return _finite([B @ w for w in sols])


def _plane_cone(normal, A):
    """Directions in the plane ``normal . d = 0`` with ``d A d^T = 0``."""
    n = normal / np.linalg.norm(normal)
    # orthonormal basis of the plane
    k = int(np.argmin(np.abs(n)))
    t = np.zeros(3)
    t[k] = 1.0
    f1 = np.cross(n, t)
    f1 /= np.linalg.norm(f1)
    f2 = np.cross(n, f1)
    B = np.column_stack([f1, f2])
    sols = _binary_quadratic(B.T @ A @ B, eps=1e-12, scale=1.0)
    if sols is None:
        return []
    return [B @ w for w in sols]


def _polish(d, A, B, iters: int = 8):
    """Newton iterations on the unit sphere for ``dAd = dBd = 0``."""
    d = d / np.linalg.norm(d)
    for _ in range(iters):
        f = np.array([d @ A @ d, d @ B @ d])
        if np.max(np.abs(f)) < 1e-16:
            break
        M = np.vstack([2.0 * (A @ d), 2.0 * (B @ d), d])
        step = np.linalg.lstsq(M, np.array([-f[0], -f[1], 0.0]), rcond=None)[0]
        if not np.all(np.isfinite(step)) or np.linalg.norm(step) > 0.5:
            break
        d = d + step
        d = d / np.linalg.norm(d)
    return d, float(max(abs(d @ A @ d), abs(d @ B @ d)))


def _cross_adj(M):
    m0, m1, m2 = M
    return np.column_stack([np.cross(m1, m2), np.cross(m2, m0), np.cross(m0, m1)])


def pencil_roots(A, B) -> np.ndarray:
    """Real roots of ``det(A + lam B) = 0`` (companion eigenvalues + Newton polish)."""
    coeffs = np.array([
        np.linalg.det(B),
        np.trace(_cross_adj(B) @ A),
        np.trace(_cross_adj(A) @ B),
        np.linalg.det(A),
    ])
    lead = int(np.argmax(np.abs(coeffs) > 1e-14 * np.max(np.abs(coeffs))))
    roots = np.roots(coeffs[lead:]) if lead < 3 else np.array([])
    dp = np.polyder(coeffs)
    out = []
    for r in roots:
        if abs(r.imag) > 1e-4 * (1.0 + abs(r.real)):
            continue
        lam = r.real
        d = np.polyval(dp, lam)
        if d != 0.0:
            cand = lam - np.polyval(coeffs, lam) / d
            # near a double root Newton can overshoot: keep the step only if it helps
            if abs(np.polyval(coeffs, cand)) < abs(np.polyval(coeffs, lam)):
                lam = cand
        out.append(lam)
    return np.array(out)


def _singular_locus(M):
    """Real locus of a (near-)singular form: list of plane normals, or a line."""
    lam, Q = np.linalg.eigh(sym(M))
    order = np.argsort(np.abs(lam))
    lam, Q = lam[order], Q[:, order]
    if abs(lam[2]) <= ABS_EPS:
        return "all", None
    if abs(lam[1]) <= 1e-6 * abs(lam[2]):
        return "planes", [Q[:, 2]]
    if lam[1] * lam[2] < 0:
        a, b = np.sqrt(abs(lam[1])), np.sqrt(abs(lam[2]))
        return "planes", [a * Q[:, 1] + b * Q[:, 2], a * Q[:, 1] - b * Q[:, 2]]
    return "line", Q[:, 0]


def second_order_vectors(J, K=None) -> DirectionSet:
    """Directions annihilating both ``J+`` and ``K+`` (pencil of quadrics).

    Each real root of ``det(J+ + lam K+)`` gives a singular member whose real
    locus (plane pair or line) is intersected with one of the two cones; all
    roots are tried and every candidate is polished and verified.
    """
    J = np.asarray(J, dtype=float)
    K = k_matrix(J) if K is None else np.asarray(K, dtype=float)
    Ja, Ka = sym(J), sym(K)
    za = np.linalg.norm(Ja, 2) <= ABS_EPS
    zb = np.linalg.norm(Ka, 2) <= ABS_EPS
    if za and zb:
        return AllSpace()
    if za:
        return solution_set(Ka)
    if zb:
        return solution_set(Ja)
    A, B = normalised(Ja), normalised(Ka)
    if np.linalg.norm(A - B) < 1e-12 or np.linalg.norm(A + B) < 1e-12:
        return solution_set(A)
    members = [(lam, A + lam * B) for lam in pencil_roots(A, B)]
    if abs(np.linalg.det(B)) < 1e-8:
        members.append((np.inf, B))
    cands = []
    for lam, M in members:
        kind, locus = _singular_locus(M)
        if kind == "all":
            # A and B proportional: the whole cone is shared
            return solution_set(A)
        target = B if abs(lam) < 1.0 else A
        if kind == "planes":
            for n in locus:
                cands.extend(_plane_cone(n, target))
        else:
            cands.append(locus)
    good = []
    for d in cands:
        d, res = _polish(d, A, B)
        if res <= RESIDUAL_TOL:
            good.append(d)
    return _finite(good)


# --------------------------------------------------------------------------
# projection onto a cone


def project_to_cone(d, form, eps: float = SIG_EPS) -> np.ndarray:
    """Closest unit direction to ``d`` on the cone ``x^T form x = 0``.

    Works in the eigenbasis: the minimiser is ``x_i = y_i / (1 + nu lam_i)``
    with the multiplier ``nu`` chosen so that the constraint holds; the root
    is bracketed between the two poles of that expression.
    """
    d = np.asarray(d, dtype=float)
    d = d / np.linalg.norm(d)
    _, lam, Q = _eig(form)
    zero = _zero_mask(lam, eps)
    if zero.all():
        return d
    lam = np.where(zero, 0.0, lam / np.max(np.abs(lam)))
    pos, neg = lam > 0, lam < 0
    if not (pos.any() and neg.any()):
        if not zero.any():
            raise NoConeExists("definite form has no real cone")
        N = Q[:, zero]
        x = N @ (N.T @ d)
        if np.linalg.norm(x) < 1e-14:
            x = N[:, 0]
        x = x / np.linalg.norm(x)
        return x if x @ d >= 0 else -x
    y = Q.T @ d
    lmax, lmin = lam.max(), lam.min()
    nu_l, nu_r = -1.0 / lmax, -1.0 / lmin

    def g(nu):
        return float(np.sum(lam * (y / (1.0 + nu * lam)) ** 2))

    def at_pole(nu, group):
        x = np.where(group, 0.0, y / np.where(group, 1.0, 1.0 + nu * lam))
        rest = float(np.sum(lam * x * x))
        lg = lam[group][0]
        r = np.sqrt(max(-rest / lg, 0.0))
        yg = np.where(group, y, 0.0)
        if np.linalg.norm(yg) > 0:
            x = x + r * yg / np.linalg.norm(yg)
        else:
            x[int(np.argmax(group))] = r
        return x

    width = nu_r - nu_l
    gl = g(nu_l + 1e-14 * width)
    gr = g(nu_r - 1e-14 * width)
    if gl <= 0.0:
        x = at_pole(nu_l, np.abs(lam - lmax) <= 1e-12)
    elif gr >= 0.0:
        x = at_pole(nu_r, np.abs(lam - lmin) <= 1e-12)
    else:
        nu = brentq(g, nu_l + 1e-14 * width, nu_r - 1e-14 * width, xtol=1e-15 * width, rtol=1e-15, maxiter=500)
        x = y / (1.0 + nu * lam)
    x = x / np.linalg.norm(x)
    # one Newton correction along the gradient of the constraint
    for _ in range(2):
        c = float(np.sum(lam * x * x))
        gvec = 2.0 * lam * x
        gg = float(gvec @ gvec)
        if gg > 0:
            x = x - c * gvec / gg
            x = x / np.linalg.norm(x)
    out = Q @ x
    return out / np.linalg.norm(out)


# --------------------------------------------------------------------------
# enumerating representative directions of a set


def cone_directions(form, count: int) -> np.ndarray:
    """``count`` directions spread by angle around the cone ``x^T form x = 0``."""
    _, lam, Q = _eig(form)
    lam = lam / np.max(np.abs(lam))
    pos = lam > 0
    axis = int(np.argmax(pos)) if pos.sum() == 1 else int(np.argmax(~pos))
    others = [k for k in range(3) if k != axis]
    out = []
    for k in range(count):
        th = 2.0 * np.pi * k / count
        c = np.zeros(3)
        c[others[0]] = np.cos(th) / np.sqrt(abs(lam[others[0]]))
        c[others[1]] = np.sin(th) / np.sqrt(abs(lam[others[1]]))
        c[axis] = 1.0 / np.sqrt(abs(lam[axis]))
        v = Q @ c
        out.append(v / np.linalg.norm(v))
    return np.array(out)


def _plane_directions(normal, count):
    n = normal / np.linalg.norm(normal)
    k = int(np.argmin(np.abs(n)))
    t = np.zeros(3)
    t[k] = 1.0
    f1 = np.cross(n, t)
    f1 /= np.linalg.norm(f1)
    f2 = np.cross(n, f1)
    return [np.cos(np.pi * i / count) * f1 + np.sin(np.pi * i / count) * f2 for i in range(count)]


def representative_directions(dset: DirectionSet, count: int = 4, plane=None) -> np.ndarray:
    """A finite sample of a direction set, used to launch curves from a seed.

    ``plane`` restricts :class:`AllSpace` to the span of two basis vectors.
    """
    if isinstance(dset, Empty):
        return np.zeros((0, 3))
    if isinstance(dset, FinitelyMany):
        return dset.directions
    if isinstance(dset, Line):
        return dset.direction[None, :]
    if isinstance(dset, Cone):
        return dedupe(cone_directions(dset.form, count))
    if isinstance(dset, PlanePair):
        per = max(1, count // 2)
        dirs = [d for n in dedupe(dset.normals) for d in _plane_directions(n, per)]
        return dedupe(dirs)
    if plane is not None:
        e1, e2 = plane
        return dedupe([e1, e2] + [(e1 + s * e2) / np.sqrt(2.0) for s in (1.0, -1.0)])[:count]
    return np.eye(3)[: max(1, min(count, 3))]


def continue_direction(dset: DirectionSet, prev, plane=None):
    """Admissible direction closest in angle to ``prev`` (sign-matched), or ``None``."""
    prev = np.asarray(prev, dtype=float)
    if isinstance(dset, Empty):
        return None
    if isinstance(dset, AllSpace):
        if plane is not None:
            e1, e2 = plane
            v = (prev @ e1) * e1 + (prev @ e2) * e2
            return v / np.linalg.norm(v) if np.linalg.norm(v) > 0 else None
        return prev / np.linalg.norm(prev)
    if isinstance(dset, Cone):
        return project_to_cone(prev, dset.form)
    if isinstance(dset, PlanePair):
        best = None
        for n in dset.normals:
            v = prev - (prev @ n) * n
            nv = np.linalg.norm(v)
            if nv > 0 and (best is None or nv > np.linalg.norm(best[1])):
                best = (v / nv, v)
        return None if best is None else best[0]
    dirs = dset.directions if isinstance(dset, FinitelyMany) else dset.direction[None, :]
    dots = dirs @ prev
    k = int(np.argmax(np.abs(dots)))
    return dirs[k] if dots[k] >= 0 else -dirs[k]
