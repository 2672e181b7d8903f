"""Steady 3D vector fields with exact Jacobians.

Every field lives on an axis-aligned :class:`BoxDomain`.  Three backings are
provided: parsed expression triples (:class:`AnalyticField`), affine maps
(:class:`LinearField`) and trilinear interpolation of vertex samples
(:class:`GridField`).  All evaluators are vectorised over ``(N, 3)`` point
arrays; the single-point methods check domain membership.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import exprparse, kernels


class PointOutsideDomain(ValueError):
    pass


class FieldSpecError(ValueError):
    """A field description (catalogue name, expression triple) is invalid."""


@dataclass(frozen=True)
class BoxDomain:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(3)
        hi = np.asarray(self.hi, dtype=float).reshape(3)
        if not np.all(lo < hi):
            raise ValueError(f"box corners must satisfy min < max componentwise, got {lo} and {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def unit(cls) -> "BoxDomain":
        return cls(np.zeros(3), np.ones(3))

    @property
    def diam(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))

    @property
    def faces(self) -> list["Face"]:
        out = []
        for axis in range(3):
            for side in (0, 1):
                m = np.zeros(3)
                m[axis] = 1.0 if side == 0 else -1.0
                out.append(Face(axis, side, self.lo[axis] if side == 0 else self.hi[axis], m))
        return out

    def face(self, axis: int, side: int) -> "Face":
        return self.faces[2 * axis + side]

    def tol(self) -> float:
        return 1e-12 * self.diam

    def contains(self, points, tol: float | None = None) -> np.ndarray | bool:
        """Closed-box membership with a relative slack of 1e-12 diam."""
        t = self.tol() if tol is None else tol
        P = np.asarray(points, dtype=float)
        inside = np.all((P >= self.lo - t) & (P <= self.hi + t), axis=-1)
        return bool(inside) if inside.ndim == 0 else inside

    def clamp(self, points) -> np.ndarray:
        return np.clip(np.asarray(points, dtype=float), self.lo, self.hi)

    def sub_box(self, center, edge) -> "BoxDomain":
        """Box of edge lengths ``edge`` around ``center``, clipped to this box."""
        c = np.asarray(center, dtype=float)
        half = 0.5 * np.broadcast_to(np.asarray(edge, dtype=float), (3,))
        lo = np.maximum(c - half, self.lo)
        hi = np.minimum(c + half, self.hi)
        # keep a non-degenerate box even when the centre sits on a face
        hi = np.maximum(hi, lo + 1e-9 * self.diam)
        return BoxDomain(lo, hi)

    def to_list(self) -> list[float]:
        return [*map(float, self.lo), *map(float, self.hi)]


@dataclass(frozen=True)
class Face:
    """One planar face of a box: ``axis`` is constant at ``offset``."""

    axis: int
    side: int
    offset: float
    normal: np.ndarray  # inward unit normal

    @property
    def name(self) -> str:
        return f"{'xyz'[self.axis]}{'min' if self.side == 0 else 'max'}"

    @property
    def tangent_basis(self) -> tuple[np.ndarray, np.ndarray]:
        a, b = [k for k in range(3) if k != self.axis]
        e1, e2 = np.zeros(3), np.zeros(3)
        e1[a] = 1.0
        e2[b] = 1.0
        return e1, e2

    def contains(self, points, domain: BoxDomain, tol: float | None = None):
        t = domain.tol() if tol is None else tol
        P = np.asarray(points, dtype=float)
        on = np.abs(P[..., self.axis] - self.offset) <= max(t, 1e-12 * domain.diam)
        return on & domain.contains(P, t)


def strain_vorticity(J) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric (strain rate) and antisymmetric (vorticity) parts of ``J``."""
    J = np.asarray(J, dtype=float)
    Jt = np.swapaxes(J, -1, -2)
    return 0.5 * (J + Jt), 0.5 * (J - Jt)


def k_matrix(J) -> np.ndarray:
    """Second-order form ``K = J^T J + J J``.

    ``u^T K u`` equals ``<Ju, Ju> + <u, J J u>``, the time derivative of the
    first-order strain of a unit tangent ``u`` advected by a linear flow.
    """
    J = np.asarray(J, dtype=float)
    Jt = np.swapaxes(J, -1, -2)
    return Jt @ J + J @ J


def sym(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + np.swapaxes(M, -1, -2))


class VectorField:
    """Base class; subclasses implement :meth:`values` and :meth:`jacobians`."""

    domain: BoxDomain
    divergence_free: bool = False
    name: str = "field"

    def values(self, points) -> np.ndarray:
        """Velocities at ``(N, 3)`` points without domain checks."""
        raise NotImplementedError

    def jacobians(self, points) -> np.ndarray:
        """Jacobians ``J[n, i, j] = dv_i/dp_j`` at ``(N, 3)`` points."""
        raise NotImplementedError

    def _check(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float).reshape(3)
        if not self.domain.contains(p):
            raise PointOutsideDomain(f"point {p.tolist()} lies outside {self.domain.to_list()}")
        return p

    def eval(self, p) -> np.ndarray:
        p = self._check(p)
        return self.values(p[None, :])[0]

    def jacobian(self, p) -> np.ndarray:
        p = self._check(p)
        return self.jacobians(p[None, :])[0]

    def divergence(self, p) -> float:
        return float(np.trace(self.jacobian(p)))

    def max_speed(self, n: int = 10) -> float:
        g = (np.arange(n) + 0.5) / n
        X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
        P = self.domain.lo + np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1) * self.domain.extent
        return float(np.max(np.linalg.norm(self.values(P), axis=1)))

    def check_divergence(self, n: int = 1000, seed: int = 0, tol: float = 1e-8) -> float:
        """Sample ``|tr J|``; warn when a field declared divergence-free violates it."""
        rng = np.random.default_rng(seed)
        P = self.domain.lo + rng.random((n, 3)) * self.domain.extent
        worst = float(np.max(np.abs(np.trace(self.jacobians(P), axis1=1, axis2=2))))
        if self.divergence_free and worst > tol * (1.0 + self.max_speed(4) / self.domain.diam):
            warnings.warn(f"{self.name}: declared divergence-free but max |tr J| = {worst:.3g}", stacklevel=2)
        return worst


class AnalyticField(VectorField):
    def __init__(self, components, domain: BoxDomain, divergence_free: bool = False, name: str = "expr"):
        if len(components) != 3:
            raise FieldSpecError("an analytic field needs exactly three component expressions")
        self.exprs = tuple(exprparse.parse(c) if isinstance(c, str) else c for c in components)
        self.domain = domain
        self.divergence_free = divergence_free
        self.name = name

    @property
    def text(self) -> str:
        return ";".join(exprparse.to_string(e) for e in self.exprs)

    def values(self, points):
        P = np.atleast_2d(np.asarray(points, dtype=float))
        return np.stack([exprparse.eval_value(e, P) for e in self.exprs], axis=1)

    def jacobians(self, points):
        P = np.atleast_2d(np.asarray(points, dtype=float))
        return np.stack([exprparse.eval_many(e, P)[1] for e in self.exprs], axis=1)


class LinearField(VectorField):
    """``v(p) = A p + b``; exact flow map ``exp(A t)`` for tests and oracles."""

    def __init__(self, A, b=None, domain: BoxDomain | None = None, name: str = "linear"):
        self.A = np.array(A, dtype=float).reshape(3, 3)
        self.b = np.zeros(3) if b is None else np.array(b, dtype=float).reshape(3)
        self.domain = domain if domain is not None else BoxDomain.unit()
        self.divergence_free = abs(np.trace(self.A)) <= 1e-12 * (1.0 + np.abs(self.A).max())
        self.name = name

    def values(self, points):
        P = np.atleast_2d(np.asarray(points, dtype=float))
        # a length-3 reduction keeps results independent of batch size (no BLAS)
        return (P[:, None, :] * self.A).sum(axis=2) + self.b

    def jacobians(self, points):
        P = np.atleast_2d(np.asarray(points))
        return np.broadcast_to(self.A, (P.shape[0], 3, 3)).copy()

    def flow(self, points, t: float) -> np.ndarray:
        """Exact flow map for ``b = 0``."""
        from scipy.linalg import expm

        if np.any(self.b):
            raise NotImplementedError("exact flow is only provided for b = 0")
        return np.asarray(points, dtype=float) @ expm(self.A * t).T


class GridField(VectorField):
    """Trilinear interpolation of samples stored at the vertices of a uniform grid."""

    def __init__(self, samples, domain: BoxDomain, divergence_free: bool = False, name: str = "grid"):
        S = np.asarray(samples)
        if S.ndim == 2:
            raise ValueError("pass samples shaped (nz, ny, nx, 3); use from_flat for flat arrays")
        if S.shape[-1] != 3 or min(S.shape[:3]) < 2:
            raise ValueError(f"bad sample array shape {S.shape}")
        self.samples_raw = S
        self.samples = np.ascontiguousarray(S, dtype=np.float64)
        self.domain = domain
        self.divergence_free = divergence_free
        self.name = name

    @classmethod
    def from_flat(cls, nx, ny, nz, domain, flat, **kw) -> "GridField":
        flat = np.asarray(flat)
        if flat.shape != (nx * ny * nz, 3):
            raise ValueError(f"expected {nx * ny * nz} samples, got {flat.shape[0]}")
        return cls(flat.reshape(nz, ny, nx, 3), domain, **kw)

    @property
    def shape(self) -> tuple[int, int, int]:
        nz, ny, nx = self.samples.shape[:3]
        return nx, ny, nz

    def vertex(self, i, j, k) -> np.ndarray:
        nx, ny, nz = self.shape
        f = np.array([i / (nx - 1), j / (ny - 1), k / (nz - 1)])
        return self.domain.lo + (self.domain.hi - self.domain.lo) * f

    def values(self, points):
        P = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
        return kernels.trilinear(self.samples, self.domain.lo, self.domain.hi, P, False)[0]

    def jacobians(self, points):
        P = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
        return kernels.trilinear(self.samples, self.domain.lo, self.domain.hi, P, True)[1]

    @classmethod
    def sample(cls, source: VectorField, shape, domain: BoxDomain | None = None) -> "GridField":
        """Sample ``source`` at grid vertices (float32 storage, like the file format)."""
        nx, ny, nz = shape
        dom = domain or source.domain
        xs = [np.linspace(0.0, 1.0, k) for k in (nx, ny, nz)]
        Z, Y, X = np.meshgrid(xs[2], xs[1], xs[0], indexing="ij")
        F = np.stack([X, Y, Z], axis=-1).reshape(-1, 3)
        P = dom.lo + F * (dom.hi - dom.lo)
        vals = source.values(P).astype(np.float32)
        return cls(vals.reshape(nz, ny, nx, 3), dom, divergence_free=source.divergence_free, name=f"grid({source.name})")


# --------------------------------------------------------------------------
# VFGRID file format

_MAGIC = b"VFGB"


def save_vfgrid(path, grid: GridField, binary: bool = False) -> None:
    nx, ny, nz = grid.shape
    flat = np.asarray(grid.samples_raw, dtype=np.float32).reshape(-1, 3)
    bounds = grid.domain.to_list()
    path = Path(path)
    if binary:
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<3i", nx, ny, nz))
            fh.write(struct.pack("<6d", *bounds))
            fh.write(flat.astype("<f4").tobytes())
        return
    with open(path, "w") as fh:
        fh.write("VFGRID 1 %d %d %d %s\n" % (nx, ny, nz, " ".join(repr(b) for b in bounds)))
        for row in flat:
            # 9 significant digits round-trip float32 exactly
            fh.write("%.9g %.9g %.9g\n" % tuple(float(c) for c in row))


def load_vfgrid(path, divergence_free: bool = False) -> GridField:
    """Load an ASCII (``VFGRID``) or binary (``VFGB``) grid file."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
        if head == _MAGIC:
            nx, ny, nz = struct.unpack("<3i", fh.read(12))
            bounds = struct.unpack("<6d", fh.read(48))
            data = np.frombuffer(fh.read(), dtype="<f4")
            if data.size != 3 * nx * ny * nz:
                raise ValueError(f"{path}: expected {3 * nx * ny * nz} floats, found {data.size}")
            flat = data.reshape(-1, 3).astype(np.float32)
        else:
            text = (head + fh.read()).decode("ascii")
            lines = text.splitlines()
            parts = lines[0].split()
            if len(parts) != 11 or parts[0] != "VFGRID" or parts[1] != "1":
                raise ValueError(f"{path}: bad VFGRID header")
            nx, ny, nz = (int(v) for v in parts[2:5])
            bounds = [float(v) for v in parts[5:]]
            body = [ln for ln in lines[1:] if ln.strip()]
            if len(body) != nx * ny * nz:
                raise ValueError(f"{path}: expected {nx * ny * nz} sample lines, found {len(body)}")
            flat = np.array([[float(v) for v in ln.split()] for ln in body], dtype=np.float32)
    domain = BoxDomain(bounds[:3], bounds[3:])
    return GridField.from_flat(nx, ny, nz, domain, flat, divergence_free=divergence_free, name=path.name)


# --------------------------------------------------------------------------
# built-in analytic catalogue

FIG3 = ("x + y^2 + 2*z^3", "10*x^3 + 2*y", "2*x^2*y - 3*z")


def _floats(arg: str | None, n: int, default) -> list[float]:
    if not arg:
        return list(default)
    vals = [float(v) for v in arg.replace(";", ",").split(",")]
    if len(vals) != n:
        raise FieldSpecError(f"expected {n} parameters, got {len(vals)}")
    return vals


def linear_diag(a=1.0, b=1.0, c=-2.0, domain: BoxDomain | None = None) -> LinearField:
    return LinearField(np.diag([a, b, c]), domain=domain, name=f"linear-diag({a:g},{b:g},{c:g})")


def rigid_rotation(axis=(0.0, 0.0, 1.0), domain: BoxDomain | None = None) -> LinearField:
    w = np.asarray(axis, dtype=float)
    w = w / np.linalg.norm(w)
    W = np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])
    dom = domain or BoxDomain(-np.ones(3), np.ones(3))
    return LinearField(W, domain=dom, name="rotation")


def constant(v=(1.0, 0.0, 0.0), domain: BoxDomain | None = None) -> LinearField:
    return LinearField(np.zeros((3, 3)), b=v, domain=domain, name="constant")


def catalogue(name: str, domain: BoxDomain | None = None) -> VectorField:
    """Built-in analytic fields by name, e.g. ``fig3``, ``linear-diag(1,1,-2)``,
    ``rotation``, ``constant``, ``saddle``, ``abc``."""
    base, _, arg = name.partition("(")
    arg = arg.rstrip(")") if arg else None
    base = base.strip().lower()
    if base == "fig3":
        return AnalyticField(FIG3, domain or BoxDomain.unit(), divergence_free=True, name="fig3")
    if base == "linear-diag":
        a, b, c = _floats(arg, 3, (1.0, 1.0, -2.0))
        f = linear_diag(a, b, c, domain)
        f.divergence_free = abs(a + b + c) <= 1e-12
        return f
    if base == "rotation":
        return rigid_rotation(_floats(arg, 3, (0.0, 0.0, 1.0)), domain)
    if base == "constant":
        return constant(_floats(arg, 3, (1.0, 0.0, 0.0)), domain)
    if base == "saddle":
        # hyperbolic splitting flow with a uniform drift along z
        (w,) = _floats(arg, 1, (0.5,))
        dom = domain or BoxDomain(-np.ones(3), np.ones(3))
        return LinearField(np.diag([1.0, -1.0, 0.0]), b=(0.0, 0.0, w), domain=dom, name="saddle")
    if base == "abc":
        A, B, C = (float(x) for x in _floats(arg, 3, (1.0, np.sqrt(2.0 / 3.0), np.sqrt(1.0 / 3.0))))
        comps = (
            f"{A!r}*sin(z) + {C!r}*cos(y)",
            f"{B!r}*sin(x) + {A!r}*cos(z)",
            f"{C!r}*sin(y) + {B!r}*cos(x)",
        )
        dom = domain or BoxDomain(np.zeros(3), np.full(3, 2.0))
        return AnalyticField(comps, dom, divergence_free=True, name="abc")
    raise FieldSpecError(f"unknown catalogue field {name!r}")


CATALOGUE_NAMES = ("fig3", "linear-diag", "rotation", "constant", "saddle", "abc")


def from_spec(spec: str, domain: BoxDomain | None = None, divergence_free: bool | None = None) -> VectorField:
    """Resolve a ``--field`` argument: ``catalogue:NAME``, ``expr:VX;VY;VZ`` or ``grid:PATH``."""
    kind, sep, rest = spec.partition(":")
    if not sep:
        raise FieldSpecError(f"field spec {spec!r} must start with catalogue:, expr: or grid:")
    kind = kind.strip().lower()
    if kind == "catalogue":
        f = catalogue(rest, domain)
    elif kind == "expr":
        comps = rest.split(";")
        if len(comps) != 3:
            raise FieldSpecError("expr: needs three ';'-separated components")
        try:
            f = AnalyticField(comps, domain or BoxDomain.unit(), name="expr")
        except exprparse.ExprSyntaxError as exc:
            raise FieldSpecError(str(exc)) from exc
    elif kind == "grid":
        f = load_vfgrid(rest)  # OSError propagates to the caller
        if domain is not None:
            f.domain = domain
    else:
        raise FieldSpecError(f"unknown field kind {kind!r}")
    if divergence_free is not None:
        f.divergence_free = divergence_free
    return f
