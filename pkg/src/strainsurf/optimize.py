"""Mesh optimisation towards strain-free timelines and the seed-update loop.

The objective is a sum of squares over the valid part of the mesh,

    F = sum <q[i+1,j] - q[i,j], e[i,j]>^2
        + mu1 * (sum of squared second differences along i and j)
        + mu2 * sum |q - q0|^2,

with ``e[i,j] = q[i+1,j+1] - q[i+1,j] + q[i,j] - q[i,j+1]``.  It is minimised
by Gauss-Newton with Levenberg damping as a fallback.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, asdict

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg, spsolve

from . import kernels
from .curves import SeedCurve, fd_tangents
from .energies import DegenerateMesh, surface_energy
from .field import BoxDomain, VectorField
from .surface import EmptySurface, StreamSurfaceMesh, back_integrate, integrate_surface

log = logging.getLogger(__name__)

DIRECT_SOLVE_LIMIT = 2_000  # vertices; preconditioned CG is much faster above this
MAX_DAMPING = 1e6
_DAMPING = (0.0,) + tuple(10.0 ** k for k in range(-8, 7))


class SingularNormalEquations(ArithmeticError):
    pass


class InsufficientValidPoints(ValueError):
    pass


@dataclass
class OptimizerConfig:
    mu1: float = 0.1
    mu2: float = 0.02
    max_outer_iters: int = 10
    tol: float = 1e-6
    max_inner_iters: int = 20

    def __post_init__(self):
        if self.mu1 < 0 or self.mu2 < 0:
            raise ValueError("weights must be non-negative")
        if self.max_outer_iters < 1 or self.max_inner_iters < 1:
            raise ValueError("iteration caps must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# residual system


def vertex_index(valid) -> np.ndarray:
    """Row-major numbering of the valid vertices; -1 marks invalid ones."""
    index = -np.ones(valid.shape, dtype=np.int64)
    index[valid] = np.arange(int(valid.sum()))
    return index


def _fair_stencils(index):
    """Index triples (prev, centre, next) of all interior second differences."""
    out = []
    for ax in (0, 1):
        I = np.moveaxis(index, ax, 0)
        a, b, c = I[:-2], I[1:-1], I[2:]
        ok = (a >= 0) & (b >= 0) & (c >= 0)
        out.append(np.stack([a[ok], b[ok], c[ok]], axis=1))
    return np.concatenate(out, axis=0)


class ResidualSystem:
    """Residual vector and sparse Jacobian for a fixed mesh topology."""

    def __init__(self, valid, original, config: OptimizerConfig):
        self.valid = np.asarray(valid, dtype=bool)
        self.index = vertex_index(self.valid)
        self.nv = int(self.valid.sum())
        self.q0 = np.asarray(original, dtype=float)[self.valid]
        self.config = config
        self.stencils = _fair_stencils(self.index)
        self.sq1 = np.sqrt(config.mu1)
        self.sq2 = np.sqrt(config.mu2)
        self._fixed = self._fixed_block()

    def _fixed_block(self):
        # fairness and proximity rows are linear: assemble once
        st = self.stencils
        ns = len(st)
        comp = np.arange(3)
        rows = (3 * np.arange(ns)[:, None, None] + comp[None, :, None]).repeat(3, axis=2)
        cols = 3 * st[:, None, :] + comp[None, :, None]
        vals = np.broadcast_to(self.sq1 * np.array([1.0, -2.0, 1.0]), rows.shape)
        fair = sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(3 * ns, 3 * self.nv))
        prox = sp.identity(3 * self.nv, format="csr") * self.sq2
        return sp.vstack([fair, prox], format="csr")

    def x_of(self, vertices) -> np.ndarray:
        return np.asarray(vertices, dtype=float)[self.valid].reshape(-1)

    def vertices_of(self, x, template) -> np.ndarray:
        V = np.array(template, dtype=float, copy=True)
        V[self.valid] = x.reshape(-1, 3)
        return V

    def _grid(self, x):
        Q = np.zeros(self.valid.shape + (3,))
        Q[self.valid] = x.reshape(-1, 3)
        return Q

    def parts(self, x):
        """``(r_strain, r_fair, r_prox)`` including the square-root weights."""
        P = x.reshape(-1, 3)
        r_strain = kernels.strain_residuals(self._grid(x), self.index)[0]
        st = self.stencils
        r_fair = self.sq1 * (P[st[:, 0]] - 2.0 * P[st[:, 1]] + P[st[:, 2]]).reshape(-1)
        r_prox = self.sq2 * (P - self.q0).reshape(-1)
        return r_strain, r_fair, r_prox

    def residuals(self, x) -> np.ndarray:
        return np.concatenate(self.parts(x))

    def jacobian(self, x) -> sp.csr_matrix:
        res, rows, cols, vals = kernels.strain_residuals(self._grid(x), self.index)
        strain = sp.csr_matrix((vals, (rows, cols)), shape=(len(res), 3 * self.nv))
        return sp.vstack([strain, self._fixed], format="csr")

    def objective(self, x) -> tuple[float, float, float, float]:
        rs, rf, rp = self.parts(x)
        fs = float(rs @ rs)
        ff = float(rf @ rf) / self.config.mu1 if self.config.mu1 > 0 else _unweighted_fair(x, self.stencils)
        fp = float(rp @ rp) / self.config.mu2 if self.config.mu2 > 0 else float(np.sum((x.reshape(-1, 3) - self.q0) ** 2))
        return fs + self.config.mu1 * ff + self.config.mu2 * fp, fs, ff, fp


def _unweighted_fair(x, st) -> float:
    P = x.reshape(-1, 3)
    d = P[st[:, 0]] - 2.0 * P[st[:, 1]] + P[st[:, 2]]
    return float(np.sum(d * d))


def objective(mesh: StreamSurfaceMesh, config: OptimizerConfig | None = None, vertices=None):
    """``(F, F_strain, F_fair, F_prox)``; ``F = F_strain + mu1 F_fair + mu2 F_prox``."""
    config = config or OptimizerConfig()
    system = ResidualSystem(mesh.valid, mesh.original, config)
    V = mesh.vertices if vertices is None else vertices
    return system.objective(system.x_of(V))


# --------------------------------------------------------------------------
# Gauss-Newton


def _solve(A, b, nv):
    if nv > DIRECT_SOLVE_LIMIT:
        d = A.diagonal()
        if np.all(d > 0):
            sol, info = cg(A, b, rtol=1e-12, maxiter=2000, M=sp.diags(1.0 / d))
            if info == 0:
                return sol
    return spsolve(A.tocsc(), b, permc_spec="MMD_AT_PLUS_A")


def gauss_newton(mesh: StreamSurfaceMesh, config: OptimizerConfig | None = None, history: list | None = None):
    """Minimise ``F`` over the valid vertices; returns the optimised vertex array.

    Pure Gauss-Newton steps are tried first; if a step fails to decrease
    ``F`` the normal equations are damped with ``lambda I`` for increasing
    ``lambda``.  ``history`` (if given) receives ``F`` after every accepted step.
    """
    config = config or OptimizerConfig()
    system = ResidualSystem(mesh.valid, mesh.original, config)
    x = system.x_of(mesh.vertices)
    r = system.residuals(x)
    F = float(r @ r)
    if history is not None:
        history.append(F)
    for _ in range(config.max_inner_iters):
        if F == 0.0:
            break
        Jm = system.jacobian(x)
        g = Jm.T @ r
        if not np.any(g):
            break
        JtJ = (Jm.T @ Jm).tocsr()
        eye = sp.identity(JtJ.shape[0], format="csr")
        accepted = False
        solved_any = False
        for lam in _DAMPING:
            A = JtJ + lam * eye if lam > 0 else JtJ
            with np.errstate(all="ignore"):
                try:
                    step = _solve(A, -g, system.nv)
                except RuntimeError:
                    continue
            if not np.all(np.isfinite(step)):
                continue
            solved_any = True
            x_new = x + step
            r_new = system.residuals(x_new)
            F_new = float(r_new @ r_new)
            if F_new < F:
                accepted = True
                break
        if not solved_any:
            raise SingularNormalEquations(f"normal equations singular up to damping {MAX_DAMPING:g}")
        if not accepted:
            break  # no descent left at working precision
        rel = (F - F_new) / F
        x, r, F = x_new, r_new, F_new
        if history is not None:
            history.append(F)
        if rel < config.tol:
            break
    return system.vertices_of(x, mesh.vertices)


# --------------------------------------------------------------------------
# seed update and outer loop


def resample_polyline(P, h: float) -> np.ndarray:
    """Uniform arc-length resampling with ``round(L / h)`` segments (at least one)."""
    seg = np.linalg.norm(np.diff(P, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    L = s[-1]
    n = max(int(round(L / h)), 1)
    t = np.linspace(0.0, L, n + 1)
    return np.stack([np.interp(t, s, P[:, c]) for c in range(3)], axis=1)


def update_seed(back_points, back_valid, seed: SeedCurve, resample: bool = True) -> SeedCurve:
    """Point-wise mean of the back-integrated timelines, resampled with the seed's ``h``."""
    back_valid = np.asarray(back_valid, dtype=bool)
    counts = back_valid.sum(axis=1)
    if np.any(counts < 2):
        bad = int(np.flatnonzero(counts < 2)[0])
        raise InsufficientValidPoints(f"seed sample {bad} has {int(counts[bad])} valid back-integrated points")
    P = np.where(back_valid[..., None], back_points, 0.0).sum(axis=1) / counts[:, None]
    if resample:
        P = resample_polyline(P, seed.h)
    seg = np.linalg.norm(np.diff(P, axis=0), axis=1)
    if len(P) < 2 or not np.all(seg > 0):
        raise InsufficientValidPoints("averaged seed curve collapsed")
    s = np.concatenate([[0.0], np.cumsum(seg)])
    return SeedCurve(P, fd_tangents(P, s), seed.family, seed.h, seed=seed.seed, d0=seed.d0,
                     face=seed.face, normal=seed.normal, id=seed.id, meta=dict(seed.meta))


@dataclass
class OptimisationResult:
    mesh: StreamSurfaceMesh
    seed: SeedCurve
    history: list  # E_S of every iterate tried; the last one may be a rejected trial
    best_index: int
    records: list  # per-iteration log records

    def __iter__(self):
        return iter((self.mesh, self.seed, self.history))


def optimise_stream_surface(
    field: VectorField,
    domain: BoxDomain,
    seed: SeedCurve,
    config: OptimizerConfig | None = None,
    dt: float | None = None,
    max_steps: int = 500,
    both_directions: bool = True,
    log_file=None,
) -> OptimisationResult:
    """Integrate, optimise the mesh, back-integrate, average into a new seed, repeat.

    Stops as soon as ``E_S`` fails to decrease, reaches zero, or after
    ``max_outer_iters`` rounds, and returns the best iterate.
    """
    config = config or OptimizerConfig()
    mesh = integrate_surface(field, domain, seed, dt, max_steps, both_directions)
    dt = mesh.dt
    E_S = surface_energy(field, mesh)[0]
    history = [E_S]
    records = []
    best = (E_S, mesh, seed, 0)
    for k in range(1, config.max_outer_iters + 1):
        if E_S == 0.0:
            break
        V = gauss_newton(mesh, config)
        F, Fs, Ff, Fp = objective(mesh, config, V)
        try:
            pts, ok = back_integrate(field, domain, mesh, V)
            new_seed = update_seed(pts, ok, seed)
            new_mesh = integrate_surface(field, domain, new_seed, dt, max_steps, both_directions)
            new_E = surface_energy(field, new_mesh)[0]
        except (InsufficientValidPoints, EmptySurface, DegenerateMesh) as exc:
            log.info("outer iteration %d stopped: %s", k, exc)
            break
        rec = {"outer_iter": k, "F": F, "F_strain": Fs, "F_fair": Ff, "F_prox": Fp, "E_S": new_E}
        records.append(rec)
        if log_file is not None:
            log_file.write(json.dumps(rec) + "\n")
        history.append(new_E)
        if not new_E < E_S:
            break
        seed, mesh, E_S = new_seed, new_mesh, new_E
        best = (E_S, mesh, seed, k)
    _, mesh, seed, idx = best
    return OptimisationResult(mesh, seed, history, idx, records)
