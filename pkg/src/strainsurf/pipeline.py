"""End-to-end search: sample seeds, generate candidate curves, rank their
stream surfaces by strain energy, refine around the best ones, optimise the
survivors and write the report directory.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import io
from .curves import (
    BOUNDARY,
    DEFAULT_H_FRACTION,
    FAMILIES,
    INTERIOR,
    SECOND_ORDER,
    SeedCurve,
    boundary_curve,
    interior_curves,
    second_order_curve,
)
from .energies import DegenerateMesh, EnergyReport, combined_ranking, curve_report, surface_energy, timeline_integrands
from .field import BoxDomain, Face, VectorField
from .optimize import OptimizerConfig, optimise_stream_surface
from .surface import EmptySurface, StreamSurfaceMesh, integrate_surface, write_obj, write_vertex_scalars

log = logging.getLogger(__name__)

AUTO = "auto"
FALLBACK_CHAIN = (SECOND_ORDER, BOUNDARY, INTERIOR)
SUB_BOX_FRACTION = 0.25
MIN_SUB_SAMPLES = 8


class NoCandidatesFound(RuntimeError):
    def __init__(self, attempted):
        super().__init__("no admissible seed curves found; families tried: " + " -> ".join(attempted))
        self.attempted = list(attempted)


@dataclass
class PipelineConfig:
    sampling: str = "uniform"
    samples: int = 216
    rng_seed: int = 0
    refine: int = 3
    keep: float = 0.05
    family: str = AUTO
    w: tuple = (0.0, 0.0, 0.0, 0.0)
    optimizer: OptimizerConfig = dc_field(default_factory=OptimizerConfig)
    dt: float | None = None
    max_steps: int = 500
    h_frac: float = DEFAULT_H_FRACTION
    optimise: bool = True

    def __post_init__(self):
        if not 0.0 < self.keep <= 1.0:
            raise ValueError("keep fraction must lie in (0, 1]")
        if self.refine < 0:
            raise ValueError("refinement rounds must be >= 0")
        if self.sampling not in ("uniform", "random"):
            raise ValueError("sampling must be 'uniform' or 'random'")
        if self.family not in FAMILIES + (AUTO,):
            raise ValueError(f"unknown family {self.family!r}")
        self.w = tuple(float(x) for x in self.w)
        if len(self.w) != 4 or any(x < 0 for x in self.w):
            raise ValueError("w must be four non-negative weights")

    def to_dict(self) -> dict:
        return {
            "sampling": self.sampling,
            "samples": self.samples,
            "rng_seed": self.rng_seed,
            "refine": self.refine,
            "keep": self.keep,
            "family": self.family,
            "w": list(self.w),
            "optimizer": self.optimizer.to_dict(),
            "dt": self.dt,
            "max_steps": self.max_steps,
            "h_frac": self.h_frac,
            "optimise": self.optimise,
        }


@dataclass
class RankedCandidate:
    curve: SeedCurve
    mesh: StreamSurfaceMesh | None
    report: EnergyReport
    rank: int = -1
    score: float = math.inf
    region_edge: np.ndarray | None = None  # edge of the box the seed point was sampled in
    E_S_initial: float = math.nan
    history: list = dc_field(default_factory=list)

    @property
    def E_S(self) -> float:
        return self.report.E_S


# --------------------------------------------------------------------------
# sampling


def _grid_1d(k: int) -> np.ndarray:
    return (np.arange(k) + 0.5) / k


def sample_points(
    domain: BoxDomain,
    mode: str,
    count: int,
    region: BoxDomain | None = None,
    rng: np.random.Generator | None = None,
    face: Face | None = None,
) -> np.ndarray:
    """Seed points in ``region`` (default: the whole box), optionally on one face.

    Uniform mode uses a cell-centred ``k^3`` lattice with ``k = round(count^(1/3))``
    (``k^2`` with ``k = round(sqrt(count))`` on a face).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    box = region or domain
    dims = [a for a in range(3) if face is None or a != face.axis]
    if mode == "uniform":
        k = max(1, int(round(count ** (1.0 / len(dims)))))
        axes = [_grid_1d(k)] * len(dims)
        U = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(dims))
    elif mode == "random":
        rng = rng if rng is not None else np.random.default_rng(0)
        U = rng.random((count, len(dims)))
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    P = np.empty((len(U), 3))
    for col, a in enumerate(dims):
        P[:, a] = box.lo[a] + U[:, col] * box.extent[a]
    if face is not None:
        P[:, face.axis] = face.offset
    return P


def _nearest_face(domain: BoxDomain, p) -> Face:
    d = [abs(p[f.axis] - f.offset) for f in domain.faces]
    return domain.faces[int(np.argmin(d))]


# --------------------------------------------------------------------------
# candidates


def generate_candidates(field: VectorField, domain: BoxDomain, points, family: str, h: float | None = None,
                        first_id: int = 0) -> list[SeedCurve]:
    """All admissible curves of one family through ``points``, length-filtered.

    Boundary-family points are snapped to their nearest face.  Ids are
    assigned consecutively from ``first_id`` in generation order.
    """
    out: list[SeedCurve] = []
    for p in np.asarray(points, dtype=float):
        if family == SECOND_ORDER:
            curves = second_order_curve(field, domain, p, h)
        elif family == BOUNDARY:
            curves = boundary_curve(field, domain, _nearest_face(domain, p), p, h)
        elif family == INTERIOR:
            curves = interior_curves(field, domain, p, h)
        else:
            raise ValueError(f"unknown family {family!r}")
        for c in curves:
            c.id = first_id + len(out)
            c.meta["sample"] = p.copy()
            out.append(c)
    return out


def _surface(field, domain, curve, dt, max_steps):
    return integrate_surface(field, domain, curve, dt, max_steps, both_directions=True)


def _sort_key(c: RankedCandidate):
    return (c.score, -c.curve.length, c.curve.id)


def rank_candidates(field: VectorField, domain: BoxDomain, candidates, dt=None, max_steps: int = 500,
                    w=(0.0, 0.0, 0.0, 0.0), keep_meshes: bool = True) -> list[RankedCandidate]:
    """Integrate each candidate forward and backward, score it, sort ascending.

    The score is ``E_S``; with non-zero ``w`` boundary curves are scored by the
    combined ranking energy instead.  Failed surfaces score ``inf``.
    """
    use_w = any(x > 0 for x in w)
    ranked = []
    for c in candidates:
        rep = curve_report(field, c, w)
        mesh = None
        try:
            mesh = _surface(field, domain, c, dt, max_steps)
            rep.E_S, rep.area = surface_energy(field, mesh)
        except (EmptySurface, DegenerateMesh):
            rep.E_S = math.inf
        score = rep.E_S
        if use_w and c.normal is not None and math.isfinite(rep.E_S):
            score = combined_ranking(rep, w)
        ranked.append(RankedCandidate(c, mesh if keep_meshes else None, rep, score=float(score)))
    ranked.sort(key=lambda r: r.curve.id)
    ranked.sort(key=_sort_key)
    for i, r in enumerate(ranked):
        r.rank = i
    return ranked


def keep_count(n: int, fraction: float) -> int:
    return max(1, int(math.ceil(n * fraction - 1e-12)))


def _family_chain(family: str):
    return FALLBACK_CHAIN if family == AUTO else (family,)


def _initial_points(domain, config, rng, family):
    if family != BOUNDARY:
        return sample_points(domain, config.sampling, config.samples, rng=rng)
    per_face = max(1, config.samples // 6)
    return np.concatenate([sample_points(domain, config.sampling, per_face, rng=rng, face=f) for f in domain.faces])


def _refined_points(domain, config, rng, family, center, edge):
    box = domain.sub_box(center, edge)
    vol_ratio = float(np.prod(edge / domain.extent))
    n = max(MIN_SUB_SAMPLES, int(round(2.0 * config.samples * vol_ratio)))
    if family == BOUNDARY:
        face = _nearest_face(domain, center)
        return sample_points(domain, config.sampling, n, region=box, rng=rng, face=face)
    return sample_points(domain, config.sampling, n, region=box, rng=rng)


@dataclass
class SelectionResult:
    candidates: list  # survivors, ranked
    family: str
    attempted: list
    rounds: list  # per-round summary dicts


def refine_and_select(field: VectorField, domain: BoxDomain, config: PipelineConfig) -> SelectionResult:
    """Sample, generate, rank; then repeatedly resample around the best candidates.

    The incumbents of each round are carried into the next pool, so the best
    score never gets worse.  Returns the best ``keep`` fraction of the last pool.
    """
    rng = np.random.default_rng(config.rng_seed)
    h = config.h_frac * domain.diam
    attempted = []
    family = None
    for fam in _family_chain(config.family):
        attempted.append(fam)
        points = _initial_points(domain, config, rng, fam)
        cands = generate_candidates(field, domain, points, fam, h)
        if cands:
            family = fam
            break
    if family is None:
        raise NoCandidatesFound(attempted)
    pool = rank_candidates(field, domain, cands, config.dt, config.max_steps, config.w, keep_meshes=False)
    for r in pool:
        r.region_edge = domain.extent.copy()
    next_id = len(cands)
    rounds = [_round_summary(0, len(points), len(cands), pool)]
    for rnd in range(1, config.refine + 1):
        top = pool[: keep_count(len(pool), config.keep)]
        new = []
        n_pts = 0
        seen = set()
        for r in top:
            center = r.curve.meta.get("sample", r.curve.seed)
            key = tuple(np.round(center, 12))
            if key in seen:
                continue
            seen.add(key)
            edge = SUB_BOX_FRACTION * r.region_edge
            pts = _refined_points(domain, config, rng, family, center, edge)
            n_pts += len(pts)
            got = generate_candidates(field, domain, pts, family, h, first_id=next_id)
            next_id += len(got)
            for c in got:
                c.meta["region_edge"] = edge
            new.extend(got)
        ranked_new = rank_candidates(field, domain, new, config.dt, config.max_steps, config.w, keep_meshes=False)
        for r in ranked_new:
            r.region_edge = r.curve.meta["region_edge"]
        pool = sorted(top + ranked_new, key=lambda r: r.curve.id)
        pool.sort(key=_sort_key)
        rounds.append(_round_summary(rnd, n_pts, len(new), pool))
    survivors = pool[: keep_count(len(pool), config.keep)]
    for i, r in enumerate(survivors):
        r.rank = i
        r.mesh = _surface(field, domain, r.curve, config.dt, config.max_steps) if math.isfinite(r.E_S) else None
    return SelectionResult(survivors, family, attempted, rounds)


def _round_summary(rnd, n_points, n_curves, pool):
    best = pool[0].score if pool else math.inf
    return {"round": rnd, "points": int(n_points), "curves": int(n_curves), "pool": len(pool), "best": best}


# --------------------------------------------------------------------------
# full run


@dataclass
class PipelineResult:
    candidates: list
    family: str
    attempted: list
    rounds: list
    timings: dict


def run_pipeline(field: VectorField, domain: BoxDomain, config: PipelineConfig | None = None,
                 out_dir=None, field_spec: str | None = None) -> PipelineResult:
    """Select candidates, optimise each survivor, re-rank and (optionally) write artifacts.

    Timings are returned but never written, so that reruns with the same
    configuration produce byte-identical directories.
    """
    config = config or PipelineConfig()
    t0 = time.perf_counter()
    sel = refine_and_select(field, domain, config)
    t1 = time.perf_counter()
    for r in sel.candidates:
        r.E_S_initial = r.E_S
        if not (config.optimise and r.mesh is not None and math.isfinite(r.E_S)):
            r.history = [r.E_S]
            continue
        res = optimise_stream_surface(field, domain, r.curve, config.optimizer, config.dt, config.max_steps)
        r.history = res.history
        if res.best_index > 0:
            r.curve, r.mesh = res.seed, res.mesh
            r.report = curve_report(field, r.curve, config.w)
            r.report.E_S, r.report.area = surface_energy(field, r.mesh)
            r.score = r.report.E_S
            if any(x > 0 for x in config.w) and r.curve.normal is not None:
                r.score = combined_ranking(r.report, config.w)
    sel.candidates.sort(key=lambda r: r.curve.id)
    sel.candidates.sort(key=_sort_key)
    for i, r in enumerate(sel.candidates):
        r.rank = i
    t2 = time.perf_counter()
    result = PipelineResult(sel.candidates, sel.family, sel.attempted, sel.rounds,
                            {"select": t1 - t0, "optimise": t2 - t1})
    if out_dir is not None:
        write_report(out_dir, field, domain, config, result, field_spec)
    return result


def _candidate_record(r: RankedCandidate) -> dict:
    rep = r.report.to_dict()
    return {
        "rank": r.rank,
        "id": r.curve.id,
        "family": r.curve.family,
        "length": r.curve.length,
        "points": len(r.curve),
        "E_S_initial": r.E_S_initial,
        "E_S_history": list(r.history),
        "energies": rep,
        "mesh": None if r.mesh is None else {"m": r.mesh.m, "n": r.mesh.n, "valid": int(r.mesh.valid.sum())},
    }


RANKING_COLUMNS = ["rank", "id", "family", "length", "E1", "E2", "E_in", "E_ortho", "E_para", "E_rigid", "E",
                   "E_S", "E_S_initial"]


def write_report(out_dir, field: VectorField, domain: BoxDomain, config: PipelineConfig, result: PipelineResult,
                 field_spec: str | None = None) -> None:
    out = Path(out_dir)
    (out / "surfaces").mkdir(parents=True, exist_ok=True)
    report = {
        "field": field_spec or getattr(field, "name", "field"),
        "domain": domain.to_list(),
        "diam": domain.diam,
        "config": config.to_dict(),
        "family": result.family,
        "families_attempted": result.attempted,
        "rounds": result.rounds,
        "candidates": [_candidate_record(r) for r in result.candidates],
    }
    io.write_json(out / "report.json", report)
    rows = []
    for r in result.candidates:
        e = r.report
        rows.append([r.rank, r.curve.id, r.curve.family, r.curve.length, e.E1, e.E2, e.E_in, e.E_ortho, e.E_para,
                     e.E_rigid, e.E, e.E_S, r.E_S_initial])
    io.write_csv(out / "ranking.csv", RANKING_COLUMNS, rows)
    seeds = []
    for r in result.candidates:
        d = r.curve.to_dict()
        d["energies"] = r.report.to_dict()
        seeds.append(d)
    io.write_json(out / "seeds.json", {"field": report["field"], "domain": report["domain"], "curves": seeds})
    for r in result.candidates:
        if r.mesh is None:
            continue
        stem = out / "surfaces" / f"{r.rank:03d}"
        write_obj(stem.with_suffix(".obj"), r.mesh)
        local, _, _ = timeline_integrands(field, r.mesh.vertices, r.mesh.valid)
        write_vertex_scalars(stem.with_suffix(".energy.csv"), r.mesh, np.nan_to_num(local, nan=0.0))
