"""Command-line interface.

Exit codes: 0 success, 2 usage or bad field, 3 I/O failure, 4 no candidates.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, io, quadrics
from .curves import FAMILIES, SeedCurve
from .energies import DegenerateMesh, curve_report, surface_energy, timeline_integrands
from .exprparse import ExprSyntaxError
from .field import BoxDomain, FieldSpecError, from_spec, k_matrix, sym
from .optimize import OptimizerConfig, optimise_stream_surface
from .pipeline import AUTO, NoCandidatesFound, PipelineConfig, generate_candidates, rank_candidates, run_pipeline
from .pipeline import _family_chain, _initial_points
from .surface import EmptySurface, integrate_surface, write_obj, write_vertex_scalars

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NO_CANDIDATES = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _domain(text):
    if text is None:
        return None
    try:
        v = [float(x) for x in text.split(",")]
        if len(v) != 6:
            raise ValueError
        return BoxDomain(v[:3], v[3:])
    except ValueError as exc:
        raise UsageError(f"--domain needs 'xmin,ymin,zmin,xmax,ymax,zmax', got {text!r}") from exc


def _weights(text):
    try:
        w = tuple(float(x) for x in text.split(","))
    except ValueError as exc:
        raise UsageError(f"--w needs four comma-separated numbers, got {text!r}") from exc
    if len(w) != 4 or any(x < 0 for x in w):
        raise UsageError("--w needs four non-negative numbers")
    return w


def _field(args, fallback=None):
    spec = args.field or fallback
    if not spec:
        raise UsageError("--field is required")
    f = from_spec(spec, _domain(args.domain), True if args.divergence_free else None)
    return spec, f


def _out_dir(args, default):
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _optimizer(args) -> OptimizerConfig:
    return OptimizerConfig(mu1=args.mu1, mu2=args.mu2, max_outer_iters=args.iters)


def _load_seed(args):
    data = io.read_json(args.seeds)
    curves = data.get("curves", [])
    if not curves:
        raise UsageError(f"{args.seeds} contains no curves")
    if args.id is None:
        entry = curves[0]
    else:
        match = [c for c in curves if int(c.get("id", -1)) == args.id]
        if not match:
            raise UsageError(f"no curve with id {args.id} in {args.seeds}")
        entry = match[0]
    return data, SeedCurve.from_dict(entry)


# --------------------------------------------------------------------------
# commands


def cmd_field_info(args) -> int:
    spec, f = _field(args)
    d = f.domain
    rng = np.random.default_rng(args.rng_seed)
    P = d.lo + rng.random((args.samples, 3)) * d.extent
    J = f.jacobians(P)
    div = np.abs(np.trace(J, axis1=1, axis2=2))
    kinds: dict[str, int] = {}
    k_kinds: dict[str, int] = {}
    second = 0
    for Jk, Kk in zip(J, sym(k_matrix(J))):
        kind = str(quadrics.classify(sym(Jk)))
        kinds[kind] = kinds.get(kind, 0) + 1
        kind = str(quadrics.classify(Kk))
        k_kinds[kind] = k_kinds.get(kind, 0) + 1
        if not isinstance(quadrics.second_order_vectors(Jk), quadrics.Empty):
            second += 1
    n = len(P)
    report = {
        "field": spec,
        "domain": d.to_list(),
        "diam": d.diam,
        "samples": n,
        "divergence": {"max_abs": float(div.max()), "mean_abs": float(div.mean())},
        "divergence_free_declared": bool(f.divergence_free),
        "strain_signature": {k: kinds[k] / n for k in sorted(kinds)},
        "k_signature": {k: k_kinds[k] / n for k in sorted(k_kinds)},
        "second_order_fraction": second / n,
        "max_speed": f.max_speed(10),
    }
    text = io.dumps(report)
    sys.stdout.write(text)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    return EXIT_OK


def cmd_seeds(args) -> int:
    spec, f = _field(args)
    d = f.domain
    cfg = _pipeline_config(args)
    rng = np.random.default_rng(cfg.rng_seed)
    h = cfg.h_frac * d.diam
    curves, family, attempted = [], None, []
    for fam in _family_chain(cfg.family):
        attempted.append(fam)
        pts = _initial_points(d, cfg, rng, fam)
        curves = generate_candidates(f, d, pts, fam, h)
        if curves:
            family = fam
            break
    out = _out_dir(args, ".")
    ranked = rank_candidates(f, d, curves, cfg.dt, cfg.max_steps, cfg.w, keep_meshes=False) if curves else []
    entries = []
    for r in ranked:
        e = r.curve.to_dict()
        e["energies"] = r.report.to_dict()
        e["rank"] = r.rank
        entries.append(e)
    io.write_json(out / "seeds.json", {"field": spec, "domain": d.to_list(), "family": family,
                                       "families_attempted": attempted, "curves": entries})
    print(f"{len(entries)} curves ({family or 'none'}) -> {out / 'seeds.json'}")
    return EXIT_OK if entries else EXIT_NO_CANDIDATES


def cmd_surface(args) -> int:
    data, seed = _load_seed(args)
    spec, f = _field(args, data.get("field"))
    d = f.domain
    mesh = integrate_surface(f, d, seed, args.dt, args.max_steps, both_directions=not args.forward_only)
    E_S, area = surface_energy(f, mesh)
    out = _out_dir(args, ".")
    stem = out / f"surface_{seed.id:03d}" if seed.id >= 0 else out / "surface"
    nv = write_obj(stem.with_suffix(".obj"), mesh)
    local, _, _ = timeline_integrands(f, mesh.vertices, mesh.valid)
    write_vertex_scalars(stem.with_suffix(".energy.csv"), mesh, np.nan_to_num(local, nan=0.0))
    io.write_json(stem.with_suffix(".json"), {"field": spec, "id": seed.id, "m": mesh.m, "n": mesh.n,
                                              "vertices": nv, "dt": mesh.dt, "E_S": E_S, "area": area})
    print(f"surface {mesh.m}x{mesh.n} ({nv} vertices), E_S={io.fmt(E_S)} -> {stem.with_suffix('.obj')}")
    return EXIT_OK


def cmd_optimize(args) -> int:
    data, seed = _load_seed(args)
    spec, f = _field(args, data.get("field"))
    d = f.domain
    out = _out_dir(args, ".")
    with open(out / "optimize.log.jsonl", "w") as logf:
        res = optimise_stream_surface(f, d, seed, _optimizer(args), args.dt, args.max_steps, log_file=logf)
    rep = curve_report(f, res.seed, _weights(args.w))
    rep.E_S, rep.area = surface_energy(f, res.mesh)
    entry = res.seed.to_dict()
    entry["energies"] = rep.to_dict()
    entry["E_S_history"] = res.history
    io.write_json(out / "seeds.json", {"field": spec, "domain": d.to_list(), "curves": [entry]})
    write_obj(out / "optimized.obj", res.mesh)
    kept = res.history[: res.best_index + 1]
    print("E_S history: " + " -> ".join(io.fmt(x) for x in kept)
          + ("" if len(kept) == len(res.history) else f" (rejected trial {io.fmt(res.history[-1])})"))
    return EXIT_OK


def _pipeline_config(args) -> PipelineConfig:
    try:
        return PipelineConfig(
            sampling=args.mode,
            samples=args.samples,
            rng_seed=args.rng_seed,
            refine=getattr(args, "refine", 0),
            keep=getattr(args, "top", 0.05),
            family=args.family,
            w=_weights(args.w),
            optimizer=_optimizer(args),
            dt=args.dt,
            max_steps=args.max_steps,
            h_frac=args.h_frac,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_pipeline(args) -> int:
    spec, f = _field(args)
    cfg = _pipeline_config(args)
    out = _out_dir(args, "strainsurf-run")
    try:
        res = run_pipeline(f, f.domain, cfg, out_dir=out, field_spec=spec)
    except NoCandidatesFound as exc:
        io.write_json(out / "report.json", {"field": spec, "domain": f.domain.to_list(), "config": cfg.to_dict(),
                                            "error": str(exc), "families_attempted": exc.attempted,
                                            "candidates": []})
        raise
    for r in res.candidates:
        print(f"#{r.rank} id={r.curve.id} E_S={io.fmt(r.E_S)} (initial {io.fmt(r.E_S_initial)})")
    print(f"selection {res.timings['select']:.1f}s, optimisation {res.timings['optimise']:.1f}s -> {out}",
          file=sys.stderr)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _common(p, samples_default=216):
    p.add_argument("--field", help="catalogue:NAME | expr:VX;VY;VZ | grid:PATH")
    p.add_argument("--domain", help="xmin,ymin,zmin,xmax,ymax,zmax (overrides the field's box)")
    p.add_argument("--divergence-free", action="store_true", help="declare the field divergence-free")
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--out")


def _sampling(p):
    p.add_argument("--mode", choices=("uniform", "random"), default="uniform", help="seed sampling scheme")
    p.add_argument("--family", choices=FAMILIES + (AUTO,), default=AUTO)
    p.add_argument("--samples", type=int, default=216)
    p.add_argument("--h-frac", type=float, default=0.01)
    p.add_argument("--w", default="0,0,0,0")


def _integration(p):
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--max-steps", type=int, default=500)


def _optim(p):
    p.add_argument("--mu1", type=float, default=0.1)
    p.add_argument("--mu2", type=float, default=0.02)
    p.add_argument("--iters", type=int, default=10)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="strainsurf", description="Strain-minimising stream surfaces.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("field-info", help="domain, divergence and strain-signature statistics")
    _common(p)
    p.add_argument("--samples", type=int, default=10_000)
    p.set_defaults(func=cmd_field_info)

    p = sub.add_parser("seeds", help="generate and rank candidate seed curves")
    _common(p)
    _sampling(p)
    _integration(p)
    _optim(p)
    p.set_defaults(func=cmd_seeds)

    for name, func, help_ in (("surface", cmd_surface, "integrate the stream surface of one seed curve"),
                              ("optimize", cmd_optimize, "optimise the stream surface of one seed curve")):
        p = sub.add_parser(name, help=help_)
        _common(p)
        p.add_argument("--seeds", required=True, help="seeds.json written by 'seeds' or 'pipeline'")
        p.add_argument("--id", type=int, default=None, help="curve id (default: first entry)")
        _integration(p)
        if name == "surface":
            p.add_argument("--forward-only", action="store_true")
        else:
            _optim(p)
            p.add_argument("--w", default="0,0,0,0")
        p.set_defaults(func=func)

    p = sub.add_parser("pipeline", help="full search: seed, rank, refine, optimise, report")
    _common(p)
    _sampling(p)
    _integration(p)
    _optim(p)
    p.add_argument("--refine", type=int, default=3)
    p.add_argument("--top", type=float, default=0.05)
    p.set_defaults(func=cmd_pipeline)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, FieldSpecError, ExprSyntaxError) as exc:
        print(f"strainsurf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        name = getattr(exc, "filename", None)
        print(f"strainsurf: I/O error: {exc.strerror or exc}" + (f": {name}" if name else ""), file=sys.stderr)
        return EXIT_IO
    except NoCandidatesFound as exc:
        print(f"strainsurf: {exc}", file=sys.stderr)
        return EXIT_NO_CANDIDATES
    except (EmptySurface, DegenerateMesh, json.JSONDecodeError, KeyError) as exc:
        print(f"strainsurf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
