"""Config-driven experiment runner.

Subcommands::

    subosc run <config>... [-o DIR] [--jobs K] [--thin K]
    subosc diagnose <manifest> [--only label,label,...]
    subosc report <manifest>... [--csv PATH]

Exit codes: 0 ok, 2 config/validation error, 3 divergence (manifest still
written), 4 numeric failure, 5 diagnostic incompatible with a thinned record.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import (ConfigError, DiagnosticSpec, ExperimentConfig, RunManifest,
                     emit_config, load_manifest, parse_config, save_manifest)
from .diagnostics import (Cutoff, compensation_ratio, essacc_estimate,
                          interval_decomposition, perpendicularity,
                          polyhedral_regions, region_occupation, separation_time,
                          value_convergence)
from .dynamics import (NumericError, ThinnedTrajectoryError, load_trajectory_csv,
                       run, save_trajectory_csv)
from .measures import centroid_field, circulation, closedness_series, phase_measure
from .oracles import PolyhedralFunction, SelectionPolicy

VERSION = "0.1.0"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_NUMERIC = 4
EXIT_THINNED = 5

_F = "%.17g"


def _cell(value) -> str:
    if isinstance(value, float):
        return _F % value
    return str(value)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, (np.floating, np.integer)):
        return _jsonable(value.item())
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


def run_config(config_path: Path, outdir: Path, thin_override: int | None = None) -> int:
    """Run one experiment config; writes trajectory.csv and manifest.json."""
    try:
        cfg = parse_config(Path(config_path).read_text(encoding="utf-8"))
    except (ConfigError, OSError) as e:
        print(f"error: {config_path}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if thin_override is not None:
        try:
            cfg = ExperimentConfig(**{**cfg.__dict__, "thin": thin_override})
        except ValueError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_CONFIG

    oracle = cfg.make_oracle()
    rundir = Path(outdir) / cfg.name
    rundir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    try:
        traj = run(oracle, cfg.x0, cfg.make_schedule(), cfg.make_policy(),
                   cfg.steps, guard_box=cfg.guard(), thin=cfg.thin)
    except NumericError as e:
        print(f"error: {cfg.name}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    wall = time.perf_counter() - started

    traj_csv = rundir / "trajectory.csv"
    save_trajectory_csv(traj, traj_csv)
    manifest = RunManifest(
        name=cfg.name, config_text=emit_config(cfg),
        trajectory_csv=traj_csv.name, wall_clock_s=wall, version=VERSION,
        diverged=traj.diverged, n_steps=traj.n_steps, n_stored=traj.stored,
        dimension=traj.dimension)
    save_manifest(manifest, rundir / "manifest.json")
    if traj.diverged:
        print(f"{cfg.name}: diverged at iterate {traj.n_steps} "
              f"(left the guard box); manifest written", file=sys.stderr)
        return EXIT_DIVERGED
    print(f"{cfg.name}: {traj.n_steps} steps in {wall:.2f}s -> {rundir}")
    return EXIT_OK


def _run_one(args: tuple[str, str, int | None]) -> int:
    return run_config(Path(args[0]), Path(args[1]), args[2])


def _verdict(ok: bool | None) -> str:
    if ok is None:
        return "n/a"
    return "pass" if ok else "fail"


def _diag_compensation(traj, oracle, cfg, spec):
    series = compensation_ratio(
        traj, Cutoff(spec.get("center"), spec.get("eta"), spec.get("delta")),
        [k for k in cfg.checkpoints() if k <= traj.n_steps])
    rows = zip(series.checkpoints.tolist(), series.ratios.tolist(), series.masses.tolist())
    final_r = float(series.ratios[-1])
    final_m = float(series.masses[-1])
    if final_m == 0.0:
        verdict = "inapplicable"
    elif spec.get("max_ratio") is not None:
        ok = final_r <= spec.get("max_ratio")
        if spec.get("min_mass") is not None:
            ok = ok and final_m >= spec.get("min_mass")
        verdict = _verdict(ok)
    else:
        verdict = "n/a"
    summary = {"final_ratio": final_r, "final_mass": final_m, "verdict": verdict}
    return ["checkpoint", "ratio", "mass"], rows, summary


def _diag_essacc(traj, oracle, cfg, spec):
    cps = [k for k in cfg.checkpoints() if k <= traj.n_steps]
    if spec.get("first_checkpoint") is not None:
        cps = [k for k in cps if k >= spec.get("first_checkpoint")] or cps[-1:]
    rep = essacc_estimate(traj, box=cfg.guard(), resolution=spec.get("resolution"),
                          checkpoints=cps, tau=spec.get("tau"), oracle=oracle)
    n_cells = int(np.prod(rep.shape))
    rows = []
    for fc in rep.flagged:
        flat = int(np.ravel_multi_index(fc.cell, rep.shape))
        for row, k in enumerate(rep.checkpoints.tolist()):
            rows.append(list(fc.cell) + [k, float(rep.fractions[row, flat])])
    flagged = [{"cell": list(fc.cell), "center": list(fc.center),
                "estimate": fc.estimate, "mean_point": list(fc.mean_point),
                "dist_to_critical": fc.dist_to_critical} for fc in rep.flagged]
    max_dist = spec.get("max_dist")
    verdict = "n/a"
    if max_dist is not None:
        verdict = _verdict(all(fc.dist_to_critical is not None
                               and fc.dist_to_critical <= max_dist for fc in rep.flagged))
    summary = {"flagged": flagged, "n_flagged": len(flagged),
               "overflow_fraction": float(rep.fractions[-1, n_cells]),
               "verdict": verdict}
    dim = traj.dimension
    header = [f"cell{j}" for j in range(dim)] + ["checkpoint", "fraction"]
    return header, rows, summary


def _diag_intervals(traj, oracle, cfg, spec):
    dec = interval_decomposition(traj, spec.get("center"), spec.get("eta"), spec.get("delta"))
    rows = [(a, b, ln, t) for (a, b), ln, t in
            zip(dec.intervals, dec.lengths, dec.interval_times)]
    growth = (dec.interval_times[-1] / dec.interval_times[0]
              if len(dec.intervals) >= 1 and dec.interval_times[0] > 0 else math.nan)
    verdict = "n/a"
    if spec.get("min_growth") is not None:
        verdict = ("inapplicable" if not dec.intervals
                   else _verdict(growth >= spec.get("min_growth")))
    summary = {"n_intervals": len(dec.intervals), "growth": growth,
               "compensation_statistic": dec.compensation_statistic,
               "total_time": dec.total_time, "verdict": verdict}
    return ["start", "end", "length", "time"], rows, summary


def _diag_separation(traj, oracle, cfg, spec):
    ball_a = (spec.get("center_a"), spec.get("radius_a"))
    ball_b = (spec.get("center_b"), spec.get("radius_b"))
    js = [0] + [k for k in cfg.checkpoints() if k < traj.n_steps]
    ts = [separation_time(traj, ball_a, ball_b, from_index=j) for j in js]
    finite = [t for t in ts if math.isfinite(t)]
    nondec = all(b >= a - 1e-15 for a, b in zip(ts, ts[1:]))
    trend = "nondecreasing" if nondec else "mixed"
    summary = {"trend": trend, "first": ts[0], "last": ts[-1],
               "n_finite": len(finite), "verdict": "n/a"}
    return ["from_index", "time"], zip(js, ts), summary


def _diag_perpendicularity(traj, oracle, cfg, spec):
    n = traj.dimension
    basis_flat = spec.get("basis")
    if basis_flat is not None:
        basis = [tuple(basis_flat[i:i + n]) for i in range(0, len(basis_flat), n)]
    else:
        stratum = oracle.stratum_containing(spec.get("stratum_at"))
        if stratum is None:
            summary = {"verdict": "inapplicable",
                       "note": "no declared stratum contains the given point"}
            return ["count", "max_dot", "mean_dot"], [], summary
        basis = list(stratum.tangent_basis)
    rep = perpendicularity(traj, spec.get("center"), spec.get("radius"), basis,
                           tail_fraction=spec.get("tail_fraction"),
                           min_velocity_norm=spec.get("min_velocity"))
    verdict = "n/a"
    if spec.get("max_dot") is not None:
        verdict = ("inapplicable" if rep.count == 0
                   else _verdict(rep.max_abs <= spec.get("max_dot")))
    summary = {"count": rep.count, "max_dot": rep.max_abs, "mean_dot": rep.mean_abs,
               "n_basis": len(basis), "verdict": verdict}
    return ["count", "max_dot", "mean_dot"], [(rep.count, rep.max_abs, rep.mean_abs)], summary


def _diag_values(traj, oracle, cfg, spec):
    osc, est = value_convergence(traj, min(spec.get("window"), traj.stored))
    verdict = "n/a"
    if spec.get("max_oscillation") is not None:
        verdict = _verdict(osc <= spec.get("max_oscillation"))
    summary = {"tail_oscillation": osc, "limit_estimate": est, "verdict": verdict}
    return ["tail_oscillation", "limit_estimate"], [(osc, est)], summary


def _diag_regions(traj, oracle, cfg, spec):
    if not isinstance(oracle, PolyhedralFunction):
        raise ConfigError("regions diagnostic needs a polyhedral function")
    rep = region_occupation(traj, polyhedral_regions(oracle),
                            [k for k in cfg.checkpoints() if k <= traj.n_steps])
    rows = []
    for col, k in enumerate(rep.checkpoints.tolist()):
        rows.append([k] + rep.fractions[:, col].tolist() + [float(rep.residuals[col])])
    final = rep.final_fractions()
    ok = None
    if spec.get("target") is not None and spec.get("tol") is not None:
        ok = bool(np.all(np.abs(final - np.asarray(spec.get("target"))) <= spec.get("tol")))
    if spec.get("max_residual") is not None:
        ok = (rep.final_residual <= spec.get("max_residual")) if ok is None \
            else ok and rep.final_residual <= spec.get("max_residual")
    summary = {"final_fractions": final.tolist(), "final_residual": rep.final_residual,
               "names": rep.names, "verdict": _verdict(ok)}
    header = ["checkpoint"] + rep.names + ["residual"]
    return header, rows, summary


def _diag_centroid(traj, oracle, cfg, spec):
    mu = phase_measure(traj)
    grid = centroid_field(mu, cfg.guard(), spec.get("resolution"))
    cent = grid.centroid()
    rows = []
    for cell in np.argwhere(grid.mass > 0):
        idx = tuple(int(v) for v in cell)
        rows.append(list(idx) + [float(grid.mass[idx])] + list(cent[idx])
                    + [int(grid.count[idx])])
    if grid.overflow_count:
        rows.append([-1] * traj.dimension + [grid.overflow_mass]
                    + list(grid.overflow_vel_sum / grid.overflow_mass)
                    + [grid.overflow_count])
    summary = {"mean_speed": grid.mass_weighted_mean_speed(),
               "total_mass": grid.total_mass(),
               "sample_weight": mu.total_weight,
               "occupied_cells": int((grid.mass > 0).sum()), "verdict": "n/a"}
    n = traj.dimension
    header = [f"cell{j}" for j in range(n)] + ["mass"] + [f"vbar{j}" for j in range(n)] + ["count"]
    return header, rows, summary


def _diag_defect(traj, oracle, cfg, spec):
    cps, defs = closedness_series(traj, spec.get("degree"),
                                  [k for k in cfg.checkpoints() if k <= traj.n_steps])
    verdict = "n/a"
    if spec.get("max_final") is not None:
        verdict = _verdict(float(defs[-1]) <= spec.get("max_final"))
    summary = {"final_defect": float(defs[-1]), "verdict": verdict}
    return ["checkpoint", "defect"], zip(cps.tolist(), defs.tolist()), summary


def _diag_circulation(traj, oracle, cfg, spec):
    pol = SelectionPolicy(spec.get("policy"), seed=cfg.seed)
    res = circulation(traj, oracle, pol, subsamples=spec.get("subsamples"),
                      mode=spec.get("mode"))
    rel = res.error / max(abs(res.reference), 1e-300)
    verdict = "n/a"
    if spec.get("max_rel_error") is not None:
        verdict = _verdict(rel <= spec.get("max_rel_error"))
    summary = {"value": res.value, "reference": res.reference,
               "rel_error": rel, "mode": res.mode, "verdict": verdict}
    return (["value", "reference", "rel_error", "mode"],
            [(res.value, res.reference, rel, res.mode)], summary)


_DIAG_RUNNERS = {
    "compensation": _diag_compensation,
    "essacc": _diag_essacc,
    "intervals": _diag_intervals,
    "separation": _diag_separation,
    "perpendicularity": _diag_perpendicularity,
    "values": _diag_values,
    "regions": _diag_regions,
    "centroid": _diag_centroid,
    "defect": _diag_defect,
    "circulation": _diag_circulation,
}


def diagnose_manifest(manifest_path: Path, only: set[str] | None = None) -> int:
    manifest_path = Path(manifest_path)
    try:
        manifest = load_manifest(manifest_path)
        cfg = manifest.config()
    except (OSError, ValueError, TypeError) as e:
        print(f"error: {manifest_path}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    rundir = manifest_path.parent
    traj_path = rundir / manifest.trajectory_csv
    if not traj_path.exists():
        print(f"error: trajectory file {traj_path} is missing", file=sys.stderr)
        return EXIT_CONFIG
    labels = [d.label for d in cfg.diagnostics]
    if only is not None:
        unknown = only - set(labels)
        if unknown:
            print(f"error: unknown diagnostic labels {sorted(unknown)}; "
                  f"configured: {labels}", file=sys.stderr)
            return EXIT_CONFIG
    oracle = cfg.make_oracle()
    traj = load_trajectory_csv(traj_path, oracle_id=oracle.name,
                               schedule=cfg.make_schedule(), policy=cfg.make_policy(),
                               thin=cfg.thin, diverged=manifest.diverged)
    summaries = {}
    csv_map = {}
    for spec in cfg.diagnostics:
        if only is not None and spec.label not in only:
            continue
        try:
            header, rows, summary = _DIAG_RUNNERS[spec.kind](traj, oracle, cfg, spec)
        except ThinnedTrajectoryError as e:
            print(f"error: diagnostic {spec.label}: {e}", file=sys.stderr)
            return EXIT_THINNED
        except ConfigError as e:
            print(f"error: diagnostic {spec.label}: {e}", file=sys.stderr)
            return EXIT_CONFIG
        csv_name = f"{spec.label}.csv"
        _write_csv(rundir / csv_name, header, rows)
        summary["kind"] = spec.kind
        summaries[spec.label] = _jsonable(summary)
        csv_map[spec.label] = csv_name

    summary_doc = {"name": cfg.name, "diverged": manifest.diverged,
                   "n_steps": manifest.n_steps, "diagnostics": summaries,
                   "verdicts": {k: v.get("verdict", "n/a") for k, v in summaries.items()}}
    (rundir / "summary.json").write_text(
        json.dumps(summary_doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    manifest.summary_json = "summary.json"
    manifest.diagnostic_csvs.update(csv_map)
    save_manifest(manifest, manifest_path)
    for label, summ in summaries.items():
        print(f"{cfg.name}/{label}: {summ.get('verdict', 'n/a')}")
    return EXIT_OK


_REPORT_COLS = ["name", "diverged", "final_f", "tail_oscillation",
                "compensation_ratio", "residual", "separation_trend"]


def report_manifests(manifest_paths, csv_out: Path | None) -> int:
    rows = []
    for mp in manifest_paths:
        mp = Path(mp)
        try:
            manifest = load_manifest(mp)
        except (OSError, ValueError, TypeError) as e:
            print(f"error: {mp}: {e}", file=sys.stderr)
            return EXIT_CONFIG
        summary = {}
        if manifest.summary_json and (mp.parent / manifest.summary_json).exists():
            summary = json.loads((mp.parent / manifest.summary_json).read_text(encoding="utf-8"))
        diags = summary.get("diagnostics", {})

        def by_kind(kind, key):
            for d in diags.values():
                if d.get("kind") == kind and d.get(key) is not None:
                    return d[key]
            return ""

        traj_path = mp.parent / manifest.trajectory_csv
        final_f = ""
        if traj_path.exists():
            last = traj_path.read_text(encoding="utf-8").rstrip("\n").rsplit("\n", 1)[-1]
            final_f = float(last.split(",")[3])
        rows.append([manifest.name, str(manifest.diverged).lower(), final_f,
                     by_kind("values", "tail_oscillation"),
                     by_kind("compensation", "final_ratio"),
                     by_kind("regions", "final_residual"),
                     by_kind("separation", "trend")])

    if csv_out is not None:
        _write_csv(csv_out, _REPORT_COLS, rows)
    text_rows = [[(("%.6g" % v) if isinstance(v, float) else str(v)) for v in row]
                 for row in rows]
    widths = [max(len(c[i]) for c in [_REPORT_COLS] + text_rows) for i in range(len(_REPORT_COLS))]
    print("  ".join(h.ljust(w) for h, w in zip(_REPORT_COLS, widths)))
    for row in text_rows:
        print("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="subosc",
        description="Run vanishing-stepsize subgradient experiments and diagnostics")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run experiment configs")
    p_run.add_argument("configs", nargs="+", type=Path)
    p_run.add_argument("-o", "--output", type=Path, default=Path("runs"))
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--thin", type=int, default=None)

    p_diag = sub.add_parser("diagnose", help="run configured diagnostics over a stored run")
    p_diag.add_argument("manifest", type=Path)
    p_diag.add_argument("--only", type=str, default=None,
                        help="comma-separated diagnostic labels")

    p_rep = sub.add_parser("report", help="aggregate table over manifests")
    p_rep.add_argument("manifests", nargs="+", type=Path)
    p_rep.add_argument("--csv", type=Path, default=None)

    args = parser.parse_args(argv)
    if args.command == "run":
        jobs = [(str(c), str(args.output), args.thin) for c in args.configs]
        if args.jobs > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                codes = list(pool.map(_run_one, jobs))
        else:
            codes = [_run_one(j) for j in jobs]
        return max(codes)
    if args.command == "diagnose":
        only = set(s.strip() for s in args.only.split(",")) if args.only else None
        return diagnose_manifest(args.manifest, only)
    if args.command == "report":
        return report_manifests(args.manifests, args.csv)
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
