import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subosc.cli import main
from subosc.config import (ConfigError, DiagnosticSpec, ExperimentConfig,
                           emit_config, load_manifest, parse_config)

FULL_CONFIG = """\
# reference experiment with every diagnostic kind
name = demo
function.builtin = tripod
run.x0 = 0.3 -0.7
run.steps = 2000
run.seed = 3
run.policy = first-active
run.thin = 1
schedule.c = 0.1
schedule.p = 0.5
schedule.offset = 1
guard.lo = -10 -10
guard.hi = 10 10
checkpoints.per_decade = 4
checkpoints.first = 10
diagnostic.comp.kind = compensation
diagnostic.comp.center = 0 0
diagnostic.comp.eta = 0.05
diagnostic.comp.delta = 0.1
diagnostic.comp.max_ratio = 0.2
diagnostic.comp.min_mass = 0.3
diagnostic.ess.kind = essacc
diagnostic.ess.resolution = 64
diagnostic.ess.tau = 0.01
diagnostic.ess.max_dist = 0.1
diagnostic.iv.kind = intervals
diagnostic.iv.center = 0 0
diagnostic.iv.eta = 0.05
diagnostic.iv.delta = 0.2
diagnostic.sep.kind = separation
diagnostic.sep.center_a = 0.3 -0.7
diagnostic.sep.radius_a = 0.05
diagnostic.sep.center_b = 0 0
diagnostic.sep.radius_b = 0.05
diagnostic.perp.kind = perpendicularity
diagnostic.perp.center = 0 0
diagnostic.perp.radius = 0.5
diagnostic.perp.stratum_at = 0 0
diagnostic.perp.min_velocity = 0.5
diagnostic.perp.max_dot = 0.1
diagnostic.vals.kind = values
diagnostic.vals.window = 500
diagnostic.vals.max_oscillation = 0.05
diagnostic.reg.kind = regions
diagnostic.reg.target = 0.3333333 0.3333333 0.3333333
diagnostic.reg.tol = 0.2
diagnostic.reg.max_residual = 0.5
diagnostic.cen.kind = centroid
diagnostic.cen.resolution = 63
diagnostic.def.kind = defect
diagnostic.def.degree = 2
diagnostic.circ.kind = circulation
diagnostic.circ.policy = min-norm
diagnostic.circ.mode = exact
diagnostic.circ.max_rel_error = 1e-10
"""


class TestConfigRoundTrip:
    def test_full_config(self):
        cfg = parse_config(FULL_CONFIG)
        assert parse_config(emit_config(cfg)) == cfg

    def test_explicit_pieces(self):
        text = ("name = poly\nfunction.dim = 2\n"
                "function.piece.0 = -2 0 0\nfunction.piece.1 = 1 1 0\n"
                "run.x0 = 0.1 0.1\nrun.steps = 10\nschedule.c = 0.1\n")
        cfg = parse_config(text)
        assert cfg.pieces == ((-2.0, 0.0, 0.0), (1.0, 1.0, 0.0))
        assert parse_config(emit_config(cfg)) == cfg
        assert cfg.make_oracle().value([1.0, 1.0]) == 2.0

    @settings(max_examples=40, deadline=None)
    @given(st.floats(1e-3, 10, allow_nan=False), st.floats(0.1, 1.0),
           st.integers(1, 50), st.integers(0, 2**31 - 1),
           st.sampled_from(["tripod", "absvalley", "nsbanana"]),
           st.integers(1, 10**6))
    def test_scalar_fields_round_trip(self, c, p, offset, seed, name, steps):
        cfg = ExperimentConfig(name="prop", builtin=name, x0=(0.25, -0.5),
                               steps=steps, seed=seed, c=c, p=p, offset=offset)
        assert parse_config(emit_config(cfg)) == cfg


class TestConfigValidation:
    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config("name = x\nfunction.builtin = tripod\nrun.x0 = 0 0\n"
                         "run.steps = 5\nschedule.c = 0.1\nbogus = 1\n")

    def test_missing_required(self):
        with pytest.raises(ConfigError, match="missing required"):
            parse_config("name = x\nfunction.builtin = tripod\nrun.x0 = 0 0\n")

    def test_unknown_builtin(self):
        with pytest.raises(ConfigError, match="unknown builtin"):
            parse_config("name = x\nfunction.builtin = nope\nrun.x0 = 0 0\n"
                         "run.steps = 5\nschedule.c = 0.1\n")

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigError, match="x0"):
            parse_config("name = x\nfunction.builtin = tripod\nrun.x0 = 0 0 0\n"
                         "run.steps = 5\nschedule.c = 0.1\n")

    def test_overlapping_separation_balls_named(self):
        text = ("name = x\nfunction.builtin = tripod\nrun.x0 = 0 0\nrun.steps = 5\n"
                "schedule.c = 0.1\ndiagnostic.sep.kind = separation\n"
                "diagnostic.sep.center_a = 0 0\ndiagnostic.sep.radius_a = 1\n"
                "diagnostic.sep.center_b = 1 0\ndiagnostic.sep.radius_b = 1\n")
        with pytest.raises(ConfigError, match="sep.*overlap"):
            parse_config(text)

    def test_bad_cutoff_radii(self):
        text = ("name = x\nfunction.builtin = tripod\nrun.x0 = 0 0\nrun.steps = 5\n"
                "schedule.c = 0.1\ndiagnostic.c.kind = compensation\n"
                "diagnostic.c.center = 0 0\ndiagnostic.c.eta = 0.2\n"
                "diagnostic.c.delta = 0.1\n")
        with pytest.raises(ConfigError, match="eta < delta"):
            parse_config(text)

    def test_unknown_diag_param(self):
        text = ("name = x\nfunction.builtin = tripod\nrun.x0 = 0 0\nrun.steps = 5\n"
                "schedule.c = 0.1\ndiagnostic.v.kind = values\n"
                "diagnostic.v.windoww = 10\n")
        with pytest.raises(ConfigError, match="unknown parameter"):
            parse_config(text)


@pytest.fixture()
def demo_run(tmp_path):
    cfg_path = tmp_path / "demo.cfg"
    cfg_path.write_text(FULL_CONFIG)
    out = tmp_path / "runs"
    code = main(["run", str(cfg_path), "-o", str(out)])
    return code, out / "demo"


class TestCmdRun:
    def test_manifest_and_row_count(self, demo_run):
        code, rundir = demo_run
        assert code == 0
        manifest = load_manifest(rundir / "manifest.json")
        assert manifest.name == "demo" and not manifest.diverged
        lines = (rundir / "trajectory.csv").read_text().splitlines()
        assert len(lines) == 1 + 2000 + 1   # header + N+1 iterates

    def test_parse_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("name = x\nnot a config\n")
        assert main(["run", str(bad), "-o", str(tmp_path / "r")]) == 2

    def test_validation_error_exit_code(self, tmp_path):
        bad = tmp_path / "overlap.cfg"
        bad.write_text(
            "name = x\nfunction.builtin = tripod\nrun.x0 = 0 0\nrun.steps = 5\n"
            "schedule.c = 0.1\ndiagnostic.sep.kind = separation\n"
            "diagnostic.sep.center_a = 0 0\ndiagnostic.sep.radius_a = 1\n"
            "diagnostic.sep.center_b = 1 0\ndiagnostic.sep.radius_b = 1\n")
        assert main(["run", str(bad), "-o", str(tmp_path / "r")]) == 2

    def test_divergence_exit_code_with_manifest(self, tmp_path):
        cfg = tmp_path / "div.cfg"
        cfg.write_text("name = div\nfunction.builtin = tripod\nrun.x0 = 0.3 -0.7\n"
                       "run.steps = 100\nschedule.c = 0.1\n"
                       "guard.lo = -0.001 -0.001\nguard.hi = 0.001 0.001\n")
        out = tmp_path / "runs"
        assert main(["run", str(cfg), "-o", str(out)]) == 3
        manifest = load_manifest(out / "div" / "manifest.json")
        assert manifest.diverged

    def test_jobs_fanout(self, tmp_path):
        paths = []
        for i in range(2):
            p = tmp_path / f"j{i}.cfg"
            p.write_text(f"name = j{i}\nfunction.builtin = absvalley\n"
                         f"run.x0 = 1 0\nrun.steps = 50\nschedule.c = 0.1\n")
            paths.append(str(p))
        out = tmp_path / "runs"
        assert main(["run", *paths, "-o", str(out), "--jobs", "2"]) == 0
        assert (out / "j0" / "manifest.json").exists()
        assert (out / "j1" / "manifest.json").exists()

    def test_thin_override(self, tmp_path):
        cfg = tmp_path / "t.cfg"
        cfg.write_text("name = t\nfunction.builtin = absvalley\nrun.x0 = 1 0\n"
                       "run.steps = 100\nschedule.c = 0.1\n")
        out = tmp_path / "runs"
        assert main(["run", str(cfg), "-o", str(out), "--thin", "10"]) == 0
        lines = (out / "t" / "trajectory.csv").read_text().splitlines()
        assert len(lines) == 1 + 11   # header + every 10th iterate of 0..100


class TestCmdDiagnose:
    def test_verdicts_and_idempotence(self, demo_run):
        code, rundir = demo_run
        manifest_path = rundir / "manifest.json"
        assert main(["diagnose", str(manifest_path)]) == 0
        summary = json.loads((rundir / "summary.json").read_text())
        assert summary["verdicts"]["circ"] == "pass"
        assert summary["verdicts"]["vals"] == "pass"
        assert summary["diagnostics"]["perp"]["max_dot"] == 0.0
        first = {p.name: p.read_bytes() for p in rundir.glob("*.csv")}
        assert main(["diagnose", str(manifest_path)]) == 0
        second = {p.name: p.read_bytes() for p in rundir.glob("*.csv")}
        assert first == second
        manifest = load_manifest(manifest_path)
        assert manifest.summary_json == "summary.json"
        assert set(manifest.diagnostic_csvs) == {
            "comp", "ess", "iv", "sep", "perp", "vals", "reg", "cen", "def", "circ"}

    def test_only_filter(self, demo_run):
        _, rundir = demo_run
        assert main(["diagnose", str(rundir / "manifest.json"), "--only", "vals"]) == 0
        assert (rundir / "vals.csv").exists()
        assert not (rundir / "comp.csv").exists()

    def test_unknown_label(self, demo_run):
        _, rundir = demo_run
        assert main(["diagnose", str(rundir / "manifest.json"), "--only", "nope"]) == 2

    def test_missing_trajectory(self, demo_run):
        _, rundir = demo_run
        (rundir / "trajectory.csv").unlink()
        assert main(["diagnose", str(rundir / "manifest.json")]) == 2

    def test_thinned_incompatible_exit_5(self, tmp_path):
        cfg = tmp_path / "thin.cfg"
        cfg.write_text("name = thin\nfunction.builtin = tripod\nrun.x0 = 0.3 -0.7\n"
                       "run.steps = 500\nrun.thin = 5\nschedule.c = 0.1\n"
                       "diagnostic.comp.kind = compensation\n"
                       "diagnostic.comp.center = 0 0\ndiagnostic.comp.eta = 0.05\n"
                       "diagnostic.comp.delta = 0.1\n")
        out = tmp_path / "runs"
        assert main(["run", str(cfg), "-o", str(out)]) == 0
        assert main(["diagnose", str(out / "thin" / "manifest.json")]) == 5


class TestCmdReport:
    def test_single_manifest(self, demo_run, tmp_path, capsys):
        _, rundir = demo_run
        main(["diagnose", str(rundir / "manifest.json")])
        capsys.readouterr()
        csv_out = tmp_path / "report.csv"
        assert main(["report", str(rundir / "manifest.json"),
                     "--csv", str(csv_out)]) == 0
        lines = csv_out.read_text().splitlines()
        assert lines[0].startswith("name,diverged,final_f")
        assert len(lines) == 2
        table = capsys.readouterr().out.splitlines()
        assert table[0].split()[0] == "name" and table[1].split()[0] == "demo"

    def test_deterministic_columns_across_seeds(self, tmp_path, capsys):
        manifests = []
        for seed in (1, 2, 3):
            cfg = tmp_path / f"s{seed}.cfg"
            cfg.write_text(f"name = s{seed}\nfunction.builtin = absvalley\n"
                           f"run.x0 = 1 0\nrun.steps = 200\nrun.seed = {seed}\n"
                           f"schedule.c = 0.1\ndiagnostic.v.kind = values\n"
                           f"diagnostic.v.window = 50\n")
            out = tmp_path / "runs"
            main(["run", str(cfg), "-o", str(out)])
            mp = out / f"s{seed}" / "manifest.json"
            main(["diagnose", str(mp)])
            manifests.append(str(mp))
        csv_out = tmp_path / "r.csv"
        assert main(["report", *manifests, "--csv", str(csv_out)]) == 0
        rows = [l.split(",")[2:] for l in csv_out.read_text().splitlines()[1:]]
        assert rows[0] == rows[1] == rows[2]   # deterministic policy: same scalars

    def test_no_manifests_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["report"])
        assert exc.value.code == 2
