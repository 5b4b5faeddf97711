#!/usr/bin/env python3
"""Run every shipped reference config, diagnose it, and print the report table.

Usage: python scripts/run_reference_experiments.py [OUTDIR]

Expect the tripod-benchmark row to show unbalanced region fractions: its 1/i
schedule only accumulates ~1.44 time units over 1e6 iterates (see
scripts/tripod_schedule_study.py for the comparison across schedules).
"""

import sys
from pathlib import Path

from subosc.cli import main
from subosc.config import parse_config


def run_all(outdir: str) -> int:
    root = Path(__file__).resolve().parent.parent
    configs = sorted((root / "configs").glob("*.cfg"))
    if not configs:
        print("no configs found", file=sys.stderr)
        return 2
    worst = 0
    manifests = []
    for cfg_path in configs:
        code = main(["run", str(cfg_path), "-o", outdir])
        worst = max(worst, code)
        name = parse_config(cfg_path.read_text()).name
        manifest = Path(outdir) / name / "manifest.json"
        if manifest.exists():
            worst = max(worst, main(["diagnose", str(manifest)]))
            manifests.append(str(manifest))
    if manifests:
        main(["report", *manifests, "--csv", str(Path(outdir) / "report.csv")])
    return worst


if __name__ == "__main__":
    sys.exit(run_all(sys.argv[1] if len(sys.argv) > 1 else "runs"))
