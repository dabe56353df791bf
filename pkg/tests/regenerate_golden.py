"""Rewrite tests/golden/*.json from the shipped configs.

    python3 tests/regenerate_golden.py
"""

import json
from pathlib import Path

from virial_lab import cli

ROOT = Path(__file__).resolve().parents[1]


def main():
    for path in sorted((ROOT / "configs").glob("*.json")):
        experiment = json.loads(path.read_text())["experiment"]
        report = cli.run(cli.load_config(experiment, path))
        (ROOT / "tests" / "golden" / path.name).write_bytes(cli.emit(report, "json", timing=False))
        print(f"{path.stem:26s} {'pass' if report.passed else 'FAIL'}  {report.wall_time:.2f} s")


if __name__ == "__main__":
    main()
