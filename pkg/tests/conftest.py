import json
import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from virial_lab import cli

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
GOLDEN = Path(__file__).resolve().parent / "golden"
CONFIG_NAMES = sorted(p.stem for p in CONFIGS.glob("*.json"))


@pytest.fixture(scope="session")
def report_for():
    """Run a shipped config once per session and hand out the report."""
    cache = {}

    def get(name):
        if name not in cache:
            path = CONFIGS / f"{name}.json"
            experiment = json.loads(path.read_text())["experiment"]
            cache[name] = cli.run(cli.load_config(experiment, path))
        return cache[name]

    return get


# criterion number -> one-line verdict, filled by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
