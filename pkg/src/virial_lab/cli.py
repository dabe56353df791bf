"""Command-line experiment runner.

    virial-lab <experiment> [--config FILE] [--set KEY=VALUE ...]
                            [--format json|csv|pretty] [--out PATH] [--quiet]

Exit status: 0 when every declared tolerance holds, 1 when one fails,
2 for configuration errors, 3 for convergence failures, 4 for domain errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import dataclass, field
from importlib import resources

import jsonschema

from . import __version__
from .errors import ConfigError, VirialLabError, exit_code_for
from .experiments import PIPELINES, Record, run_pipeline

EXPERIMENTS = tuple(PIPELINES)
FORMATS = ("json", "csv", "pretty")


@dataclass
class RunReport:
    experiment: str = ""
    config: dict = field(default_factory=dict)
    records: list = field(default_factory=list)
    wall_time: float = 0.0
    version: str = __version__

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "tool": "virial-lab",
            "version": self.version,
            "experiment": self.experiment,
            "config": self.config,
            "passed": self.passed,
            "n_checks": len(self.records),
            "n_failed": sum(not r.passed for r in self.records),
            "records": [r.to_dict() if isinstance(r, Record) else r for r in self.records],
        }
        if timing:
            d["wall_time"] = self.wall_time
        return d


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def load_schema() -> dict:
    return json.loads(resources.files("virial_lab").joinpath("config_schema.json").read_text())


def validate(config: dict) -> None:
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config.{where}: {err.message}" if where != "<root>" else f"config: {err.message}")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(config: dict, assignment: str) -> None:
    """Apply ``a.b.c=value``; the value is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"--set expects KEY=VALUE, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"--set: empty key in {assignment!r}")
    node = config
    for p in parts[:-1]:
        nxt = node.setdefault(p, {})
        if not isinstance(nxt, dict):
            raise ConfigError(f"--set: {'.'.join(parts[:-1])} is not a section")
        node = nxt
    node[parts[-1]] = _parse_value(raw)


def load_config(experiment: str, path=None, overrides=()) -> dict:
    config: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                config = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(config, dict):
            raise ConfigError("config: top level must be an object")
    if config.get("experiment", experiment) != experiment:
        raise ConfigError(f"config.experiment: {config['experiment']!r} does not match subcommand {experiment!r}")
    config["experiment"] = experiment
    for assignment in overrides:
        apply_override(config, assignment)
    validate(config)
    return config


# ---------------------------------------------------------------------------
# run / emit
# ---------------------------------------------------------------------------


def run(config: dict) -> RunReport:
    validate(config)
    start = time.perf_counter()
    effective, records = run_pipeline(config)
    return RunReport(config["experiment"], effective, records, time.perf_counter() - start)


def emit(report: RunReport, fmt: str = "json", timing: bool = True) -> bytes:
    if fmt == "json":
        return (json.dumps(report.to_dict(timing), indent=2, sort_keys=True) + "\n").encode()
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["identity", "lhs", "rhs", "residual", "relative_residual", "tolerance", "mode", "passed"])
        for rec in report.records:
            c = rec.check
            writer.writerow([c.identity, repr(c.lhs), repr(c.rhs), repr(c.residual), repr(c.relative_residual), repr(rec.tolerance), "relative" if rec.relative else "absolute", rec.passed])
        return buf.getvalue().encode()
    if fmt == "pretty":
        return _pretty(report).encode()
    raise ValueError(f"unknown format {fmt!r}")


def _label(rec: Record) -> str:
    p = rec.check.params
    for key in ("state", "lam"):
        if key in p:
            return f"{rec.check.identity}[{key}={p[key]:g}]"
    return rec.check.identity


def _pretty(report: RunReport) -> str:
    head = ("check", "lhs", "rhs", "measure", "tol", "")
    rows = [
        (_label(r), f"{r.check.lhs:.10g}", f"{r.check.rhs:.10g}", f"{r.value:.3e}", f"{r.tolerance:.1e}", "ok" if r.passed else "FAIL")
        for r in report.records
    ]
    widths = [max([len(h)] + [len(row[i]) for row in rows]) for i, h in enumerate(head)]
    lines = [f"virial-lab {report.version}  {report.experiment}"]
    lines.append("  ".join(h.ljust(w) for h, w in zip(head, widths)).rstrip())
    lines.append("  ".join("-" * w for w in widths).rstrip())
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows]
    failed = sum(not r.passed for r in report.records)
    lines.append(f"{len(rows) - failed}/{len(rows)} passed in {report.wall_time:.2f} s")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="virial-lab", description="Numerical checks of virial and hypervirial identities.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override a config entry (dotted key, JSON value)")
        p.add_argument("--format", choices=FORMATS, default=None)
        p.add_argument("--out", help="write the report here instead of stdout")
        p.add_argument("--quiet", action="store_true", help="suppress the report on stdout")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.experiment, args.config, args.overrides)
        report = run(config)
        output = config.get("output", {})
        fmt = args.format or output.get("format", "json")
        out_path = args.out or output.get("path")
        data = emit(report, fmt)
        if out_path:
            with open(out_path, "wb") as fh:
                fh.write(data)
        elif not args.quiet:
            sys.stdout.buffer.write(data)
            sys.stdout.flush()
    except VirialLabError as exc:
        print(f"virial-lab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
