"""Command line entry point.

    alignflock run CONFIG.json      run one scenario, write outputs and a manifest
    alignflock list [--json]        show the scenario catalog
    alignflock verify [--filter NAME] [--tol KEY=VALUE ...]
                                    run the acceptance suite

Exit codes: 0 success, 2 a check failed or blow-up was detected where a
smooth run was expected, 64 unknown scenario or flag, 65 unreadable config.
The output root defaults to the working directory and can be moved with the
ALIGNFLOCK_OUTPUT_ROOT environment variable.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .geometry import KernelError
from .records import BlowUpDetected, write_json
from .scenarios import CATALOG, ConfigError, UnknownScenario, catalog, execute

EXIT_OK = 0
EXIT_FAIL = 2
EXIT_USAGE = 64
EXIT_DATA = 65
OUTPUT_ROOT_ENV = "ALIGNFLOCK_OUTPUT_ROOT"
CONFIG_KEYS = {"scenario", "seed", "output", "domain", "kernel", "initial", "params"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not text.strip():
        raise ConfigError(f"{path} is empty")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(cfg, dict) or not cfg:
        raise ConfigError(f"{path}: expected a non-empty JSON object")
    extra = set(cfg) - CONFIG_KEYS
    if extra:
        raise ConfigError(f"{path}: unknown keys {sorted(extra)}")
    if "scenario" not in cfg:
        raise ConfigError(f"{path}: missing 'scenario'")
    if not isinstance(cfg.get("seed", 0), int):
        raise ConfigError(f"{path}: seed must be an integer")
    return cfg


def output_dir(cfg: dict) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
    return root / cfg.get("output", os.path.join("runs", cfg["scenario"]))


def run_config(path, stream=None) -> int:
    stream = stream or sys.stdout
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    name = cfg["scenario"]
    if name not in CATALOG:
        print(f"error: unknown scenario {name!r}; try 'alignflock list'", file=sys.stderr)
        return EXIT_USAGE
    outdir = output_dir(cfg)
    t0 = time.perf_counter()
    failures = []
    checks = []
    report = {}
    try:
        out = execute(name, cfg.get("params"), outdir, cfg.get("seed", 0), cfg.get("domain"),
                      cfg.get("kernel"), cfg.get("initial"))
        checks = out.checks
        report = out.report
        failures = [c.name for c in checks if not c.passed]
        code = EXIT_OK if out.passed else EXIT_FAIL
    except (ConfigError, KernelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except UnknownScenario:
        return EXIT_USAGE
    except BlowUpDetected as exc:
        report = {"blowup": exc.report()}
        write_json(outdir / "blowup.json", report)
        failures = ["unexpected_blowup"]
        code = EXIT_FAIL
    wall = time.perf_counter() - t0
    write_json(outdir / "report.json", {"scenario": name, "checks": checks, "report": report})
    files = sorted(p for p in outdir.iterdir() if p.is_file() and p.name != "manifest.json")
    hashes = {p.name: sha256(p) for p in files}
    bundle = hashlib.sha256("".join(f"{k}:{v}\n" for k, v in sorted(hashes.items())).encode()).hexdigest()
    manifest = {
        "scenario": name, "config": cfg, "files": hashes, "bundle_sha256": bundle,
        "versions": {"alignflock": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "wall_seconds": wall, "passed": code == EXIT_OK, "failures": failures,
    }
    write_json(outdir / "manifest.json", manifest)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name} value={c.value} limit={c.limit}", file=stream)
    print(f"{name}: {'ok' if code == EXIT_OK else 'FAILED'} ({wall:.2f} s) -> {outdir}", file=stream)
    return code


def cmd_list(as_json: bool, stream=None) -> int:
    stream = stream or sys.stdout
    entries = catalog()
    if as_json:
        print(json.dumps(entries, indent=2), file=stream)
    else:
        width = max(len(e["name"]) for e in entries)
        for e in entries:
            print(f"{e['name']:<{width}}  {e['description']}", file=stream)
    return EXIT_OK


def parse_tols(items) -> dict:
    tols = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"--tol expects KEY=VALUE, got {item!r}")
        try:
            tols[key] = float(val)
        except ValueError as exc:
            raise UsageError(f"--tol {key}: {val!r} is not a number") from exc
    return tols


def cmd_verify(filt, tol_items, stream=None) -> int:
    from .acceptance import TOLERANCES, run_acceptance

    stream = stream or sys.stdout
    try:
        tols = parse_tols(tol_items)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    unknown = set(tols) - set(TOLERANCES)
    if unknown:
        print(f"error: unknown tolerance keys {sorted(unknown)}", file=sys.stderr)
        return EXIT_USAGE
    results = run_acceptance(filt, tols, stream=stream)
    if not results:
        print(f"error: no criterion matches {filt!r}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def main(argv=None) -> int:
    parser = _Parser(prog="alignflock", description="alignment dynamics experiments")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p_run = sub.add_parser("run", help="run a scenario from a JSON config")
    p_run.add_argument("config")
    p_list = sub.add_parser("list", help="list scenarios")
    p_list.add_argument("--json", action="store_true")
    p_ver = sub.add_parser("verify", help="run the acceptance criteria")
    p_ver.add_argument("--filter", default=None, help="substring of criterion id or name")
    p_ver.add_argument("--tol", action="append", metavar="KEY=VALUE")
    args = parser.parse_args(argv)
    if args.command == "run":
        return run_config(args.config)
    if args.command == "list":
        return cmd_list(args.json)
    return cmd_verify(args.filter, args.tol)


if __name__ == "__main__":
    sys.exit(main())
