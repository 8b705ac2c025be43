"""Command line entry point.

    isecache run --synth "straight-loop(256,100)" --ci auto --sizes 1K,2K,4K,8K,16K,32K --out out/
    isecache run --program prog.txt --trace prog.trace --ci file=sel.txt --out out/
    isecache verdicts --amat-fixture bundled --out out/

Every ``run`` flag can also come from a JSON ``--config`` file whose keys
are the long flag names; flags on the command line win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .energy import parse_size
from .errors import ConfigError, IsecacheError
from .harness import RunConfig, run, run_fixture_verdicts

EXIT_OK = 0

# flag dest -> RunConfig field
_FIELDS = {
    "program": "program_path",
    "trace": "trace_path",
    "synth": "synth",
    "max_len": "max_len",
    "max_inputs": "max_inputs",
    "max_outputs": "max_outputs",
    "budget": "budget",
    "block": "block",
    "ways": "ways",
    "repl": "replacement",
    "energy_params": "energy_params_path",
    "k_factor": "k_factor",
    "amat_convention": "amat_convention",
    "width": "instruction_width",
    "out": "out",
    "seed": "seed",
}


def _ways(text):
    text = str(text).strip().lower()
    return text if text == "full" else int(text)


def _sizes(text):
    items = text if isinstance(text, list) else str(text).split(",")
    return tuple(parse_size(s) for s in items if str(s).strip())


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="isecache", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate baseline vs extended ISA over a cache size sweep")
    r.add_argument("--config", help="JSON file with default flag values")
    src = r.add_argument_group("workload")
    src.add_argument("--program", help="static program file")
    src.add_argument("--trace", help="dynamic trace file")
    src.add_argument("--synth", help='generator spec, e.g. "hot-cold(16,512,200)"')
    r.add_argument("--ci", help="auto | none | file=PATH (default auto)")
    r.add_argument("--max-len", type=int, help="longest CI in instructions (default: block capacity)")
    r.add_argument("--max-inputs", type=int, help="CI register inputs (default 2)")
    r.add_argument("--max-outputs", type=int, help="CI register outputs (default 1)")
    r.add_argument("--budget", type=int, help="maximum number of CIs (default unlimited)")
    r.add_argument("--sizes", help="comma separated capacities (default 1K,...,32K)")
    r.add_argument("--block", type=int, help="block size in bytes (default 32)")
    r.add_argument("--ways", type=_ways, help="associativity or 'full' (default 2)")
    r.add_argument("--repl", choices=["lru", "fifo"], help="replacement policy (default lru)")
    r.add_argument("--energy-params", help="per-size energy table (default: built-in 45 nm table)")
    r.add_argument("--k-factor", type=float, help="miss/hit energy and delay ratio (default 100)")
    r.add_argument("--amat-convention", choices=["paper", "textbook"])
    r.add_argument("--width", type=int, help="instruction width in bytes (default 4)")
    r.add_argument("--out", help="output directory (default ./out)")
    r.add_argument("--seed", type=int, help="seed for random generators (default 0)")

    v = sub.add_parser("verdicts", help="replay an AMAT grid through the downsizing rule")
    v.add_argument("--amat-fixture", default="bundled", help="AMAT CSV, or 'bundled' (default)")
    v.add_argument("--out", help="output directory for verdicts.csv")
    return ap


def _apply(cfg: RunConfig, values: dict, origin: str):
    for key, value in values.items():
        if value is None:
            continue
        key = key.replace("-", "_")
        try:
            if key == "ci":
                mode, _, path = str(value).partition("=")
                cfg.ci_mode = mode
                cfg.ci_file = path or None
            elif key == "sizes":
                cfg.sizes = _sizes(value)
            elif key == "ways":
                cfg.ways = _ways(value)
            elif key in _FIELDS:
                setattr(cfg, _FIELDS[key], value)
            elif key != "config":
                raise ConfigError(f"{origin}: unknown option {key!r}")
        except ValueError as exc:
            raise ConfigError(f"{origin}: bad value for {key}: {exc}") from None


def config_from_args(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        try:
            values = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(values, dict):
            raise ConfigError(f"config {args.config} must hold a JSON object")
        _apply(cfg, values, args.config)
    _apply(cfg, {k: v for k, v in vars(args).items() if k not in ("command", "verbose")}, "command line")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            result = run(config_from_args(args))
            for row in result.report.rows:
                print(f"{row.size // 1024:>4}K  energy saving {row.energy_saving_pct:7.3f}%  "
                      f"amat {row.baseline.amat:.6g} -> {row.extended.amat:.6g} ns")
            print(f"{len(result.rewrite.selection)} CI(s); reports in {result.config.out}")
        else:
            path = None if args.amat_fixture == "bundled" else args.amat_fixture
            body, _ = run_fixture_verdicts(path, args.out)
            if args.out is None:
                sys.stdout.write(body)
    except IsecacheError as exc:
        where = getattr(exc, "stage", "config")
        print(f"isecache: {where} stage failed: {exc}", file=sys.stderr)
        return exc.exit_code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
