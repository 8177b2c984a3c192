"""Command-line scenario runner.

Exit codes: 0 when every record meets its expectation, 1 when some check
fails, 2 on configuration or runtime errors.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import _kernels
from .errors import ConfigError, LorentzLabError
from .scenario import COMMANDS, load_scenario, scenario_from_dict


def _p_list(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"--p expects a comma-separated list: {exc}")


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("--seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lorentzlab",
                                 description="Run numerical checks on a Lorentzian chart.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--scenario", type=Path, help="JSON scenario file")
    ap.add_argument("--chart", help="built-in chart name or metric-spec file")
    ap.add_argument("--p", type=_p_list, dest="p_list", help="comma-separated exponents")
    ap.add_argument("--seed", type=_seed)
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--format", choices=("json", "csv"), default="json")
    ap.add_argument("--quiet", action="store_true")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"chart": args.chart, "p_list": args.p_list, "seed": args.seed,
                 "out": args.out}
    start = time.perf_counter()
    try:
        sc = (load_scenario(args.scenario, overrides) if args.scenario
              else scenario_from_dict({}, overrides))
        report = COMMANDS[args.command](sc)
    except (ConfigError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except LorentzLabError as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    elapsed = time.perf_counter() - start
    out = Path(sc.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "json":
        (out / "report.json").write_text(report.to_json())
    else:
        (out / "report.csv").write_text(report.to_csv())
    # wall time lives outside the report so reports stay byte-identical across runs
    (out / "timing.json").write_text(json.dumps(
        {"command": args.command, "wall_time_s": elapsed, "backend": _kernels.backend(),
         "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z")}, indent=2) + "\n")
    summ = report.summary()
    if not args.quiet:
        for r in sorted(report.records, key=lambda r: (r.name, r.index)):
            if not r.ok:
                print(f"UNEXPECTED {r.name}[{r.index}] value={r.value:.6g} "
                      f"{r.relation} {r.tolerance:g} (expect {r.expect})")
        print(f"{args.command}: {summ['records']} records, {summ['passed']} passed, "
              f"{summ['failed']} failed ({summ['expected_failures']} expected), "
              f"{summ['unexpected']} unexpected -> {out}")
    return 0 if report.all_ok else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
