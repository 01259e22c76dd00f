"""Command line entry point: ``agechemostat run --preset fig2 ...``."""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from .config import PRESETS, load_config, preset, validate
from .errors import NumericalError, ValidationError
from .runner import certificate_report, emit_summary, emit_trajectory_csv, run_experiment
from .simulate import KINDS

OUT_ENV = "AGECHEMOSTAT_OUT"
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agechemostat", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="simulate a configured experiment")
    source = run.add_mutually_exclusive_group(required=True)
    source.add_argument("--preset", choices=sorted(PRESETS))
    source.add_argument("--config", type=Path)
    run.add_argument(
        "--controller",
        help=f"controller kind, or a comma-separated list to run a sweep; one of {', '.join(KINDS)}",
    )
    run.add_argument("--out", type=Path, help=f"output directory (overrides ${OUT_ENV})")
    run.add_argument("--certify", action="store_true", help="write a certificate report")
    run.add_argument("--t-end", type=float, dest="t_end")
    return parser


def _output_dir(args, cfg) -> Path:
    if args.out is not None:
        return args.out
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    return Path(cfg.outputs.dir)


def _run_one(cfg, kind, out_dir: Path, certify: bool) -> list[str]:
    result = run_experiment(cfg, kind=kind)
    stem = f"{cfg.name}_{result.log.kind}"
    csv_path = out_dir / f"{stem}.csv"
    emit_trajectory_csv(result.log, csv_path)
    emit_summary(result.summary, out_dir / f"{stem}_summary.txt")
    s = result.summary
    lines = [
        f"{stem}: newborn -> {s['newborn_steady']:.6g}, D -> {s['D_steady']:.6g}, "
        f"y -> {s['y_steady']:.6g} ({'settled' if s['newborn_settled'] else 'not settled'})",
        f"  wrote {csv_path}",
    ]
    if certify:
        report_path = out_dir / f"{stem}_certificate.txt"
        report_path.write_text(certificate_report(cfg, result))
        lines.append(f"  wrote {report_path}")
    return lines


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = preset(args.preset) if args.preset else load_config(args.config)
        if args.t_end is not None:
            cfg = replace(cfg, numerics=replace(cfg.numerics, t_end=args.t_end))
        kinds = [k.strip() for k in args.controller.split(",")] if args.controller else [cfg.controller.kind]
        for kind in kinds:
            validate(replace(cfg, controller=replace(cfg.controller, kind=kind)))
        certify = args.certify or cfg.outputs.certify
        out_dir = _output_dir(args, cfg)
        out_dir.mkdir(parents=True, exist_ok=True)
        if len(kinds) == 1:
            outputs = [_run_one(cfg, kinds[0], out_dir, certify)]
        else:
            with ThreadPoolExecutor(max_workers=len(kinds)) as pool:
                outputs = list(pool.map(lambda k: _run_one(cfg, k, out_dir, certify), kinds))
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for lines in outputs:
        print("\n".join(lines))
    return 0


if __name__ == "__main__":
    sys.exit(main())
