"""Command line entry point: ``sipp simulate | reference | diagnose``.

Exit status is 0 when every verdict passes, 1 when any fails and 2 on a
configuration or runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiments as E
from .errors import SippError
from .models import load_model
from .parallel import default_workers

log = logging.getLogger("sipp")

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def _int_list(text: str) -> list[int]:
    try:
        return [int(float(x)) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from exc


def _windows(text: str) -> list[tuple[float, float]]:
    out = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        try:
            a, b = (float(x) for x in part.split(":"))
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"window {part!r} is not a:b") from exc
        out.append((a, b))
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sipp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a registered experiment")
    s.add_argument("--experiment", choices=sorted(E.REGISTRY))
    s.add_argument("--config", type=Path, help="JSON file with ExperimentConfig fields")
    s.add_argument("--seed", type=int)
    s.add_argument("--reps", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--n", type=_int_list, help="n or comma-separated list of n")
    s.add_argument("--out", type=Path, default=Path("."))

    r = sub.add_parser("reference", help="tabulate the Dickman reference law")
    r.add_argument("--c", type=float, required=True)
    r.add_argument("--h", type=float, default=1e-4)
    r.add_argument("--xmax", type=float)
    r.add_argument("--out", type=Path, required=True)

    d = sub.add_parser("diagnose", help="window checks for a model file")
    d.add_argument("--model", type=Path, required=True)
    d.add_argument("--windows", type=_windows, default=[])
    d.add_argument("--n", type=_int_list, required=True)
    d.add_argument("--out", type=Path, required=True)
    return p


def _config(args) -> E.ExperimentConfig:
    raw = {}
    if args.config is not None:
        raw = json.loads(args.config.read_text())
        if not isinstance(raw, dict):
            raise E.ConfigError("config file must hold a JSON object")
    if args.experiment is not None:
        raw["name"] = args.experiment
    for key in ("seed", "reps"):
        if getattr(args, key) is not None:
            raw[key] = getattr(args, key)
    if args.n is not None:
        raw["n"] = args.n[0] if len(args.n) == 1 else args.n
    raw["workers"] = args.workers if args.workers is not None else raw.get("workers", default_workers())
    raw["out"] = str(args.out)
    return E.ExperimentConfig.from_dict(raw)


def simulate(args) -> int:
    cfg = _config(args)
    report = E.run_experiment(cfg)
    csv_path, json_path = report.write(args.out)
    for row in report.rows:
        if row["verdict"] != "info":
            log.info("%-4s %s n=%s value=%s", row["verdict"].upper(), row["statistic"], row["n"], row["value"])
    print(f"{cfg.name}: {'pass' if report.passed else 'FAIL'} -> {csv_path}, {json_path}")
    return EXIT_OK if report.passed else EXIT_FAIL


def reference(args) -> int:
    text = E.run_reference_csv(args.c, args.h, args.xmax)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(text)
    return EXIT_OK


def diagnose(args) -> int:
    model = load_model(args.model)
    text = E.run_diagnose_csv(model, args.windows, args.n)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(text)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    handler = {"simulate": simulate, "reference": reference, "diagnose": diagnose}[args.command]
    try:
        return handler(args)
    except (SippError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
