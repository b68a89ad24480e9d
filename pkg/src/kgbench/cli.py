"""Command-line entry point.

Exit codes: 0 success, 1 runtime or data error, 2 usage or config error.
Each command prints exactly one JSON document to stdout; everything else
goes to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import geometry as geo
from .bench import BenchmarkConfig, generate_benchmark
from .errors import ConfigError, KGBenchError
from .kg import Mode
from .metrics import (
    DistanceKind,
    EvalConfig,
    FailureThresholds,
    build_report,
    classify_failures,
    load_answers,
    load_probe_key,
)
from .mockrun import run_mock_pipeline
from .tensorio import load_fisher, load_matrix_pairs
from .util import write_json

log = logging.getLogger("kgbench")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _read_config_doc(path: str) -> dict[str, Any]:
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    if p.suffix == ".toml":
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        try:
            return tomllib.loads(raw.decode("utf-8"))
        except Exception as exc:
            raise ConfigError(f"bad TOML in {p}: {exc}") from exc
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad JSON in {p}: {exc}") from exc


def _prepare_out_dir(path: str, force: bool) -> Path:
    out = Path(path)
    if out.exists():
        if not out.is_dir():
            raise ConfigError(f"output path {out} exists and is not a directory")
        if any(out.iterdir()) and not force:
            raise ConfigError(f"output directory {out} is not empty; pass --force")
        shutil.rmtree(out)
    return out


def _emit(doc: dict[str, Any]) -> None:
    json.dump(doc, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def cmd_generate(args: argparse.Namespace) -> int:
    doc = _read_config_doc(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    config = BenchmarkConfig.from_dict(doc, base_dir=Path(args.config).parent)
    _prepare_out_dir(config.output_dir, args.force)
    bundle = generate_benchmark(config)
    _emit(
        {
            "command": "generate",
            "out_dir": str(bundle.out_dir),
            "planned": bundle.summary["planned"],
            "emitted": bundle.summary["emitted"],
        }
    )
    return EXIT_OK


def _eval_config_from_doc(doc: dict[str, Any]) -> tuple[EvalConfig, Mode, dict, Optional[FailureThresholds]]:
    known = {
        "eta_plus",
        "epsilon",
        "distance",
        "collapse_delta",
        "reverse_floor",
        "radius",
        "mode",
        "baselines",
        "thresholds",
        "aux",
    }
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown evaluate config keys: {sorted(unknown)}")
    try:
        cfg = EvalConfig(
            eta_plus=doc.get("eta_plus", 0.1),
            epsilon=doc.get("epsilon", 0.1),
            distance=DistanceKind(doc.get("distance", "label_change")),
            collapse_delta=doc.get("collapse_delta", 0.10),
            reverse_floor=doc.get("reverse_floor", 0.50),
            radius=doc.get("radius", 4),
        )
        mode = Mode(doc.get("mode", "edit"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    thresholds = None
    if "thresholds" in doc:
        try:
            thresholds = FailureThresholds(**doc["thresholds"])
        except TypeError as exc:
            raise ConfigError(f"bad thresholds: {exc}") from exc
    return cfg, mode, doc, thresholds


def cmd_evaluate(args: argparse.Namespace) -> int:
    doc = _read_config_doc(args.config) if args.config else {}
    cfg, mode, doc, thresholds = _eval_config_from_doc(doc)
    key = load_probe_key(args.probes)
    pre = load_answers(args.pre)
    post = load_answers(args.post)
    report = build_report(key, pre, post, cfg, mode=mode, model_id=args.model_id)
    report.aux.update(doc.get("aux", {}))
    if doc.get("baselines"):
        report.failure_modes = classify_failures(
            report, doc["baselines"], thresholds or FailureThresholds()
        )
    out = _prepare_out_dir(args.out, args.force)
    out.mkdir(parents=True, exist_ok=True)
    write_json(report.to_json_dict(), out / "report.json")
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    _emit(
        {
            "command": "evaluate",
            "out_dir": str(out),
            "ccr": report.ccr,
            "rr": report.rr,
            "conflict_rate": report.conflict_rate,
            "accuracy_cells": len(report.accuracy_by),
        }
    )
    return EXIT_OK


def cmd_geometry(args: argparse.Namespace) -> int:
    pairs = load_matrix_pairs(args.pre, args.post)
    fisher = load_fisher(args.fisher, [p.name for p in pairs]) if args.fisher else None
    rows = []
    for pair in pairs:
        svd = geo.svd_diff(pair, rank=args.rank)
        try:
            cka = geo.linear_cka(pair.pre, pair.post)
        except KGBenchError:
            cka = None
        row: dict[str, Any] = {
            "name": pair.name,
            "l2": geo.l2_distance(pair),
            "cka": cka,
            **svd.to_record(),
        }
        if fisher is not None:
            row["fisher"] = geo.fisher_distance(pair, fisher[pair.name])
        rows.append(row)

    out = _prepare_out_dir(args.out, args.force)
    out.mkdir(parents=True, exist_ok=True)
    write_json({"layers": rows}, out / "geometry.json")
    header = ["name", "l2", "cka", "fisher", "left_alignment", "right_alignment",
              "recon_residual", "mean_scaling_ratio"]
    lines = [",".join(header)]
    for row in rows:
        ratios = row["scaling_ratios"]
        row = dict(row, mean_scaling_ratio=float(np.mean(ratios)) if ratios else None)
        cells = [row["name"]]
        for col in header[1:]:
            value = row.get(col)
            cells.append("" if value is None else f"{value:.9g}")
        lines.append(",".join(cells))
    (out / "geometry.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _emit(
        {
            "command": "geometry",
            "out_dir": str(out),
            "layers": [row["name"] for row in rows],
        }
    )
    return EXIT_OK


def cmd_mock_run(args: argparse.Namespace) -> int:
    doc = _read_config_doc(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    doc.setdefault("output_dir", "bench")
    config = BenchmarkConfig.from_dict(doc, base_dir=Path(args.config).parent)
    out = _prepare_out_dir(args.out, args.force)
    result = run_mock_pipeline(config, out)
    _emit(result.summary())
    return EXIT_OK if result.ok else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgbench",
        description="Generate knowledge-probe benchmarks and evaluate update interventions.",
    )
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--jobs", type=int, default=1, help="worker cap (outputs are serial-identical)")
    parser.add_argument("--log-level", default="warning", help="stderr log level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="emit a benchmark tree from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score answer logs against a probe key")
    p.add_argument("--probes", required=True)
    p.add_argument("--pre", required=True)
    p.add_argument("--post", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--model-id", default="")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("geometry", help="SVD and similarity analysis of weight pairs")
    p.add_argument("--pre", required=True)
    p.add_argument("--post", required=True)
    p.add_argument("--fisher", default=None)
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_geometry)

    p = sub.add_parser("mock-run", help="offline end-to-end run with built-in mock models")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_mock_run)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, args.log_level.upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_USAGE
    except KGBenchError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
