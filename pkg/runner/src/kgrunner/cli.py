"""Runner CLI: answer probes, export weights, export Fisher weights."""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional

from .answers import run_answers
from .errors import RunnerError
from .export import export_tensors
from .fisher import export_fisher
from .model import ModelRef, load_model


def _model_ref(args: argparse.Namespace) -> ModelRef:
    return ModelRef(
        path_or_hub_id=args.model,
        device=args.device,
        dtype=args.dtype,
        layer_filter=tuple(args.layers) if getattr(args, "layers", None) else ("*",),
    )


def cmd_run_answers(args: argparse.Namespace) -> int:
    loaded = load_model(_model_ref(args))
    n = run_answers(
        args.probes, loaded, args.phase, args.out,
        model_id=args.model_id or args.model, scoring=args.scoring,
    )
    json.dump({"command": "run-answers", "records": n, "out": args.out}, sys.stdout)
    sys.stdout.write("\n")
    return 0


def cmd_export_tensors(args: argparse.Namespace) -> int:
    loaded = load_model(_model_ref(args))
    names = export_tensors(loaded, tuple(args.layers), args.out)
    json.dump({"command": "export-tensors", "tensors": names, "out": args.out}, sys.stdout)
    sys.stdout.write("\n")
    return 0


def cmd_export_fisher(args: argparse.Namespace) -> int:
    loaded = load_model(_model_ref(args))
    names = export_fisher(loaded, args.probes, tuple(args.layers), args.out)
    json.dump({"command": "export-fisher", "tensors": names, "out": args.out}, sys.stdout)
    sys.stdout.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgrunner", description="Local-model adapter for probe answering and tensor export."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--model", required=True, help="local path or hub id")
        p.add_argument("--device", default="cpu")
        p.add_argument("--dtype", default="float32")

    p = sub.add_parser("run-answers", help="answer a probe JSONL file")
    common(p)
    p.add_argument("--probes", required=True)
    p.add_argument("--phase", required=True, choices=["pre", "post"])
    p.add_argument("--out", required=True)
    p.add_argument("--model-id", default="")
    p.add_argument("--scoring", default="likelihood", choices=["likelihood", "letter"])
    p.set_defaults(func=cmd_run_answers)

    p = sub.add_parser("export-tensors", help="export selected weight matrices")
    common(p)
    p.add_argument("--layers", nargs="+", required=True, help="glob patterns over parameter names")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_tensors)

    p = sub.add_parser("export-fisher", help="export mean squared gradients per weight matrix")
    common(p)
    p.add_argument("--probes", required=True)
    p.add_argument("--layers", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_fisher)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RunnerError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
