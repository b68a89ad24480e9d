"""Answer probe files with choice probabilities.

Each four-choice item is scored by the length-normalized summed
log-likelihood of the option text as a continuation of the question prompt;
the four scores softmax into choice_probs and argmax picks chosen_index.
The letter mode instead scores the option letters against a formatted menu,
for models drilled on letter answers.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Iterator

import torch

from .errors import SchemaViolation
from .model import LoadedModel

REQUIRED_PROBE_FIELDS = ("probe_id", "question", "options", "correct_index")
LETTERS = ("A", "B", "C", "D")


def read_probe_file(path: str | Path) -> list[dict[str, Any]]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(f"{path}:{line_no}: bad JSON: {exc}") from exc
            for field in REQUIRED_PROBE_FIELDS:
                if field not in rec:
                    raise SchemaViolation(f"{path}:{line_no}: missing field {field!r}")
            options = rec["options"]
            if not isinstance(options, list) or len(options) != 4:
                raise SchemaViolation(
                    f"{path}:{line_no}: options must hold exactly 4 strings"
                )
            if not all(isinstance(o, str) and o for o in options):
                raise SchemaViolation(f"{path}:{line_no}: options must be non-empty strings")
            if not isinstance(rec["correct_index"], int) or not 0 <= rec["correct_index"] <= 3:
                raise SchemaViolation(f"{path}:{line_no}: correct_index out of range")
            records.append(rec)
    if not records:
        raise SchemaViolation(f"{path}: no probe records")
    return records


def _continuation_logprob(loaded: LoadedModel, prompt: str, continuation: str) -> float:
    """Mean per-token log-likelihood of `continuation` given `prompt`."""
    prefix_ids = loaded.encode(prompt)
    full_ids = loaded.encode(prompt + continuation)
    if full_ids[: len(prefix_ids)] != prefix_ids:
        # tokenizer merged across the boundary; re-split conservatively
        prefix_ids = full_ids[: len(prefix_ids)]
    span = len(full_ids) - len(prefix_ids)
    if span < 1:
        raise SchemaViolation(f"option {continuation!r} tokenizes to nothing")
    ids = torch.tensor([full_ids], dtype=torch.long)
    with torch.no_grad():
        logprobs = torch.log_softmax(loaded.logits(ids)[0].float(), dim=-1)
    total = 0.0
    for pos in range(len(prefix_ids), len(full_ids)):
        total += float(logprobs[pos - 1, full_ids[pos]])
    return total / span


def score_options(
    loaded: LoadedModel, question: str, options: list[str], scoring: str = "likelihood"
) -> list[float]:
    if scoring == "likelihood":
        prompt = f"{question}\nAnswer: "
        return [_continuation_logprob(loaded, prompt, opt) for opt in options]
    if scoring == "letter":
        menu = "\n".join(f"{letter}. {opt}" for letter, opt in zip(LETTERS, options))
        prompt = f"{question}\n{menu}\nAnswer:"
        return [_continuation_logprob(loaded, prompt, f" {letter}") for letter in LETTERS]
    raise ValueError(f"unknown scoring mode {scoring!r}")


def _softmax(scores: list[float]) -> list[float]:
    peak = max(scores)
    exps = [math.exp(s - peak) for s in scores]
    total = sum(exps)
    return [e / total for e in exps]


def answer_records(
    loaded: LoadedModel,
    probes: list[dict[str, Any]],
    phase: str,
    model_id: str = "",
    scoring: str = "likelihood",
) -> Iterator[dict[str, Any]]:
    if phase not in ("pre", "post"):
        raise SchemaViolation("phase must be pre or post")
    name = model_id or loaded.model_id or "model"
    for rec in probes:
        scores = score_options(loaded, rec["question"], rec["options"], scoring=scoring)
        probs = _softmax(scores)
        yield {
            "probe_id": rec["probe_id"],
            "model_id": name,
            "phase": phase,
            "chosen_index": int(max(range(4), key=lambda i: probs[i])),
            "choice_probs": probs,
        }


def run_answers(
    probes_path: str | Path,
    loaded: LoadedModel,
    phase: str,
    out_path: str | Path,
    model_id: str = "",
    scoring: str = "likelihood",
) -> int:
    """Answer every probe in the file; returns the number of records written."""
    probes = read_probe_file(probes_path)
    n = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for rec in answer_records(loaded, probes, phase, model_id=model_id, scoring=scoring):
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")
            n += 1
    return n
