"""Diagonal Fisher export: mean squared gradients of the answer
log-likelihood over a probe batch, per selected weight matrix."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .answers import read_probe_file
from .errors import SchemaViolation
from .export import write_exchange_dir
from .model import LoadedModel, select_tensors


def _answer_nll(loaded: LoadedModel, question: str, answer: str) -> torch.Tensor:
    """Summed negative log-likelihood of the keyed answer continuation."""
    prompt = f"{question}\nAnswer: "
    prefix_ids = loaded.encode(prompt)
    full_ids = loaded.encode(prompt + answer)
    if full_ids[: len(prefix_ids)] != prefix_ids:
        prefix_ids = full_ids[: len(prefix_ids)]
    if len(full_ids) - len(prefix_ids) < 1:
        raise SchemaViolation(f"answer {answer!r} tokenizes to nothing")
    ids = torch.tensor([full_ids], dtype=torch.long)
    logprobs = torch.log_softmax(loaded.logits(ids)[0].float(), dim=-1)
    nll = ids.new_zeros((), dtype=torch.float32).float()
    for pos in range(len(prefix_ids), len(full_ids)):
        nll = nll - logprobs[pos - 1, full_ids[pos]]
    return nll


def export_fisher(
    loaded: LoadedModel,
    probes_path: str | Path,
    layer_filter: tuple[str, ...],
    out_dir: str | Path,
) -> list[str]:
    """Per selected tensor, the mean over probes of the squared gradient of
    the keyed-answer NLL; exported as non-negative float32 matrices."""
    probes = read_probe_file(probes_path)
    selected = select_tensors(loaded.model, layer_filter)
    acc = {name: torch.zeros_like(p, dtype=torch.float32) for name, p in selected.items()}

    for rec in probes:
        loaded.model.zero_grad(set_to_none=True)
        answer = rec["options"][rec["correct_index"]]
        nll = _answer_nll(loaded, rec["question"], answer)
        if nll.requires_grad:
            nll.backward()
        for name, param in selected.items():
            if param.grad is not None:
                acc[name] += param.grad.detach().to(torch.float32) ** 2
    loaded.model.zero_grad(set_to_none=True)

    n = len(probes)
    fisher = {name: (tensor / n).cpu().numpy().astype(np.float32) for name, tensor in acc.items()}
    write_exchange_dir(out_dir, fisher)
    return sorted(fisher)
