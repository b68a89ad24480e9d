"""Model loading and parameter selection."""

from __future__ import annotations

import fnmatch
from dataclasses import dataclass
from typing import Any

import torch

from .errors import ModelLoadFailure, NoMatch

_DTYPES = {"float32": torch.float32, "float16": torch.float16, "bfloat16": torch.bfloat16}


@dataclass(frozen=True)
class ModelRef:
    path_or_hub_id: str
    device: str = "cpu"
    dtype: str = "float32"
    layer_filter: tuple[str, ...] = ("*",)

    def __post_init__(self) -> None:
        if self.dtype not in _DTYPES:
            raise ValueError(f"dtype must be one of {sorted(_DTYPES)}")
        if not self.layer_filter:
            raise ValueError("layer_filter must hold at least one pattern")


@dataclass
class LoadedModel:
    """A causal LM plus its tokenizer.

    The model maps input_ids [batch, seq] to logits [batch, seq, vocab]
    (either directly or through an output object with a .logits field);
    the tokenizer provides encode(text, add_special_tokens=False).
    """

    model: Any
    tokenizer: Any
    model_id: str = ""

    def logits(self, input_ids: torch.Tensor) -> torch.Tensor:
        out = self.model(input_ids)
        return out.logits if hasattr(out, "logits") else out

    def encode(self, text: str) -> list[int]:
        return list(self.tokenizer.encode(text, add_special_tokens=False))


def load_model(ref: ModelRef) -> LoadedModel:
    try:
        from transformers import AutoModelForCausalLM, AutoTokenizer

        model = AutoModelForCausalLM.from_pretrained(
            ref.path_or_hub_id, torch_dtype=_DTYPES[ref.dtype]
        )
        tokenizer = AutoTokenizer.from_pretrained(ref.path_or_hub_id)
    except Exception as exc:
        raise ModelLoadFailure(f"cannot load {ref.path_or_hub_id}: {exc}") from exc
    model.to(ref.device)
    model.eval()
    return LoadedModel(model=model, tokenizer=tokenizer, model_id=ref.path_or_hub_id)


def select_tensors(module: torch.nn.Module, patterns: tuple[str, ...]) -> dict[str, torch.nn.Parameter]:
    """Named parameters matching any glob; only 2-D tensors are eligible."""
    selected = {
        name: param
        for name, param in module.named_parameters()
        if param.ndim == 2 and any(fnmatch.fnmatch(name, pat) for pat in patterns)
    }
    if not selected:
        raise NoMatch(f"layer filter {list(patterns)} matched no 2-D parameter")
    return selected
