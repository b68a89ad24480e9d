from __future__ import annotations

import json
import os
from pathlib import Path

import pytest
import torch

os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")
os.environ.setdefault("HF_HUB_OFFLINE", "1")


def build_tiny_lm(save_dir: Path, seed: int = 0) -> Path:
    """A 2-layer byte-level causal LM small enough for CPU test runs,
    saved in the standard local-model layout."""
    from tokenizers import Tokenizer, decoders, models, pre_tokenizers
    from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

    alphabet = pre_tokenizers.ByteLevel.alphabet()
    vocab = {ch: i for i, ch in enumerate(sorted(alphabet))}
    vocab["<|pad|>"] = len(vocab)
    vocab["<|eos|>"] = len(vocab)
    tok = Tokenizer(models.BPE(vocab=vocab, merges=[]))
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
    tok.decoder = decoders.ByteLevel()
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tok, pad_token="<|pad|>", eos_token="<|eos|>"
    )

    torch.manual_seed(seed)
    config = GPT2Config(
        vocab_size=len(fast),
        n_positions=512,
        n_embd=32,
        n_layer=2,
        n_head=2,
        bos_token_id=vocab["<|eos|>"],
        eos_token_id=vocab["<|eos|>"],
    )
    model = GPT2LMHeadModel(config)
    model.eval()
    save_dir.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(save_dir)
    fast.save_pretrained(save_dir)
    return save_dir


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory) -> Path:
    return build_tiny_lm(tmp_path_factory.mktemp("tinylm") / "model")


@pytest.fixture(scope="session")
def tiny_loaded(tiny_model_dir):
    from kgrunner.model import ModelRef, load_model

    return load_model(ModelRef(path_or_hub_id=str(tiny_model_dir)))


def make_probe_file(path: Path, n: int = 4) -> Path:
    """A minimal probe JSONL file matching the harness schema."""
    years = ["1915", "1920", "1912", "1918"]
    records = []
    for i in range(n):
        records.append(
            {
                "probe_id": f"t:{i}",
                "fact_id": "gr|published_in",
                "domain": "physics",
                "branch": "leaf",
                "probe_type": "direct",
                "polarity": "positive",
                "question": f"Probe {i}: the theory was published in what year?",
                "options": years[i % 4 :] + years[: i % 4],
                "correct_index": (4 - i % 4) % 4,
                "keyed_phase": "pre",
                "hop_distance": 0,
                "pair_id": None,
                "tags": ["ID"],
            }
        )
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    return path


class CharTokenizer:
    """Single-character tokenizer over a tiny vocabulary (toy models)."""

    def __init__(self, alphabet: str = "01"):
        self.vocab = {ch: i for i, ch in enumerate(alphabet)}

    def encode(self, text: str, add_special_tokens: bool = False) -> list[int]:
        return [self.vocab.get(ch, 0) for ch in text]


class ConstantLogitLM(torch.nn.Module):
    """Logits are a fixed constant: the selected weight never enters the
    forward pass, so gradients are zero by construction."""

    def __init__(self, vocab: int = 2):
        super().__init__()
        self.frozen = torch.nn.Parameter(torch.ones(4, 4))
        self.vocab = vocab

    def forward(self, input_ids: torch.Tensor) -> torch.Tensor:
        b, s = input_ids.shape
        return torch.zeros(b, s, self.vocab)


class TwoLogitLM(torch.nn.Module):
    """Every position's logits are the single 1x2 weight row, making the
    answer-NLL gradient hand-computable: dL/dw_v = p_v - [v == target]."""

    def __init__(self, w0: float = 0.3, w1: float = -0.2):
        super().__init__()
        self.w = torch.nn.Parameter(torch.tensor([[w0, w1]]))

    def forward(self, input_ids: torch.Tensor) -> torch.Tensor:
        b, s = input_ids.shape
        return self.w[0].expand(b, s, 2)
