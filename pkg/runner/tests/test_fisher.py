from __future__ import annotations

import json
import math

import numpy as np

from conftest import CharTokenizer, ConstantLogitLM, TwoLogitLM, make_probe_file
from kgrunner.fisher import export_fisher
from kgrunner.model import LoadedModel


def _toy_probe_file(path, answer: str):
    rec = {
        "probe_id": "toy:0",
        "question": "q",
        "options": [answer, "x", "y", "z"],
        "correct_index": 0,
    }
    path.write_text(json.dumps(rec) + "\n")
    return path


def test_frozen_model_yields_zero_fisher(tmp_path):
    loaded = LoadedModel(model=ConstantLogitLM(), tokenizer=CharTokenizer("01qAnswer: xyz\n"))
    probes = _toy_probe_file(tmp_path / "p.jsonl", "1")
    export_fisher(loaded, probes, ("frozen",), tmp_path / "fisher")
    from kgbench.tensorio import read_manifest

    tensors = read_manifest(tmp_path / "fisher")
    assert np.all(tensors["frozen"] == 0.0)


def test_fisher_nonnegative_on_tiny_model(tmp_path, tiny_loaded):
    probes = make_probe_file(tmp_path / "p.jsonl", n=3)
    export_fisher(
        tiny_loaded, probes, ("transformer.h.0.attn.c_attn.weight",), tmp_path / "fisher"
    )
    from kgbench.tensorio import read_manifest

    tensors = read_manifest(tmp_path / "fisher")
    arr = tensors["transformer.h.0.attn.c_attn.weight"]
    assert (arr >= 0).all()
    assert arr.max() > 0  # the attention projection does receive gradient


def test_two_parameter_analytic_gradient(tmp_path):
    w0, w1 = 0.3, -0.2
    loaded = LoadedModel(model=TwoLogitLM(w0, w1), tokenizer=CharTokenizer("01"))
    # answer token "1": single-step NLL = -log softmax([w0, w1])[1]
    probes = _toy_probe_file(tmp_path / "p.jsonl", "1")
    export_fisher(loaded, probes, ("w",), tmp_path / "fisher")

    e0, e1 = math.exp(w0), math.exp(w1)
    p0, p1 = e0 / (e0 + e1), e1 / (e0 + e1)
    want = np.array([[p0**2, (p1 - 1.0) ** 2]], dtype=np.float64)

    from kgbench.tensorio import read_manifest

    got = read_manifest(tmp_path / "fisher")["w"].astype(np.float64)
    assert np.abs(got - want).max() < 1e-6
