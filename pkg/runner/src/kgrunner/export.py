"""Export selected weight matrices in the tensor exchange format.

Format contract (shared with the evaluation harness, file-based only):
manifest.json with an `entries` list of {name, rows, cols, dtype: "f32",
file, byte_offset}; binaries are raw little-endian float32, row-major, no
header.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .model import LoadedModel, select_tensors


def _file_name(tensor_name: str) -> str:
    return tensor_name.replace("/", "_").replace(".", "_") + ".bin"


def write_exchange_dir(out_dir: str | Path, tensors: dict[str, np.ndarray]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name].astype("<f4"))
        file_name = _file_name(name)
        (out / file_name).write_bytes(arr.tobytes(order="C"))
        entries.append(
            {
                "name": name,
                "rows": int(arr.shape[0]),
                "cols": int(arr.shape[1]),
                "dtype": "f32",
                "file": file_name,
                "byte_offset": 0,
            }
        )
    (out / "manifest.json").write_text(
        json.dumps({"entries": entries}, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return out


def export_tensors(
    loaded: LoadedModel, layer_filter: tuple[str, ...], out_dir: str | Path
) -> list[str]:
    """Write every selected 2-D parameter; returns the exported names."""
    selected = select_tensors(loaded.model, layer_filter)
    arrays = {
        name: param.detach().to(torch.float32).cpu().numpy() for name, param in selected.items()
    }
    write_exchange_dir(out_dir, arrays)
    return sorted(arrays)
