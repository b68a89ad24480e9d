"""Tensor exchange format: manifest.json plus raw float32 binaries.

Binary files are little-endian IEEE-754 float32, row-major, no header,
starting at the entry's byte offset. A directory holds one phase; pre/post
phases pair by tensor name.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import IOFailure, MissingPhase, SchemaViolation, ShapeMismatch
from .geometry import MatrixPair

_ENTRY_KEYS = {"name", "rows", "cols", "dtype", "file", "byte_offset"}


@dataclass(frozen=True)
class ManifestEntry:
    name: str
    rows: int
    cols: int
    file: str
    byte_offset: int
    dtype: str = "f32"

    @property
    def nbytes(self) -> int:
        return self.rows * self.cols * 4


def _parse_entry(raw: dict) -> ManifestEntry:
    if not isinstance(raw, dict) or set(raw) != _ENTRY_KEYS:
        raise SchemaViolation(f"manifest entry must have keys {sorted(_ENTRY_KEYS)}: {raw!r}")
    if raw["dtype"] != "f32":
        raise SchemaViolation(f"unsupported dtype {raw['dtype']!r} (only f32)")
    rows, cols, offset = raw["rows"], raw["cols"], raw["byte_offset"]
    if not all(isinstance(v, int) and v >= 0 for v in (rows, cols, offset)):
        raise SchemaViolation(f"rows/cols/byte_offset must be non-negative ints: {raw!r}")
    if rows == 0 or cols == 0:
        raise SchemaViolation(f"empty tensor {raw['name']!r}")
    return ManifestEntry(
        name=raw["name"], rows=rows, cols=cols, file=raw["file"], byte_offset=offset
    )


def read_manifest(phase_dir: str | Path) -> dict[str, np.ndarray]:
    """Load every tensor declared by `phase_dir`/manifest.json, keyed by name."""
    phase = Path(phase_dir)
    manifest_path = phase / "manifest.json"
    try:
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IOFailure(f"cannot read {manifest_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"{manifest_path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or set(doc) != {"entries"}:
        raise SchemaViolation(f"{manifest_path} must hold exactly one key: entries")

    tensors: dict[str, np.ndarray] = {}
    for raw in doc["entries"]:
        entry = _parse_entry(raw)
        if entry.name in tensors:
            raise SchemaViolation(f"duplicate tensor name {entry.name!r}")
        data_path = phase / entry.file
        try:
            size = data_path.stat().st_size
        except OSError as exc:
            raise IOFailure(f"missing tensor file {data_path}: {exc}") from exc
        if size < entry.byte_offset + entry.nbytes:
            raise ShapeMismatch(
                f"{entry.name}: declared {entry.rows}x{entry.cols} "
                f"({entry.nbytes} bytes at offset {entry.byte_offset}) but "
                f"{data_path.name} holds {size} bytes"
            )
        with open(data_path, "rb") as fh:
            fh.seek(entry.byte_offset)
            buf = fh.read(entry.nbytes)
        arr = np.frombuffer(buf, dtype="<f4").reshape(entry.rows, entry.cols)
        tensors[entry.name] = arr
    return tensors


def write_manifest(phase_dir: str | Path, tensors: dict[str, np.ndarray]) -> None:
    """Write tensors in the exchange format, one binary file per tensor."""
    phase = Path(phase_dir)
    phase.mkdir(parents=True, exist_ok=True)
    entries = []
    for name in sorted(tensors):
        arr = np.ascontiguousarray(np.asarray(tensors[name], dtype="<f4"))
        if arr.ndim != 2:
            raise ShapeMismatch(f"{name}: tensors must be 2-D, got shape {arr.shape}")
        file_name = name.replace("/", "_").replace(".", "_") + ".bin"
        (phase / file_name).write_bytes(arr.tobytes(order="C"))
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
    (phase / "manifest.json").write_text(
        json.dumps({"entries": entries}, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_matrix_pairs(pre_dir: str | Path, post_dir: str | Path) -> list[MatrixPair]:
    """Pair pre/post tensors by name; any one-sided name is an error."""
    pre = read_manifest(pre_dir)
    post = read_manifest(post_dir)
    only_pre = sorted(set(pre) - set(post))
    only_post = sorted(set(post) - set(pre))
    if only_pre or only_post:
        raise MissingPhase(
            f"unmatched tensors; pre-only: {only_pre}, post-only: {only_post}"
        )
    pairs = []
    for name in sorted(pre):
        if pre[name].shape != post[name].shape:
            raise ShapeMismatch(
                f"{name}: pre {pre[name].shape} vs post {post[name].shape}"
            )
        pairs.append(MatrixPair(name=name, pre=pre[name], post=post[name]))
    return pairs


def load_manifest(root: str | Path) -> list[MatrixPair]:
    """Load a pre/post tree rooted at `root` (root/pre, root/post)."""
    root = Path(root)
    return load_matrix_pairs(root / "pre", root / "post")


def load_fisher(fisher_dir: str | Path, names: Iterable[str]) -> dict[str, np.ndarray]:
    """Load Fisher weight tensors; every requested name must be present."""
    tensors = read_manifest(fisher_dir)
    missing = sorted(set(names) - set(tensors))
    if missing:
        raise MissingPhase(f"fisher manifest lacks tensors: {missing}")
    return tensors
