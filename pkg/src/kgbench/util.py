"""Small shared helpers: stable seeding, JSONL io, atomic writes."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import IOFailure


def stable_seed(*parts: object) -> int:
    """Platform-stable 64-bit seed derived from the given parts.

    Python's hash() is salted per process, so seeded RNG splitting goes
    through sha256 instead.
    """
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def dump_jsonl(records: Iterable[dict[str, Any]], path: str | Path) -> int:
    """Write one compact JSON object per line; returns the line count."""
    n = 0
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True))
                fh.write("\n")
                n += 1
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc
    return n


def load_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    yield json.loads(line)
                except json.JSONDecodeError as exc:
                    raise IOFailure(f"{path}:{line_no}: bad JSON: {exc}") from exc
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc


def write_json(doc: Any, path: str | Path) -> None:
    try:
        Path(path).write_text(
            json.dumps(doc, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def atomic_dir_swap(build: "callable", final_dir: str | Path) -> Path:
    """Run `build(tmpdir)` then move tmpdir into place as final_dir.

    On any failure the partial tree is removed and nothing appears at
    final_dir. final_dir must not already exist.
    """
    final = Path(final_dir)
    if final.exists():
        raise IOFailure(f"output directory already exists: {final}")
    final.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=final.name + ".tmp.", dir=final.parent))
    try:
        build(tmp)
        os.replace(tmp, final)
    except BaseException:
        import shutil

        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return final
