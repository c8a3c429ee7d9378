"""Versioned model container: a numpy ``.npz`` archive plus a JSON header.

Arrays are stored losslessly in their native dtype, so a save/load round
trip reproduces every float bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ModelMismatch

FORMAT_VERSION = 1
_META_KEY = "__meta__"


def save_container(path, kind: str, meta: dict, arrays: dict) -> None:
    header = {"format": "sentinel-model", "version": FORMAT_VERSION, "kind": kind, **meta}
    payload = {name: np.asarray(value) for name, value in arrays.items()}
    if _META_KEY in payload:
        raise ValueError(f"array name {_META_KEY!r} is reserved")
    payload[_META_KEY] = np.frombuffer(json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_container(path, kind: str | None = None) -> tuple[dict, dict]:
    with np.load(Path(path), allow_pickle=False) as data:
        arrays = {name: data[name] for name in data.files if name != _META_KEY}
        meta = json.loads(bytes(data[_META_KEY]).decode("utf-8"))
    if meta.get("format") != "sentinel-model":
        raise ModelMismatch(f"{path}: not a model container")
    if meta.get("version") != FORMAT_VERSION:
        raise ModelMismatch(f"{path}: unsupported container version {meta.get('version')}")
    if kind is not None and meta.get("kind") != kind:
        raise ModelMismatch(f"{path}: expected a {kind} model, found {meta.get('kind')}")
    return meta, arrays
