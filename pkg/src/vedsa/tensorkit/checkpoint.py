"""Model checkpoints: one ``.npz`` archive with every parameter array plus a JSON header."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import SchemaError

FORMAT = "vedsa-checkpoint"
VERSION = 1


def save_checkpoint(path, state: dict[str, np.ndarray], config: dict) -> Path:
    path = Path(path)
    header = json.dumps({"format": FORMAT, "version": VERSION, "config": config}, sort_keys=True)
    arrays = {f"param/{k}": np.asarray(v, dtype=np.float64) for k, v in state.items()}
    with open(path, "wb") as fh:
        np.savez(fh, __header__=np.array(header), **arrays)
    return path


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with np.load(Path(path), allow_pickle=False) as archive:
        if "__header__" not in archive.files:
            raise SchemaError(f"{path}: not a checkpoint")
        header = json.loads(str(archive["__header__"]))
        if header.get("format") != FORMAT or header.get("version") != VERSION:
            raise SchemaError(f"{path}: unsupported checkpoint {header.get('format')} v{header.get('version')}")
        state = {k[len("param/") :]: archive[k].copy() for k in archive.files if k.startswith("param/")}
    return state, header["config"]
