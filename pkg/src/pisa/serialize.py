"""Versioned structured-text persistence for parameters and reports.

Documents are JSON with alphabetically ordered keys. Floats are written
with 17 significant digits, which round-trips any float64 bit-exactly
through the standard parser. Matrices appear as nested row-major arrays.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from typing import Any

import numpy as np

from .errors import ConfigError, DataError

FORMAT_VERSION = 1


def format_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        raise ValueError("non-finite values are not serializable")
    return format(float(x), ".17g")


def _write(obj: Any, out: list[str]) -> None:
    if isinstance(obj, dict):
        out.append("{")
        for i, key in enumerate(sorted(obj)):
            if not isinstance(key, str):
                raise TypeError("document keys must be strings")
            if i:
                out.append(",")
            out.append(json.dumps(key))
            out.append(":")
            _write(obj[key], out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(",")
            _write(v, out)
        out.append("]")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif obj is None:
        out.append("null")
    elif isinstance(obj, np.ndarray):
        _write(obj.tolist(), out)
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dump_document(obj: dict) -> str:
    parts: list[str] = []
    _write(obj, parts)
    return "".join(parts) + "\n"


def load_document(text: str) -> dict:
    return json.loads(text)


def write_document(path, obj: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dump_document(obj))


def read_document(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return load_document(fh.read())


def matrix_to_lists(value: np.ndarray) -> list:
    return np.asarray(value, dtype=np.float64).tolist()


def matrix_from_lists(data, shape: tuple[int, ...] | None = None) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if shape is not None and arr.shape != tuple(shape):
        raise DataError(f"matrix shape {arr.shape} does not match expected {shape}")
    return arr


# ---------------------------------------------------------------------------
# model files

MODEL_KINDS = ("embedding_component", "content", "integrated", "baseline")


def save_model_document(path, kind: str, dims: dict, payload: dict) -> None:
    """payload holds the kind-specific fields, including 'params'."""
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    doc = {"format_version": FORMAT_VERSION, "model_kind": kind,
           "dims": dims, **payload}
    write_document(path, doc)


def load_model_document(path, expected_kind: str | None = None) -> dict:
    doc = read_document(path)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported model format version {version!r}")
    kind = doc.get("model_kind")
    if kind not in MODEL_KINDS:
        raise DataError(f"{path}: unknown model kind {kind!r}")
    if expected_kind is not None and kind != expected_kind:
        raise DataError(f"{path}: expected a {expected_kind!r} model, "
                        f"found {kind!r}")
    return doc


# ---------------------------------------------------------------------------
# csv + manifests


def format_csv_value(v) -> str:
    if isinstance(v, (float, np.floating)):
        x = float(v)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"  # ROC threshold sentinel
        return format_float(x)
    return str(v)


def write_csv(path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_csv_value(v) for v in row) + "\n")


def write_manifest(out_dir) -> None:
    """MANIFEST.txt with the sha256 of every other file under out_dir."""
    names = sorted(n for n in os.listdir(out_dir)
                   if n != "MANIFEST.txt" and os.path.isfile(os.path.join(out_dir, n)))
    lines = []
    for name in names:
        with open(os.path.join(out_dir, name), "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
        lines.append(f"{digest}  {name}\n")
    with open(os.path.join(out_dir, "MANIFEST.txt"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.writelines(lines)
