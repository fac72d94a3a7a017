"""Deterministic JSON output and run manifests.

Floats are printed with 17 significant digits so that every value
round-trips to the same double; repeated runs with the same inputs
produce byte-identical documents.  Non-finite floats become null.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np


def _format_scalar(obj):
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return "null"
        return "%.17g" % x
    return None


def _escape(text: str) -> str:
    out = ['"']
    for ch in text:
        if ch == '"':
            out.append('\\"')
        elif ch == "\\":
            out.append("\\\\")
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\t":
            out.append("\\t")
        elif ch == "\r":
            out.append("\\r")
        elif ord(ch) < 0x20:
            out.append("\\u%04x" % ord(ch))
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def _serialize(obj, indent: int, level: int) -> str:
    scalar = _format_scalar(obj)
    if scalar is not None:
        return scalar
    if isinstance(obj, str):
        return _escape(obj)
    pad = " " * (indent * (level + 1))
    close_pad = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{pad}{_escape(str(key))}: {_serialize(value, indent, level + 1)}"
            for key, value in obj.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + close_pad + "}"
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad}{_serialize(value, indent, level + 1)}" for value in obj]
        return "[\n" + ",\n".join(items) + "\n" + close_pad + "]"
    raise TypeError(f"cannot serialize object of type {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """Render a nested dict/list/scalar structure as JSON text."""
    return _serialize(obj, indent, 0) + "\n"


def dump(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(dumps(obj))


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    """Provenance block attached to every artifact a run produces."""

    subcommand: str
    version: str
    seed: int | None = None
    config: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "version": self.version,
            "seed": self.seed,
            "config": self.config,
            "inputs": self.inputs,
            "timings": self.timings,
        }
