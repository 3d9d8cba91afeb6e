"""Versioned flat parameter files.

Layout: one JSON header line (format tag, version, kind, array names and
shapes, free-form metadata) followed by the arrays as little-endian float64
in row-major order, concatenated in header order.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import CheckpointError

FORMAT = "shapezsc-flat"
VERSION = 1


def write_flat(path: str | Path, kind: str, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    header = {
        "format": FORMAT,
        "version": VERSION,
        "kind": kind,
        "arrays": [{"name": k, "shape": list(np.shape(v))} for k, v in arrays.items()],
        "meta": meta or {},
    }
    body = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for v in arrays.values())
    Path(path).write_bytes(json.dumps(header, sort_keys=True).encode() + b"\n" + body)


def read_flat(path: str | Path, kind: str | None = None) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise CheckpointError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:nl])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: unreadable header ({exc})") from exc
    if header.get("format") != FORMAT:
        raise CheckpointError(f"{path}: not a {FORMAT} file")
    if header.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported version {header.get('version')}")
    if kind is not None and header.get("kind") != kind:
        raise CheckpointError(f"{path}: expected kind {kind!r}, found {header.get('kind')!r}")
    body = raw[nl + 1:]
    arrays, offset = {}, 0
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape, dtype=np.int64)) * 8
        if offset + n > len(body):
            raise CheckpointError(f"{path}: truncated at array {spec['name']!r}")
        arrays[spec["name"]] = np.frombuffer(body[offset:offset + n], dtype="<f8").reshape(shape).astype(np.float64)
        offset += n
    if offset != len(body):
        raise CheckpointError(f"{path}: {len(body) - offset} trailing bytes")
    return arrays, header["meta"]
