"""Content-addressed on-disk cache for numerical results.

Each entry is an ``.npz`` archive plus a ``.sha256`` sidecar.  A record whose
checksum does not match is treated as a miss and recomputed.  Writes go
through a temporary file and ``os.replace`` so readers never observe a
partial record.
"""
from __future__ import annotations

import hashlib
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

ENV_VAR = "RELTF_CACHE_DIR"
DEFAULT_DIR = ".reltf-cache"


def content_hash(*parts) -> str:
    """Stable SHA-256 of JSON-able parts and numpy arrays."""
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, np.ndarray):
            arr = np.ascontiguousarray(part)
            h.update(str(arr.dtype).encode())
            h.update(str(arr.shape).encode())
            h.update(arr.tobytes())
        else:
            h.update(json.dumps(part, sort_keys=True, default=repr).encode())
        h.update(b"\x00")
    return h.hexdigest()


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode())


class DiskCache:
    """Arrays keyed by content hash; ``hits``/``misses`` count lookups."""

    def __init__(self, directory: str | os.PathLike | None = None):
        if directory is None:
            directory = os.environ.get(ENV_VAR, DEFAULT_DIR)
        self.directory = Path(directory)
        self.hits = 0
        self.misses = 0
        self.corrupt = 0

    def _paths(self, key: str):
        base = self.directory / key[:2] / key
        return base.with_suffix(".npz"), base.with_suffix(".sha256")

    def get(self, key: str) -> dict[str, np.ndarray] | None:
        data_path, sum_path = self._paths(key)
        try:
            blob = data_path.read_bytes()
            expected = sum_path.read_text().strip()
        except OSError:
            self.misses += 1
            return None
        if hashlib.sha256(blob).hexdigest() != expected:
            self.corrupt += 1
            self.misses += 1
            return None
        with np.load(io.BytesIO(blob), allow_pickle=False) as npz:
            out = {k: npz[k] for k in npz.files}
        self.hits += 1
        return out

    def put(self, key: str, arrays: dict[str, np.ndarray]) -> None:
        buf = io.BytesIO()
        np.savez(buf, **arrays)
        blob = buf.getvalue()
        data_path, sum_path = self._paths(key)
        atomic_write_bytes(data_path, blob)
        atomic_write_text(sum_path, hashlib.sha256(blob).hexdigest())
