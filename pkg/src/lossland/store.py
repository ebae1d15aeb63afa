"""Content-addressed checkpoint store.

Binary layout (version 1), little-endian throughout after the magic:

    bytes 0..7    magic "LPFCKPT1"
    u32           number of layer widths
    u32 * n       layer widths (input, hidden..., output)
    f64 * count   parameter vector in the documented flat layout

The checkpoint id is the SHA-256 hex digest of exactly those bytes, so
identical (spec, params) pairs always map to the same id and the store is
append-only by construction.  A JSON sidecar carries run metadata.
"""

from __future__ import annotations

import hashlib
import json
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataFormatError
from .net import NetworkSpec

MAGIC = b"LPFCKPT1"


@dataclass
class Checkpoint:
    spec: NetworkSpec
    params: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        if self.params.ndim != 1 or self.params.size != self.spec.parameter_count:
            raise ConfigError(
                f"params length {self.params.size} does not match spec "
                f"{self.spec.layer_sizes} ({self.spec.parameter_count})"
            )

    @property
    def checkpoint_id(self) -> str:
        return checkpoint_id(self.spec, self.params)


def _encode(spec: NetworkSpec, params: np.ndarray) -> bytes:
    sizes = spec.layer_sizes
    head = MAGIC + struct.pack("<I", len(sizes)) + struct.pack(f"<{len(sizes)}I", *sizes)
    return head + params.astype("<f8").tobytes()


def checkpoint_id(spec: NetworkSpec, params: np.ndarray) -> str:
    params = np.ascontiguousarray(params, dtype=np.float64)
    return hashlib.sha256(_encode(spec, params)).hexdigest()


def save_checkpoint(cp: Checkpoint, store_path) -> str:
    """Write the checkpoint and its metadata sidecar; returns the content id."""
    store = Path(store_path)
    store.mkdir(parents=True, exist_ok=True)
    blob = _encode(cp.spec, cp.params)
    cid = hashlib.sha256(blob).hexdigest()
    bin_path = store / f"{cid}.ckpt"
    if not bin_path.exists():
        bin_path.write_bytes(blob)
    meta = dict(cp.meta)
    meta.setdefault("created_at", time.strftime("%Y-%m-%dT%H:%M:%S%z"))
    meta["checkpoint_id"] = cid
    meta["layer_sizes"] = list(cp.spec.layer_sizes)
    (store / f"{cid}.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return cid


def load_checkpoint(store_path, checkpoint_id: str) -> Checkpoint:
    store = Path(store_path)
    bin_path = store / f"{checkpoint_id}.ckpt"
    if not bin_path.exists():
        raise DataFormatError(f"checkpoint not found: {checkpoint_id} in {store}")
    raw = bin_path.read_bytes()
    if len(raw) < len(MAGIC) + 4:
        raise DataFormatError(f"truncated checkpoint {checkpoint_id}")
    if raw[:len(MAGIC)] != MAGIC:
        raise DataFormatError(
            f"checkpoint magic mismatch in {bin_path}: got {raw[:len(MAGIC)]!r}"
        )
    off = len(MAGIC)
    (n_sizes,) = struct.unpack_from("<I", raw, off)
    off += 4
    if len(raw) < off + 4 * n_sizes:
        raise DataFormatError(f"truncated checkpoint {checkpoint_id}")
    sizes = struct.unpack_from(f"<{n_sizes}I", raw, off)
    off += 4 * n_sizes
    spec = NetworkSpec(layer_sizes=tuple(sizes))
    body = raw[off:]
    if len(body) != 8 * spec.parameter_count:
        raise DataFormatError(f"truncated checkpoint {checkpoint_id}")
    params = np.frombuffer(body, dtype="<f8").copy()

    meta_path = store / f"{checkpoint_id}.json"
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return Checkpoint(spec=spec, params=params, meta=meta)
