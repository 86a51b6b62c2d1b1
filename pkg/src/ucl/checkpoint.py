"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"UCL1" | u32 version | u64 header_len | JSON header | float32 payload

The header lists every tensor with its shape and byte offset into the
payload, plus the config hash, seed and free-form metadata.  Batch-norm
running statistics are stored as ordinary tensors named
``<layer>.running_mean`` / ``<layer>.running_var``.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import BatchNormState, Tensor
from .model import ParamSet

MAGIC = b"UCL1"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    params: ParamSet
    kind: str  # "encoder" or "classifier"
    config: dict = field(default_factory=dict)
    config_hash: str = ""
    seed: int = 0
    meta: dict = field(default_factory=dict)


def to_bytes(ckpt: Checkpoint) -> bytes:
    arrays = ckpt.params.arrays()
    entries, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = {
        "kind": ckpt.kind,
        "tensors": entries,
        "frozen": sorted(k for k, t in ckpt.params.tensors.items() if not t.requires_grad),
        "batch_norm": {k: {"momentum": st.momentum, "eps": st.eps, "updates": st.updates}
                       for k, st in ckpt.params.bn.items()},
        "config": ckpt.config,
        "config_hash": ckpt.config_hash,
        "seed": int(ckpt.seed),
        "meta": ckpt.meta,
        "payload_bytes": offset,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<IQ", VERSION, len(hbytes)) + hbytes + b"".join(chunks)


def from_bytes(blob: bytes) -> Checkpoint:
    if blob[:4] != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic bytes")
    if len(blob) < 16:
        raise CheckpointError("truncated checkpoint header")
    version, hlen = struct.unpack("<IQ", blob[4:16])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(blob[16:16 + hlen].decode("utf-8"))
    payload = blob[16 + hlen:]
    if len(payload) != header["payload_bytes"]:
        raise CheckpointError(f"payload is {len(payload)} bytes, header says {header['payload_bytes']}")

    arrays = {}
    expect = 0
    for e in header["tensors"]:
        n = int(np.prod(e["shape"], dtype=np.int64)) * 4
        if e["offset"] != expect or e["nbytes"] != n:
            raise CheckpointError(f"inconsistent offsets for tensor {e['name']}")
        expect += n
        arrays[e["name"]] = np.frombuffer(payload, dtype="<f4", count=n // 4,
                                          offset=e["offset"]).reshape(e["shape"]).astype(np.float32)
    params = ParamSet()
    bn_meta = header.get("batch_norm", {})
    order = {e["name"]: i for i, e in enumerate(header["tensors"])}
    # payload order, not the (sorted) header order, keeps re-serialization byte-identical
    for name in sorted(bn_meta, key=lambda n: order[f"{n}.running_mean"]):
        meta = bn_meta[name]
        rm = arrays.pop(f"{name}.running_mean")
        rv = arrays.pop(f"{name}.running_var")
        params.bn[name] = BatchNormState(len(rm), meta["momentum"], meta["eps"], rm, rv, meta["updates"])
    frozen = set(header.get("frozen", []))
    for name, arr in arrays.items():
        params.tensors[name] = Tensor(arr, requires_grad=name not in frozen, dtype=np.float32)
    return Checkpoint(params, header["kind"], header["config"], header["config_hash"], header["seed"],
                      header.get("meta", {}))


def save(ckpt: Checkpoint, path) -> str:
    """Write the checkpoint; returns the SHA-256 of the file bytes."""
    blob = to_bytes(ckpt)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def load(path) -> Checkpoint:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"checkpoint not found: {p}")
    return from_bytes(p.read_bytes())


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
