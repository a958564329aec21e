"""
Binary checkpoint persistence.

Layout (little-endian)::

    b"HANERF01"              8 bytes, magic + format version
    header length            uint64
    header                   UTF-8 JSON: config, iteration, rng state,
                             and per-array name/group/dtype/shape/offset
    payload                  raw array bytes, concatenated
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diffcore import ParameterSet
from .errors import (
    CheckpointFormatError,
    CheckpointIncompatibleError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)

MAGIC_PREFIX = b"HANERF"
FORMAT_VERSION = 1
MAGIC = MAGIC_PREFIX + b"%02d" % FORMAT_VERSION
_GROUPS = ("value", "m", "v")


@dataclass
class Checkpoint:
    config: dict
    params: ParameterSet
    iteration: int = 0
    rng_state: dict = None
    n_images: int = 0
    meta: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION

    @property
    def mode(self):
        return self.config.get("mode")


def save_checkpoint(ckpt, path):
    path = Path(path)
    arrays = []
    blobs = []
    offset = 0
    for name in ckpt.params.names():
        for group, store in zip(_GROUPS, (ckpt.params.values, ckpt.params.m, ckpt.params.v)):
            arr = np.ascontiguousarray(store[name])
            le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
            raw = le.tobytes()
            arrays.append(
                {
                    "name": name,
                    "group": group,
                    "dtype": le.dtype.str,
                    "shape": list(arr.shape),
                    "offset": offset,
                    "nbytes": len(raw),
                }
            )
            blobs.append(raw)
            offset += len(raw)
    header = {
        "format_version": ckpt.version,
        "config": ckpt.config,
        "iteration": int(ckpt.iteration),
        "rng_state": ckpt.rng_state,
        "n_images": int(ckpt.n_images),
        "steps": {k: int(v) for k, v in ckpt.params.steps.items()},
        "meta": ckpt.meta,
        "arrays": arrays,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for raw in blobs:
            fh.write(raw)
    tmp.replace(path)
    return path


def load_checkpoint(path):
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:6] != MAGIC_PREFIX:
        raise CheckpointFormatError(f"{path}: not a checkpoint file (bad magic)")
    try:
        magic_version = int(data[6:8].decode("ascii"))
    except ValueError as exc:
        raise CheckpointFormatError(f"{path}: malformed magic") from exc
    if magic_version != FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: format version {magic_version}, expected {FORMAT_VERSION}")
    (head_len,) = struct.unpack("<Q", data[8:16])
    if 16 + head_len > len(data):
        raise CheckpointTruncatedError(f"{path}: header extends past end of file")
    try:
        header = json.loads(data[16 : 16 + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: unreadable header") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: header version {header.get('format_version')}")
    payload = memoryview(data)[16 + head_len :]
    stores = {g: {} for g in _GROUPS}
    order = []
    for entry in header["arrays"]:
        end = entry["offset"] + entry["nbytes"]
        if end > len(payload):
            raise CheckpointTruncatedError(f"{path}: array {entry['name']!r} is truncated")
        dtype = np.dtype(entry["dtype"])
        arr = np.frombuffer(payload[entry["offset"] : end], dtype=dtype).reshape(entry["shape"])
        if int(np.prod(entry["shape"])) * dtype.itemsize != entry["nbytes"]:
            raise CheckpointFormatError(f"{path}: array {entry['name']!r} size does not match its shape")
        stores[entry["group"]][entry["name"]] = arr.astype(dtype.newbyteorder("="), copy=True)
        if entry["group"] == "value":
            order.append(entry["name"])
    params = ParameterSet()
    for name in order:
        params.add(name, stores["value"][name])
        params.m[name] = stores["m"][name]
        params.v[name] = stores["v"][name]
        params.steps[name] = int(header["steps"].get(name, 0))
    return Checkpoint(
        config=header["config"],
        params=params,
        iteration=header["iteration"],
        rng_state=header["rng_state"],
        n_images=header["n_images"],
        meta=header.get("meta", {}),
        version=header["format_version"],
    )


def check_compatible(ckpt, template, mode=None):
    """Raise unless ``ckpt`` has exactly the parameter names and shapes of ``template``."""
    if mode is not None and ckpt.mode != mode:
        raise CheckpointIncompatibleError(f"checkpoint was trained in mode {ckpt.mode!r}, config requests {mode!r}")
    have = {k: v.shape for k, v in ckpt.params.values.items()}
    want = {k: v.shape for k, v in template.values.items()}
    missing = sorted(set(want) - set(have))
    extra = sorted(set(have) - set(want))
    if missing or extra:
        raise CheckpointIncompatibleError(f"parameter sets differ: missing {missing[:5]}, unexpected {extra[:5]}")
    for k in want:
        if have[k] != want[k]:
            raise CheckpointIncompatibleError(f"parameter {k!r} has shape {have[k]}, expected {want[k]}")
