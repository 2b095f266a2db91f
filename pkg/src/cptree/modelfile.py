"""Self-describing binary model files.

Layout::

    b"CPTMODEL" | u32 format version | u64 header length | header JSON | array blobs

The header is UTF-8 JSON with sorted keys.  It carries the method tag,
hashing parameters, the model's configuration and a directory of arrays
(name, dtype, shape, byte offset).  Arrays follow as raw little-endian
bytes in directory order.  Writing the same model twice gives identical
bytes.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .baselines import OvaModel, TableModel
from .cpecoc import KWayTree
from .cpt import Tree
from .data import DEFAULT_HASH_SEED
from .errors import ModelFormatError
from .pecoc import PecocModel

MAGIC = b"CPTMODEL"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")

TREE_METHODS = ("cpt-online", "cpt-random", "cpt-balanced", "cpt-static")
METHODS = TREE_METHODS + ("pecoc", "cpecoc", "ova", "table")

_CLASSES = {
    **{m: Tree for m in TREE_METHODS},
    "pecoc": PecocModel,
    "cpecoc": KWayTree,
    "ova": OvaModel,
    "table": TableModel,
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(model, method: str, hash_seed: int = DEFAULT_HASH_SEED, extra: dict | None = None) -> bytes:
    if method not in METHODS:
        raise ModelFormatError(f"unknown method tag {method!r}")
    if not isinstance(model, _CLASSES[method]):
        raise ModelFormatError(f"method {method!r} does not match {type(model).__name__}")
    state, arrays = model.to_state()
    directory, blobs, offset = [], [], 0
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        a = a.astype(a.dtype.newbyteorder("<"), copy=False)
        raw = a.tobytes()
        directory.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape), "offset": offset})
        blobs.append(raw)
        offset += len(raw)
    header = {
        "method": method,
        "hash_seed": int(hash_seed),
        "state": state,
        "arrays": directory,
        "extra": extra or {},
    }
    head = json.dumps(_jsonable(header), sort_keys=True, separators=(",", ":"), allow_nan=False).encode()
    return _PREFIX.pack(MAGIC, FORMAT_VERSION, len(head)) + head + b"".join(blobs)


def loads(buf: bytes):
    """Returns ``(model, header)``."""
    if len(buf) < _PREFIX.size:
        raise ModelFormatError("file too short for a model header")
    magic, version, head_len = _PREFIX.unpack_from(buf)
    if magic != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format version {version}")
    start = _PREFIX.size
    try:
        header = json.loads(buf[start : start + head_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"corrupt header: {exc}") from None
    body = memoryview(buf)[start + head_len :]
    arrays = {}
    try:
        for entry in header["arrays"]:
            dtype = np.dtype(entry["dtype"])
            count = int(np.prod(entry["shape"], dtype=np.int64))
            end = entry["offset"] + count * dtype.itemsize
            if end > len(body):
                raise ModelFormatError(f"array {entry['name']!r} runs past the end of the file")
            a = np.frombuffer(body[entry["offset"] : end], dtype=dtype).reshape(entry["shape"])
            arrays[entry["name"]] = a.astype(dtype.newbyteorder("="))
        method = header["method"]
        cls = _CLASSES.get(method)
        if cls is None:
            raise ModelFormatError(f"unknown method tag {method!r}")
        model = cls.from_state(header["state"], arrays)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"malformed model file: {exc!r}") from None
    return model, header


def save(path, model, method: str, hash_seed: int = DEFAULT_HASH_SEED, extra: dict | None = None) -> Path:
    path = Path(path)
    data = dumps(model, method, hash_seed, extra)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)
    return path


def load(path):
    return loads(Path(path).read_bytes())
