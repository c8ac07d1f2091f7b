"""Deterministic binary container for named float arrays plus JSON metadata.

Layout: magic line, 8-byte little-endian header length, UTF-8 JSON
header (sorted keys), then the raw C-order little-endian array bytes in
header order. Identical inputs produce identical bytes, which is what
the rerunnability contract of the CLI needs (zip-based formats embed
timestamps and do not).
"""

from __future__ import annotations

import json

import numpy as np

from .errors import CorruptFile, VersionMismatch

_MAGIC = b"discog-arrays v1\n"


def save_arrays(path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    order = sorted(arrays)
    header = {
        "meta": meta,
        "arrays": [
            {"name": name, "dtype": str(arrays[name].dtype), "shape": list(arrays[name].shape)}
            for name in order
        ],
    }
    blob = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for name in order:
            arr = np.ascontiguousarray(arrays[name])
            if arr.dtype.byteorder == ">":
                arr = arr.astype(arr.dtype.newbyteorder("<"))
            fh.write(arr.tobytes())


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if not magic.startswith(b"discog-arrays"):
            raise CorruptFile(f"{path} is not an array container")
        if magic != _MAGIC:
            raise VersionMismatch(f"unsupported container version {magic!r}")
        raw_len = fh.read(8)
        if len(raw_len) != 8:
            raise CorruptFile(f"{path} is truncated in the header")
        header_len = int.from_bytes(raw_len, "little")
        blob = fh.read(header_len)
        if len(blob) != header_len:
            raise CorruptFile(f"{path} is truncated in the header")
        try:
            header = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CorruptFile(f"{path}: bad header ({exc})") from None
        arrays: dict[str, np.ndarray] = {}
        for spec in header["arrays"]:
            dtype = np.dtype(spec["dtype"])
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = fh.read(count * dtype.itemsize)
            if len(data) != count * dtype.itemsize:
                raise CorruptFile(f"{path} is truncated in array {spec['name']!r}")
            arrays[spec["name"]] = np.frombuffer(data, dtype=dtype).reshape(shape).copy()
        return arrays, header["meta"]
