"""Deterministic binary container used for datasets and model checkpoints.

Layout (all integers little-endian):

    bytes 0..7    magic (8 bytes, file-kind specific, e.g. b"GNPE-DS\\0")
    bytes 8..11   format version, uint32
    bytes 12..15  header length H, uint32
    bytes 16..    header, H bytes of UTF-8 JSON (schema depends on the kind;
                  always includes an "arrays" list naming the blocks below
                  in order)
    then          one ".npy"-formatted block per named array, concatenated

Unlike ``np.savez`` (a zip archive whose entries embed timestamps) this
container is byte-identical for identical content, which the provenance
contract relies on (same seed -> same file hash).
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

from .exceptions import DataError, StructuralError

FORMAT_VERSION = 1


def write_container(path, magic: bytes, header: dict, arrays: dict[str, np.ndarray]) -> None:
    if len(magic) != 8:
        raise StructuralError("container magic must be exactly 8 bytes")
    header = dict(header)
    header["arrays"] = list(arrays.keys())
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header_bytes)))
        fh.write(header_bytes)
        for arr in arrays.values():
            np.lib.format.write_array(fh, np.ascontiguousarray(arr), allow_pickle=False)


def read_container(path, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        got = fh.read(8)
        if got != magic:
            raise DataError(f"bad magic in {path!r}: expected {magic!r}, got {got!r}")
        version, header_len = struct.unpack("<II", fh.read(8))
        if version != FORMAT_VERSION:
            raise DataError(f"unsupported container version {version} in {path!r}")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        arrays = {}
        for name in header["arrays"]:
            arrays[name] = np.lib.format.read_array(fh, allow_pickle=False)
    return header, arrays


def write_container_bytes(magic: bytes, header: dict, arrays: dict[str, np.ndarray]) -> bytes:
    """In-memory variant, used for content hashing."""
    buf = io.BytesIO()
    header = dict(header)
    header["arrays"] = list(arrays.keys())
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    buf.write(magic)
    buf.write(struct.pack("<II", FORMAT_VERSION, len(header_bytes)))
    buf.write(header_bytes)
    for arr in arrays.values():
        np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()
