"""Versioned binary container shared by dataset and checkpoint files.

Layout (all integers little-endian)::

    offset  size  field
    0       8     magic  b"FMMSBLOB"
    8       8     kind   ASCII tag, NUL padded (b"DATASET\\0", b"MODEL\\0\\0\\0")
    16      4     u32    format version
    20      4     u32    header length in bytes (n)
    24      n     header UTF-8 JSON, keys sorted:
                  {"meta": {...}, "arrays": [{"name", "dtype", "shape"}, ...]}
    24+n    ...   array payloads, C order, in header order, dtype as declared
                  (always an explicit little-endian dtype string such as "<f8")
    end-4   4     u32    CRC-32 of every preceding byte

A file is accepted only when magic, kind, version, total length and CRC all
match; anything else raises before a partial object can be built.
"""

import json
import os
import struct
import zlib

import numpy as np

from .errors import FormatVersionMismatch, IoError

MAGIC = b"FMMSBLOB"
_PREFIX = struct.Struct("<8s8sII")


def _kind_tag(kind):
    raw = kind.encode("ascii")
    if len(raw) > 8:
        raise ValueError(f"kind tag too long: {kind!r}")
    return raw.ljust(8, b"\0")


def _le_dtype(a):
    dt = np.dtype(a.dtype).newbyteorder("<")
    return dt.str


def encode(kind, version, meta, arrays):
    """Serialize ``arrays`` (ordered mapping name -> ndarray) plus JSON ``meta``."""
    specs = []
    payload = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        dt = _le_dtype(arr)
        specs.append({"name": name, "dtype": dt, "shape": list(arr.shape)})
        payload.append(arr.astype(dt, copy=False).tobytes(order="C"))
    header = json.dumps({"meta": meta, "arrays": specs}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = _PREFIX.pack(MAGIC, _kind_tag(kind), version, len(header)) + header + b"".join(payload)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def decode(kind, version, blob):
    """Inverse of :func:`encode`; returns ``(meta, arrays)``."""
    if len(blob) < _PREFIX.size + 4:
        raise FormatVersionMismatch("file too short to hold a container header")
    magic, tag, ver, hlen = _PREFIX.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatVersionMismatch("bad magic string")
    if tag != _kind_tag(kind):
        found = tag.rstrip(b"\0").decode("ascii", "replace")
        raise FormatVersionMismatch(f"expected {kind!r} container, found {found!r}")
    if ver != version:
        raise FormatVersionMismatch(f"unsupported {kind} format version {ver} (expected {version})")
    (crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != crc:
        raise IoError("checksum mismatch: file truncated or corrupted")
    start = _PREFIX.size
    try:
        header = json.loads(blob[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IoError(f"unreadable header: {exc}") from exc
    pos = start + hlen
    arrays = {}
    for spec in header["arrays"]:
        dt = np.dtype(spec["dtype"])
        shape = tuple(spec["shape"])
        nbytes = dt.itemsize * int(np.prod(shape, dtype=np.int64))
        if pos + nbytes > len(blob) - 4:
            raise IoError(f"payload for {spec['name']!r} runs past end of file")
        arr = np.frombuffer(blob, dtype=dt, count=nbytes // dt.itemsize, offset=pos).reshape(shape)
        arrays[spec["name"]] = arr.astype(dt.newbyteorder("="), copy=True)
        pos += nbytes
    if pos != len(blob) - 4:
        raise IoError("trailing bytes after last array")
    return header["meta"], arrays


def write_file(path, blob):
    if not path:
        raise IoError("empty path")
    path = os.fspath(path)
    tmp = path + ".tmp"
    try:
        with open(tmp, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_file(path):
    if not path:
        raise IoError("empty path")
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
