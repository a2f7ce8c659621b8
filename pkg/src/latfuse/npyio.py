"""Reading and writing the NPY v1.0 subset used for latents and parameters.

Supported: little-endian float32/float64, C order, 1 to 4 dimensions.  Every
other variant is refused with its own exception class, all derived from
:class:`NpyFormatError`.
"""

from __future__ import annotations

import ast
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensor import as_tensor

MAGIC = b"\x93NUMPY"
VERSION = (1, 0)
# Prefix: magic (6) + version (2) + little-endian uint16 header length (2).
PREFIX_LEN = 10
# numpy itself pads to 64; any multiple of 16 is accepted on read.
WRITE_ALIGN = 64
READ_ALIGN = 16
MAX_RANK = 4

_DESCR_TO_DTYPE = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


class NpyFormatError(ValueError):
    """Base class for rejected NPY files."""


class BadMagicError(NpyFormatError):
    pass


class UnsupportedVersionError(NpyFormatError):
    pass


class HeaderParseError(NpyFormatError):
    """Header text is not a well-formed, aligned, newline-terminated dict."""


class UnsupportedDtypeError(NpyFormatError):
    pass


class FortranOrderError(NpyFormatError):
    pass


class UnsupportedShapeError(NpyFormatError):
    """Rank outside 1..4 or a zero-sized axis."""


class TruncatedPayloadError(NpyFormatError):
    pass


class TrailingDataError(NpyFormatError):
    pass


@dataclass(frozen=True)
class LatentHeader:
    dtype: np.dtype
    shape: tuple
    fortran_order: bool = False

    @property
    def descr(self) -> str:
        return self.dtype.newbyteorder("<").str

    @property
    def count(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    @property
    def payload_bytes(self) -> int:
        return self.count * self.dtype.itemsize

    def encode(self) -> bytes:
        """Full header bytes (prefix, dict text, padding, newline)."""
        text = (
            "{'descr': '%s', 'fortran_order': %r, 'shape': %r, }"
            % (self.descr, self.fortran_order, tuple(int(s) for s in self.shape))
        )
        body_len = len(text) + 1
        pad = -(PREFIX_LEN + body_len) % WRITE_ALIGN
        body = (text + " " * pad + "\n").encode("latin1")
        return MAGIC + bytes(VERSION) + struct.pack("<H", len(body)) + body


def header_size(shape, dtype=np.float32) -> int:
    return len(LatentHeader(np.dtype(dtype), tuple(shape)).encode())


def parse_header(buf: bytes) -> tuple[LatentHeader, int]:
    """Decode the header at the start of ``buf``; returns it and the payload offset."""
    if len(buf) < PREFIX_LEN or buf[:6] != MAGIC:
        raise BadMagicError("not an NPY file (magic string mismatch)")
    version = (buf[6], buf[7])
    if version != VERSION:
        raise UnsupportedVersionError(f"NPY version {version[0]}.{version[1]} not supported; only 1.0")
    (hlen,) = struct.unpack("<H", buf[8:10])
    end = PREFIX_LEN + hlen
    if len(buf) < end:
        raise HeaderParseError(f"header declares {hlen} bytes but file is shorter")
    if end % READ_ALIGN:
        raise HeaderParseError(f"header end offset {end} is not {READ_ALIGN}-byte aligned")
    raw = buf[PREFIX_LEN:end]
    if not raw.endswith(b"\n"):
        raise HeaderParseError("header is not newline-terminated")
    try:
        d = ast.literal_eval(raw.decode("latin1"))
    except (SyntaxError, ValueError) as e:
        raise HeaderParseError(f"header is not a Python literal: {e}") from None
    if not isinstance(d, dict) or set(d) != {"descr", "fortran_order", "shape"}:
        raise HeaderParseError(f"header must hold exactly descr, fortran_order, shape; got {d!r}")

    descr, fortran, shape = d["descr"], d["fortran_order"], d["shape"]
    if not isinstance(descr, str) or descr not in _DESCR_TO_DTYPE:
        raise UnsupportedDtypeError(f"dtype {descr!r} not supported; expected '<f4' or '<f8'")
    if not isinstance(fortran, bool):
        raise HeaderParseError(f"fortran_order must be a bool, got {fortran!r}")
    if fortran:
        raise FortranOrderError("fortran_order=True payloads are not supported")
    if not isinstance(shape, tuple) or not all(isinstance(s, int) and s >= 0 for s in shape):
        raise HeaderParseError(f"shape must be a tuple of non-negative ints, got {shape!r}")
    if not 1 <= len(shape) <= MAX_RANK:
        raise UnsupportedShapeError(f"rank {len(shape)} not supported; expected 1..{MAX_RANK}")
    if 0 in shape:
        raise UnsupportedShapeError(f"zero-sized axis in shape {shape}")
    return LatentHeader(_DESCR_TO_DTYPE[descr], shape), end


def _decode(buf: bytes) -> np.ndarray:
    header, offset = parse_header(buf)
    got = len(buf) - offset
    if got < header.payload_bytes:
        raise TruncatedPayloadError(
            f"payload has {got} bytes, shape {header.shape} needs {header.payload_bytes}"
        )
    if got > header.payload_bytes:
        raise TrailingDataError(
            f"{got - header.payload_bytes} unexpected bytes after the payload"
        )
    arr = np.frombuffer(buf, dtype=header.dtype, count=header.count, offset=offset)
    return arr.reshape(header.shape).astype(header.dtype.newbyteorder("="))


def read_array(path) -> np.ndarray:
    """Read an NPY file keeping its stored shape."""
    return _decode(Path(path).read_bytes())


def read_latent(path) -> np.ndarray:
    """Read an NPY file as an NCHW tensor, left-padding the shape with ones."""
    arr = read_array(path)
    return as_tensor(arr.reshape((1,) * (4 - arr.ndim) + arr.shape))


def encode_array(arr) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype not in (np.float32, np.float64):
        raise TypeError(f"only float32/float64 arrays can be written, got {arr.dtype}")
    if not 1 <= arr.ndim <= MAX_RANK:
        raise UnsupportedShapeError(f"rank {arr.ndim} not supported; expected 1..{MAX_RANK}")
    le = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))
    return LatentHeader(le.dtype, le.shape).encode() + le.tobytes(order="C")


def write_latent(t, path) -> None:
    """Write ``t`` (rank 1..4, float32/float64) as NPY v1.0, little-endian, C order."""
    Path(path).write_bytes(encode_array(t))
