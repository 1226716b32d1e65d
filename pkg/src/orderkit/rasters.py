"""Binary PGM (P5) instance masks and grayscale PFM disparity maps."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from orderkit.errors import SyntaxFormatError, UnsupportedLabelError


class UnsupportedRasterError(SyntaxFormatError, UnsupportedLabelError):
    pass


@dataclass(frozen=True, eq=False)
class InstanceMask:
    """Boolean pixel set on an H x W grid."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=bool)
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_pixels(cls, pixels, shape: tuple[int, int]) -> "InstanceMask":
        arr = np.zeros(shape, dtype=bool)
        for r, c in pixels:
            arr[r, c] = True
        return cls(arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def area(self) -> int:
        return int(self.data.sum())

    @property
    def bottom_row(self) -> int | None:
        rows = np.flatnonzero(self.data.any(axis=1))
        return int(rows[-1]) if rows.size else None

    def pixels(self) -> frozenset[tuple[int, int]]:
        return frozenset((int(r), int(c)) for r, c in zip(*np.nonzero(self.data)))

    def __eq__(self, other):
        if not isinstance(other, InstanceMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    def __hash__(self):
        return hash((self.shape, self.data.tobytes()))


def as_bool_mask(mask) -> np.ndarray:
    if isinstance(mask, InstanceMask):
        return mask.data
    return np.asarray(mask, dtype=bool)


_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*([^\s#]+)")


def _header_fields(buf: bytes, n: int) -> tuple[list[bytes], int]:
    pos, out = 0, []
    for _ in range(n):
        m = _TOKEN.match(buf, pos)
        if not m:
            raise SyntaxFormatError("truncated header", offset=pos)
        out.append(m.group(1))
        pos = m.end()
    return out, pos


def _pgm_header(buf: bytes) -> tuple[int, int, int, int]:
    if buf[:2] != b"P5":
        raise SyntaxFormatError("not a binary PGM (expected magic 'P5')", offset=0)
    fields, pos = _header_fields(buf, 4)
    try:
        width, height, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise SyntaxFormatError("non-numeric PGM header field", offset=pos) from None
    if width <= 0 or height <= 0:
        raise SyntaxFormatError("PGM dimensions must be positive", offset=pos)
    if not 0 < maxval < 256:
        raise UnsupportedRasterError(f"only 8-bit PGM supported, maxval={maxval}", offset=pos)
    if pos >= len(buf) or buf[pos : pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise SyntaxFormatError("missing whitespace after PGM header", offset=pos)
    return width, height, maxval, pos + 1


def read_pgm(buf: bytes) -> tuple[np.ndarray, int]:
    """Decode a P5 file into a ``uint8`` array plus its maxval."""
    width, height, maxval, start = _pgm_header(buf)
    need = width * height
    payload = buf[start : start + need]
    if len(payload) < need:
        raise SyntaxFormatError(f"truncated PGM payload: {len(payload)} of {need} bytes", offset=len(buf))
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy(), maxval


def load_mask(buf: bytes) -> InstanceMask:
    arr, _ = read_pgm(buf)
    return InstanceMask(arr > 0)


def load_plane(buf: bytes) -> np.ndarray:
    """Intensity plane scaled to [0, 1] by the file's maxval."""
    arr, maxval = read_pgm(buf)
    return arr.astype(np.float64) / maxval


def write_pgm(arr: np.ndarray, maxval: int = 255) -> bytes:
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ValueError("PGM needs a 2-D array")
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * maxval
    h, w = arr.shape
    return f"P5\n{w} {h}\n{maxval}\n".encode("ascii") + arr.astype(np.uint8).tobytes()


def dump_mask(mask: InstanceMask) -> bytes:
    return write_pgm(mask.data)


def load_disparity(buf: bytes) -> np.ndarray:
    """Decode a grayscale PFM into a top-down ``float64`` grid.

    A negative scale field means little-endian samples. Rows are stored
    bottom-up on disk. Negative values are accepted; NaN or Inf are not.
    """
    if buf[:2] == b"PF":
        raise UnsupportedRasterError("color PFM ('PF') is not supported", offset=0)
    if buf[:2] != b"Pf":
        raise SyntaxFormatError("not a grayscale PFM (expected magic 'Pf')", offset=0)
    fields, pos = _header_fields(buf, 4)
    try:
        width, height = int(fields[1]), int(fields[2])
        scale = float(fields[3])
    except ValueError:
        raise SyntaxFormatError("malformed PFM header", offset=pos) from None
    if width <= 0 or height <= 0:
        raise SyntaxFormatError("PFM dimensions must be positive", offset=pos)
    if scale == 0 or not np.isfinite(scale):
        raise SyntaxFormatError("PFM scale must be finite and nonzero", offset=pos)
    if buf[pos : pos + 1] not in (b"\n", b" ", b"\r", b"\t"):
        raise SyntaxFormatError("missing whitespace after PFM header", offset=pos)
    start = pos + 1
    need = 4 * width * height
    payload = buf[start : start + need]
    if len(payload) < need:
        raise SyntaxFormatError(f"truncated PFM payload: {len(payload)} of {need} bytes", offset=len(buf))
    dtype = "<f4" if scale < 0 else ">f4"
    grid = np.frombuffer(payload, dtype=dtype).reshape(height, width)[::-1].astype(np.float64)
    if not np.all(np.isfinite(grid)):
        r, c = np.argwhere(~np.isfinite(grid))[0]
        raise SyntaxFormatError(f"non-finite disparity at row {r}, column {c}")
    return grid


def dump_disparity(grid: np.ndarray, little_endian: bool = True) -> bytes:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError("PFM needs a 2-D array")
    h, w = grid.shape
    scale = -1.0 if little_endian else 1.0
    header = f"Pf\n{w} {h}\n{scale}\n".encode("ascii")
    return header + grid[::-1].astype("<f4" if little_endian else ">f4").tobytes()
