"""CCV1 binary container for datacubes, masks and snapshots.

Layout (all little-endian)::

    offset 0   4 bytes   magic b"CCV1"
    offset 4   uint32    rows
    offset 8   uint32    cols
    offset 12  uint32    frames (1 for 2D data)
    offset 16  float32[rows * cols * frames], frame-major, row-major within a frame

Arrays are returned as float32 with shape (rows, cols, frames).
"""

import struct

import numpy as np

MAGIC = b"CCV1"
HEADER = struct.Struct("<4sIII")
MAX_ELEMENTS = 2**31 - 1

# Distinct process exit codes, reused by the CLI.
ERR_MAGIC = 10
ERR_TRUNCATED = 11
ERR_DIMENSIONS = 12
ERR_TRAILING = 13


class CCV1FormatError(ValueError):
    def __init__(self, message, code, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.code = code
        self.offset = offset


def encode(data):
    arr = np.asarray(data)
    if arr.ndim == 2:
        arr = arr[:, :, np.newaxis]
    if arr.ndim != 3:
        raise ValueError(f"CCV1 stores 2D or 3D arrays, got shape {arr.shape}")
    rows, cols, frames = arr.shape
    if min(arr.shape) < 1 or rows * cols * frames > MAX_ELEMENTS or max(arr.shape) > 0xFFFFFFFF:
        raise ValueError(f"shape {arr.shape} cannot be stored in CCV1")
    payload = np.ascontiguousarray(arr.transpose(2, 0, 1), dtype="<f4").tobytes()
    return HEADER.pack(MAGIC, rows, cols, frames) + payload


def decode(buf):
    buf = bytes(buf)
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise CCV1FormatError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}", ERR_MAGIC, 0)
    if len(buf) < HEADER.size:
        raise CCV1FormatError("truncated header", ERR_TRUNCATED, len(buf))
    _, rows, cols, frames = HEADER.unpack_from(buf)
    for i, n in enumerate((rows, cols, frames)):
        if n == 0:
            raise CCV1FormatError("zero dimension in header", ERR_DIMENSIONS, 4 + 4 * i)
    count = rows * cols * frames
    if count > MAX_ELEMENTS:
        raise CCV1FormatError(
            f"dimensions {rows}x{cols}x{frames} exceed {MAX_ELEMENTS} elements", ERR_DIMENSIONS, 4
        )
    need = HEADER.size + 4 * count
    if len(buf) < need:
        have = (len(buf) - HEADER.size) // 4
        raise CCV1FormatError(
            f"truncated payload: header promises {count} floats, found {have}", ERR_TRUNCATED, len(buf)
        )
    if len(buf) > need:
        raise CCV1FormatError(f"{len(buf) - need} trailing bytes after payload", ERR_TRAILING, need)
    flat = np.frombuffer(buf, dtype="<f4", count=count, offset=HEADER.size)
    return flat.reshape(frames, rows, cols).transpose(1, 2, 0).astype(np.float32)


def write_ccv1(path, data):
    with open(path, "wb") as fh:
        fh.write(encode(data))


def read_ccv1(path):
    with open(path, "rb") as fh:
        return decode(fh.read())


def write_pgm(path, frame, peak=None):
    """8-bit binary PGM of one frame, scaled so ``peak`` maps to 255 (lossy)."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 2:
        raise ValueError("PGM export takes a single 2D frame")
    peak = float(frame.max()) if peak is None else float(peak)
    scaled = np.zeros_like(frame) if peak <= 0 else np.clip(frame / peak, 0.0, 1.0)
    pixels = np.rint(scaled * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{frame.shape[1]} {frame.shape[0]}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
