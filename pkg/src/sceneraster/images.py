"""Deterministic image and depth-grid encoders.

Binary PPM (P6, maxval 255) is the golden-test surface: identical
framebuffers encode to identical bytes.  PNG output is a minimal zlib-based
writer for viewing convenience.  Depth grids are raw little-endian float32
preceded by an 8-byte header of two uint32 (width, height).
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .raster import Framebuffer


def ppm_bytes(fb: Framebuffer) -> bytes:
    header = f"P6\n{fb.width} {fb.height}\n255\n".encode("ascii")
    return header + fb.color.tobytes()


def save_ppm(fb: Framebuffer, path) -> None:
    Path(path).write_bytes(ppm_bytes(fb))


def load_ppm(path) -> np.ndarray:
    """Read a binary P6 file back into an (H, W, 3) uint8 array."""
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM")
    width, height = map(int, parts[1].split())
    if parts[2] != b"255":
        raise ValueError(f"{path}: unsupported maxval {parts[2]!r}")
    pixels = np.frombuffer(parts[3], dtype=np.uint8, count=width * height * 3)
    return pixels.reshape(height, width, 3)


def png_bytes(fb: Framebuffer) -> bytes:
    """Encode as 8-bit RGB PNG (filter 0 rows, fixed compression level)."""

    def chunk(tag: bytes, payload: bytes) -> bytes:
        crc = zlib.crc32(payload, zlib.crc32(tag))
        return struct.pack(">I", len(payload)) + tag + payload + struct.pack(">I", crc)

    raw = bytearray()
    for row in fb.color:
        raw.append(0)
        raw.extend(row.tobytes())
    header = struct.pack(">IIBBBBB", fb.width, fb.height, 8, 2, 0, 0, 0)
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", header)
        + chunk(b"IDAT", zlib.compress(bytes(raw), 6))
        + chunk(b"IEND", b"")
    )


def save_png(fb: Framebuffer, path) -> None:
    Path(path).write_bytes(png_bytes(fb))


def depth_bytes(fb: Framebuffer) -> bytes:
    header = struct.pack("<II", fb.width, fb.height)
    return header + fb.depth.astype("<f4").tobytes()


def save_depth(fb: Framebuffer, path) -> None:
    Path(path).write_bytes(depth_bytes(fb))


def load_depth(path) -> np.ndarray:
    data = Path(path).read_bytes()
    width, height = struct.unpack_from("<II", data)
    grid = np.frombuffer(data, dtype="<f4", offset=8, count=width * height)
    return grid.reshape(height, width)
