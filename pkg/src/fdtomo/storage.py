"""Lossless on-disk formats and deterministic text writers.

Sinograms go to a fixed little-endian binary layout (magic "HRTS") that
round-trips complex doubles bit-exactly; reconstruction grids use the
analogous "HRTG" layout for real doubles. Both carry a length-prefixed
JSON metadata trailer. CSV/JSON writers pin byte-level determinism:
sorted keys, repr floats, "\n" newlines.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .geometry import DiskDomain, SinogramGrid

_SINO_MAGIC = b"HRTS"
_GRID_MAGIC = b"HRTG"
_VERSION = 1
_SINO_HEAD = struct.Struct("<4sHII ddd".replace(" ", ""))
_GRID_HEAD = struct.Struct("<4sHI dd".replace(" ", ""))


@dataclass(frozen=True)
class SinogramRecord:
    """One stored sinogram: samples plus the geometry that defines them."""

    data: np.ndarray
    n_s: int
    n_theta: int
    r: float
    D: float
    omega: float
    meta: dict

    def grid(self) -> SinogramGrid:
        return SinogramGrid(self.n_s, self.n_theta, DiskDomain(self.r, self.D))


@dataclass(frozen=True)
class GridRecord:
    """One stored reconstruction lattice (real values, square)."""

    values: np.ndarray
    n: int
    extent: float
    omega: float
    meta: dict


def _encode_meta(meta: dict) -> bytes:
    body = json.dumps(meta, sort_keys=True, separators=(",", ":"),
                      allow_nan=False).encode("utf-8")
    return struct.pack("<I", len(body)) + body


def _decode_meta(buf: bytes, offset: int, path: str) -> dict:
    if len(buf) < offset + 4:
        raise ValueError(f"{path}: truncated metadata length")
    (length,) = struct.unpack_from("<I", buf, offset)
    start = offset + 4
    if len(buf) != start + length:
        raise ValueError(f"{path}: metadata length does not match file size")
    return json.loads(buf[start : start + length].decode("utf-8"))


def write_sinogram(path: str, data: np.ndarray, grid: SinogramGrid,
                   omega: float, meta: dict | None = None) -> None:
    """Write complex samples of shape (n_s, n_theta) in s-major order."""
    arr = np.ascontiguousarray(np.asarray(data, dtype="<c16"))
    if arr.shape != (grid.n_s, grid.n_theta):
        raise ValueError(
            f"data shape {arr.shape} does not match grid "
            f"({grid.n_s}, {grid.n_theta})")
    head = _SINO_HEAD.pack(_SINO_MAGIC, _VERSION, grid.n_s, grid.n_theta,
                           grid.domain.r, grid.domain.D, float(omega))
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(arr.tobytes(order="C"))
        fh.write(_encode_meta(meta or {}))


def read_sinogram(path: str) -> SinogramRecord:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < _SINO_HEAD.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, n_s, n_theta, r, D, omega = _SINO_HEAD.unpack_from(buf, 0)
    if magic != _SINO_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, not a sinogram file")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    count = n_s * n_theta
    start = _SINO_HEAD.size
    end = start + 16 * count
    if len(buf) < end:
        raise ValueError(f"{path}: truncated sample block")
    data = np.frombuffer(buf[start:end], dtype="<c16").reshape(n_s, n_theta)
    meta = _decode_meta(buf, end, path)
    return SinogramRecord(data=data.copy(), n_s=n_s, n_theta=n_theta, r=r,
                          D=D, omega=omega, meta=meta)


def write_grid(path: str, values: np.ndarray, extent: float, omega: float,
               meta: dict | None = None) -> None:
    """Write a square real-valued lattice (row-major)."""
    arr = np.ascontiguousarray(np.asarray(values, dtype="<f8"))
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"grid values must be square, got {arr.shape}")
    head = _GRID_HEAD.pack(_GRID_MAGIC, _VERSION, arr.shape[0],
                           float(extent), float(omega))
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(arr.tobytes(order="C"))
        fh.write(_encode_meta(meta or {}))


def read_grid(path: str) -> GridRecord:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < _GRID_HEAD.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, n, extent, omega = _GRID_HEAD.unpack_from(buf, 0)
    if magic != _GRID_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, not a grid file")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    start = _GRID_HEAD.size
    end = start + 8 * n * n
    if len(buf) < end:
        raise ValueError(f"{path}: truncated value block")
    values = np.frombuffer(buf[start:end], dtype="<f8").reshape(n, n)
    meta = _decode_meta(buf, end, path)
    return GridRecord(values=values.copy(), n=n, extent=extent, omega=omega,
                      meta=meta)


def format_cell(x) -> str:
    """Shortest round-trip decimal for floats; plain str otherwise."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def write_csv(path: str, header: list, rows: list) -> None:
    """UTF-8 CSV, header row, \\n newlines, repr-exact floats."""
    lines = [",".join(str(h) for h in header)]
    for row in rows:
        lines.append(",".join(format_cell(c) for c in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_json(path: str, obj) -> None:
    """UTF-8 JSON with sorted keys and a trailing newline."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2, allow_nan=False))
        fh.write("\n")
