"""Self-describing binary snapshots of a density field.

Layout (all integers little-endian):

    magic     8 bytes   b"LFDKSNAP"
    version   uint32    format version (currently 1)
    hdr_len   uint32    byte length of the JSON header
    header    JSON      grid descriptors, time, run parameters
    payload   float64   samples, little-endian, C order
              (node order: spatial axes first, velocity axes last)
    checksum  32 bytes  SHA-256 over everything above

Writes go through a temporary file and an atomic rename, so a crashed run
never leaves a torn snapshot behind.  Reads verify magic, version and
checksum and reproduce the payload bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct

import numpy as np

from .fields import DensityField
from .grids import PhaseGrid, build_phase_grid

MAGIC = b"LFDKSNAP"
FORMAT_VERSION = 1


class SnapshotError(IOError):
    """Corrupt, truncated or mismatched snapshot file."""


def _header_dict(f: DensityField, epsilon: float | None,
                 kernel_index: int | None, gamma: float | None) -> dict:
    grid = f.grid
    hdr = {
        "format_version": FORMAT_VERSION,
        "dim": grid.velocity.dim,
        "mode": "homogeneous" if grid.homogeneous else "inhomogeneous",
        "v_max": grid.velocity.half_width,
        "points_per_axis": grid.velocity.points_per_axis,
        "time": f.time,
        "epsilon": epsilon,
        "kernel_index": kernel_index,
        "gamma": gamma,
    }
    if not grid.homogeneous:
        hdr["spatial_extent"] = grid.spatial.extent
        hdr["spatial_points"] = grid.spatial.points_per_axis
        hdr["topology"] = grid.spatial.topology
    return hdr


def write_snapshot(f: DensityField, path: str, epsilon: float | None = None,
                   kernel_index: int | None = None,
                   gamma: float | None = None) -> None:
    header = json.dumps(
        _header_dict(f, epsilon, kernel_index, gamma),
        sort_keys=True).encode("utf-8")
    payload = np.ascontiguousarray(f.samples, dtype="<f8").tobytes()
    body = MAGIC + struct.pack("<II", FORMAT_VERSION, len(header)) \
        + header + payload
    blob = body + hashlib.sha256(body).digest()
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def _grid_from_header(hdr: dict) -> PhaseGrid:
    if hdr["mode"] == "homogeneous":
        return build_phase_grid(hdr["dim"], hdr["v_max"],
                                hdr["points_per_axis"])
    return build_phase_grid(hdr["dim"], hdr["v_max"], hdr["points_per_axis"],
                            spatial_extent=hdr["spatial_extent"],
                            spatial_points=hdr["spatial_points"],
                            topology=hdr["topology"])


def read_snapshot(path: str, expected_grid: PhaseGrid | None = None) -> DensityField:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 8 + 32:
        raise SnapshotError(f"{path}: truncated snapshot")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise SnapshotError(f"{path}: checksum mismatch")
    if body[:len(MAGIC)] != MAGIC:
        raise SnapshotError(f"{path}: not a snapshot file")
    version, hdr_len = struct.unpack_from("<II", body, len(MAGIC))
    if version != FORMAT_VERSION:
        raise SnapshotError(
            f"{path}: format version {version} not supported")
    start = len(MAGIC) + 8
    try:
        hdr = json.loads(body[start:start + hdr_len].decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"{path}: corrupt header") from exc
    grid = _grid_from_header(hdr)
    if expected_grid is not None and grid != expected_grid:
        raise SnapshotError(
            f"{path}: snapshot grid does not match the configured grid")
    payload = body[start + hdr_len:]
    expected_bytes = 8 * int(np.prod(grid.shape))
    if len(payload) != expected_bytes:
        raise SnapshotError(f"{path}: truncated payload")
    samples = np.frombuffer(payload, dtype="<f8").reshape(grid.shape).copy()
    return DensityField(grid=grid, samples=samples, time=hdr["time"])


def read_header(path: str) -> dict:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 8 + 32 or blob[:len(MAGIC)] != MAGIC:
        raise SnapshotError(f"{path}: not a snapshot file")
    _, hdr_len = struct.unpack_from("<II", blob, len(MAGIC))
    start = len(MAGIC) + 8
    return json.loads(blob[start:start + hdr_len].decode("utf-8"))
