"""On-disk formats.

Stacks and volumes are stored as a raw little-endian float32 payload
(``<name>.raw``) next to a JSON sidecar (``<name>.json``).

* Stack payload order: view-major, then detector rows (v), then columns (u).
* Volume payload order: x-major slices, each a row-major y-by-z plane.

Slices export as 16-bit binary PGM (P5, maxval 65535, big-endian samples);
image rows follow z, columns follow y.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .data import DOMAINS, INTENSITY, ProjectionStack, VoxelVolume
from .exceptions import MissingField, OutOfBounds, SizeMismatch, UnsupportedVersion
from .geometry import CArmGeometry

FORMAT_VERSION = 1
DTYPE = "f32le"
STACK_FIELDS = ("version", "n_views", "nu", "nv", "pitch_mm", "d_mm", "angles_deg", "domain", "i0", "dtype")
VOLUME_FIELDS = ("version", "nx", "ny", "nz", "spacing_mm", "origin_mm", "dtype")


def _paths(path):
    path = Path(path)
    if path.suffix in (".raw", ".json"):
        path = path.with_suffix("")
    return path.with_name(path.name + ".raw"), path.with_name(path.name + ".json")


def _read_sidecar(path, fields):
    meta = json.loads(Path(path).read_text())
    if "version" not in meta:
        raise MissingField("sidecar has no 'version'")
    if meta["version"] != FORMAT_VERSION:
        raise UnsupportedVersion(f"sidecar version {meta['version']!r}, expected {FORMAT_VERSION}")
    for key in fields:
        if key not in meta:
            raise MissingField(f"sidecar is missing {key!r}")
    if meta["dtype"] != DTYPE:
        raise UnsupportedVersion(f"unsupported dtype {meta['dtype']!r}")
    return meta


def _read_payload(path, count):
    raw = Path(path).read_bytes()
    if len(raw) != 4 * count:
        raise SizeMismatch(f"{path}: payload has {len(raw)} bytes, expected {4 * count}")
    return np.frombuffer(raw, dtype="<f4")


def _write_json(path, meta):
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def write_stack(stack: ProjectionStack, path):
    """Write ``<path>.raw`` and ``<path>.json``; returns the two paths."""
    raw, side = _paths(path)
    g = stack.geom
    meta = {
        "version": FORMAT_VERSION,
        "n_views": g.n_views,
        "nu": g.nu,
        "nv": g.nv,
        "pitch_mm": g.pitch,
        "d_mm": g.d,
        "angles_deg": list(g.angles),
        "domain": stack.domain,
        "i0": stack.i0,
        "dtype": DTYPE,
    }
    raw.parent.mkdir(parents=True, exist_ok=True)
    raw.write_bytes(stack.data.astype("<f4").tobytes())
    _write_json(side, meta)
    return raw, side


def read_stack(path) -> ProjectionStack:
    raw, side = _paths(path)
    meta = _read_sidecar(side, STACK_FIELDS)
    if meta["domain"] not in DOMAINS:
        raise ValueError(f"unknown domain {meta['domain']!r}")
    geom = CArmGeometry(meta["d_mm"], tuple(meta["angles_deg"]), meta["nu"], meta["nv"], meta["pitch_mm"])
    if geom.n_views != meta["n_views"]:
        raise SizeMismatch("angles_deg length does not match n_views")
    data = _read_payload(raw, geom.n_views * geom.nv * geom.nu).reshape(geom.n_views, geom.nv, geom.nu)
    i0 = meta["i0"] if meta["domain"] == INTENSITY else None
    return ProjectionStack(data.astype(float), meta["domain"], geom, i0=i0)


def write_volume(vol: VoxelVolume, path):
    raw, side = _paths(path)
    nx, ny, nz = vol.shape
    meta = {
        "version": FORMAT_VERSION,
        "nx": nx,
        "ny": ny,
        "nz": nz,
        "spacing_mm": vol.spacing,
        "origin_mm": list(vol.origin),
        "dtype": DTYPE,
    }
    raw.parent.mkdir(parents=True, exist_ok=True)
    raw.write_bytes(vol.data.astype("<f4").tobytes())
    _write_json(side, meta)
    return raw, side


def read_volume(path) -> VoxelVolume:
    raw, side = _paths(path)
    meta = _read_sidecar(side, VOLUME_FIELDS)
    shape = (meta["nx"], meta["ny"], meta["nz"])
    if not meta["spacing_mm"] > 0:
        raise ValueError("spacing_mm must be positive")
    data = _read_payload(raw, int(np.prod(shape))).reshape(shape)
    return VoxelVolume(data.astype(float), meta["spacing_mm"], tuple(meta["origin_mm"]))


def window_to_uint16(values, lo: float, hi: float) -> np.ndarray:
    """``round((clip(x, lo, hi) - lo) / (hi - lo) * 65535)`` with halves rounded up."""
    if not lo < hi:
        raise ValueError(f"window needs lo < hi, got [{lo}, {hi}]")
    scaled = (np.clip(np.asarray(values, float), lo, hi) - lo) / (hi - lo) * 65535.0
    return np.floor(scaled + 0.5).astype(np.uint16)


def export_slice_pgm(vol: VoxelVolume, plane: int, window, path):
    """Write depth plane ``plane`` (x index) as a 16-bit P5 PGM."""
    lo, hi = window
    if not (0 <= plane < vol.shape[0]):
        raise OutOfBounds(f"plane {plane} outside [0, {vol.shape[0]})")
    pixels = window_to_uint16(vol.data[plane].T, lo, hi)
    height, width = pixels.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(f"P5\n{width} {height}\n65535\n".encode("ascii"))
        fh.write(pixels.astype(">u2").tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    """Minimal reader for the P5 files written above."""
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    width, height = (int(v) for v in parts[1].split())
    maxval = int(parts[2])
    dtype = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(parts[3], dtype=dtype).reshape(height, width)
