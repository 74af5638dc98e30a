"""Analytic ellipsoid phantoms: exact line integrals, Beer-Lambert conversion
with optional Poisson noise, voxelization, and a plain-text phantom format.

Phantom file grammar (one ellipsoid per non-blank line, ``#`` starts a
comment, keys in any order, all seven required)::

    cx=0 cy=0 cz=0 a=1 b=1 c=1 mu=0.01

Lengths in mm, ``mu`` in mm^-1. Semi-axes ``a, b, c`` are aligned with
``x, y, z``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from . import noise
from .data import INTENSITY, LINE_INTEGRAL, ProjectionStack, VoxelGrid, VoxelVolume
from .exceptions import DomainMismatch
from .geometry import CArmGeometry, Point3, ray_endpoints

PHANTOM_KEYS = ("cx", "cy", "cz", "a", "b", "c", "mu")


@dataclass(frozen=True)
class Ellipsoid:
    center: Point3
    semi_axes: tuple
    mu: float

    def __post_init__(self):
        object.__setattr__(self, "center", Point3(*(float(v) for v in self.center)))
        axes = tuple(float(v) for v in self.semi_axes)
        if len(axes) != 3 or min(axes) <= 0:
            raise ValueError(f"semi-axes must be three positive lengths, got {self.semi_axes}")
        object.__setattr__(self, "semi_axes", axes)
        if not math.isfinite(self.mu):
            raise ValueError("mu must be finite")

    @classmethod
    def sphere(cls, center, radius, mu):
        return cls(center, (radius, radius, radius), mu)

    def contains(self, points: np.ndarray) -> np.ndarray:
        q = (np.asarray(points, float) - np.asarray(self.center)) / np.asarray(self.semi_axes)
        return np.einsum("...i,...i->...", q, q) <= 1.0


class EllipsoidPhantom:
    """Ordered, additive collection of ellipsoids."""

    def __init__(self, ellipsoids: Iterable[Ellipsoid]):
        self.ellipsoids = list(ellipsoids)
        if not self.ellipsoids:
            raise ValueError("a phantom needs at least one ellipsoid")
        centers = np.array([e.center for e in self.ellipsoids])
        if np.any(self.attenuation(centers) < -1e-12):
            raise ValueError("net attenuation must be non-negative")

    def __iter__(self):
        return iter(self.ellipsoids)

    def __len__(self):
        return len(self.ellipsoids)

    def __add__(self, other: "EllipsoidPhantom") -> "EllipsoidPhantom":
        return EllipsoidPhantom(self.ellipsoids + other.ellipsoids)

    def __eq__(self, other):
        return isinstance(other, EllipsoidPhantom) and self.ellipsoids == other.ellipsoids

    def attenuation(self, points: np.ndarray) -> np.ndarray:
        """Net mu at each point of an ``(..., 3)`` array."""
        points = np.asarray(points, float)
        out = np.zeros(points.shape[:-1])
        for e in self.ellipsoids:
            out += np.where(e.contains(points), e.mu, 0.0)
        return out


def sphere_phantom(radius: float = 1.0, mu: float = 0.01, center=(0.0, 0.0, 0.0)) -> EllipsoidPhantom:
    return EllipsoidPhantom([Ellipsoid.sphere(center, radius, mu)])


def kidney_phantom(offset: float = 30.0) -> EllipsoidPhantom:
    """Soft-tissue ellipsoid with two embedded stones, shifted toward the
    beta = 0 detector (``-x``) by ``offset`` mm. Values are declared
    defaults, not measurements."""
    c = np.array([-offset, 0.0, 0.0])
    return EllipsoidPhantom([
        Ellipsoid(c, (55.0, 30.0, 30.0), 0.025),
        Ellipsoid.sphere(c + (-5.0, -10.0, 6.0), 3.0, 0.25),
        Ellipsoid.sphere(c + (5.0, 12.0, -8.0), 5.0, 0.25),
    ])


def _chords(e: Ellipsoid, p0: np.ndarray, p1: np.ndarray) -> np.ndarray:
    axes = np.asarray(e.semi_axes)
    q = (p0 - np.asarray(e.center)) / axes
    dq = (p1 - p0) / axes
    A = np.einsum("...i,...i->...", dq, dq)
    B = 2.0 * np.einsum("...i,...i->...", q, dq)
    C = np.einsum("...i,...i->...", q, q) - 1.0
    disc = B * B - 4.0 * A * C
    ok = (disc > 0) & (A > 0)
    root = np.sqrt(np.where(ok, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = np.clip((-B - root) / (2.0 * A), 0.0, 1.0)
        t1 = np.clip((-B + root) / (2.0 * A), 0.0, 1.0)
    seg = np.linalg.norm(p1 - p0, axis=-1)
    return np.where(ok, (t1 - t0) * seg, 0.0)


def chord_length(e: Ellipsoid, ray) -> float:
    """Length (mm) of the segment ``ray = (p0, p1)`` that lies inside ``e``."""
    p0, p1 = (np.asarray(p, float) for p in ray)
    return float(_chords(e, p0, p1))


def forward_project_analytic(ph: EllipsoidPhantom, geom: CArmGeometry) -> ProjectionStack:
    """Exact line integrals along the source -> pixel-center ray of every pixel."""
    src, dst = ray_endpoints(geom)
    out = np.zeros((geom.n_views, geom.nv, geom.nu))
    for k in range(geom.n_views):
        for e in ph:
            out[k] += e.mu * _chords(e, src[k][None, None, :], dst[k])
    # nested negative inserts may leave -1e-17 round-off
    return ProjectionStack(np.maximum(out, 0.0), LINE_INTEGRAL, geom)


def to_intensity(stack: ProjectionStack, i0: float, seed: Optional[int] = None) -> ProjectionStack:
    """Beer-Lambert counts ``i0 exp(-A)``; Poisson-sampled when ``seed`` is given."""
    if stack.domain != LINE_INTEGRAL:
        raise DomainMismatch("to_intensity expects a line-integral stack")
    if not (i0 > 0):
        raise ValueError("i0 must be positive")
    mean = i0 * np.exp(-stack.data)
    data = mean if seed is None else noise.poisson(mean, seed).astype(float)
    meta = dict(stack.meta)
    meta["seed"] = seed
    return ProjectionStack(data, INTENSITY, stack.geom, i0=float(i0), meta=meta)


def voxelize(ph: EllipsoidPhantom, grid: VoxelGrid, supersample: bool = False) -> VoxelVolume:
    """Net attenuation at voxel centers, or the mean of 8 sub-voxel samples."""
    centers = grid.centers()
    if not supersample:
        data = ph.attenuation(centers)
    else:
        h = grid.spacing / 4.0
        data = np.zeros(grid.shape)
        for dx in (-h, h):
            for dy in (-h, h):
                for dz in (-h, h):
                    data += ph.attenuation(centers + np.array([dx, dy, dz]))
        data /= 8.0
    return VoxelVolume(data, grid.spacing, grid.origin)


_RECORD = re.compile(r"^\s*([A-Za-z_]+)\s*=\s*(\S+)\s*$")


def parse_phantom(text: str) -> EllipsoidPhantom:
    ellipsoids = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = {}
        for token in line.replace(",", " ").split():
            m = _RECORD.match(token)
            if not m:
                raise ValueError(f"line {lineno}: malformed token {token!r}")
            key, value = m.group(1).lower(), m.group(2)
            if key not in PHANTOM_KEYS:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
            if key in fields:
                raise ValueError(f"line {lineno}: duplicate key {key!r}")
            try:
                fields[key] = float(value)
            except ValueError:
                raise ValueError(f"line {lineno}: {key}={value!r} is not a number") from None
        missing = [k for k in PHANTOM_KEYS if k not in fields]
        if missing:
            raise ValueError(f"line {lineno}: missing keys {missing}")
        ellipsoids.append(Ellipsoid((fields["cx"], fields["cy"], fields["cz"]),
                                    (fields["a"], fields["b"], fields["c"]), fields["mu"]))
    return EllipsoidPhantom(ellipsoids)


def format_phantom(ph: EllipsoidPhantom) -> str:
    lines = ["# cx cy cz a b c in mm, mu in 1/mm"]
    for e in ph:
        vals = (*e.center, *e.semi_axes, e.mu)
        lines.append(" ".join(f"{k}={v!r}" for k, v in zip(PHANTOM_KEYS, vals)))
    return "\n".join(lines) + "\n"


def load_phantom(path) -> EllipsoidPhantom:
    return parse_phantom(Path(path).read_text())


def save_phantom(ph: EllipsoidPhantom, path) -> None:
    Path(path).write_text(format_phantom(ph))
