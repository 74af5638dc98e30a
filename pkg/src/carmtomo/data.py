"""Containers shared by the simulation, projection and reconstruction code."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import CArmGeometry, Point3

LINE_INTEGRAL = "line_integral"
INTENSITY = "intensity"
DOMAINS = (LINE_INTEGRAL, INTENSITY)


@dataclass(frozen=True)
class VoxelGrid:
    """Isotropic voxel lattice. ``origin`` is the center of voxel (0, 0, 0)."""

    shape: tuple
    spacing: float
    origin: Point3

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        if len(shape) != 3 or min(shape) < 1:
            raise ValueError(f"grid shape must be three positive ints, got {self.shape}")
        if not (self.spacing > 0):
            raise ValueError(f"grid spacing must be positive, got {self.spacing}")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", float(self.spacing))
        object.__setattr__(self, "origin", Point3(*(float(c) for c in self.origin)))

    @classmethod
    def centered(cls, shape, spacing, center=(0.0, 0.0, 0.0)) -> "VoxelGrid":
        origin = [c - (n - 1) / 2.0 * spacing for c, n in zip(center, shape)]
        return cls(tuple(shape), spacing, Point3(*origin))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def lower(self) -> np.ndarray:
        """Corner of the bounding box (outer face of voxel 0)."""
        return np.asarray(self.origin) - 0.5 * self.spacing

    @property
    def upper(self) -> np.ndarray:
        return self.lower + np.asarray(self.shape) * self.spacing

    def axis(self, k: int) -> np.ndarray:
        return self.origin[k] + np.arange(self.shape[k]) * self.spacing

    def centers(self) -> np.ndarray:
        """``(nx, ny, nz, 3)`` voxel-center coordinates."""
        return np.stack(np.meshgrid(self.axis(0), self.axis(1), self.axis(2), indexing="ij"), axis=-1)

    def index_of(self, point) -> tuple:
        """Nearest voxel index to a world point (may fall outside the grid)."""
        return tuple(int(round((p - o) / self.spacing)) for p, o in zip(point, self.origin))


@dataclass
class VoxelVolume:
    """Attenuation map ``data[ix, iy, iz]`` in mm^-1."""

    data: np.ndarray
    spacing: float
    origin: Point3

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise ValueError(f"volume data must be 3-D, got shape {self.data.shape}")
        if not (self.spacing > 0):
            raise ValueError("volume spacing must be positive")
        self.origin = Point3(*(float(c) for c in self.origin))

    @classmethod
    def zeros(cls, grid: VoxelGrid) -> "VoxelVolume":
        return cls(np.zeros(grid.shape), grid.spacing, grid.origin)

    @classmethod
    def full(cls, grid: VoxelGrid, value: float) -> "VoxelVolume":
        return cls(np.full(grid.shape, float(value)), grid.spacing, grid.origin)

    @property
    def grid(self) -> VoxelGrid:
        return VoxelGrid(self.data.shape, self.spacing, self.origin)

    @property
    def shape(self) -> tuple:
        return self.data.shape


@dataclass
class ProjectionStack:
    """``data[view, row(v), column(u)]`` in either line-integral or intensity domain."""

    data: np.ndarray
    domain: str
    geom: CArmGeometry
    i0: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}")
        expected = (self.geom.n_views, self.geom.nv, self.geom.nu)
        if self.data.shape != expected:
            raise ValueError(f"stack shape {self.data.shape} does not match geometry {expected}")
        if self.domain == INTENSITY:
            if self.i0 is None or not (self.i0 > 0):
                raise ValueError("intensity stacks need a positive i0")
        elif self.i0 is not None:
            raise ValueError("i0 is only meaningful for intensity stacks")
        if np.any(self.data < 0) or not np.all(np.isfinite(self.data)):
            raise ValueError("projection values must be finite and non-negative")

    @property
    def n_views(self) -> int:
        return self.data.shape[0]
