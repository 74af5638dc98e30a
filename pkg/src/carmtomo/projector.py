"""System models: pixel-driven backprojection (BP/FBP) and ray-driven Siddon
weights with the matched forward/back pair used by SART and MLEM."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels
from .data import INTENSITY, LINE_INTEGRAL, ProjectionStack, VoxelGrid, VoxelVolume
from .exceptions import DomainMismatch
from .geometry import CArmGeometry, ray_endpoints

CLAMP_COUNTS = 1.0
MERGE_TOL = 1e-12  # fraction of SID


class RayWeights(NamedTuple):
    """One system-matrix row: flat voxel indices (C order) and lengths in mm."""

    indices: np.ndarray
    weights: np.ndarray

    @property
    def total(self) -> float:
        return float(self.weights.sum())


def _grid_args(grid: VoxelGrid):
    return np.asarray(grid.lower, dtype=float), grid.spacing, np.asarray(grid.shape, dtype=np.int64)


def trace_segment(src, dst, grid: VoxelGrid, tol: float = 0.0) -> RayWeights:
    """Exact intersection lengths of the segment ``src -> dst`` with ``grid``."""
    lo, s, shape = _grid_args(grid)
    nbuf = int(shape.sum()) + 4
    idx = np.empty(nbuf, dtype=np.int64)
    w = np.empty(nbuf)
    n = _kernels.trace(float(src[0]), float(src[1]), float(src[2]),
                       float(dst[0]), float(dst[1]), float(dst[2]),
                       lo[0], lo[1], lo[2], s, int(shape[0]), int(shape[1]), int(shape[2]),
                       0, int(shape[0]), float(tol), idx, w)
    return RayWeights(idx[:n].copy(), w[:n].copy())


def siddon_weights(geom: CArmGeometry, view: int, pixel, grid: VoxelGrid) -> RayWeights:
    """Weights of the ray from the source to the center of detector ``pixel = (iu, iv)``."""
    iu, iv = pixel
    src, dst = ray_endpoints(geom, [view])
    return trace_segment(src[0], dst[0, iv, iu], grid, MERGE_TOL * geom.sid)


def box_chord(src, dst, grid: VoxelGrid) -> float:
    """Length of the segment inside the grid's bounding box (slab clipping)."""
    src = np.asarray(src, float)
    dst = np.asarray(dst, float)
    d = dst - src
    t0, t1 = 0.0, 1.0
    for a in range(3):
        if d[a] == 0.0:
            if not (grid.lower[a] <= src[a] < grid.upper[a]):
                return 0.0
            continue
        ta, tb = sorted(((grid.lower[a] - src[a]) / d[a], (grid.upper[a] - src[a]) / d[a]))
        t0, t1 = max(t0, ta), min(t1, tb)
    return max(t1 - t0, 0.0) * float(np.linalg.norm(d))


def log_normalize(stack: ProjectionStack) -> ProjectionStack:
    """Convert detected counts to line integrals ``ln(i0 / max(I, 1))``, floored at 0."""
    if stack.domain != INTENSITY:
        raise DomainMismatch("log_normalize expects an intensity stack")
    a = np.log(stack.i0 / np.maximum(stack.data, CLAMP_COUNTS))
    return ProjectionStack(np.maximum(a, 0.0), LINE_INTEGRAL, stack.geom, meta=dict(stack.meta))


def _as_line_integrals(stack: ProjectionStack) -> np.ndarray:
    if stack.domain != LINE_INTEGRAL:
        raise DomainMismatch(f"expected a line-integral stack, got {stack.domain}")
    return stack.data


def pdm_backproject_array(values: np.ndarray, geom: CArmGeometry, grid: VoxelGrid,
                          views: Sequence[int] | None = None):
    """Pixel-driven backprojection of raw ``(V, nv, nu)`` arrays.

    Returns ``(sum, count)``; ``count`` is the per-voxel number of views
    whose detector footprint contained the voxel center.
    """
    views = list(range(geom.n_views)) if views is None else list(views)
    betas = np.radians([geom.angles[i] for i in views])
    vals = np.ascontiguousarray(values[views], dtype=float)
    out = np.zeros(grid.shape)
    count = np.zeros(grid.shape, dtype=np.int64)
    if not views:
        return out, count
    _kernels.pdm_back(vals, np.cos(betas), np.sin(betas), float(geom.d), float(geom.pitch),
                      np.asarray(grid.origin, float), grid.spacing, np.asarray(grid.shape, np.int64),
                      out, count)
    return out, count


def backproject_pdm(stack: ProjectionStack, grid: VoxelGrid, views: Sequence[int] | None = None
                    ) -> VoxelVolume:
    """Sum over the selected views of bilinearly interpolated detector values."""
    out, _ = pdm_backproject_array(_as_line_integrals(stack), stack.geom, grid, views)
    return VoxelVolume(out, grid.spacing, grid.origin)


@dataclass
class RayDrivenProjector:
    """Matched Siddon forward/back projector ``W`` / ``W^T`` for one geometry and grid.

    Ray endpoints and the grid-hit mask are computed once; weights are
    re-traced on the fly.
    """

    geom: CArmGeometry
    grid: VoxelGrid

    def __post_init__(self):
        self._src, self._dst = ray_endpoints(self.geom)
        self._lo, self._s, self._shape = _grid_args(self.grid)
        self._tol = MERGE_TOL * self.geom.sid
        hits = np.zeros((self.geom.n_views, self.geom.nv, self.geom.nu), dtype=np.bool_)
        _kernels.ray_hits(self._lo, np.asarray(self.grid.upper, float), self._src, self._dst, hits)
        self._hits = hits

    @property
    def hits(self) -> np.ndarray:
        """``(V, nv, nu)`` mask of rays that meet the grid box."""
        return self._hits

    def _select(self, views):
        if views is None:
            return list(range(self.geom.n_views))
        return [views] if isinstance(views, (int, np.integer)) else list(views)

    def forward(self, mu: np.ndarray, views=None):
        """Return ``(W mu, ray lengths)`` for the selected views, each ``(V, nv, nu)``."""
        views = self._select(views)
        vol = np.ascontiguousarray(mu, dtype=float).reshape(-1)
        if vol.size != self.grid.size:
            raise ValueError("volume does not match projector grid")
        out = np.zeros((len(views), self.geom.nv, self.geom.nu))
        raylen = np.zeros_like(out)
        if views:
            _kernels.rdm_forward(vol, np.ascontiguousarray(self._hits[views]), self._lo, self._s,
                                 self._shape, self._src[views],
                                 np.ascontiguousarray(self._dst[views]), self._tol, out, raylen)
        return out, raylen

    def back(self, values: np.ndarray, views=None):
        """Return ``(W^T values, W^T 1)`` as grid-shaped arrays.

        ``values`` may carry extra leading axes, ``(..., V, nv, nu)``; each
        leading slice is backprojected in the same traversal.
        """
        views = self._select(views)
        values = np.asarray(values, dtype=float)
        lead = values.shape[:-3] if values.ndim > 3 else ()
        vals = np.ascontiguousarray(values.reshape((-1, len(views), self.geom.nv, self.geom.nu)))
        out = np.zeros((vals.shape[0], self.grid.size))
        wsum = np.zeros(self.grid.size)
        if views:
            rays = np.flatnonzero(self._hits[views]).astype(np.int64)
            _kernels.rdm_back(vals, rays, self._lo, self._s, self._shape, self._src[views],
                              np.ascontiguousarray(self._dst[views]), self._tol, out, wsum)
        return out.reshape(lead + self.grid.shape), wsum.reshape(self.grid.shape)


def forward_project_rdm(vol: VoxelVolume, geom: CArmGeometry, views: Sequence[int] | None = None
                        ) -> ProjectionStack:
    """Ray-driven line integrals of a voxel volume, one ray per pixel center."""
    proj = RayDrivenProjector(geom, vol.grid)
    out, _ = proj.forward(vol.data, views)
    if views is not None:
        full = np.zeros((geom.n_views, geom.nv, geom.nu))
        full[list(views)] = out
        out = full
    return ProjectionStack(out, LINE_INTEGRAL, geom)


def set_threads(n: int | None) -> None:
    """Cap the worker count of the compiled kernels (``None`` leaves the default)."""
    if n is None:
        return
    import numba

    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))

