"""Partial-circle C-arm acquisition geometry.

World frame: origin at the rotation center, z is the rotation axis. At view
angle ``beta`` the source sits at ``(d cos b, -d sin b, 0)`` and the flat
detector is the plane through ``-source`` with normal along the source
direction. Detector ``u`` runs along ``(sin b, cos b, 0)`` and ``v`` along
``+z``, so at ``beta = 0`` the detector is the plane ``x = -d`` with ``u``
along ``+y``.

Angles are in degrees everywhere in the public API.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .exceptions import DegenerateRay, InvalidSpan


class Point3(NamedTuple):
    x: float
    y: float
    z: float


class DetectorCoord(NamedTuple):
    u: float
    v: float


@dataclass(frozen=True)
class CArmGeometry:
    """Acquisition geometry.

    Parameters
    ----------
    d : float
        Half source-to-image distance (orbit radius), mm. ``SID = 2 d``.
    angles : sequence of float
        View angles in degrees, strictly increasing, span at most 180.
    nu, nv : int
        Detector column and row counts.
    pitch : float
        Square detector pixel size, mm.
    """

    d: float
    angles: tuple
    nu: int
    nv: int
    pitch: float

    def __post_init__(self):
        angles = tuple(float(a) for a in np.atleast_1d(np.asarray(self.angles, dtype=float)))
        object.__setattr__(self, "angles", angles)
        if not (math.isfinite(self.d) and self.d > 0):
            raise ValueError(f"d must be positive, got {self.d}")
        if len(angles) < 1:
            raise ValueError("at least one view angle is required")
        if not all(math.isfinite(a) for a in angles):
            raise ValueError("view angles must be finite")
        if any(b <= a for a, b in zip(angles, angles[1:])):
            raise ValueError("view angles must be strictly increasing")
        if angles[-1] - angles[0] > 180.0:
            raise InvalidSpan(f"angular span {angles[-1] - angles[0]} exceeds 180 degrees")
        if int(self.nu) < 2 or int(self.nv) < 2:
            raise ValueError("detector needs at least 2x2 pixels")
        object.__setattr__(self, "nu", int(self.nu))
        object.__setattr__(self, "nv", int(self.nv))
        if not (self.pitch > 0):
            raise ValueError(f"pitch must be positive, got {self.pitch}")

    @property
    def sid(self) -> float:
        return 2.0 * self.d

    @property
    def n_views(self) -> int:
        return len(self.angles)

    @property
    def span(self) -> float:
        return self.angles[-1] - self.angles[0]

    def u_centers(self) -> np.ndarray:
        return (np.arange(self.nu) - (self.nu - 1) / 2.0) * self.pitch

    def v_centers(self) -> np.ndarray:
        return (np.arange(self.nv) - (self.nv - 1) / 2.0) * self.pitch

    def pixel_coord(self, iu, iv) -> DetectorCoord:
        return DetectorCoord((iu - (self.nu - 1) / 2.0) * self.pitch,
                             (iv - (self.nv - 1) / 2.0) * self.pitch)

    def with_views(self, n_views: int) -> "CArmGeometry":
        """Same detector and orbit, ``n_views`` evenly spread over the current span."""
        span = self.span if self.n_views > 1 else 40.0
        center = 0.5 * (self.angles[0] + self.angles[-1])
        return CArmGeometry(self.d, tuple(np.asarray(view_angles(n_views, span)) + center),
                            self.nu, self.nv, self.pitch)


def view_angles(n_views: int, span: float) -> list:
    """Evenly spaced angles centered on zero with inclusive endpoints."""
    if n_views < 1:
        raise ValueError("n_views must be >= 1")
    if not (span > 0) or span > 180:
        raise InvalidSpan(f"span must lie in (0, 180], got {span}")
    if n_views == 1:
        return [0.0]
    step = span / (n_views - 1)
    return [-span / 2.0 + k * step for k in range(n_views)]


def _frame(beta: float):
    b = math.radians(beta)
    c, s = math.cos(b), math.sin(b)
    # source direction (unit), detector u axis
    return np.array([c, -s, 0.0]), np.array([s, c, 0.0])


def source_position(geom: CArmGeometry, beta: float) -> Point3:
    b = math.radians(beta)
    return Point3(geom.d * math.cos(b), -geom.d * math.sin(b), 0.0)


def detector_point(geom: CArmGeometry, uv, beta: float) -> Point3:
    """World position of detector location ``uv`` at view ``beta``.

    Evaluates ``(-r cos(b + a), r sin(b + a), v)`` with ``r = hypot(u, d)``
    and ``a = atan(u / d)``.
    """
    u, v = uv
    r = math.hypot(u, geom.d)
    a = math.atan2(u, geom.d)
    t = math.radians(beta) + a
    return Point3(-r * math.cos(t), r * math.sin(t), float(v))


def project_to_detector(geom: CArmGeometry, p, beta: float) -> DetectorCoord:
    """Intersect the source->p ray with the detector plane."""
    n, eu = _frame(beta)
    src = geom.d * n
    p = np.asarray(p, dtype=float)
    ray = p - src
    denom = float(ray @ n)
    tol = 1e-12 * geom.d
    if np.linalg.norm(ray) <= tol:
        raise DegenerateRay("point coincides with the source")
    if denom > -tol:
        raise DegenerateRay("ray is parallel to or points away from the detector plane")
    t = -2.0 * geom.d / denom
    hit = src + t * ray
    return DetectorCoord(float(hit @ eu), float(hit[2]))


def project_points(geom: CArmGeometry, points: np.ndarray, beta: float):
    """Vectorized ``project_to_detector`` for an ``(..., 3)`` array.

    Returns ``(u, v)`` arrays; points that do not project get ``nan``.
    """
    n, eu = _frame(beta)
    pts = np.asarray(points, dtype=float)
    rel = pts - geom.d * n
    denom = rel @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(denom < -1e-12 * geom.d, -2.0 * geom.d / denom, np.nan)
    u = (rel @ eu) * t
    v = rel[..., 2] * t
    return u, v


def ray_endpoints(geom: CArmGeometry, views: Sequence[int] | None = None):
    """Source positions ``(V, 3)`` and pixel-center positions ``(V, nv, nu, 3)``."""
    if views is None:
        views = range(geom.n_views)
    views = list(views)
    src = np.empty((len(views), 3))
    dst = np.empty((len(views), geom.nv, geom.nu, 3))
    uc = geom.u_centers()
    vc = geom.v_centers()
    for k, i in enumerate(views):
        n, eu = _frame(geom.angles[i])
        src[k] = geom.d * n
        dst[k] = (-geom.d * n)[None, None, :] + uc[None, :, None] * eu[None, None, :]
        dst[k, ..., 2] = vc[:, None]
    return src, dst
