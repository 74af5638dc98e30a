"""Image-quality measures: line profile, FWHM, MTF and artifact spread function."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .data import VoxelVolume
from .exceptions import DegenerateContrast, NoPeak, OutOfBounds, ZeroSignal
from .validation import check_index

EDGE_FRACTION = 0.2


@dataclass
class Profile1D:
    values: np.ndarray
    spacing: float
    center_index: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 3:
            raise ValueError("a profile needs at least 3 samples")
        if not (self.spacing > 0):
            raise ValueError("profile spacing must be positive")

    @property
    def positions(self) -> np.ndarray:
        """Sample positions in mm relative to ``center_index``."""
        return (np.arange(self.values.size) - self.center_index) * self.spacing


@dataclass
class AsfCurve:
    plane_offsets: np.ndarray
    values: np.ndarray

    def mean_beyond(self, distance: float) -> float:
        """Mean ASF over planes with ``|offset| >= distance`` mm."""
        sel = np.abs(self.plane_offsets) >= distance - 1e-9
        if not sel.any():
            raise ValueError(f"no planes at |offset| >= {distance} mm")
        return float(np.mean(self.values[sel]))


@dataclass(frozen=True)
class Roi:
    """Square in-plane region ``(iy, iz)`` center with odd side ``size``."""

    iy: int
    iz: int
    size: int = 3

    def slices(self, shape):
        h = self.size // 2
        y0, y1, z0, z1 = self.iy - h, self.iy + h + 1, self.iz - h, self.iz + h + 1
        if y0 < 0 or z0 < 0 or y1 > shape[1] or z1 > shape[2]:
            raise OutOfBounds(f"ROI {self} does not fit in planes of shape {shape[1:]}")
        return slice(y0, y1), slice(z0, z1)


def background_level(values: np.ndarray, fraction: float = EDGE_FRACTION) -> float:
    """Median of the outer ``fraction`` of samples (half from each end)."""
    values = np.asarray(values, float)
    n = max(1, int(round(values.size * fraction / 2)))
    return float(np.median(np.concatenate([values[:n], values[-n:]])))


def line_profile(vol: VoxelVolume, plane: int, row: int, axis: str = "y",
                 center_index: Optional[int] = None) -> Profile1D:
    """Voxel values along ``axis`` ('y' or 'z') of depth plane ``plane`` (x index),
    through in-plane index ``row`` of the other axis. No resampling."""
    nx, ny, nz = vol.shape
    check_index("plane", plane, nx)
    if axis == "y":
        check_index("row", row, nz)
        values = vol.data[plane, :, row]
    elif axis == "z":
        check_index("row", row, ny)
        values = vol.data[plane, row, :]
    else:
        raise ValueError("axis must be 'y' or 'z'")
    if center_index is None:
        center_index = int(np.argmax(values))
    return Profile1D(values.copy(), vol.spacing, int(center_index))


def fwhm(p: Profile1D) -> float:
    """Width (mm) at half of ``max - background``, linearly interpolated."""
    x = p.values
    bg = background_level(x)
    peak = int(np.argmax(x))
    top = x[peak]
    if top <= bg:
        raise NoPeak("profile maximum does not exceed the background")
    half = bg + 0.5 * (top - bg)

    left = peak
    while left > 0 and x[left - 1] >= half:
        left -= 1
    if left == 0:
        xl = 0.0
    else:
        xl = left - (x[left] - half) / (x[left] - x[left - 1])
    right = peak
    while right < x.size - 1 and x[right + 1] >= half:
        right += 1
    if right == x.size - 1:
        xr = float(right)
    else:
        xr = right + (x[right] - half) / (x[right] - x[right + 1])
    return float((xr - xl) * p.spacing)


def mtf(p: Profile1D, pad_factor: int = 4):
    """Normalized magnitude spectrum of a background-subtracted profile.

    Returns ``(frequency in mm^-1, mtf)`` for the non-negative frequencies of
    a profile zero-padded to ``pad_factor`` times its length.
    """
    x = p.values
    if x.size < 8:
        raise ValueError("MTF needs at least 8 samples")
    sig = x - background_level(x)
    scale = np.max(np.abs(x)) if np.any(x) else 1.0
    if np.all(np.abs(sig) <= 1e-14 * scale):
        raise ZeroSignal("profile carries no signal above background")
    n = pad_factor * x.size
    spec = np.abs(np.fft.rfft(sig, n))
    if spec[0] <= 1e-14 * np.abs(sig).sum():
        raise ZeroSignal("profile has zero net signal; DC normalization undefined")
    freq = np.fft.rfftfreq(n, d=p.spacing)
    return freq, spec / spec[0]


def asf(vol: VoxelVolume, focus_plane: int, feature: Roi, background: Roi) -> AsfCurve:
    """Contrast of ``feature`` over ``background`` in every depth plane,
    relative to the focus plane. Feature uses the ROI mean, background the
    ROI median."""
    nx = vol.shape[0]
    check_index("focus plane", focus_plane, nx)
    fy, fz = feature.slices(vol.shape)
    by, bz = background.slices(vol.shape)
    feat = vol.data[:, fy, fz].reshape(nx, -1).mean(axis=1)
    bg = np.median(vol.data[:, by, bz].reshape(nx, -1), axis=1)
    contrast = feat - bg
    ref = contrast[focus_plane]
    if abs(ref) < 1e-12:
        raise DegenerateContrast(f"focus-plane contrast {ref:g} is too small to normalize")
    values = contrast / ref
    values[focus_plane] = 1.0
    offsets = (np.arange(nx) - focus_plane) * vol.spacing
    return AsfCurve(offsets, values)


def default_rois(vol: VoxelVolume, center, feature_size: int = 3, background_size: int = 9,
                 lateral_offset: float = 5.0):
    """Feature ROI on the object's in-plane position and a background ROI
    ``lateral_offset`` mm away along +y."""
    _, iy, iz = vol.grid.index_of(center)
    shift = int(round(lateral_offset / vol.spacing))
    return Roi(iy, iz, feature_size), Roi(iy + shift, iz, background_size)


def write_csv(path, header, rows) -> None:
    """Two-column CSV with a one-line header."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for a, b in rows:
            w.writerow([repr(float(a)), repr(float(b))])


def read_csv(path):
    with Path(path).open() as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = np.array([[float(a), float(b)] for a, b in r])
    return header, rows
