"""BP, FBP, SART and MLEM reconstruction.

The four methods are exposed twice: as plain functions returning a
:class:`VoxelVolume`, and as scikit-learn style estimators whose ``fit``
stores the volume in ``volume_`` together with per-iteration diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data import INTENSITY, LINE_INTEGRAL, ProjectionStack, VoxelGrid, VoxelVolume
from .exceptions import NonPositiveInitial
from .projector import RayDrivenProjector, log_normalize, pdm_backproject_array
from .validation import check_count, check_grid, check_initial, check_positive, check_stack

DEFAULT_GRID = VoxelGrid.centered((128, 128, 64), 0.12)
DENOM_GUARD = 1e-12
WINDOWS = ("ramp_only", "ramp_hann")


@dataclass(frozen=True)
class FbpConfig:
    window: str = "ramp_hann"
    cutoff: float = 1.0
    cosine_weight: bool = False

    def __post_init__(self):
        if self.window not in WINDOWS:
            raise ValueError(f"window must be one of {WINDOWS}, got {self.window!r}")
        if not (0 < self.cutoff <= 1):
            raise ValueError(f"cutoff must lie in (0, 1], got {self.cutoff}")


@dataclass(frozen=True)
class SartConfig:
    iterations: int = 10
    lambda0: float = 1.0
    decay: float = 0.8
    nonneg: bool = True

    def __post_init__(self):
        check_count("iterations", self.iterations)
        if not (0 <= self.lambda0 <= 2):
            raise ValueError(f"lambda0 must lie in [0, 2], got {self.lambda0}")
        if not (0 < self.decay <= 1):
            raise ValueError(f"decay must lie in (0, 1], got {self.decay}")


@dataclass(frozen=True)
class MlemConfig:
    iterations: int = 20
    i0: Optional[float] = None
    floor: float = 0.0
    initial: float = 0.001

    def __post_init__(self):
        check_count("iterations", self.iterations)
        if self.i0 is not None:
            check_positive("i0", self.i0)
        check_positive("floor", self.floor, allow_zero=True)


# --------------------------------------------------------------------------
# filtering

def fft_size(nu: int) -> int:
    return 1 << int(np.ceil(np.log2(2 * nu)))


def build_filter(nu: int, cfg: FbpConfig = FbpConfig()) -> np.ndarray:
    """Frequency response in ``np.fft.fftfreq`` order, length ``fft_size(nu)``.

    Ramp ``|f|`` in cycles per sample, zero above ``cutoff * 0.5``; the Hann
    variant multiplies by ``0.5 (1 + cos(pi f / f_c))``.
    """
    if nu < 2:
        raise ValueError("need at least 2 detector columns")
    n = fft_size(nu)
    f = np.abs(np.fft.fftfreq(n))
    fc = 0.5 * cfg.cutoff
    resp = np.where(f <= fc, f, 0.0)
    if cfg.window == "ramp_hann":
        resp = resp * 0.5 * (1.0 + np.cos(np.pi * np.minimum(f / fc, 1.0)))
    return resp


def filter_rows(data: np.ndarray, cfg: FbpConfig = FbpConfig()) -> np.ndarray:
    """Filter every detector row along ``u`` (last axis).

    Rows are edge-extended to the FFT length before the product, which keeps
    linear-convolution behaviour at the borders and maps constant rows to 0.
    """
    nu = data.shape[-1]
    resp = build_filter(nu, cfg)
    n = resp.size
    left = (n - nu) // 2
    pad = [(0, 0)] * (data.ndim - 1) + [(left, n - nu - left)]
    padded = np.pad(data, pad, mode="edge")
    out = np.fft.ifft(np.fft.fft(padded, axis=-1) * resp, axis=-1).real
    return out[..., left:left + nu]


def _cosine_weights(geom):
    sid = geom.sid
    u = geom.u_centers()[None, :]
    v = geom.v_centers()[:, None]
    return sid / np.sqrt(sid * sid + u * u + v * v)


# --------------------------------------------------------------------------
# functional API

def _average(total, count):
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(count > 0, total / np.maximum(count, 1), 0.0)


def bp_reconstruct(stack: ProjectionStack, grid: VoxelGrid = DEFAULT_GRID) -> VoxelVolume:
    """Point-by-point backprojection: per-voxel mean of interpolated samples
    over the views in which the voxel is visible."""
    return BackProjection(grid=grid).fit(stack).volume_


def fbp_reconstruct(stack: ProjectionStack, grid: VoxelGrid = DEFAULT_GRID,
                    cfg: FbpConfig = FbpConfig()) -> VoxelVolume:
    return FilteredBackProjection(grid=grid, window=cfg.window, cutoff=cfg.cutoff,
                                  cosine_weight=cfg.cosine_weight).fit(stack).volume_


def sart_reconstruct(stack: ProjectionStack, grid: VoxelGrid = DEFAULT_GRID,
                     cfg: SartConfig = SartConfig(), initial=None) -> VoxelVolume:
    return SART(grid=grid, iterations=cfg.iterations, lambda0=cfg.lambda0, decay=cfg.decay,
                nonneg=cfg.nonneg).fit(stack, initial=initial).volume_


def mlem_reconstruct(stack: ProjectionStack, grid: VoxelGrid = DEFAULT_GRID,
                     cfg: MlemConfig = MlemConfig(), initial=None) -> VoxelVolume:
    return MLEM(grid=grid, iterations=cfg.iterations, i0=cfg.i0, floor=cfg.floor,
                initial=cfg.initial).fit(stack, initial=initial).volume_


# --------------------------------------------------------------------------
# estimators

class _Reconstructor(BaseEstimator):
    """Shared plumbing: ``fit`` -> ``volume_``, ``predict`` -> line integrals."""

    def _grid(self) -> VoxelGrid:
        return check_grid(DEFAULT_GRID if self.grid is None else self.grid)

    def _finish(self, stack, data, grid):
        self.volume_ = VoxelVolume(data, grid.spacing, grid.origin)
        self.geom_ = stack.geom
        self.n_views_ = stack.n_views
        return self

    def fit_transform(self, stack, y=None, **fit_params) -> VoxelVolume:
        return self.fit(stack, **fit_params).volume_

    def predict(self, geom=None) -> ProjectionStack:
        """Ray-driven projections of the fitted volume (default: the fitted geometry)."""
        check_is_fitted(self, "volume_")
        geom = self.geom_ if geom is None else geom
        out, _ = RayDrivenProjector(geom, self.volume_.grid).forward(self.volume_.data)
        return ProjectionStack(np.maximum(out, 0.0), LINE_INTEGRAL, geom)


class BackProjection(_Reconstructor):
    def __init__(self, grid=None):
        self.grid = grid

    def fit(self, stack, y=None):
        stack = check_stack(stack)
        if stack.domain == INTENSITY:
            stack = log_normalize(stack)
        grid = self._grid()
        total, count = pdm_backproject_array(stack.data, stack.geom, grid)
        self.view_count_ = count
        return self._finish(stack, _average(total, count), grid)


class FilteredBackProjection(_Reconstructor):
    def __init__(self, grid=None, window="ramp_hann", cutoff=1.0, cosine_weight=False):
        self.grid = grid
        self.window = window
        self.cutoff = cutoff
        self.cosine_weight = cosine_weight

    def fit(self, stack, y=None):
        stack = check_stack(stack)
        cfg = FbpConfig(self.window, self.cutoff, self.cosine_weight)
        if stack.domain == INTENSITY:
            stack = log_normalize(stack)
        data = stack.data
        if cfg.cosine_weight:
            data = data * _cosine_weights(stack.geom)[None]
        self.filtered_ = filter_rows(data, cfg)
        grid = self._grid()
        total, count = pdm_backproject_array(self.filtered_, stack.geom, grid)
        self.view_count_ = count
        return self._finish(stack, _average(total, count), grid)


class SART(_Reconstructor):
    """Per-view relaxed, ray-length normalized residual backprojection.

    ``residuals_`` holds ``||A - W mu||_2`` for the initial volume and after
    every sweep when ``track_residuals`` is set.
    """

    def __init__(self, grid=None, iterations=10, lambda0=1.0, decay=0.8, nonneg=True,
                 track_residuals=False):
        self.grid = grid
        self.iterations = iterations
        self.lambda0 = lambda0
        self.decay = decay
        self.nonneg = nonneg
        self.track_residuals = track_residuals

    def fit(self, stack, y=None, initial=None):
        stack = check_stack(stack, LINE_INTEGRAL)
        cfg = SartConfig(self.iterations, self.lambda0, self.decay, self.nonneg)
        grid = self._grid()
        mu = check_initial(initial, grid, 0.0)
        proj = RayDrivenProjector(stack.geom, grid)
        A = stack.data

        def residual_norm():
            fwd, _ = proj.forward(mu)
            return float(np.linalg.norm((A - fwd)[proj.hits]))

        self.residuals_ = [residual_norm()] if self.track_residuals else []
        self.relaxation_ = []
        for t in range(cfg.iterations):
            lam = cfg.lambda0 * cfg.decay ** t
            self.relaxation_.append(lam)
            for k in range(stack.n_views):
                fwd, raylen = proj.forward(mu, k)
                with np.errstate(invalid="ignore", divide="ignore"):
                    r = np.where(raylen > 0, (A[k][None] - fwd) / raylen, 0.0)
                num, den = proj.back(r, k)
                with np.errstate(invalid="ignore", divide="ignore"):
                    mu += np.where(den > 0, lam * num / den, 0.0)
                if cfg.nonneg:
                    np.maximum(mu, 0.0, out=mu)
            if self.track_residuals:
                self.residuals_.append(residual_norm())
        self.n_iter_ = cfg.iterations
        return self._finish(stack, mu, grid)


def poisson_log_likelihood(counts: np.ndarray, expected: np.ndarray) -> float:
    """``sum O ln(yhat) - yhat`` (the ``ln O!`` constant is dropped)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(counts > 0, counts * np.log(expected), 0.0)
    return float(np.sum(term - expected))


class MLEM(_Reconstructor):
    """Convex transmission EM.

    Per iteration, with ``l = W mu`` and ``yhat = I exp(-l)``::

        mu_j <- mu_j + mu_j sum_i w_ij (yhat_i - O_i) / sum_i w_ij l_i yhat_i

    ``log_likelihood_`` records the Poisson log-likelihood of every iterate,
    initial one included.
    """

    def __init__(self, grid=None, iterations=20, i0=None, floor=0.0, initial=0.001):
        self.grid = grid
        self.iterations = iterations
        self.i0 = i0
        self.floor = floor
        self.initial = initial

    def fit(self, stack, y=None, initial=None):
        stack = check_stack(stack, INTENSITY)
        cfg = MlemConfig(self.iterations, self.i0, self.floor, self.initial)
        grid = self._grid()
        mu = check_initial(initial, grid, cfg.initial)
        if np.any(mu <= 0):
            raise NonPositiveInitial("MLEM needs a strictly positive initial volume")
        incident = stack.i0 if cfg.i0 is None else cfg.i0
        proj = RayDrivenProjector(stack.geom, grid)
        hits = proj.hits
        O = np.where(hits, stack.data, 0.0)

        def expected(line):
            return np.where(hits, incident * np.exp(-line), 0.0)

        self.log_likelihood_ = []
        for _ in range(cfg.iterations):
            line, _ = proj.forward(mu)
            yhat = expected(line)
            self.log_likelihood_.append(poisson_log_likelihood(O[hits], yhat[hits]))
            guarded = np.where(line > 0, line, DENOM_GUARD)
            (num, den), _ = proj.back(np.stack([yhat - O, guarded * yhat]))
            with np.errstate(invalid="ignore", divide="ignore"):
                mu = mu + np.where(den > 0, mu * num / den, 0.0)
            np.maximum(mu, cfg.floor, out=mu)
        line, _ = proj.forward(mu)
        self.log_likelihood_.append(poisson_log_likelihood(O[hits], expected(line)[hits]))
        self.n_iter_ = cfg.iterations
        return self._finish(stack, mu, grid)


ESTIMATORS = {
    "bp": BackProjection,
    "fbp": FilteredBackProjection,
    "sart": SART,
    "mlem": MLEM,
}
