import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from carmtomo.data import INTENSITY, LINE_INTEGRAL, ProjectionStack, VoxelGrid, VoxelVolume
from carmtomo.exceptions import DomainMismatch, NonPositiveInitial
from carmtomo.geometry import CArmGeometry
from carmtomo.phantom import forward_project_analytic, sphere_phantom, to_intensity, voxelize
from carmtomo.projector import RayDrivenProjector, pdm_backproject_array
from carmtomo.recon import (MLEM, SART, BackProjection, FbpConfig, FilteredBackProjection, MlemConfig,
                            SartConfig, bp_reconstruct, build_filter, fbp_reconstruct, fft_size,
                            filter_rows, mlem_reconstruct, poisson_log_likelihood, sart_reconstruct)

from conftest import make_geom

# one voxel, four near-axial rays of length s
ONE = VoxelGrid.centered((1, 1, 1), 1.0)
ONE_GEOM = CArmGeometry(440.0, (0.0,), 2, 2, 1e-6)


def _stack(value, domain=LINE_INTEGRAL, i0=None, geom=ONE_GEOM):
    data = np.full((geom.n_views, geom.nv, geom.nu), float(value))
    return ProjectionStack(data, domain, geom, i0=i0)


@pytest.fixture(scope="module")
def problem():
    geom = make_geom(n_views=9, span=40.0, nu=24, nv=24, pitch=0.24)
    grid = VoxelGrid.centered((16, 16, 16), 0.12)
    truth = voxelize(sphere_phantom(0.6, 0.05), grid)
    line, _ = RayDrivenProjector(geom, grid).forward(truth.data)
    return geom, grid, truth, ProjectionStack(line, LINE_INTEGRAL, geom)


# -- filter

@pytest.mark.parametrize("nu, n", [(2, 4), (100, 256), (256, 512), (257, 1024)])
def test_fft_size(nu, n):
    assert fft_size(nu) == n


@pytest.mark.parametrize("window", ["ramp_only", "ramp_hann"])
def test_filter_zero_at_dc(window):
    assert build_filter(256, FbpConfig(window))[0] == 0.0


def test_filter_nyquist():
    n = fft_size(256)
    hann = build_filter(256, FbpConfig("ramp_hann"))
    ramp = build_filter(256, FbpConfig("ramp_only"))
    assert hann[n // 2] == pytest.approx(0.0, abs=1e-17)
    assert ramp[n // 2] == ramp.max() == 0.5
    assert np.all(np.diff(ramp[: n // 2 + 1]) > 0)


def test_filter_cutoff():
    r = build_filter(64, FbpConfig("ramp_only", cutoff=0.5))
    f = np.abs(np.fft.fftfreq(r.size))
    assert np.all(r[f > 0.25] == 0)
    assert np.allclose(r[f <= 0.25], f[f <= 0.25])


@pytest.mark.parametrize("cutoff", [0.0, 1.5])
def test_filter_bad_cutoff(cutoff):
    with pytest.raises(ValueError):
        FbpConfig(cutoff=cutoff)


def test_filter_rows_linear_and_kills_constants(rng):
    a = rng.normal(size=(2, 3, 40))
    assert np.allclose(filter_rows(3 * a + 7.0), 3 * filter_rows(a), atol=1e-12)


# -- BP / FBP

def test_bp_constant_views():
    geom = make_geom(n_views=5, nu=64, nv=64)
    grid = VoxelGrid.centered((10, 20, 20), 0.12)
    vol = bp_reconstruct(ProjectionStack(np.full((5, 64, 64), 0.7), LINE_INTEGRAL, geom), grid)
    assert np.allclose(vol.data, 0.7)


def test_bp_single_view_is_pdm(rng):
    geom = make_geom(n_views=1, nu=40, nv=30)
    grid = VoxelGrid.centered((8, 12, 10), 0.12)
    data = rng.uniform(size=(1, 30, 40))
    vol = bp_reconstruct(ProjectionStack(data, LINE_INTEGRAL, geom), grid)
    total, count = pdm_backproject_array(data, geom, grid)
    assert np.all(count == 1)
    assert np.array_equal(vol.data, total)


def test_bp_impulse_is_averaged():
    geom = make_geom(n_views=4, nu=32, nv=32, pitch=0.24)
    grid = VoxelGrid.centered((1, 1, 1), 0.01)
    data = np.zeros((4, 32, 32))
    # central four pixels of view 2 surround the isocenter ray
    data[2, 15:17, 15:17] = 8.0
    vol = bp_reconstruct(ProjectionStack(data, LINE_INTEGRAL, geom), grid)
    assert vol.data[0, 0, 0] == pytest.approx(8.0 / 4, rel=1e-9)


def test_bp_accepts_intensity():
    geom = make_geom(n_views=3, nu=32, nv=32)
    grid = VoxelGrid.centered((4, 8, 8), 0.12)
    li = forward_project_analytic(sphere_phantom(0.5, 0.1), geom)
    a = bp_reconstruct(li, grid).data
    b = bp_reconstruct(to_intensity(li, 1e5), grid).data
    assert np.allclose(a, b, atol=1e-12)


@pytest.mark.parametrize("recon", [bp_reconstruct, fbp_reconstruct])
def test_zero_stack_zero_volume(recon):
    geom = make_geom(n_views=3, nu=32, nv=32)
    grid = VoxelGrid.centered((4, 8, 8), 0.12)
    assert not recon(ProjectionStack(np.zeros((3, 32, 32)), LINE_INTEGRAL, geom), grid).data.any()


@pytest.mark.parametrize("window", ["ramp_only", "ramp_hann"])
@pytest.mark.parametrize("cosine_weight", [False, True])
def test_fbp_constant_stack_is_near_zero(window, cosine_weight):
    c = 3.0
    geom = make_geom(n_views=5, nu=64, nv=48)
    grid = VoxelGrid.centered((6, 24, 18), 0.12)
    vol = fbp_reconstruct(ProjectionStack(np.full((5, 48, 64), c), LINE_INTEGRAL, geom), grid,
                          FbpConfig(window, 1.0, cosine_weight))
    tol = 1e-6 * c if not cosine_weight else 1e-3 * c
    assert np.abs(vol.data).max() < tol


# -- SART

def test_sart_one_voxel_one_update():
    A = 0.8
    vol = sart_reconstruct(_stack(A), ONE, SartConfig(1, 1.0, 1.0, False))
    assert vol.data[0, 0, 0] == pytest.approx(A / 1.0, rel=1e-12)


def test_sart_fixed_point(problem):
    geom, grid, truth, stack = problem
    vol = sart_reconstruct(stack, grid, SartConfig(3, 1.0, 0.8, True), initial=truth)
    assert np.allclose(vol.data, truth.data, rtol=0, atol=1e-12)


def test_sart_zero_relaxation_keeps_initial(problem):
    geom, grid, truth, stack = problem
    init = np.full(grid.shape, 0.02)
    vol = sart_reconstruct(stack, grid, SartConfig(2, 0.0, 1.0, True), initial=init)
    assert np.array_equal(vol.data, init)


def test_sart_monotone_residual(problem):
    geom, grid, truth, stack = problem
    est = SART(grid=grid, iterations=10, lambda0=0.5, decay=1.0, track_residuals=True).fit(stack)
    r = np.array(est.residuals_)
    assert len(r) == 11
    assert np.all(r[1:] <= r[:-1] * (1 + 1e-9))
    assert r[-1] < 0.5 * r[0]


def test_sart_nonneg_and_relaxation(problem):
    geom, grid, _, stack = problem
    noisy = ProjectionStack(np.abs(stack.data + 0.01 * np.sin(np.arange(stack.data.size)).reshape(stack.data.shape)),
                            LINE_INTEGRAL, geom)
    est = SART(grid=grid, iterations=4, lambda0=1.0, decay=0.5).fit(noisy)
    assert est.volume_.data.min() >= 0
    assert est.relaxation_ == [1.0, 0.5, 0.25, 0.125]


def test_sart_rejects_intensity():
    with pytest.raises(DomainMismatch):
        SART(grid=ONE).fit(_stack(10.0, INTENSITY, 100.0))


@pytest.mark.parametrize("kwargs", [dict(iterations=0), dict(lambda0=2.5), dict(decay=0.0), dict(decay=1.1)])
def test_sart_config_invariants(kwargs):
    base = dict(iterations=10, lambda0=1.0, decay=0.8, nonneg=True)
    base.update(kwargs)
    with pytest.raises(ValueError):
        SartConfig(**base)


# -- MLEM

def _scalar_oracle(mu, steps, target=2.0):
    # one ray, one voxel, w = 1: mu <- mu + mu (yhat - O) / (mu yhat) = mu + 1 - exp(mu - target)
    out = [mu]
    for _ in range(steps):
        mu = mu + 1.0 - math.exp(mu - target)
        out.append(mu)
    return out


def test_mlem_scalar_trajectory():
    counts = _stack(1000.0 * math.exp(-2.0), INTENSITY, 1000.0)
    oracle = _scalar_oracle(1.0, 6)
    assert oracle[1] == pytest.approx(2.0 - math.exp(-1.0))
    for t in range(1, 7):
        vol = mlem_reconstruct(counts, ONE, MlemConfig(t), initial=1.0)
        assert vol.data[0, 0, 0] == pytest.approx(oracle[t], rel=1e-9)
    assert abs(oracle[-1] - 2.0) < abs(oracle[1] - 2.0)


def test_mlem_fixed_point(problem):
    geom, grid, truth, stack = problem
    i0 = 1e4
    init = truth.data + 0.003
    line, _ = RayDrivenProjector(geom, grid).forward(init)
    counts = ProjectionStack(i0 * np.exp(-line), INTENSITY, geom, i0=i0)
    vol = mlem_reconstruct(counts, grid, MlemConfig(3), initial=init)
    assert np.allclose(vol.data, init, rtol=1e-12, atol=0)


def test_mlem_zero_voxel_stays_zero():
    # O = I drives the update of mu = 1 below zero; the floor pins it and it never moves again
    counts = _stack(1000.0, INTENSITY, 1000.0)
    for t in (1, 2, 5):
        assert mlem_reconstruct(counts, ONE, MlemConfig(t), initial=1.0).data[0, 0, 0] == 0.0


def test_mlem_likelihood_ascent(problem):
    geom, grid, truth, stack = problem
    counts = to_intensity(stack, 2e4, seed=5)
    est = MLEM(grid=grid, iterations=12, initial=0.001).fit(counts)
    ll = np.array(est.log_likelihood_)
    assert len(ll) == 13
    assert np.all(ll[1:] >= ll[:-1] - 1e-9 * np.abs(ll[:-1]))
    assert est.volume_.data.min() >= 0


def test_mlem_rejects_bad_input(problem):
    geom, grid, truth, stack = problem
    with pytest.raises(DomainMismatch):
        MLEM(grid=grid).fit(stack)
    counts = to_intensity(stack, 1e4)
    with pytest.raises(NonPositiveInitial):
        MLEM(grid=grid).fit(counts, initial=np.zeros(grid.shape))
    with pytest.raises(NonPositiveInitial):
        MLEM(grid=grid, initial=0.0).fit(counts)


def test_poisson_log_likelihood():
    o = np.array([0.0, 2.0, 5.0])
    y = np.array([1.0, 2.0, 4.0])
    assert poisson_log_likelihood(o, y) == pytest.approx(2 * math.log(2) + 5 * math.log(4) - 7)


# -- estimator API

@pytest.mark.parametrize("cls", [BackProjection, FilteredBackProjection, SART, MLEM])
def test_estimator_params_and_clone(cls):
    est = cls(grid=ONE)
    params = est.get_params()
    assert params["grid"] is ONE
    twin = clone(est)
    assert twin.get_params().keys() == params.keys()
    with pytest.raises(NotFittedError):
        est.predict()


def test_set_params_and_predict(problem):
    geom, grid, truth, stack = problem
    est = SART(grid=grid).set_params(iterations=2, decay=1.0)
    assert est.iterations == 2
    vol = est.fit_transform(stack)
    assert isinstance(vol, VoxelVolume)
    pred = est.predict()
    assert pred.domain == LINE_INTEGRAL and pred.data.shape == stack.data.shape
    # the fitted volume explains the data better than nothing
    assert np.linalg.norm(pred.data - stack.data) < np.linalg.norm(stack.data)


@pytest.mark.parametrize("make", [lambda g: BackProjection(grid=g), lambda g: FilteredBackProjection(grid=g),
                                  lambda g: SART(grid=g, iterations=2), lambda g: MLEM(grid=g, iterations=2)])
def test_deterministic(problem, make):
    geom, grid, truth, stack = problem
    data = to_intensity(stack, 1e4) if isinstance(make(grid), MLEM) else stack
    a = make(grid).fit(data).volume_.data
    b = make(grid).fit(data).volume_.data
    assert a.tobytes() == b.tobytes()
