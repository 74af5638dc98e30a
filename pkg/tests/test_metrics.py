import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from carmtomo.data import VoxelGrid, VoxelVolume
from carmtomo.exceptions import DegenerateContrast, NoPeak, OutOfBounds, ZeroSignal
from carmtomo.metrics import (AsfCurve, Profile1D, Roi, asf, background_level, default_rois, fwhm,
                              line_profile, mtf, read_csv, write_csv)
from carmtomo.phantom import sphere_phantom, voxelize


def top_hat(n=101, width=21, level=1.0):
    x = np.zeros(n)
    c = n // 2
    x[c - width // 2: c + width // 2 + 1] = level
    return x


def test_background_is_median_of_edges():
    x = np.arange(20.0)
    # outer 20 percent: two samples from each end
    assert background_level(x) == np.median([0, 1, 18, 19])


def test_line_profile_uniform_and_axes():
    grid = VoxelGrid.centered((4, 6, 5), 0.2)
    data = np.arange(4 * 6 * 5, dtype=float).reshape(4, 6, 5)
    vol = VoxelVolume(data, 0.2, grid.origin)
    py = line_profile(vol, 1, 2, axis="y")
    pz = line_profile(vol, 1, 3, axis="z")
    assert np.array_equal(py.values, data[1, :, 2])
    assert np.array_equal(pz.values, data[1, 3, :])
    flat = VoxelVolume(np.full((4, 6, 5), 2.5), 0.2, grid.origin)
    assert np.all(line_profile(flat, 0, 0).values == 2.5)


@pytest.mark.parametrize("plane, row, axis", [(4, 0, "y"), (0, 5, "y"), (0, 6, "z"), (-1, 0, "y")])
def test_line_profile_bounds(plane, row, axis):
    vol = VoxelVolume(np.zeros((4, 6, 5)), 0.2, (0, 0, 0))
    with pytest.raises(OutOfBounds):
        line_profile(vol, plane, row, axis=axis)


def test_ground_truth_sphere_profile_width():
    grid = VoxelGrid.centered((21, 41, 41), 0.1)
    vol = voxelize(sphere_phantom(1.0, 0.01), grid)
    p = line_profile(vol, 10, 20, axis="y")
    width = np.count_nonzero(p.values) * 0.1
    assert abs(width - 2.0) <= 0.1 + 1e-12
    assert abs(fwhm(p) - 2.0) <= 0.1 + 1e-12
    assert p.values[p.center_index] == p.values.max()


@pytest.mark.parametrize("width", [5, 21, 40])
def test_fwhm_top_hat(width):
    p = Profile1D(top_hat(width=width if width % 2 else width + 1), 0.1, 50)
    w = (width if width % 2 else width + 1) * 0.1
    assert abs(fwhm(p) - w) <= 0.1


def test_fwhm_triangle():
    a = 2.0
    x = np.linspace(-5, 5, 1001)
    p = Profile1D(np.maximum(1 - np.abs(x) / a, 0), x[1] - x[0], 500)
    assert fwhm(p) == pytest.approx(a, abs=0.01)


@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_fwhm_gaussian(sigma):
    s = sigma / 5
    x = np.arange(-12 * sigma, 12 * sigma + s / 2, s)
    p = Profile1D(np.exp(-0.5 * (x / sigma) ** 2), s, len(x) // 2)
    assert fwhm(p) == pytest.approx(2.3548 * sigma, rel=0.01)


def test_fwhm_no_peak():
    with pytest.raises(NoPeak):
        fwhm(Profile1D(np.ones(20), 0.1, 10))


@given(st.floats(0.1, 100), st.floats(-50, 50))
def test_fwhm_affine_invariance(gain, offset):
    x = np.linspace(-4, 4, 161)
    base = np.exp(-x**2)
    p = Profile1D(base, 0.05, 80)
    q = Profile1D(gain * base + offset, 0.05, 80)
    assert abs(fwhm(p) - fwhm(q)) <= 0.05


def test_mtf_impulse_is_flat():
    x = np.zeros(64)
    x[32] = 1.0
    freq, m = mtf(Profile1D(x, 0.12, 32))
    assert np.allclose(m, 1.0, atol=1e-12)
    assert freq[1] == pytest.approx(1.0 / (4 * 64 * 0.12))


@pytest.mark.parametrize("width, spacing", [(21, 0.1), (11, 0.12), (41, 0.05)])
def test_mtf_top_hat_first_zero(width, spacing):
    x = top_hat(n=256, width=width)
    freq, m = mtf(Profile1D(x, spacing, 128), pad_factor=16)
    first_min = np.argmax((m[1:-1] < m[:-2]) & (m[1:-1] <= m[2:])) + 1
    w = width * spacing
    assert freq[first_min] == pytest.approx(1.0 / w, rel=0.02)
    assert m[0] == 1.0


@given(st.floats(0.01, 1e3), st.floats(-1e3, 1e3))
def test_mtf_scale_invariance(c, b):
    rng = np.random.default_rng(0)
    x = np.exp(-np.linspace(-3, 3, 64) ** 2) + 0.01 * rng.normal(size=64)
    _, m1 = mtf(Profile1D(x, 0.1, 32))
    _, m2 = mtf(Profile1D(c * x + b, 0.1, 32))
    assert np.allclose(m1, m2, rtol=0, atol=1e-9)


def test_mtf_errors():
    with pytest.raises(ZeroSignal):
        mtf(Profile1D(np.full(32, 3.0), 0.1, 16))
    with pytest.raises(ValueError):
        mtf(Profile1D(np.arange(5.0), 0.1, 2))


def _asf_volume():
    grid = VoxelGrid.centered((41, 61, 41), 0.25)
    return voxelize(sphere_phantom(2.0, 0.05), grid), grid


def test_asf_on_truth():
    vol, grid = _asf_volume()
    feature, background = default_rois(vol, (0, 0, 0), 3, 9, 5.0)
    curve = asf(vol, 20, feature, background)
    assert curve.values[20] == 1.0
    assert curve.plane_offsets[20] == 0.0
    far = np.abs(curve.plane_offsets) > 2.0
    assert np.all(curve.values[far] == 0.0)
    assert curve.mean_beyond(3.0) == 0.0


@given(st.floats(0.01, 100), st.floats(-10, 10))
def test_asf_affine_invariance(a, b):
    vol, _ = _asf_volume()
    rng = np.random.default_rng(1)
    data = vol.data + 0.001 * rng.normal(size=vol.shape)
    f, bg = Roi(30, 20, 3), Roi(50, 20, 9)
    c1 = asf(VoxelVolume(data, vol.spacing, vol.origin), 20, f, bg)
    c2 = asf(VoxelVolume(a * data + b, vol.spacing, vol.origin), 20, f, bg)
    assert np.allclose(c1.values, c2.values, rtol=0, atol=1e-9)


def test_asf_errors():
    vol, _ = _asf_volume()
    with pytest.raises(DegenerateContrast):
        asf(VoxelVolume(np.zeros(vol.shape), vol.spacing, vol.origin), 20, Roi(30, 20), Roi(50, 20, 9))
    with pytest.raises(OutOfBounds):
        asf(vol, 20, Roi(30, 20), Roi(58, 20, 9))
    with pytest.raises(OutOfBounds):
        asf(vol, 41, Roi(30, 20), Roi(50, 20, 9))
    with pytest.raises(ValueError):
        AsfCurve(np.array([0.0, 1.0]), np.array([1.0, 0.5])).mean_beyond(5.0)


def test_csv_round_trip(tmp_path):
    rows = [(0.0, 1.5), (0.1, -2.25e-7)]
    write_csv(tmp_path / "x.csv", ("a", "b"), rows)
    header, data = read_csv(tmp_path / "x.csv")
    assert header == ["a", "b"]
    assert np.array_equal(data, np.array(rows))
