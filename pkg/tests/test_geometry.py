import numpy as np
import pytest
from scipy import ndimage  # type: ignore

from config.errors import BoundsError, CalibrationError, EmptyInputError, MarginError, RasterSizeError
from network.clothsim import render_depth
from network.explorer import ClothWorld
from network.geometry import (
    CameraModel,
    DepthImage,
    GridSpec,
    WorldHeightMap,
    crop_grip_window,
    extract_candidates,
    laplacian_pyramid_responses,
    project_to_world,
    wrinkle_direction,
)


def angle_gap(a, b):
    d = abs(a - b) % np.pi
    return min(d, np.pi - d)


def test_identity_camera_projects_pixel_coordinates():
    cam = CameraModel.from_intrinsics(1.0, 1.0, 0.0, 0.0, 8, 6)
    hm = project_to_world(DepthImage(np.ones((6, 8))), cam, GridSpec(0.01, 0.01, 0.001))
    v, u = np.mgrid[0:6, 0:8]
    assert np.allclose(hm.points[..., 0], u)
    assert np.allclose(hm.points[..., 1], v)
    assert np.allclose(hm.points[..., 2], 1.0)


def test_single_pixel_back_projection():
    T = np.eye(4)
    T[:3, :3] = np.diag([1.0, -1.0, -1.0])
    T[:3, 3] = [0.1, 0.2, 3.0]
    cam = CameraModel.from_intrinsics(100.0, 100.0, 64.0, 64.0, 128, 128, T)
    values = np.zeros((128, 128))
    values[20, 10] = 2.0
    hm = project_to_world(DepthImage(values), cam)
    assert np.allclose(hm.points[20, 10], [-0.98, 1.08, 1.0])
    assert np.isnan(hm.points[0, 0]).all()
    # 只有一个有效像素，整个栅格都取它的高度
    assert np.allclose(hm.z, 1.0)


def test_flat_table_round_trip(small_settings):
    cam = ClothWorld(small_settings).camera
    table = WorldHeightMap(np.zeros((300, 300)), 0.001)
    depth = render_depth(table, cam, 0.0, dropout=0.0)
    hm = project_to_world(depth, cam, GridSpec(0.3, 0.3, 0.001))
    assert np.abs(hm.z).max() <= 1e-6


def test_smooth_surface_round_trip(small_settings):
    cam = ClothWorld(small_settings).camera
    X, Y = GridSpec(0.3, 0.3, 0.001).cell_centers()
    surface = WorldHeightMap(0.01 + 0.003 * np.sin(2 * np.pi * X / 0.15) * np.cos(2 * np.pi * Y / 0.15), 0.001)
    grid = GridSpec(0.3, 0.3, 0.001)

    clean = project_to_world(render_depth(surface, cam, 0.0, dropout=0.0), cam, grid)
    rms = np.sqrt(np.mean((clean.z - surface.z)[10:-10, 10:-10] ** 2))
    assert rms <= 0.001

    noisy = project_to_world(render_depth(surface, cam, 0.002, seed=3), cam, grid)
    rms = np.sqrt(np.mean((noisy.z - surface.z)[10:-10, 10:-10] ** 2))
    assert rms <= 0.005


def test_projection_preserves_pairwise_distances():
    # 刚体变换下的点距与相机坐标系下一致
    T = np.eye(4)
    a = np.deg2rad(30.0)
    T[:3, :3] = np.array([[np.cos(a), -np.sin(a), 0.0], [np.sin(a), np.cos(a), 0.0], [0.0, 0.0, 1.0]])
    T[:3, 3] = [0.3, -0.2, 1.5]
    K = CameraModel.from_intrinsics(50.0, 50.0, 16.0, 12.0, 32, 24)
    rng = np.random.default_rng(0)
    values = 0.5 + rng.random((24, 32))

    world = project_to_world(DepthImage(values), CameraModel(K.K, T, 32, 24), GridSpec(0.01, 0.01, 0.001))
    local = project_to_world(DepthImage(values), K, GridSpec(0.01, 0.01, 0.001))
    pw = world.points.reshape(-1, 3)[::37]
    pl = local.points.reshape(-1, 3)[::37]
    dw = np.linalg.norm(pw[:, None] - pw[None], axis=-1)
    dl = np.linalg.norm(pl[:, None] - pl[None], axis=-1)
    assert np.allclose(dw, dl, atol=1e-12)


def test_empty_depth_raises():
    cam = CameraModel.from_intrinsics(100.0, 100.0, 4.0, 4.0, 8, 8)
    with pytest.raises(EmptyInputError):
        project_to_world(DepthImage(np.zeros((8, 8))), cam)


@pytest.mark.parametrize("fx, T", [(0.0, np.eye(4)), (100.0, 2 * np.eye(4))])
def test_bad_calibration_raises(fx, T):
    cam = CameraModel.from_intrinsics(fx, 100.0, 4.0, 4.0, 8, 8, T)
    with pytest.raises(CalibrationError):
        project_to_world(DepthImage(np.ones((8, 8))), cam)


def test_affine_plane_has_no_response():
    rows, cols = np.mgrid[0:128, 0:128].astype(np.float64)
    hm = WorldHeightMap(0.01 + 1e-4 * cols - 2e-4 * rows, 0.001)
    for response in laplacian_pyramid_responses(hm, 3):
        assert np.abs(response[6:-6, 6:-6]).max() < 1e-9


@pytest.mark.parametrize("sigma_px, level", [(1.0, 0), (2.0, 1), (4.0, 2)])
def test_ridge_width_selects_level(sigma_px, level):
    cols = np.arange(128, dtype=np.float64)
    ridge = np.exp(-(cols - 64) ** 2 / (2 * sigma_px ** 2))
    hm = WorldHeightMap(np.tile(ridge, (128, 1)), 0.001)
    peaks = [r.max() for r in laplacian_pyramid_responses(hm, 3)]
    assert int(np.argmax(peaks)) == level


def test_single_ridge_candidates_lie_on_crest():
    cols = np.arange(64, dtype=np.float64)
    profile = 0.001 + 0.02 * np.exp(-(cols - 32) ** 2 / (2 * 3.0 ** 2))
    hm = WorldHeightMap(np.tile(profile, (64, 1)), 0.001)
    responses = laplacian_pyramid_responses(hm, 3)
    threshold = 0.6 * max(r.max() for r in responses)

    candidates = extract_candidates(responses, hm, threshold, rng_seed=0)
    assert candidates
    for cand in candidates:
        assert abs(cand.x - 0.0325) <= 0.001 + 1e-12
        assert angle_gap(cand.direction, 0.0) <= np.deg2rad(2.0)


def _brute_force_candidates(z, levels, threshold):
    k = np.array([1.0, 4.0, 6.0, 4.0, 1.0])
    gauss = np.outer(k, k) / 256.0
    laplace = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])
    found = set()
    x = z
    for level in range(levels):
        smoothed = ndimage.convolve(x, gauss, mode='mirror')
        response = np.abs(ndimage.convolve(smoothed, laplace, mode='mirror'))
        H, W = response.shape
        for r in range(H):
            for c in range(W):
                if response[r, c] <= threshold:
                    continue
                window = response[max(r - 1, 0):r + 2, max(c - 1, 0):c + 2]
                if response[r, c] >= window.max():
                    found.add((level, min(c * 2 ** level, z.shape[1] - 1), min(r * 2 ** level, z.shape[0] - 1)))
        x = smoothed[::2, ::2]
    return found


def test_candidates_match_brute_force():
    rng = np.random.default_rng(5)
    z = 0.01 + 0.005 * rng.random((32, 32))
    hm = WorldHeightMap(z, 0.001)
    responses = laplacian_pyramid_responses(hm, 3)
    values = np.sort(np.concatenate([r.ravel() for r in responses]))
    i = len(values) // 2
    threshold = 0.5 * (values[i] + values[i + 1])

    candidates = extract_candidates(responses, hm, threshold, rng_seed=1)
    got = {(c.level, int(round(c.x / 0.001 - 0.5)), int(round(c.y / 0.001 - 0.5))) for c in candidates}
    assert len(got) == len(candidates)
    assert got == _brute_force_candidates(z, 3, threshold)


def test_candidate_order_is_seeded():
    rng = np.random.default_rng(2)
    hm = WorldHeightMap(0.01 + 0.005 * rng.random((64, 64)), 0.001)
    responses = laplacian_pyramid_responses(hm, 3)
    a = extract_candidates(responses, hm, 0.0005, rng_seed=4)
    b = extract_candidates(responses, hm, 0.0005, rng_seed=4)
    c = extract_candidates(responses, hm, 0.0005, rng_seed=5)
    assert [x.to_dict() for x in a] == [x.to_dict() for x in b]
    assert sorted(x.to_dict()['x'] for x in a) == sorted(x.to_dict()['x'] for x in c)


def test_responses_are_translation_equivariant():
    z = ndimage.gaussian_filter(np.random.default_rng(7).random((128, 128)), 2.0) * 0.02
    base = laplacian_pyramid_responses(WorldHeightMap(z, 0.001), 3)
    shifted = laplacian_pyramid_responses(WorldHeightMap(np.roll(z, 4, axis=1), 0.001), 3)
    m = 8
    for level in range(3):
        s = 4 // 2 ** level
        assert np.allclose(shifted[level][m:-m, m + s:-m], base[level][m:-m, m:-m - s], atol=1e-12)


def test_small_raster_raises():
    with pytest.raises(RasterSizeError):
        laplacian_pyramid_responses(WorldHeightMap(np.zeros((20, 20)), 0.001), 3)


def test_plane_direction():
    rows, cols = np.mgrid[0:16, 0:16].astype(np.float64)
    hm = WorldHeightMap(3.0 * cols + 4.0 * rows, 0.001)
    assert wrinkle_direction(hm, 8, 8) == pytest.approx(np.arctan2(4.0, 3.0))


def test_direction_rotates_with_raster():
    z = ndimage.gaussian_filter(np.random.default_rng(3).random((33, 33)), 3.0)
    before = wrinkle_direction(WorldHeightMap(z, 0.001), 16, 16)
    after = wrinkle_direction(WorldHeightMap(np.rot90(z).copy(), 0.001), 16, 16)
    assert angle_gap(after, before + np.pi / 2) < 1e-9


def test_direction_needs_margin():
    hm = WorldHeightMap(np.zeros((16, 16)), 0.001)
    with pytest.raises(MarginError):
        wrinkle_direction(hm, 0, 5)
    with pytest.raises(MarginError):
        wrinkle_direction(hm, 5, 15)


def test_crop_is_centred_on_bump():
    X, Y = GridSpec(0.3, 0.3, 0.001).cell_centers()
    hm = WorldHeightMap(0.02 * np.exp(-((X - 0.15) ** 2 + (Y - 0.15) ** 2) / (2 * 0.005 ** 2)), 0.001)
    crop = crop_grip_window(hm, (0.15, 0.15), side=0.11, size=64)
    assert crop.shape == (64, 64)
    row, col = np.unravel_index(np.argmax(crop), crop.shape)
    assert abs(row - 32) <= 1 and abs(col - 32) <= 1


def test_crop_pads_with_table_height():
    hm = WorldHeightMap(np.full((300, 300), 0.01), 0.001)
    crop = crop_grip_window(hm, (0.0, 0.15))
    assert np.all(crop[:, :32] == 0.0)
    assert np.allclose(crop[:, 32:], 0.01)


def test_crop_outside_raster_raises():
    hm = WorldHeightMap(np.zeros((100, 100)), 0.001)
    with pytest.raises(BoundsError):
        crop_grip_window(hm, (-0.01, 0.05))
