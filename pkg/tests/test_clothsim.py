from dataclasses import replace

import numpy as np
import pytest

from config.errors import BoundsError, PoseError
from config.settings import GripConfig, Settings
from network.clothsim import (
    contact_quality,
    gel_load,
    label_to_material,
    layout_wrinkles,
    make_item,
    relayout,
    render_depth,
    simulate_grip,
    synth_cloth,
)
from network.geometry import CameraModel, WorldHeightMap, extract_candidates, laplacian_pyramid_responses
from network.tactile import extract_features, max_contact_frame, select_sequence_frames

from tests.conftest import candidate_at


def with_labels(item, **changes):
    labels = replace(item.labels, **changes)
    return replace(item, labels=labels, material=label_to_material(labels, item.item_seed))


def test_items_are_deterministic():
    assert make_item(7, 3) == make_item(7, 3)
    assert make_item(7, 3) != make_item(7, 4)


def test_textile_types_cycle():
    assert [make_item(i, 0).labels.textile_type for i in range(40)] == [i % 20 for i in range(40)]


def test_material_is_monotone_in_labels(item):
    thickness = [with_labels(item, thickness=t).material.thickness_mm for t in range(5)]
    assert all(a < b for a, b in zip(thickness, thickness[1:]))
    period = [with_labels(item, smoothness=s).material.texture_period_mm for s in range(5)]
    assert all(a > b for a, b in zip(period, period[1:]))


def test_thicker_cloth_has_taller_wrinkles(items):
    thin_heights, thick_heights = [], []
    for item in items:
        for thickness, heights in ((0, thin_heights), (4, thick_heights)):
            cloth = with_labels(item, thickness=thickness)
            ridges = synth_cloth(cloth, 0.3).z - synth_cloth(cloth, 0.3, n_wrinkles=0).z
            heights.append(ridges.mean())
    assert np.mean(thick_heights) > np.mean(thin_heights)


def test_main_wrinkle_is_prominent(items):
    for item in items:
        assert layout_wrinkles(item, 0.6)[0].height >= 0.02


def test_synth_cloth_is_deterministic(item):
    a = synth_cloth(item, 0.3)
    b = synth_cloth(item, 0.3)
    assert a.z.shape == (300, 300)
    assert np.array_equal(a.z, b.z)
    assert a.z.min() >= 0.0


def test_relayout_moves_wrinkles(item):
    a = synth_cloth(relayout(item, 1), 0.3)
    b = synth_cloth(relayout(item, 2), 0.3)
    assert not np.array_equal(a.z, b.z)
    assert relayout(item, 1) == relayout(item, 1)


def test_small_table_raises(item):
    with pytest.raises(ValueError):
        synth_cloth(item, 0.2)


def test_wrinkles_produce_candidates():
    threshold = Settings().pyramid.threshold
    for i in range(5):
        item = make_item(i, 0)
        flat = synth_cloth(item, 0.3, n_wrinkles=0)
        assert extract_candidates(laplacian_pyramid_responses(flat, 3), flat, threshold, 0) == []
        wrinkled = synth_cloth(item, 0.3)
        assert len(extract_candidates(laplacian_pyramid_responses(wrinkled, 3), wrinkled, threshold, 0)) > 0


def test_dropout_removes_exact_pixel_count():
    cam = CameraModel.tilted(128, 128, 100.0, 100.0, 64.0, 64.0, 1.0, 0.0, look_at=(0.15, 0.15))
    table = WorldHeightMap(np.zeros((300, 300)), 0.001)
    depth = render_depth(table, cam, 0.001, seed=0, dropout=0.02)
    assert int((~depth.valid).sum()) == 328
    assert np.all(depth.values[~depth.valid] == 0.0)


def test_dropout_is_seeded():
    cam = CameraModel.tilted(64, 64, 50.0, 50.0, 32.0, 32.0, 1.0, 0.0, look_at=(0.15, 0.15))
    table = WorldHeightMap(np.zeros((300, 300)), 0.001)
    a = render_depth(table, cam, 0.001, seed=4)
    b = render_depth(table, cam, 0.001, seed=4)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.valid, b.valid)


def test_camera_inside_cloth_raises():
    cam = CameraModel.tilted(16, 16, 10.0, 10.0, 8.0, 8.0, 0.01, 0.0, look_at=(0.05, 0.05))
    with pytest.raises(PoseError):
        render_depth(WorldHeightMap(np.full((100, 100), 0.02), 0.001), cam, 0.0)


def test_contact_quality():
    assert contact_quality(0.0, 0.0) == pytest.approx(0.5)
    assert contact_quality(10.0, 0.0) > contact_quality(10.0, 90.0)
    assert contact_quality(10.0, 90.0) < 0.5
    assert contact_quality(20.0, 0.0) > contact_quality(5.0, 0.0)


def test_bare_table_grip_is_invalid(item):
    table = WorldHeightMap(np.zeros((300, 300)), 0.001)
    seq = simulate_grip(item, table, candidate_at(0.15, 0.15), 0.0, seed=0)
    assert not seq.valid_contact
    assert max(f.deformation.max() for f in seq.frames) <= 0.05


def test_aligned_grip_on_ridge_is_valid(item, ridge_map):
    seq = simulate_grip(item, ridge_map, candidate_at(0.1505, 0.15, 0.021), 0.0, seed=1)
    assert seq.valid_contact
    assert seq.quality >= 0.5
    assert 10 <= len(seq) <= 25
    assert seq.stack().shape == (len(seq), 48, 64)


def test_crossed_grip_on_ridge_is_invalid(item, ridge_map):
    seq = simulate_grip(item, ridge_map, candidate_at(0.1505, 0.15, 0.021), 90.0, seed=1)
    assert not seq.valid_contact


def test_grip_is_deterministic(item, ridge_map):
    a = simulate_grip(item, ridge_map, candidate_at(0.1505, 0.15), 3.0, seed=9, sensor_id=2)
    b = simulate_grip(item, ridge_map, candidate_at(0.1505, 0.15), 3.0, seed=9, sensor_id=2)
    assert np.array_equal(a.stack(), b.stack())
    assert np.array_equal(a.forces, b.forces)


def test_thick_cloth_frames_grow_with_force(item, ridge_map):
    thick = with_labels(item, thickness=4)
    seq = simulate_grip(thick, ridge_map, candidate_at(0.1505, 0.15), 0.0, seed=2)
    assert np.all(np.diff(seq.forces) >= 0)
    means = seq.stack().mean(axis=(1, 2))
    assert np.all(np.diff(means) >= -1e-12)
    assert max_contact_frame(seq) == len(seq) - 1


def test_gel_load_peaks_at_saturation():
    force = np.linspace(0.0, 1.0, 101)
    thick = gel_load(force, 3.5)
    assert thick[-1] == pytest.approx(1.0)
    assert np.all(np.diff(thick) >= 0)
    thin = gel_load(force, 0.3)
    assert thin.max() == pytest.approx(1.0)
    assert int(np.argmax(thin)) == 25
    assert thin[-1] == pytest.approx(1.0 - 0.06)


def test_thin_cloth_reaches_max_contact_early(ridge_map):
    early = with_blanks = total = 0
    for i in range(20):
        item = with_labels(make_item(i, 0), thickness=0)
        for seed in range(5):
            seq = simulate_grip(item, ridge_map, candidate_at(0.1505, 0.15), 0.0, seed=100 * i + seed)
            early += max_contact_frame(seq) <= len(seq) // 2
            with_blanks += not select_sequence_frames(seq, 9)[0].any()
            total += 1
    assert early >= 0.9 * total
    assert with_blanks >= 0.9 * total


def test_gel_cap_holds_after_sensor_gain(item, ridge_map):
    thick = with_labels(item, thickness=4)
    grip = GripConfig(gel_mm=0.3)
    for sensor_id in range(5):
        seq = simulate_grip(thick, ridge_map, candidate_at(0.1505, 0.15), 0.0, seed=3, sensor_id=sensor_id,
                            grip=grip)
        stack = seq.stack()
        assert stack.max() <= 0.3
        assert stack.max() == pytest.approx(0.3)


def test_textile_type_separates_peak_features(ridge_map):
    base = with_labels(make_item(3, 0), thickness=3, smoothness=4, windproof=0)
    a = with_labels(base, textile_type=2)
    b = with_labels(base, textile_type=13)

    def peak_features(cloth):
        rows = []
        for k in range(10):
            seq = simulate_grip(cloth, ridge_map, candidate_at(0.1505, 0.11 + 0.008 * k), 2.0 * (k % 3),
                                seed=k)
            rows.append(extract_features(seq.frames[max_contact_frame(seq)]))
        return np.stack(rows)

    fa, fb = peak_features(a), peak_features(b)
    between = np.abs(fa.mean(axis=0) - fb.mean(axis=0)).mean()
    within = 0.5 * (fa.std(axis=0).mean() + fb.std(axis=0).mean())
    assert between > within


def test_grip_outside_raster_raises(item, ridge_map):
    with pytest.raises(BoundsError):
        simulate_grip(item, ridge_map, candidate_at(0.5, 0.1), 0.0, seed=0)
