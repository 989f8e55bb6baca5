import numpy as np
import pytest
import torch
from scipy.ndimage import gaussian_filter  # type: ignore

from config.errors import ShapeError
from network.clothsim import TactileSequence, make_item, simulate_grip, synth_cloth
from network.tactile import (
    BankConfig,
    FilterBank,
    default_bank,
    detect_contact,
    energy_statistics,
    extract_features,
    frame_features,
    gaussian_derivative_kernels,
    max_contact_frame,
    oriented_energy,
    select_sequence_frames,
    sequence_features,
)

from tests.conftest import candidate_at, contact_sequence


def constant_sequence(values):
    frames = [np.full((48, 64), v) for v in values]
    return TactileSequence.from_arrays(frames, np.linspace(0, 1, len(values)))


def test_bank_layout():
    config = BankConfig()
    assert config.n_channels == 24
    assert config.cell_dim == 52
    assert config.feature_dim == 208
    assert len(config.digest()) == 8
    assert config.digest() == BankConfig().digest()
    assert config.digest() != BankConfig(sigmas=(1.0, 2.0, 4.0)).digest()


@pytest.mark.parametrize("sigma", [1.0, 2.0, 4.0, 8.0])
def test_derivative_kernel_moments(sigma):
    k0, k1, k2 = gaussian_derivative_kernels(sigma)
    j = np.arange(len(k0)) - len(k0) // 2
    assert k0.sum() == pytest.approx(1.0)
    assert np.sum(k1 * j) == pytest.approx(1.0)
    assert k2.sum() == pytest.approx(0.0, abs=1e-12)
    assert np.sum(k2 * j ** 2 / 2) == pytest.approx(1.0)


def test_blank_frame_has_zero_features():
    assert np.array_equal(extract_features(np.zeros((48, 64))), np.zeros(208))


def test_wrong_frame_shape_raises():
    with pytest.raises(ShapeError):
        extract_features(np.zeros((64, 48)))
    with pytest.raises(ShapeError):
        frame_features(np.zeros((48, 64)))


def test_batch_features_match_single_frames(item, ridge_map):
    seq = simulate_grip(item, ridge_map, candidate_at(0.1505, 0.15), 0.0, seed=3)
    stack = seq.stack()[-4:]
    batch = frame_features(stack)
    for row, frame in zip(batch, stack):
        assert np.allclose(row, extract_features(frame), rtol=1e-9, atol=1e-12)


def test_rotation_preserves_energy_multiset():
    rows, cols = np.mgrid[0:96, 0:96].astype(np.float64)
    window = np.exp(-((rows - 47.5) ** 2 + (cols - 47.5) ** 2) / (2 * 8.0 ** 2))
    texture = window * (np.cos(2 * np.pi * (0.8 * cols + 0.3 * rows) / 5.0) + 0.5 * np.cos(2 * np.pi * rows / 3.0))
    bank = FilterBank().eval()
    before, _ = oriented_energy(texture, bank=bank)
    after, _ = oriented_energy(np.rot90(texture).copy(), bank=bank)
    assert np.allclose(np.sort(before, axis=1), np.sort(after, axis=1), rtol=1e-6, atol=1e-9)


def test_fine_grating_energy_sits_at_smallest_scale():
    cols = np.arange(64)
    grating = np.tile(0.3 + 0.1 * (-1.0) ** cols, (48, 1))
    sums, _ = oriented_energy(grating)
    per_scale = sums.sum(axis=1)
    assert per_scale[0] >= 0.6 * per_scale.sum()


def test_energy_change_is_bounded_by_response_gain():
    rng = np.random.default_rng(0)
    a = 0.5 + 0.2 * gaussian_filter(rng.standard_normal((48, 64)), 2.0)
    delta = 0.01
    b = a + rng.uniform(-delta, delta, size=a.shape)
    mask = np.ones(a.shape, dtype=bool)

    bank = FilterBank().eval()
    _, ea = oriented_energy(a, bank=bank)
    _, eb = oriented_energy(b, bank=bank)
    mean_a, _ = energy_statistics(ea, mask)
    mean_b, _ = energy_statistics(eb, mask)

    with torch.no_grad():
        ra = bank.responses(torch.from_numpy(a)[None])
        rb = bank.responses(torch.from_numpy(b)[None])
    gains = bank.response_gain()
    for s in range(len(gains)):
        r_max = max(float(t.abs().max()) for t in ra[s] + rb[s])
        bound = 4.0 * gains[s] * delta * r_max
        assert np.all(np.abs(mean_a[s] - mean_b[s]) <= bound + 1e-12)


def test_detect_contact_thresholds():
    assert detect_contact(contact_sequence([0.0, 0.05, 0.2]))
    # 面积足够但深度不足 0.1mm
    assert not detect_contact(contact_sequence([0.0, 0.08]))
    assert not detect_contact(constant_sequence([0.0, 0.0, 0.0]))


def test_detect_contact_is_monotone_in_deformation():
    rng = np.random.default_rng(1)
    for _ in range(20):
        seq = contact_sequence(rng.uniform(0.0, 0.4, size=6))
        before = detect_contact(seq)
        extra = TactileSequence.from_arrays([f.deformation + rng.uniform(0.0, 0.1, (48, 64)) for f in seq.frames],
                                            seq.forces)
        assert detect_contact(extra) or not before


def test_detect_contact_rejects_empty_sequence():
    with pytest.raises(ValueError):
        detect_contact(TactileSequence([], False, 'item000'))


def test_detect_contact_agrees_with_simulator():
    rng = np.random.default_rng(2)
    agree, total = 0, 0
    for i in range(5):
        item = make_item(i, 0)
        hm = synth_cloth(item, 0.3)
        for k in range(100):
            x, y = rng.uniform(0.01, 0.29, size=2)
            seq = simulate_grip(item, hm, candidate_at(x, y), float(rng.uniform(-90, 90)), seed=100 * i + k)
            agree += int(detect_contact(seq) == seq.valid_contact)
            total += 1
    assert agree / total >= 0.95


def test_max_contact_frame():
    assert max_contact_frame(constant_sequence([0.1, 0.2, 0.3, 0.4])) == 3
    peak = [0.1 * k for k in range(8)] + [0.5, 0.4, 0.3, 0.2]
    assert max_contact_frame(constant_sequence(peak)) == 7
    assert max_contact_frame(constant_sequence([0.2, 0.2, 0.1])) == 1


def test_max_contact_frame_matches_argmax():
    rng = np.random.default_rng(3)
    for _ in range(20):
        frames = rng.random((int(rng.integers(2, 20)), 48, 64))
        assert max_contact_frame(list(frames)) == int(np.argmax(frames.mean(axis=(1, 2))))


def test_sequence_window_ends_at_peak():
    values = [0.01 * (k + 1) for k in range(9)] + [0.05, 0.04, 0.03]
    selected = select_sequence_frames(constant_sequence(values), 9)
    assert [float(f[0, 0]) for f in selected] == pytest.approx(values[:9])


def test_sequence_window_pads_with_blanks():
    values = [0.1, 0.2, 0.3, 0.4, 0.5, 0.2]
    selected = select_sequence_frames(constant_sequence(values), 9)
    assert len(selected) == 9
    assert all(not f.any() for f in selected[:4])
    assert [float(f[0, 0]) for f in selected[4:]] == pytest.approx(values[:5])


def test_sequence_window_with_step():
    values = [0.01 * (k + 1) for k in range(21)]
    assert [float(f[0, 0]) for f in select_sequence_frames(constant_sequence(values), 9)] == \
        pytest.approx(values[12:])
    assert [float(f[0, 0]) for f in select_sequence_frames(constant_sequence(values), 9, step=2)] == \
        pytest.approx(values[4::2])


def test_sequence_window_needs_two_frames():
    with pytest.raises(ValueError):
        select_sequence_frames(constant_sequence([0.1, 0.2]), 1)


def test_sequence_features_end_with_peak_frame(item, ridge_map):
    seq = simulate_grip(item, ridge_map, candidate_at(0.1505, 0.15), 0.0, seed=5)
    features = sequence_features(seq, default_bank())
    assert features.shape == (9, 208)
    peak = seq.frames[max_contact_frame(seq)]
    assert np.allclose(features[-1], extract_features(peak), rtol=1e-9, atol=1e-12)
    assert np.abs(features[-1]).sum() > 0
