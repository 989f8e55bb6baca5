from dataclasses import replace

import numpy as np
import pytest
import torch

from collect import random_grips
from config.data_loader import (
    AugmentedFrameDataset,
    Corpus,
    GripRecord,
    SplitSpec,
    TactileFeatureDataset,
    build_split,
    check_no_leakage,
    filter_valid,
)
from config.errors import EmptyInputError, LeakageError, ShapeError
from config.settings import Settings
from config.taxonomy import PropertyLabels
from config.transforms import get_train_transforms, seed_augmentations
from network.clothsim import make_item
from network.explorer import ClothWorld

from tests.conftest import candidate_at, contact_sequence


def record(item_id, iteration, valid=True):
    return GripRecord(item_id, iteration, seed=iteration, sensor_id=iteration % 5,
                      candidate=candidate_at(0.1, 0.2).to_dict(), misalign_deg=1.5, n_frames=12,
                      sim_valid=valid, detected_contact=valid, valid_contact=valid)


def records_for(items, grips=10):
    return [record(item.item_id, k, valid=(k % 3 != 0)) for item in items for k in range(grips)]


def wash_only_items(n, seed):
    # 除洗涤方式外所有属性相同
    items = []
    for i in range(n):
        item = make_item(i, seed)
        labels = PropertyLabels(0, 0, 0, 0, 0, i % 6, 0, 0, 0, 0, 0)
        items.append(replace(item, labels=labels))
    return items


def test_split_sizes(items):
    spec = build_split(items[:10], 0.2, seed=0, records=records_for(items[:10]))
    assert len(spec.test_items) == 2
    assert len(spec.pool_items) == 8
    assert not set(spec.test_items) & set(spec.pool_items)
    assert abs(len(spec.train_iterations) - 68) <= 1
    assert len(spec.train_iterations) + len(spec.val_iterations) == 80


def test_split_is_deterministic(items):
    a = build_split(items, 0.2, seed=3, records=records_for(items))
    b = build_split(items, 0.2, seed=3, records=records_for(items))
    assert a == b
    assert sorted(a.train_iterations + a.val_iterations) == sorted(
        r.key for r in records_for(items) if r.item_id in set(a.pool_items))


@pytest.mark.parametrize("seed", range(5))
def test_test_split_covers_every_wash_method(seed):
    spec = build_split(wash_only_items(12, seed), 0.5, seed=seed)
    wash = {int(item_id[4:]) % 6 for item_id in spec.test_items}
    assert wash == set(range(6))


def test_split_needs_two_items(item):
    with pytest.raises(EmptyInputError):
        build_split([item])


def test_leakage_is_detected(items):
    spec = build_split(items, 0.2, seed=0, records=records_for(items))
    leaked = replace(spec, train_iterations=spec.train_iterations + [(spec.test_items[0], 0)])
    with pytest.raises(LeakageError):
        check_no_leakage(leaked, [])
    check_no_leakage(spec, records_for(items))


def test_part_of(items):
    spec = build_split(items, 0.2, seed=0, records=records_for(items))
    assert spec.part_of((spec.test_items[0], 3)) == 'test'
    assert spec.part_of(spec.train_iterations[0]) == 'train'
    assert spec.part_of(spec.val_iterations[0]) == 'val'
    assert spec.part_of(('nothing', 0)) is None


def test_filter_valid():
    records = [record('item000', k, valid=(k % 2 == 0)) for k in range(6)]
    kept = filter_valid(records)
    assert [r.iteration for r in kept] == [0, 2, 4]
    assert filter_valid(kept) == kept
    assert filter_valid([]) == []
    assert len(filter_valid([contact_sequence([0.2]), contact_sequence([0.2], valid_contact=False)])) == 1


def test_random_collection_valid_fraction():
    # 默认场景下 60 件衣物 x 10 次随机抓取
    world = ClothWorld(Settings())
    records = []
    for index in range(60):
        item = make_item(index, 0)
        seed = int(np.random.default_rng([0, index]).integers(2 ** 31))
        _, _, grips = random_grips(world, item, 10, seed)
        records.extend(record(item.item_id, g.iteration, valid=g.valid_contact) for g in grips)
    assert len(records) >= 580
    assert 0.45 <= len(filter_valid(records)) / len(records) <= 0.70


def test_corpus_manifests_reload(tmp_path, items):
    corpus = Corpus(str(tmp_path / 'corpus'))
    records = records_for(items[:3], grips=4)
    spec = build_split(items[:3], 0.34, seed=1, records=records)
    corpus.save_items(items[:3])
    corpus.save_records(records)
    corpus.save_split(spec)

    assert corpus.load_items() == items[:3]
    assert corpus.load_records() == sorted(records, key=lambda r: r.key)
    assert corpus.load_split() == spec
    assert corpus.load_records()[0].grip_candidate() == candidate_at(0.1, 0.2)


def test_missing_corpus_files_raise(tmp_path):
    corpus = Corpus(str(tmp_path / 'empty'))
    with pytest.raises(FileNotFoundError):
        corpus.load_items()
    with pytest.raises(FileNotFoundError):
        corpus.load_split('default')


def test_sequences_and_features_on_disk(tmp_path):
    corpus = Corpus(str(tmp_path))
    seq = contact_sequence([0.0, 0.1, 0.3], item_id='item004')
    corpus.write_sequence(seq, 2)
    loaded = corpus.read_sequence(record('item004', 2))
    assert len(loaded) == 3
    assert np.allclose(loaded.stack(), seq.stack())
    assert loaded.valid_contact

    digest = b'12345678'
    features = np.arange(9 * 208, dtype=np.float64).reshape(9, 208)
    corpus.write_features('item004', 2, features, digest)
    assert np.array_equal(corpus.read_features('item004', 2, digest, 208, frames=1), features[-1])
    assert np.array_equal(corpus.read_features('item004', 2, digest, 208, frames=9), features)


def test_feature_dataset_serves_rows():
    features = np.arange(15, dtype=np.float64).reshape(5, 3)
    labels = np.zeros((5, 11), dtype=np.int64)
    dataset = TactileFeatureDataset(features, labels)
    assert len(dataset) == 5
    x, y = dataset[2]
    assert x.tolist() == [6.0, 7.0, 8.0]
    assert y.shape == (11,)
    with pytest.raises(ValueError):
        TactileFeatureDataset(np.zeros((4, 3)), labels)


def contact_frames(n=3, t=2, depth=0.4):
    frames = np.zeros((n, t, 48, 64))
    frames[:, :, 12:36, 16:48] = depth
    return frames


def test_offset_only_touches_contact_pixels():
    frames = torch.zeros((3, 48, 64), dtype=torch.float64)
    frames[:, 10:20, 10:20] = 0.3
    out = seed_augmentations(get_train_transforms(0.05), 0, 0, 0)(frames)
    assert torch.all(out[:, :10] == 0.0)
    offset = (out[0, 15, 15] - 0.3).item()
    assert abs(offset) <= 0.05
    assert torch.allclose(out[:, 10:20, 10:20], torch.full((3, 10, 10), 0.3 + offset, dtype=torch.float64))


def test_offsets_are_redrawn_every_epoch():
    labels = np.zeros((3, 11), dtype=np.int64)
    dataset = AugmentedFrameDataset(contact_frames(), labels, get_train_transforms(0.05), seed=1)
    offsets = []
    for epoch in range(8):
        dataset.set_epoch(epoch)
        offsets.append([dataset.augment(i)[0, 20, 20] - 0.4 for i in range(3)])
    offsets = np.array(offsets)
    assert np.all(np.abs(offsets) <= 0.05)
    assert len(np.unique(offsets)) == offsets.size

    dataset.set_epoch(3)
    assert np.array_equal(dataset.augment(1), dataset.augment(1))
    assert dataset.augment(1)[0, 20, 20] - 0.4 == offsets[3, 1]


def test_augmented_dataset_extracts_features():
    frames = contact_frames(n=2, t=3)
    labels = np.zeros((2, 11), dtype=np.int64)
    x, y = AugmentedFrameDataset(frames, labels, get_train_transforms(0.05))[0]
    assert x.shape == (3, 208)
    assert x.dtype == torch.float32
    x, _ = AugmentedFrameDataset(frames[:, -1:], labels, get_train_transforms(0.05))[0]
    assert x.shape == (208,)
    with pytest.raises(ShapeError):
        AugmentedFrameDataset(frames[0], labels, get_train_transforms(0.05))


def test_sensor_jitter_shares_the_sample_generator():
    transform = get_train_transforms(0.05, sensor_jitter=True)
    assert len(transform) == 2
    frames = torch.from_numpy(contact_frames(n=1, t=2)[0])
    a = seed_augmentations(transform, 4, 1, 0)(frames)
    b = seed_augmentations(transform, 4, 1, 0)(frames)
    assert torch.equal(a, b)
    assert torch.all(a[:, :12] == 0.0)
    assert 0.92 * 0.35 - 0.01 <= a[0, 20, 20].item() <= 1.08 * 0.45 + 0.01
