"""
语料库管理

目录结构::

    <root>/items.jsonl
    <root>/records.jsonl
    <root>/tactile/<item>/<iter>.tseq
    <root>/depth/<item>/<iter>.hmap      抓取点周围 11cm 的世界坐标窗口
    <root>/depth/<item>/scene.hmap       衣物的深度图
    <root>/features/<item>/<iter>.tfea
    <root>/models/*.tmdl
    <root>/splits/<name>.json
    <root>/results/
"""
import os
import json
import logging
from collections import Counter
from dataclasses import dataclass, field, asdict, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch.utils.data import Dataset

from config.errors import EmptyInputError, LeakageError, ShapeError
from config.taxonomy import HEAD_NAMES
from config.transforms import seed_augmentations
from network.clothsim import ClothItem, TactileSequence
from network.geometry import GripCandidate
from network.tactile import FilterBank, default_bank, frame_features
from utils.raster_io import (FRAME_CAMERA, FRAME_WORLD, RasterRecord, read_features, read_hmap, read_tseq,
                             write_features, write_hmap, write_tseq)

logger = logging.getLogger(__name__)

RecordKey = Tuple[str, int]


@dataclass
class GripRecord:
    """一次采集抓取的元数据（records.jsonl 的一行）"""
    item_id: str
    iteration: int
    seed: int
    sensor_id: int
    candidate: Dict[str, float]
    misalign_deg: float
    n_frames: int
    sim_valid: bool
    detected_contact: bool
    valid_contact: bool

    @property
    def key(self) -> RecordKey:
        return self.item_id, self.iteration

    def grip_candidate(self) -> GripCandidate:
        return GripCandidate.from_dict(self.candidate)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> 'GripRecord':
        return cls(
            item_id=str(d['item_id']),
            iteration=int(d['iteration']),
            seed=int(d['seed']),
            sensor_id=int(d['sensor_id']),
            candidate={k: float(v) if k != 'level' else int(v) for k, v in d['candidate'].items()},
            misalign_deg=float(d['misalign_deg']),
            n_frames=int(d['n_frames']),
            sim_valid=bool(d['sim_valid']),
            detected_contact=bool(d['detected_contact']),
            valid_contact=bool(d['valid_contact']),
        )


@dataclass
class SplitSpec:
    """
    数据集划分

    测试集按衣物划分（未见过的衣物）；其余衣物组成训练池，池内按采集次数划分训练/验证。
    """
    name: str
    seed: int
    ratio_test: float
    iteration_ratio: float
    test_items: List[str]
    pool_items: List[str]
    train_iterations: List[RecordKey] = field(default_factory=list)
    val_iterations: List[RecordKey] = field(default_factory=list)

    def assign_iterations(self, keys: Iterable[RecordKey]) -> 'SplitSpec':
        """
        池内采集次数的随机划分

        :param keys: ``(item_id, iteration)`` 列表，测试衣物的键会被忽略
        :return: 填好 train/val 的新 SplitSpec
        :rtype: SplitSpec
        """
        pool = set(self.pool_items)
        keys = sorted({(str(i), int(k)) for i, k in keys if i in pool})
        order = np.random.default_rng([self.seed, 1]).permutation(len(keys))
        n_train = int(round(self.iteration_ratio * len(keys)))
        train = sorted(keys[i] for i in order[:n_train])
        val = sorted(keys[i] for i in order[n_train:])
        return replace(self, train_iterations=train, val_iterations=val)

    def part_of(self, key: RecordKey) -> Optional[str]:
        """'train' / 'val' / 'test'，不属于任何部分时为 None"""
        if key[0] in self.test_items:
            return 'test'
        if key in set(self.train_iterations):
            return 'train'
        if key in set(self.val_iterations):
            return 'val'
        return None

    def to_dict(self) -> dict:
        d = asdict(self)
        d['train_iterations'] = [list(k) for k in self.train_iterations]
        d['val_iterations'] = [list(k) for k in self.val_iterations]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> 'SplitSpec':
        return cls(
            name=d['name'],
            seed=int(d['seed']),
            ratio_test=float(d['ratio_test']),
            iteration_ratio=float(d['iteration_ratio']),
            test_items=list(d['test_items']),
            pool_items=list(d['pool_items']),
            train_iterations=[(str(i), int(k)) for i, k in d.get('train_iterations', [])],
            val_iterations=[(str(i), int(k)) for i, k in d.get('val_iterations', [])],
        )


def _label_pairs(item: ClothItem) -> set:
    return {(name, value) for name, value in zip(HEAD_NAMES, item.labels.as_tuple())}


def build_split(items: Sequence[ClothItem], ratio_test: float = 0.2, seed: int = 0, name: str = 'default',
                iteration_ratio: float = 0.85, records: Optional[Iterable] = None) -> SplitSpec:
    """
    构建数据集划分

    贪心地挑选测试衣物，使每个属性头的每个类别尽量在测试集中出现，
    同时保证训练池中仍保留该类别至少一件衣物。无法覆盖时给出警告并随机补足。

    :param items: 全部衣物
    :type items: list
    :param ratio_test: 测试衣物比例
    :type ratio_test: float
    :param seed: 随机种子
    :type seed: int
    :param records: 可选的采集记录，给出时同时完成池内划分
    :return: 划分结果
    :rtype: SplitSpec
    """
    n = len(items)
    if n < 2:
        raise EmptyInputError(f"Need at least 2 items to split, got {n}")
    n_test = min(max(int(round(ratio_test * n)), 1), n - 1)

    rng = np.random.default_rng(seed)
    order = [int(i) for i in rng.permutation(n)]
    pairs = [_label_pairs(item) for item in items]
    pool_counts = Counter(p for ps in pairs for p in ps)
    uncovered = {p for p, c in pool_counts.items() if c >= 2}

    test: List[int] = []
    while len(test) < n_test and uncovered:
        best, best_gain = None, 0
        for i in order:
            if i in test or any(pool_counts[p] <= 1 for p in pairs[i]):
                continue
            gain = len(pairs[i] & uncovered)
            if gain > best_gain:
                best, best_gain = i, gain
        if best is None:
            break
        test.append(best)
        for p in pairs[best]:
            pool_counts[p] -= 1
        uncovered -= pairs[best]

    if uncovered:
        missing = sorted({name for name, _ in uncovered})
        logger.warning("Too few items to stratify the test split; classes of %s are missing from test, "
                       "filling randomly", ', '.join(missing))
    for i in order:
        if len(test) >= n_test:
            break
        if i not in test:
            test.append(i)

    test_ids = sorted(items[i].item_id for i in test)
    pool_ids = sorted(item.item_id for item in items if item.item_id not in set(test_ids))
    spec = SplitSpec(name, int(seed), float(ratio_test), float(iteration_ratio), test_ids, pool_ids)
    if records is not None:
        records = list(records)
        spec = spec.assign_iterations(r.key for r in records)
        check_no_leakage(spec, records)
    return spec


def check_no_leakage(spec: SplitSpec, records: Iterable) -> None:
    """训练/验证记录的衣物不得出现在测试集中"""
    test = set(spec.test_items)
    train_val = set(spec.train_iterations) | set(spec.val_iterations)
    for key in train_val:
        if key[0] in test:
            raise LeakageError(f"Iteration {key} of test item '{key[0]}' is in the train/val split")
    for record in records:
        if record.key in train_val and record.item_id in test:
            raise LeakageError(f"Record {record.key} belongs to test item '{record.item_id}'")


def filter_valid(records: Iterable) -> list:
    """
    只保留有效接触的记录

    :param records: GripRecord 或 TactileSequence
    :rtype: list
    """
    records = list(records)
    kept = [r for r in records if r.valid_contact]
    dropped = len(records) - len(kept)
    if dropped:
        logger.warning("Dropped %d of %d records without valid contact", dropped, len(records))
    return kept


class Corpus:
    """
    语料库目录

    :param root: 根目录
    :type root: str
    """
    def __init__(self, root: str):
        self.root = root

    # 路径
    @property
    def items_path(self) -> str:
        return os.path.join(self.root, 'items.jsonl')

    @property
    def records_path(self) -> str:
        return os.path.join(self.root, 'records.jsonl')

    def tactile_path(self, item_id: str, iteration: int) -> str:
        return os.path.join(self.root, 'tactile', item_id, f'{iteration}.tseq')

    def crop_path(self, item_id: str, iteration: int) -> str:
        return os.path.join(self.root, 'depth', item_id, f'{iteration}.hmap')

    def scene_path(self, item_id: str) -> str:
        return os.path.join(self.root, 'depth', item_id, 'scene.hmap')

    def feature_path(self, item_id: str, iteration: int) -> str:
        return os.path.join(self.root, 'features', item_id, f'{iteration}.tfea')

    def model_path(self, name: str) -> str:
        return os.path.join(self.root, 'models', f'{name}.tmdl')

    def split_path(self, name: str) -> str:
        return os.path.join(self.root, 'splits', f'{name}.json')

    @property
    def results_dir(self) -> str:
        return os.path.join(self.root, 'results')

    def result_path(self, filename: str) -> str:
        os.makedirs(self.results_dir, exist_ok=True)
        return os.path.join(self.results_dir, filename)

    # 清单
    def save_items(self, items: Sequence[ClothItem]) -> None:
        _write_jsonl(self.items_path, [item.to_dict() for item in sorted(items, key=lambda i: i.item_id)])

    def load_items(self) -> List[ClothItem]:
        return [ClothItem.from_dict(d) for d in _read_jsonl(self.items_path)]

    def save_records(self, records: Sequence[GripRecord]) -> None:
        _write_jsonl(self.records_path, [r.to_dict() for r in sorted(records, key=lambda r: r.key)])

    def append_record(self, record: GripRecord) -> None:
        os.makedirs(self.root, exist_ok=True)
        with open(self.records_path, 'a') as f:
            f.write(json.dumps(record.to_dict(), sort_keys=True) + '\n')

    def load_records(self) -> List[GripRecord]:
        return [GripRecord.from_dict(d) for d in _read_jsonl(self.records_path)]

    def save_split(self, spec: SplitSpec) -> None:
        path = self.split_path(spec.name)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, 'w') as f:
            json.dump(spec.to_dict(), f, indent=2, sort_keys=True)

    def load_split(self, name: str = 'default') -> SplitSpec:
        path = self.split_path(name)
        if not os.path.exists(path):
            raise FileNotFoundError(f"Split file '{path}' not found")
        with open(path, 'r') as f:
            return SplitSpec.from_dict(json.load(f))

    # 栅格与序列
    def write_sequence(self, seq: TactileSequence, iteration: int) -> None:
        write_tseq(self.tactile_path(seq.item_id, iteration), [f.deformation for f in seq.frames], seq.forces)

    def read_sequence(self, record: GripRecord) -> TactileSequence:
        frames, forces = read_tseq(self.tactile_path(record.item_id, record.iteration))
        return TactileSequence.from_arrays(frames, forces, record.item_id, record.valid_contact,
                                           candidate=record.grip_candidate(), sensor_id=record.sensor_id,
                                           misalign_deg=record.misalign_deg)

    def write_crop(self, item_id: str, iteration: int, crop: np.ndarray, mpp: float) -> None:
        write_hmap(self.crop_path(item_id, iteration), crop, mpp, FRAME_WORLD)

    def read_crop(self, item_id: str, iteration: int) -> RasterRecord:
        return read_hmap(self.crop_path(item_id, iteration))

    def write_scene(self, item_id: str, depth: np.ndarray) -> None:
        write_hmap(self.scene_path(item_id), depth, 0.0, FRAME_CAMERA)

    def read_scene(self, item_id: str) -> RasterRecord:
        return read_hmap(self.scene_path(item_id))

    def write_features(self, item_id: str, iteration: int, features: np.ndarray, bank_hash: bytes) -> None:
        write_features(self.feature_path(item_id, iteration), features, bank_hash)

    def read_features(self, item_id: str, iteration: int, bank_hash: bytes, feature_dim: int,
                      frames: int = 1) -> np.ndarray:
        """
        读取保存的序列特征

        :return: 多帧时为最后 ``frames`` 行 (frames, feature_dim)；单帧时为最后一行（最大接触帧）
        """
        rows = read_features(self.feature_path(item_id, iteration), bank_hash).reshape(-1, feature_dim)
        return rows[-1] if frames == 1 else rows[-frames:]


def _write_jsonl(path: str, rows: Iterable[dict]) -> None:
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    with open(path, 'w') as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + '\n')


def _read_jsonl(path: str) -> List[dict]:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Corpus file '{path}' not found")
    with open(path, 'r') as f:
        return [json.loads(line) for line in f if line.strip()]


class TactileFeatureDataset(Dataset):
    """
    触觉特征数据集（不做增强）

    :param features: (N, D) 或 (N, T, D) 特征
    :type features: np.ndarray
    :param labels: (N, 11) 属性标签
    :type labels: np.ndarray
    """
    def __init__(self, features: np.ndarray, labels: np.ndarray):
        super().__init__()
        self.features = np.asarray(features, dtype=np.float32)
        self.labels = np.asarray(labels, dtype=np.int64)
        if len(self.features) != len(self.labels):
            raise ValueError(f"{len(self.features)} feature rows but {len(self.labels)} labels")

    def set_epoch(self, epoch: int) -> None:
        pass

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, idx):
        return torch.from_numpy(self.features[idx]), torch.from_numpy(self.labels[idx])


class AugmentedFrameDataset(Dataset):
    """
    在线增强的触觉数据集

    每次取样对选出的帧施加增强再提取特征；增强的随机数由 (seed, epoch, idx) 决定，
    同一 epoch 内重复读取结果相同，换 epoch 后每个样本重新抽取偏移。

    :param frames: (N, T, 48, 64) 每个样本选出的帧（毫米）
    :type frames: np.ndarray
    :param labels: (N, 11) 属性标签
    :type labels: np.ndarray
    :param transform: ``get_train_transforms`` 返回的增强
    :type transform: torch.nn.Module
    :param bank: 滤波器组
    :type bank: FilterBank
    :param seed: 增强随机种子
    :type seed: int
    """
    def __init__(self, frames: np.ndarray, labels: np.ndarray, transform: torch.nn.Module,
                 bank: Optional[FilterBank] = None, seed: int = 0):
        super().__init__()
        self.frames = np.asarray(frames, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        if self.frames.ndim != 4:
            raise ShapeError(f"Expected frames of shape (N, T, 48, 64), got {self.frames.shape}")
        if len(self.frames) != len(self.labels):
            raise ValueError(f"{len(self.frames)} samples but {len(self.labels)} labels")
        self.transform = transform
        self.bank = bank or default_bank()
        self.seed = seed
        self.current_epoch = 0

    def set_epoch(self, epoch: int) -> None:
        self.current_epoch = epoch

    def augment(self, idx: int) -> np.ndarray:
        """第 idx 个样本在当前 epoch 的增强帧"""
        seed_augmentations(self.transform, self.seed, self.current_epoch, idx)
        with torch.no_grad():
            return self.transform(torch.from_numpy(self.frames[idx])).numpy()

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, idx):
        x = frame_features(self.augment(idx), self.bank).astype(np.float32)
        # 单帧模型的输入为 (D,)
        if x.shape[0] == 1:
            x = x[0]
        return torch.from_numpy(x), torch.from_numpy(self.labels[idx])


class GripCropDataset(Dataset):
    """
    抓取质量数据集

    :param features: (N, 211) 深度窗口特征
    :param labels: (N,) 是否有效接触
    """
    def __init__(self, features: np.ndarray, labels: np.ndarray):
        super().__init__()
        self.features = np.asarray(features, dtype=np.float32)
        self.labels = np.asarray(labels, dtype=np.float32)

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, idx):
        return torch.from_numpy(self.features[idx]), torch.tensor(self.labels[idx])
