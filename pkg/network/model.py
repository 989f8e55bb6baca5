"""
分类模型

- ``MultiHeadModel``：触觉特征 -> 11 个属性头的多标签分类（单帧或 9 帧池化）
- ``GripQualityModel``：深度图局部窗口 -> 抓取能否产生有效触觉数据的二分类
"""
import copy
import logging
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from einops import reduce
from torch import nn

from config.errors import FormatError, ShapeError
from config.taxonomy import HEAD_DIMS, HEAD_NAMES, PropertyLabels, head_index
from network.tactile import FilterBank, _features_from_energy, default_bank
from utils.raster_io import (MODEL_KIND_GRIP, MODEL_KIND_PROPERTY, ModelBlob, read_model,
                             write_model)

logger = logging.getLogger(__name__)

GRIP_EXTRA_FEATURES = 3
STD_FLOOR = 1e-6


class _Standardize(nn.Module):
    """特征标准化，均值和标准差作为 buffer 随模型保存"""

    def __init__(self, dim: int):
        super().__init__()
        self.register_buffer('mean', torch.zeros(dim))
        self.register_buffer('std', torch.ones(dim))

    def fit(self, features: np.ndarray) -> None:
        features = np.asarray(features, dtype=np.float64).reshape(-1, self.mean.numel())
        std = features.std(axis=0)
        std[std < STD_FLOOR] = 1.0
        self.mean.copy_(torch.from_numpy(features.mean(axis=0)).to(self.mean.dtype))
        self.std.copy_(torch.from_numpy(std).to(self.std.dtype))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return (x - self.mean) / self.std


class MultiHeadModel(nn.Module):
    def __init__(self, in_dim: int, hidden: int = 128, head_dims: Sequence[int] = HEAD_DIMS, frames: int = 1):
        """
        多头属性分类器

        标准化 -> (多帧时按帧做 mean ‖ max 池化) -> Linear -> tanh -> 每个属性一个 Linear 头

        :param in_dim: 单帧特征维度
        :type in_dim: int
        :param hidden: 共享隐藏层维度
        :type hidden: int
        :param head_dims: 每个头的类别数
        :type head_dims: list
        :param frames: 输入帧数，1 为单帧模型
        :type frames: int
        """
        super().__init__()
        self.in_dim = int(in_dim)
        self.hidden = int(hidden)
        self.head_dims = tuple(int(d) for d in head_dims)
        self.frames = int(frames)
        self.meta: Dict[str, object] = {}

        self.standardize = _Standardize(self.in_dim)
        pooled_dim = 2 * self.in_dim if self.frames > 1 else self.in_dim
        self.shared = nn.Linear(pooled_dim, self.hidden)
        self.heads = nn.ModuleList([nn.Linear(self.hidden, d) for d in self.head_dims])
        # 训练集中缺失的类别不参与 softmax
        for h, d in enumerate(self.head_dims):
            self.register_buffer(f'class_mask_{h}', torch.ones(d))

    def class_mask(self, h: int) -> torch.Tensor:
        return getattr(self, f'class_mask_{h}')

    def set_class_masks(self, labels: np.ndarray) -> List[Tuple[str, List[int]]]:
        """
        根据训练标签屏蔽缺失类别

        :param labels: (N, H) 训练标签
        :return: 每个有缺失类别的头及其缺失类别
        """
        absent = []
        for h, d in enumerate(self.head_dims):
            counts = np.bincount(np.asarray(labels)[:, h].astype(int), minlength=d)
            mask = torch.from_numpy((counts > 0).astype(np.float32)).to(self.class_mask(h).dtype)
            self.class_mask(h).copy_(mask)
            if not mask.all():
                name = HEAD_NAMES[h] if len(self.head_dims) == len(HEAD_NAMES) else f"head{h}"
                absent.append((name, np.flatnonzero(counts == 0).tolist()))
        return absent

    def check_input(self, x: torch.Tensor) -> None:
        expected = (self.in_dim,) if self.frames == 1 else (self.frames, self.in_dim)
        if tuple(x.shape[1:]) != expected:
            raise ShapeError(f"Model expects inputs of shape (B, {', '.join(map(str, expected))}), got {tuple(x.shape)}")

    def forward(self, x: torch.Tensor) -> List[torch.Tensor]:
        """
        前向传播

        :param x: (B, D) 或多帧模型的 (B, T, D)
        :type x: torch.Tensor
        :return: 每个头的 logits，缺失类别为 -inf
        :rtype: list
        """
        self.check_input(x)
        z = self.standardize(x)
        if self.frames > 1:
            z = torch.cat([reduce(z, 'b t d -> b d', 'mean'), reduce(z, 'b t d -> b d', 'max')], dim=-1)
        hidden = torch.tanh(self.shared(z))
        logits = []
        for h, head in enumerate(self.heads):
            out = head(hidden)
            logits.append(out.masked_fill(self.class_mask(h) == 0, float('-inf')))
        return logits

    def init_from(self, single: 'MultiHeadModel') -> None:
        """
        用单帧模型初始化多帧模型

        共享投影复制到 mean 池化的那一半输入，max 那一半置零；各属性头原样复制。
        """
        if single.frames != 1 or self.frames == 1:
            raise ShapeError("init_from copies a single-frame model into a multi-frame model")
        if single.in_dim != self.in_dim or single.hidden != self.hidden or single.head_dims != self.head_dims:
            raise ShapeError("Single-frame model dimensions do not match")
        with torch.no_grad():
            self.standardize.load_state_dict(single.standardize.state_dict())
            self.shared.weight.zero_()
            self.shared.weight[:, :self.in_dim].copy_(single.shared.weight)
            self.shared.bias.copy_(single.shared.bias)
            for mine, theirs in zip(self.heads, single.heads):
                mine.load_state_dict(theirs.state_dict())
            for h in range(len(self.head_dims)):
                self.class_mask(h).copy_(single.class_mask(h))


class GripQualityModel(nn.Module):
    """抓取质量逻辑回归：标准化 + 单个 logistic 单元"""

    def __init__(self, in_dim: int):
        super().__init__()
        self.in_dim = int(in_dim)
        self.meta: Dict[str, object] = {}
        self.standardize = _Standardize(self.in_dim)
        self.linear = nn.Linear(self.in_dim, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"Grip model expects (B, {self.in_dim}) features, got {tuple(x.shape)}")
        return self.linear(self.standardize(x)).squeeze(-1)

    def score_features(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if len(features) == 0:
            return np.zeros(0)
        self.eval()
        dtype = self.linear.weight.dtype
        with torch.no_grad():
            logits = self(torch.from_numpy(features).to(dtype))
        return torch.sigmoid(logits).double().numpy()

    def score(self, crops: np.ndarray, bank: Optional[FilterBank] = None) -> np.ndarray:
        """
        抓取成功概率

        :param crops: (N, 64, 64) 世界坐标系高度窗口（米）
        :type crops: np.ndarray
        :rtype: np.ndarray
        """
        return self.score_features(grip_features(crops, bank))


@dataclass(frozen=True)
class PropertyPrediction:
    """
    一次预测：每个头的概率分布

    :param probs: 每个头的概率向量
    """
    probs: Tuple[np.ndarray, ...]
    classes: Tuple[int, ...] = field(init=False)
    confidences: Tuple[float, ...] = field(init=False)

    def __post_init__(self):
        probs = tuple(np.asarray(p, dtype=np.float64) for p in self.probs)
        object.__setattr__(self, 'probs', probs)
        object.__setattr__(self, 'classes', tuple(int(np.argmax(p)) for p in probs))
        object.__setattr__(self, 'confidences', tuple(float(np.max(p)) for p in probs))

    @classmethod
    def from_logits(cls, logits: Sequence[np.ndarray]) -> 'PropertyPrediction':
        probs = []
        for row in logits:
            row = torch.as_tensor(np.asarray(row, dtype=np.float64))
            probs.append(torch.softmax(row, dim=-1).numpy())
        return cls(tuple(probs))

    def label(self, head) -> int:
        return self.classes[head_index(head)]

    def as_labels(self) -> PropertyLabels:
        return PropertyLabels.from_sequence(self.classes)

    def to_dict(self) -> dict:
        return {
            'classes': {name: c for name, c in zip(HEAD_NAMES, self.classes)},
            'confidences': {name: round(c, 6) for name, c in zip(HEAD_NAMES, self.confidences)},
        }


def confidence(pred: PropertyPrediction, head) -> float:
    """某个属性头的置信度（最大概率）"""
    return pred.confidences[head_index(head)]


def predict_proba(model: MultiHeadModel, features: np.ndarray) -> List[np.ndarray]:
    """
    批量预测概率

    :param features: (N, D) 或多帧模型的 (N, T, D)
    :return: 每个头 (N, C_h) 的概率
    :rtype: list
    """
    features = np.asarray(features, dtype=np.float64)
    model.eval()
    dtype = model.shared.weight.dtype
    with torch.no_grad():
        logits = model(torch.from_numpy(features).to(dtype))
    return [torch.softmax(l.double(), dim=-1).numpy() for l in logits]


def predict(model: MultiHeadModel, features: np.ndarray) -> PropertyPrediction:
    """
    单个样本的属性预测

    :param features: 单帧模型为 (D,)，多帧模型为 (T, D)
    :type features: np.ndarray
    :rtype: PropertyPrediction
    """
    features = np.asarray(features, dtype=np.float64)
    expected_ndim = 1 if model.frames == 1 else 2
    if features.ndim != expected_ndim:
        raise ShapeError(f"Expected a {expected_ndim}-D feature array, got shape {features.shape}")
    probs = predict_proba(model, features[None])
    return PropertyPrediction(tuple(p[0] for p in probs))


def predict_batch(model: MultiHeadModel, features: np.ndarray) -> List[PropertyPrediction]:
    probs = predict_proba(model, features)
    return [PropertyPrediction(tuple(p[i] for p in probs)) for i in range(len(probs[0]))]


def grip_features(crops: np.ndarray, bank: Optional[FilterBank] = None) -> np.ndarray:
    """
    深度窗口的几何特征

    窗口换算为相对中位数的毫米高度后用同一滤波器组提取统计量（整个窗口都算作掩码），
    再加上中心高度、中心拉普拉斯和中心坡度。

    :param crops: (N, S, S) 高度窗口（米）
    :type crops: np.ndarray
    :return: (N, feature_dim + 3)
    :rtype: np.ndarray
    """
    bank = bank or default_bank()
    crops = np.asarray(crops, dtype=np.float64)
    if crops.ndim == 2:
        crops = crops[None]
    if crops.ndim != 3:
        raise ShapeError(f"Expected crops of shape (N, S, S), got {crops.shape}")
    out = np.zeros((len(crops), bank.config.feature_dim + GRIP_EXTRA_FEATURES))
    if len(crops) == 0:
        return out

    relative = (crops - np.median(crops, axis=(1, 2), keepdims=True)) * 1e3
    with torch.no_grad():
        energy = bank(torch.from_numpy(relative)).numpy()
    full = np.ones(crops.shape[1:], dtype=bool)
    h, w = crops.shape[1:]
    rows, cols = slice(h // 2 - 1, h // 2 + 1), slice(w // 2 - 1, w // 2 + 1)
    for i, rel in enumerate(relative):
        out[i, :bank.config.feature_dim] = _features_from_energy(rel, energy[i], bank.config, mask=full)
        padded = np.pad(rel, 1, mode='edge')
        laplacian = (padded[:-2, 1:-1] + padded[2:, 1:-1] + padded[1:-1, :-2] + padded[1:-1, 2:] - 4 * rel)
        gy, gx = np.gradient(rel)
        out[i, -3] = rel[rows, cols].mean()
        out[i, -2] = laplacian[rows, cols].mean()
        out[i, -1] = np.hypot(gx, gy)[rows, cols].mean()
    return out


class GradientCheck(NamedTuple):
    """
    梯度检查结果

    ``noise`` 是中心差分在当前损失值下的舍入误差量级 16·ε·|L| / eps；
    绝对误差低于它的坐标无法用相对误差判断。
    """
    relative: np.ndarray
    absolute: np.ndarray
    noise: float

    def passed(self, rtol: float = 1e-5) -> bool:
        return bool(np.all((self.relative <= rtol) | (self.absolute <= self.noise)))


def gradient_check(model: nn.Module, loss_fn, inputs: np.ndarray, targets: np.ndarray,
                   n_coords: int = 20, eps: float = 1e-6, seed: int = 0) -> GradientCheck:
    """
    解析梯度与中心差分的比较（float64）

    :param loss_fn: ``loss_fn(outputs, targets) -> 标量`` 或 ``(标量, ...)``
    :return: 每个抽样坐标的相对误差 |a - f| / max(|a|, |f|, 1e-12) 与绝对误差
    :rtype: GradientCheck
    """
    model = copy.deepcopy(model).double()
    model.train()
    x = torch.from_numpy(np.asarray(inputs, dtype=np.float64))
    y = torch.as_tensor(np.asarray(targets))
    if y.is_floating_point():
        y = y.double()

    def loss_value():
        out = loss_fn(model(x), y)
        return out[0] if isinstance(out, tuple) else out

    model.zero_grad()
    loss = loss_value()
    loss.backward()
    noise = 16 * np.finfo(np.float64).eps * abs(loss.item()) / eps
    params = [p for p in model.parameters() if p.requires_grad]
    sizes = np.array([p.numel() for p in params])
    rng = np.random.default_rng(seed)
    picks = rng.choice(sizes.sum(), size=min(n_coords, int(sizes.sum())), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    relative, absolute = [], []
    for flat_index in picks:
        p_idx = int(np.searchsorted(offsets, flat_index, side='right') - 1)
        k = int(flat_index - offsets[p_idx])
        param = params[p_idx]
        analytic = param.grad.view(-1)[k].item()
        with torch.no_grad():
            flat = param.data.view(-1)
            original = flat[k].item()
            flat[k] = original + eps
            plus = loss_value().item()
            flat[k] = original - eps
            minus = loss_value().item()
            flat[k] = original
        numeric = (plus - minus) / (2 * eps)
        absolute.append(abs(analytic - numeric))
        relative.append(absolute[-1] / max(abs(analytic), abs(numeric), 1e-12))
    return GradientCheck(np.array(relative), np.array(absolute), float(noise))


def save_model(path: str, model: Union[MultiHeadModel, GripQualityModel], bank_hash: bytes) -> None:
    """保存为 TMDL 文件"""
    tensors = {name: t.detach().cpu().double().numpy() for name, t in model.state_dict().items()}
    if isinstance(model, MultiHeadModel):
        blob = ModelBlob(bank_hash, MODEL_KIND_PROPERTY, model.head_dims, model.in_dim, model.hidden,
                         model.frames, tensors)
    else:
        blob = ModelBlob(bank_hash, MODEL_KIND_GRIP, (1,), model.in_dim, 0, 1, tensors)
    write_model(path, blob)
    logger.debug("Saved model to %s", path)


def load_model(path: str, bank_hash: Optional[bytes] = None) -> Union[MultiHeadModel, GripQualityModel]:
    """
    读取 TMDL 文件

    :param bank_hash: 当前滤波器组哈希，不一致时抛出 FormatError
    """
    blob = read_model(path, bank_hash)
    if blob.kind == MODEL_KIND_PROPERTY:
        model = MultiHeadModel(blob.in_dim, blob.hidden, blob.head_dims, blob.frames)
    elif blob.kind == MODEL_KIND_GRIP:
        model = GripQualityModel(blob.in_dim)
    else:
        raise FormatError(f"Unknown model kind {blob.kind} in {path}")
    state = {name: torch.from_numpy(np.asarray(values, dtype=np.float32)) for name, values in blob.tensors.items()}
    try:
        model.load_state_dict(state)
    except RuntimeError as e:
        raise FormatError(f"Model tensors in {path} do not match the declared dimensions: {e}") from e
    return model.eval()
