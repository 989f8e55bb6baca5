"""
触觉序列处理

接触有效性判断、最大接触帧、9 帧子序列选择，以及基于方向滤波器组的纹理特征。
"""
import json
import hashlib
import logging
from dataclasses import dataclass, asdict
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from config.errors import ShapeError
from config.settings import BankSection, TactileConfig
from network.clothsim import TactileFrame, TactileSequence

logger = logging.getLogger(__name__)

FRAME_SHAPE = (48, 64)
N_SCALARS = 4

# 一帧的特征向量，长度为 BankConfig.feature_dim
FeatureVector = np.ndarray


@dataclass(frozen=True)
class BankConfig:
    """
    滤波器组配置

    :param sigmas: 高斯尺度（像素）
    :param n_orientations: 方向数，均匀分布在 [0, π)
    :param contact_threshold: 接触掩码阈值（毫米）
    :param cells: 每个方向上的空间分块数
    """
    sigmas: Tuple[float, ...] = (1.0, 2.0, 4.0, 8.0)
    n_orientations: int = 6
    contact_threshold: float = 0.05
    cells: int = 2

    @classmethod
    def from_settings(cls, section: BankSection) -> 'BankConfig':
        return cls(tuple(float(s) for s in section.sigmas), int(section.n_orientations),
                   float(section.contact_threshold), int(section.cells))

    @property
    def n_channels(self) -> int:
        return len(self.sigmas) * self.n_orientations

    @property
    def cell_dim(self) -> int:
        return 2 * self.n_channels + N_SCALARS

    @property
    def feature_dim(self) -> int:
        return self.cells ** 2 * self.cell_dim

    def digest(self) -> bytes:
        """8 字节配置哈希，写入特征和模型文件头"""
        canonical = json.dumps(asdict(self), sort_keys=True, separators=(',', ':'))
        return hashlib.sha1(canonical.encode('utf-8')).digest()[:8]


def gaussian_derivative_kernels(sigma: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    采样的 0/1/2 阶高斯导数核（半径 ⌈3σ⌉）

    一阶核对线性函数的响应恰为斜率；二阶核零直流，对 x²/2 的响应恰为 1。
    """
    radius = int(np.ceil(3 * sigma))
    j = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-j ** 2 / (2 * sigma ** 2))
    k0 = g / g.sum()
    k1 = j * g / np.sum(j ** 2 * g)
    k2 = (j ** 2 / sigma ** 4 - 1 / sigma ** 2) * g
    k2 = k2 - k2.sum() / g.sum() * g
    k2 = k2 / np.sum(k2 * j ** 2 / 2)
    return k0, k1, k2


class FilterBank(nn.Module):
    """
    可导向的高斯导数滤波器组

    每个尺度先做可分离卷积得到 Gx, Gy, Gxx, Gyy, Gxy，再导向到各方向：
    R1 = σ(c·Gx + s·Gy)，R2 = σ²(c²·Gxx + 2cs·Gxy + s²·Gyy)，能量 E = R1² + R2²。
    """

    def __init__(self, config: Optional[BankConfig] = None):
        super().__init__()
        self.config = config or BankConfig()
        self.radii = []
        for i, sigma in enumerate(self.config.sigmas):
            k0, k1, k2 = gaussian_derivative_kernels(sigma)
            self.register_buffer(f'k0_{i}', torch.from_numpy(k0))
            self.register_buffer(f'k1_{i}', torch.from_numpy(k1))
            self.register_buffer(f'k2_{i}', torch.from_numpy(k2))
            self.radii.append(len(k0) // 2)
        thetas = np.arange(self.config.n_orientations) * np.pi / self.config.n_orientations
        self.register_buffer('cos', torch.from_numpy(np.cos(thetas)))
        self.register_buffer('sin', torch.from_numpy(np.sin(thetas)))

    def _kernels(self, i):
        return getattr(self, f'k0_{i}'), getattr(self, f'k1_{i}'), getattr(self, f'k2_{i}')

    @staticmethod
    def _separable(x, kx, ky, radius):
        x = F.pad(x, (radius, radius, radius, radius), mode='reflect')
        x = F.conv2d(x, kx.view(1, 1, 1, -1))
        return F.conv2d(x, ky.view(1, 1, -1, 1))

    def responses(self, x: torch.Tensor) -> List[Tuple[torch.Tensor, torch.Tensor]]:
        """每个尺度的 (R1, R2)，形状 (B, O, H, W)"""
        x = x.to(torch.float64).unsqueeze(1)
        c = self.cos.view(1, -1, 1, 1)
        s = self.sin.view(1, -1, 1, 1)
        out = []
        for i, sigma in enumerate(self.config.sigmas):
            k0, k1, k2 = self._kernels(i)
            r = self.radii[i]
            gx = self._separable(x, k1, k0, r)
            gy = self._separable(x, k0, k1, r)
            gxx = self._separable(x, k2, k0, r)
            gyy = self._separable(x, k0, k2, r)
            gxy = self._separable(x, k1, k1, r)
            r1 = sigma * (c * gx + s * gy)
            r2 = sigma ** 2 * (c * c * gxx + 2 * c * s * gxy + s * s * gyy)
            out.append((r1, r2))
        return out

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """
        方向能量

        :param x: 形变图 (B, H, W)
        :type x: torch.Tensor
        :return: 能量 (B, S, O, H, W)
        :rtype: torch.Tensor
        """
        return torch.stack([r1 ** 2 + r2 ** 2 for r1, r2 in self.responses(x)], dim=1)

    def response_gain(self) -> np.ndarray:
        """
        每个尺度导向响应的最坏线性增益 L

        逐像素扰动不超过 δ 时 |ΔR| ≤ L·δ，于是 |ΔE| ≤ 4·L·δ·R_max
        （R_max 为扰动前后 |R1|、|R2| 的上界）。
        """
        gains = []
        for i, sigma in enumerate(self.config.sigmas):
            k0, k1, k2 = (k.abs().sum().item() for k in self._kernels(i))
            l1 = sigma * np.sqrt(2.0) * k1 * k0
            l2 = sigma ** 2 * (k2 * k0 + k1 * k1)
            gains.append(max(l1, l2))
        return np.array(gains)


@lru_cache(maxsize=8)
def default_bank(config: BankConfig = BankConfig()) -> FilterBank:
    return FilterBank(config).eval()


def _as_raster(frame: Union[TactileFrame, np.ndarray]) -> np.ndarray:
    if isinstance(frame, TactileFrame):
        frame = frame.deformation
    return np.asarray(frame, dtype=np.float64)


def oriented_energy(raster: np.ndarray, mask: Optional[np.ndarray] = None,
                    bank: Optional[FilterBank] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    单幅栅格的方向能量

    :return: ``(S, O)``：每个尺度、方向在掩码内的能量总和 S，以及能量图 (S, O, H, W)
    """
    bank = bank or default_bank()
    raster = np.asarray(raster, dtype=np.float64)
    with torch.no_grad():
        energy = bank(torch.from_numpy(raster)[None])[0].numpy()
    if mask is None:
        mask = np.ones(raster.shape, dtype=bool)
    return energy[:, :, mask].sum(axis=-1), energy


def energy_statistics(energy: np.ndarray, mask: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """掩码内每个通道能量的均值与方差，形状均为 (S, O)"""
    values = energy[:, :, mask]
    if values.shape[-1] == 0:
        zeros = np.zeros(energy.shape[:2])
        return zeros, zeros.copy()
    return values.mean(axis=-1), values.var(axis=-1)


def _cell_slices(shape, cells):
    h, w = shape
    rows = np.linspace(0, h, cells + 1).round().astype(int)
    cols = np.linspace(0, w, cells + 1).round().astype(int)
    for i in range(cells):
        for j in range(cells):
            yield slice(rows[i], rows[i + 1]), slice(cols[j], cols[j + 1])


def _features_from_energy(raster: np.ndarray, energy: np.ndarray, config: BankConfig,
                          mask: Optional[np.ndarray] = None) -> np.ndarray:
    if mask is None:
        mask = raster > config.contact_threshold
    if not mask.any():
        return np.zeros(config.feature_dim)

    # 夹爪角度每次不同：把主方向滚动到第一个通道
    dominant = int(np.argmax(energy[:, :, mask].sum(axis=(0, 2))))
    energy = np.roll(energy, -dominant, axis=1)

    parts = []
    for rows, cols in _cell_slices(raster.shape, config.cells):
        cell_mask = mask[rows, cols]
        cell_values = raster[rows, cols][cell_mask]
        if cell_values.size == 0:
            parts.append(np.zeros(config.cell_dim))
            continue
        means, variances = energy_statistics(energy[:, :, rows, cols], cell_mask)
        scalars = [cell_mask.mean(), cell_values.mean(), cell_values.max(), cell_values.std()]
        parts.append(np.concatenate([means.ravel(), variances.ravel(), scalars]))
    return np.concatenate(parts)


def frame_features(rasters: np.ndarray, bank: Optional[FilterBank] = None,
                   check_shape: bool = True) -> np.ndarray:
    """
    批量提取特征

    :param rasters: (N, 48, 64) 形变图（毫米）
    :type rasters: np.ndarray
    :return: (N, feature_dim)
    :rtype: np.ndarray
    """
    bank = bank or default_bank()
    rasters = np.asarray(rasters, dtype=np.float64)
    if rasters.ndim != 3 or (check_shape and rasters.shape[1:] != FRAME_SHAPE):
        raise ShapeError(f"Expected frames of shape (N, 48, 64), got {rasters.shape}")
    out = np.zeros((len(rasters), bank.config.feature_dim))
    active = [i for i, r in enumerate(rasters) if (r > bank.config.contact_threshold).any()]
    if active:
        with torch.no_grad():
            energy = bank(torch.from_numpy(rasters[active])).numpy()
        for k, i in enumerate(active):
            out[i] = _features_from_energy(rasters[i], energy[k], bank.config)
    return out


def extract_features(frame: Union[TactileFrame, np.ndarray], bank: Optional[FilterBank] = None) -> FeatureVector:
    """
    单帧纹理特征

    每个 2x2 空间块：接触掩码（形变 > 0.05mm）内 24 个方向能量的均值和方差，
    以及接触面积比例、形变均值、最大值、标准差。掩码为空时返回零向量。

    :param frame: 64x48 触觉帧
    :rtype: np.ndarray
    """
    raster = _as_raster(frame)
    if raster.shape != FRAME_SHAPE:
        raise ShapeError(f"Tactile frame must be 64x48, got {raster.shape[1]}x{raster.shape[0]}")
    return frame_features(raster[None], bank)[0]


def _frame_stats(raster: np.ndarray, threshold: float, depth_fraction: float) -> Tuple[float, float]:
    area = float((raster > threshold).mean())
    k = int(np.ceil(depth_fraction * raster.size))
    deepest = np.partition(raster.ravel(), raster.size - k)[-k:]
    return area, float(deepest.mean())


def detect_contact(seq: TactileSequence, tactile: Optional[TactileConfig] = None,
                   contact_threshold: float = 0.05) -> bool:
    """
    判断触觉数据是否真正接触到衣物

    某一帧的接触面积（> 0.05mm 的像素比例）≥ 3%，且最深 3% 像素的平均形变 ≥ 0.1mm。
    """
    tactile = tactile or TactileConfig()
    if len(seq) == 0:
        raise ValueError("Tactile sequence is empty")
    for frame in seq.frames:
        area, depth = _frame_stats(_as_raster(frame), contact_threshold, tactile.detect_area)
        if area >= tactile.detect_area and depth >= tactile.detect_depth_mm:
            return True
    return False


def max_contact_frame(seq: Union[TactileSequence, Sequence[np.ndarray]]) -> int:
    """平均形变最大的帧下标，并列时取最后一个"""
    frames = seq.frames if isinstance(seq, TactileSequence) else seq
    if len(frames) == 0:
        raise ValueError("Tactile sequence is empty")
    means = np.array([_as_raster(f).mean() for f in frames])
    return int(len(means) - 1 - np.argmax(means[::-1]))


def select_sequence_frames(seq: TactileSequence, n: int = 9, step: int = 1) -> List[np.ndarray]:
    """
    截取以最大接触帧结尾的 n 帧

    下标为 round(linspace(m - (n-1)·step, m, n))，负下标补空白帧。
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    m = max_contact_frame(seq)
    indices = np.round(np.linspace(m - (n - 1) * step, m, n)).astype(int)
    blank = np.zeros_like(_as_raster(seq.frames[0]))
    return [_as_raster(seq.frames[i]) if i >= 0 else blank.copy() for i in indices]


def sequence_features(seq: TactileSequence, bank: Optional[FilterBank] = None, n: int = 9,
                      step: int = 1) -> np.ndarray:
    """(n, feature_dim)，最后一行为最大接触帧的单帧特征"""
    return frame_features(np.stack(select_sequence_frames(seq, n, step)), bank)
