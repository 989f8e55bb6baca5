"""
触觉数据增强

训练时对接触区域的形变叠加均匀随机偏移（相当于图像强度扰动），
也可以模拟不同凝胶的增益与偏置。增强在 ``nn.Sequential`` 中依次作用于 (T, 48, 64) 的形变张量，
随机数由 ``seed_augmentations`` 按 (种子, epoch, 样本下标) 重新播种，每个样本每个 epoch 各取一次。
"""
import logging

import numpy as np
import torch
import torch.nn as nn

logger = logging.getLogger(__name__)


class TactileAugmentation(nn.Module):
    """
    形变增强基类，只作用于接触像素

    :param contact_threshold: 接触像素阈值（毫米）
    :type contact_threshold: float
    """
    def __init__(self, contact_threshold: float = 0.05):
        super().__init__()
        self.contact_threshold = contact_threshold
        self.generator = torch.Generator().manual_seed(0)

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * torch.rand((), generator=self.generator, dtype=torch.float64).item()

    def contact(self, frames: torch.Tensor) -> torch.Tensor:
        return frames > self.contact_threshold


class DeformationOffset(TactileAugmentation):
    """
    接触像素上的均匀偏移 U(-a, a)，同一样本的所有帧使用同一偏移

    :param amplitude: 偏移幅度 a（毫米）
    :type amplitude: float
    """
    def __init__(self, amplitude: float = 0.05, contact_threshold: float = 0.05):
        super().__init__(contact_threshold)
        self.amplitude = amplitude

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        offset = self.uniform(-self.amplitude, self.amplitude)
        return torch.where(self.contact(frames), torch.clamp(frames + offset, min=0.0), frames)

    def extra_repr(self) -> str:
        return f"amplitude={self.amplitude}, contact_threshold={self.contact_threshold}"


class SensorJitter(TactileAugmentation):
    """
    模拟另一块凝胶：接触像素乘以增益并加偏置

    :param gain_range: 增益范围
    :param bias_range: 偏置范围（毫米）
    """
    def __init__(self, gain_range=(0.92, 1.08), bias_range=(-0.01, 0.01), contact_threshold: float = 0.05):
        super().__init__(contact_threshold)
        self.gain_range = tuple(gain_range)
        self.bias_range = tuple(bias_range)

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        gain = self.uniform(*self.gain_range)
        bias = self.uniform(*self.bias_range)
        return torch.where(self.contact(frames), torch.clamp(gain * frames + bias, min=0.0), frames)


def get_train_transforms(amplitude: float = 0.05, sensor_jitter: bool = False,
                         contact_threshold: float = 0.05) -> nn.Sequential:
    """
    训练增强

    :param amplitude: 形变偏移幅度（毫米）
    :type amplitude: float
    :param sensor_jitter: 是否同时模拟凝胶差异
    :type sensor_jitter: bool
    """
    transforms = [DeformationOffset(amplitude, contact_threshold)]
    if sensor_jitter:
        transforms.append(SensorJitter(contact_threshold=contact_threshold))
    return nn.Sequential(*transforms)


def seed_augmentations(transform: nn.Module, seed: int, epoch: int, index: int) -> nn.Module:
    """所有增强共用一个按 (seed, epoch, index) 播种的发生器"""
    state = int(np.random.default_rng([seed, epoch, index]).integers(2 ** 63))
    generator = torch.Generator().manual_seed(state)
    for module in transform.modules():
        if isinstance(module, TactileAugmentation):
            module.generator = generator
    return transform
