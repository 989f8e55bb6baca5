"""
深度图几何处理

- 深度图 -> 世界坐标系高度图（针孔反投影 + 刚体变换）
- 高斯/拉普拉斯金字塔提取不同宽度的褶皱
- 褶皱方向与 11cm 抓取窗口
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from scipy.ndimage import map_coordinates, maximum_filter  # type: ignore
from scipy.spatial import cKDTree  # type: ignore

from config.errors import (
    BoundsError,
    CalibrationError,
    EmptyInputError,
    MarginError,
    RasterSizeError,
)

logger = logging.getLogger(__name__)

# 允许的传感器噪声：高度图不低于 -1mm
Z_EPSILON = 1e-3


@dataclass(eq=False)
class CameraModel:
    """
    针孔相机

    :param K: 4x4 齐次形式的内参矩阵
    :type K: np.ndarray
    :param T_K2W: 相机坐标系到世界坐标系的 4x4 刚体变换
    :type T_K2W: np.ndarray
    :param width: 图像宽度（像素）
    :type width: int
    :param height: 图像高度（像素）
    :type height: int
    """
    K: np.ndarray
    T_K2W: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=np.float64)
        self.T_K2W = np.asarray(self.T_K2W, dtype=np.float64)
        if self.K.shape != (4, 4) or self.T_K2W.shape != (4, 4):
            raise CalibrationError("Camera matrices must be 4x4")

    @classmethod
    def from_intrinsics(cls, fx, fy, cx, cy, width, height, T_K2W=None) -> 'CameraModel':
        K = np.array([
            [fx, 0.0, cx, 0.0],
            [0.0, fy, cy, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ])
        return cls(K, np.eye(4) if T_K2W is None else T_K2W, int(width), int(height))

    @classmethod
    def tilted(cls, width, height, fx, fy, cx, cy, mount_height, tilt_deg, look_at=(0.0, 0.0)) -> 'CameraModel':
        """
        俯视相机：光轴相对竖直方向倾斜 ``tilt_deg``，对准桌面上的 ``look_at`` 点

        相机坐标系 x 向右、y 向下、z 沿光轴；世界坐标系 z 轴向上。
        """
        t = np.deg2rad(tilt_deg)
        c, s = np.cos(t), np.sin(t)
        R = np.array([
            [1.0, 0.0, 0.0],
            [0.0, -c, s],
            [0.0, -s, -c],
        ])
        lx, ly = look_at
        T = np.eye(4)
        T[:3, :3] = R
        T[:3, 3] = [lx, ly - mount_height * np.tan(t), mount_height]
        return cls.from_intrinsics(fx, fy, cx, cy, width, height, T)

    @property
    def rotation(self) -> np.ndarray:
        return self.T_K2W[:3, :3]

    @property
    def center(self) -> np.ndarray:
        return self.T_K2W[:3, 3]

    def validate(self) -> None:
        """检查内参可逆、焦距为正，外参为刚体变换"""
        if abs(np.linalg.det(self.K)) < 1e-12:
            raise CalibrationError("Intrinsic matrix K is singular")
        if self.K[0, 0] <= 0 or self.K[1, 1] <= 0:
            raise CalibrationError("Focal entries of K must be positive")
        R = self.rotation
        if not np.allclose(R.T @ R, np.eye(3), rtol=0.0, atol=1e-9):
            raise CalibrationError("Rotation block of T_K2W is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise CalibrationError("Rotation block of T_K2W must have determinant +1")
        if not np.allclose(self.T_K2W[3], [0.0, 0.0, 0.0, 1.0], rtol=0.0, atol=1e-12):
            raise CalibrationError("T_K2W must be a homogeneous rigid transform")

    def pixel_rays(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        每个像素中心对应的世界坐标系射线

        :return: ``(origin, directions)``，方向形状为 (H, W, 3)，按相机 z 分量归一化
            （沿射线前进 d 即到达相机深度 d 处）
        """
        v, u = np.mgrid[0:self.height, 0:self.width].astype(np.float64)
        K3 = self.K[:3, :3]
        pix = np.stack([u, v, np.ones_like(u)], axis=-1)
        cam_dirs = pix @ np.linalg.inv(K3).T
        return self.center.copy(), cam_dirs @ self.rotation.T

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        """世界坐标 (N, 3) -> 相机坐标 (N, 3)"""
        R, C = self.rotation, self.center
        return (np.asarray(points, dtype=np.float64) - C) @ R


@dataclass(frozen=True)
class GridSpec:
    """
    世界坐标系下的规则栅格，原点在桌角

    第 i 行第 j 列像素中心位于 ((j+0.5)·mpp, (i+0.5)·mpp)。
    """
    extent_x: float = 0.6
    extent_y: float = 0.6
    mpp: float = 0.001

    @property
    def width(self) -> int:
        return int(round(self.extent_x / self.mpp))

    @property
    def height(self) -> int:
        return int(round(self.extent_y / self.mpp))

    def cell_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        xs = (np.arange(self.width) + 0.5) * self.mpp
        ys = (np.arange(self.height) + 0.5) * self.mpp
        return np.meshgrid(xs, ys, indexing='xy')


@dataclass(eq=False)
class DepthImage:
    """
    相机坐标系下的深度图（米）

    无效像素（模拟丢失）在 ``valid`` 中为 False。
    """
    values: np.ndarray
    valid: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.valid is None:
            self.valid = np.ones(self.values.shape, dtype=bool)
        self.valid = np.asarray(self.valid, dtype=bool) & np.isfinite(self.values) & (self.values > 0)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def stored_values(self) -> np.ndarray:
        """写入 HMAP 时无效像素存为 0"""
        return np.where(self.valid, self.values, 0.0)


@dataclass(eq=False)
class WorldHeightMap:
    """
    世界坐标系高度图

    :param z: 桌面以上高度栅格（米），桌面为 z = 0
    :param mpp: 每像素米数
    :param points: 可选，原始深度图每个像素的世界坐标 (H, W, 3)，无效像素为 NaN
    """
    z: np.ndarray
    mpp: float
    points: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.float64)

    @property
    def width(self) -> int:
        return self.z.shape[1]

    @property
    def height(self) -> int:
        return self.z.shape[0]

    @property
    def extent(self) -> Tuple[float, float]:
        return self.width * self.mpp, self.height * self.mpp

    def pixel_to_world(self, col, row) -> Tuple[np.ndarray, np.ndarray]:
        return (np.asarray(col) + 0.5) * self.mpp, (np.asarray(row) + 0.5) * self.mpp

    def world_to_pixel(self, x, y) -> Tuple[np.ndarray, np.ndarray]:
        """返回浮点像素坐标 ``(col, row)``"""
        return np.asarray(x) / self.mpp - 0.5, np.asarray(y) / self.mpp - 0.5

    def contains(self, x, y) -> np.ndarray:
        ex, ey = self.extent
        x, y = np.asarray(x), np.asarray(y)
        return (x >= 0) & (x <= ex) & (y >= 0) & (y <= ey)

    def height_at(self, x, y) -> np.ndarray:
        """双线性插值高度，栅格范围以外为 0"""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        col, row = self.world_to_pixel(x, y)
        vals = map_coordinates(self.z, [np.atleast_1d(row).ravel(), np.atleast_1d(col).ravel()],
                               order=1, mode='nearest').reshape(np.shape(x))
        return np.where(self.contains(x, y), vals, 0.0)


@dataclass
class GripCandidate:
    """
    候选抓取点

    ``direction`` 为跨褶皱方向（夹爪闭合方向），取值 [0, π)。
    """
    x: float
    y: float
    z: float
    direction: float
    level: int
    response: float
    score: Optional[float] = None

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def to_dict(self) -> dict:
        return {
            'x': float(self.x),
            'y': float(self.y),
            'z': float(self.z),
            'direction': float(self.direction),
            'level': int(self.level),
            'response': float(self.response),
        }

    @classmethod
    def from_dict(cls, d: dict) -> 'GripCandidate':
        return cls(float(d['x']), float(d['y']), float(d['z']), float(d['direction']),
                   int(d['level']), float(d['response']), d.get('score'))


def project_to_world(depth: DepthImage, cam: CameraModel, grid: Optional[GridSpec] = None) -> WorldHeightMap:
    """
    深度图反投影到世界坐标系并重采样为高度栅格

    每个有效像素 (u, v, d) 映射为 T_K2W · K⁻¹ · [u·d, v·d, d, 1]ᵀ；
    栅格单元取最近的有效像素高度。

    :param depth: 深度图
    :type depth: DepthImage
    :param cam: 相机模型
    :type cam: CameraModel
    :param grid: 输出栅格，默认 0.6m x 0.6m、1mm/像素
    :type grid: GridSpec
    :return: 世界坐标系高度图
    :rtype: WorldHeightMap
    """
    cam.validate()
    grid = grid or GridSpec()
    rows, cols = np.nonzero(depth.valid)
    if rows.size == 0:
        raise EmptyInputError("Depth image has no valid pixels")

    d = depth.values[rows, cols]
    hom = np.stack([cols * d, rows * d, d, np.ones_like(d)])
    world = (cam.T_K2W @ np.linalg.inv(cam.K) @ hom)[:3].T

    points = np.full(depth.values.shape + (3,), np.nan)
    points[rows, cols] = world

    gx, gy = grid.cell_centers()
    tree = cKDTree(world[:, :2])
    _, nearest = tree.query(np.column_stack([gx.ravel(), gy.ravel()]))
    z = world[nearest, 2].reshape(grid.height, grid.width)
    z = np.maximum(z, -Z_EPSILON)
    logger.debug("Projected %d valid pixels onto a %dx%d grid", rows.size, grid.width, grid.height)
    return WorldHeightMap(z, grid.mpp, points)


def gauss_kernel(dtype=torch.float64) -> torch.Tensor:
    """5x5 二项式核 [1,4,6,4,1]ᵀ[1,4,6,4,1]/256"""
    k = torch.tensor([1.0, 4.0, 6.0, 4.0, 1.0], dtype=dtype)
    return (torch.outer(k, k) / 256.0).view(1, 1, 5, 5)


def laplace_kernel(dtype=torch.float64) -> torch.Tensor:
    return torch.tensor([[0.0, 1.0, 0.0],
                         [1.0, -4.0, 1.0],
                         [0.0, 1.0, 0.0]], dtype=dtype).view(1, 1, 3, 3)


def conv_gauss(x: torch.Tensor) -> torch.Tensor:
    x = F.pad(x, (2, 2, 2, 2), mode='reflect')
    return F.conv2d(x, gauss_kernel(x.dtype))


def conv_laplace(x: torch.Tensor) -> torch.Tensor:
    x = F.pad(x, (1, 1, 1, 1), mode='reflect')
    return F.conv2d(x, laplace_kernel(x.dtype))


def downsample(x: torch.Tensor) -> torch.Tensor:
    return x[:, :, ::2, ::2]


def _pyramid(hm: WorldHeightMap, levels: int) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    min_side = 2 ** (levels - 1) * 8
    if min(hm.z.shape) < min_side:
        raise RasterSizeError(f"Raster {hm.z.shape} too small for {levels} levels (need {min_side} px per side)")

    x = torch.from_numpy(np.ascontiguousarray(hm.z, dtype=np.float64)).view(1, 1, *hm.z.shape)
    smoothed_levels, responses = [], []
    with torch.no_grad():
        for _ in range(levels):
            smoothed = conv_gauss(x)
            smoothed_levels.append(smoothed[0, 0].numpy().copy())
            responses.append(conv_laplace(smoothed).abs()[0, 0].numpy().copy())
            x = downsample(smoothed)
    return smoothed_levels, responses


def laplacian_pyramid_responses(hm: WorldHeightMap, levels: int = 3) -> List[np.ndarray]:
    """
    多尺度褶皱响应

    第 ℓ 层：对上一层平滑后的栅格抽取 2 倍，再做 5-tap 平滑并取 4 邻域拉普拉斯的绝对值。
    宽度约为 4·2^ℓ 像素的脊在第 ℓ 层响应最大。

    :param hm: 高度图
    :type hm: WorldHeightMap
    :param levels: 金字塔层数
    :type levels: int
    :return: 每层响应图（米）
    :rtype: list
    """
    return _pyramid(hm, levels)[1]


def pyramid_levels(hm: WorldHeightMap, levels: int = 3) -> List[WorldHeightMap]:
    """每层平滑后的高度图，第 ℓ 层像素尺寸为 mpp·2^ℓ"""
    smoothed, _ = _pyramid(hm, levels)
    return [WorldHeightMap(z, hm.mpp * 2 ** level) for level, z in enumerate(smoothed)]


def wrinkle_direction(hm: WorldHeightMap, x: int, y: int) -> float:
    """
    像素 (x=列, y=行) 处的褶皱平面方向

    中心差分求梯度，双参数反正切折叠到 [0, π)。
    """
    x, y = int(x), int(y)
    if not (1 <= x <= hm.width - 2 and 1 <= y <= hm.height - 2):
        raise MarginError(f"Pixel ({x}, {y}) is within 1px of the raster border")
    z = hm.z
    gx = (z[y, x + 1] - z[y, x - 1]) / 2.0
    gy = (z[y + 1, x] - z[y - 1, x]) / 2.0
    angle = float(np.mod(np.arctan2(gy, gx), np.pi))
    if angle >= np.pi:
        angle = 0.0
    return angle


def local_maxima(response: np.ndarray, threshold: float) -> np.ndarray:
    """8 邻域非极大值抑制，返回 (N, 2) 的 (行, 列)"""
    neighbourhood = maximum_filter(response, size=3, mode='constant', cval=-np.inf)
    keep = (response > threshold) & (response >= neighbourhood)
    return np.argwhere(keep)


def extract_candidates(responses: Sequence[np.ndarray], hm: WorldHeightMap, threshold: float,
                       rng_seed: int) -> List[GripCandidate]:
    """
    阈值 + 非极大值抑制得到候选抓取点

    每层的局部极大值映射回第 0 层像素 (r·2^ℓ, c·2^ℓ)；高度不大于 0 的点（桌面）被丢弃。
    方向在该层平滑后的高度图上计算，噪声与像素量化的影响更小。
    输出顺序由 ``rng_seed`` 决定的置换给出。

    :param responses: ``laplacian_pyramid_responses`` 的输出
    :param hm: 高度图
    :param threshold: 响应阈值（米）
    :param rng_seed: 随机种子
    :rtype: list
    """
    candidates = []
    smoothed = pyramid_levels(hm, len(responses)) if any((r > threshold).any() for r in responses) else []
    for level, response in enumerate(responses):
        scale = 2 ** level
        for r, c in local_maxima(response, threshold):
            row = min(int(r) * scale, hm.height - 1)
            col = min(int(c) * scale, hm.width - 1)
            z = float(hm.z[row, col])
            if z <= 0:
                continue
            level_map = smoothed[level]
            direction = wrinkle_direction(level_map, min(max(int(c), 1), level_map.width - 2),
                                          min(max(int(r), 1), level_map.height - 2))
            x, y = hm.pixel_to_world(col, row)
            candidates.append(GripCandidate(float(x), float(y), z, direction, level, float(response[r, c])))

    order = np.random.default_rng(rng_seed).permutation(len(candidates))
    return [candidates[i] for i in order]


def crop_grip_window(hm: WorldHeightMap, center, side: float = 0.11, size: int = 64) -> np.ndarray:
    """
    以抓取点为中心截取 side x side 的世界坐标窗口，双线性重采样到 size x size

    栅格范围以外的部分填充桌面高度 0。

    :param hm: 高度图
    :param center: 世界坐标 (x, y[, z])
    :param side: 窗口边长（米）
    :param size: 输出边长（像素）
    :rtype: np.ndarray
    """
    cx, cy = float(center[0]), float(center[1])
    if not hm.contains(cx, cy):
        raise BoundsError(f"Crop centre ({cx:.3f}, {cy:.3f}) is outside the raster")
    offsets = (np.arange(size) + 0.5) / size * side - side / 2.0
    ys, xs = np.meshgrid(cy + offsets, cx + offsets, indexing='ij')
    return hm.height_at(xs, ys)
