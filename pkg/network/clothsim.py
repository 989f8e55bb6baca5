"""
确定性布料世界

代替真实机器人与衣物：由属性标签生成材料参数和衣物高度图，用针孔相机渲染深度图，
并模拟夹爪闭合过程中 GelSight 采集到的触觉序列。
"""
import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter  # type: ignore
from scipy.special import expit  # type: ignore

from config.errors import BoundsError, PoseError
from config.settings import GripConfig, TactileConfig
from config.taxonomy import PropertyLabels
from network.geometry import CameraModel, DepthImage, GripCandidate, WorldHeightMap

logger = logging.getLogger(__name__)

# 属性类别 -> 物理量
THICKNESS_MM = (0.3, 0.8, 1.8, 3.5, 6.0)
TEXTURE_PERIOD_MM = (3.0, 2.2, 1.6, 1.1, 0.8)
TEXTURE_AMP_MM = (0.02, 0.04, 0.07, 0.10, 0.14)
FIBER_NOISE_MM = (0.0, 0.03, 0.06, 0.10)

# 每种面料的属性分布：
# (厚度类别范围, 光滑度范围, 起毛程度范围, P(柔软), P(弹性), P(耐用), P(羊毛), P(防风))
TEXTILE_PROFILES = (
    ((1, 2), (1, 2), (0, 1), 0.60, 0.30, 0.80, 0.05, 0.10),  # cotton
    ((0, 1), (0, 0), (0, 0), 0.80, 0.20, 0.30, 0.00, 0.10),  # satin
    ((0, 2), (0, 1), (0, 0), 0.50, 0.40, 0.80, 0.00, 0.50),  # polyester
    ((2, 3), (3, 4), (0, 0), 0.10, 0.20, 0.95, 0.00, 0.60),  # denim
    ((1, 2), (1, 2), (0, 0), 0.30, 0.10, 0.90, 0.20, 0.60),  # gabardine
    ((0, 1), (1, 1), (0, 0), 0.40, 0.10, 0.70, 0.00, 0.20),  # broad cloth
    ((3, 4), (1, 2), (0, 1), 0.30, 0.10, 0.90, 0.00, 0.95),  # parka
    ((2, 3), (0, 1), (0, 0), 0.20, 0.10, 0.95, 0.00, 0.95),  # leather
    ((0, 1), (2, 3), (0, 0), 0.60, 0.30, 0.30, 0.00, 0.10),  # crepe
    ((2, 3), (3, 4), (0, 1), 0.50, 0.20, 0.80, 0.00, 0.40),  # corduroy
    ((1, 2), (0, 1), (1, 2), 0.90, 0.20, 0.40, 0.00, 0.30),  # velvet
    ((1, 2), (2, 3), (1, 2), 0.80, 0.20, 0.60, 0.20, 0.30),  # flannel
    ((2, 4), (2, 3), (2, 3), 0.95, 0.50, 0.60, 0.00, 0.40),  # fleece
    ((2, 4), (3, 4), (3, 3), 0.80, 0.30, 0.40, 0.30, 0.30),  # hairy
    ((2, 4), (2, 4), (1, 3), 0.60, 0.40, 0.60, 0.95, 0.50),  # wool
    ((1, 3), (2, 3), (0, 2), 0.80, 0.90, 0.50, 0.30, 0.10),  # knit
    ((0, 0), (3, 4), (0, 0), 0.50, 0.60, 0.20, 0.00, 0.00),  # net
    ((1, 2), (1, 2), (0, 1), 0.30, 0.10, 0.80, 0.60, 0.50),  # suit
    ((1, 2), (2, 4), (0, 1), 0.40, 0.20, 0.80, 0.10, 0.30),  # woven
    ((0, 4), (0, 4), (0, 3), 0.50, 0.50, 0.50, 0.20, 0.40),  # other
)

LABEL_NOISE = 0.1
GENTLE_TEXTILES = (1, 8, 10, 16)          # satin, crepe, velvet, net
COLD_TEXTILES = (2, 11, 12, 15)           # polyester, flannel, fleece, knit
DRY_CLEAN_TEXTILES = (7, 17)              # leather, suit
HARDY_TEXTILES = (0, 3, 4, 5, 9, 18)      # cotton, denim, gabardine, broad cloth, corduroy, woven

# 材料参数 -> 触觉成像
CLOTH_PRESENCE_M = 0.0005
INVALID_SCALE = 0.01
# 凝胶载荷在力代理值达到 0.1 + 0.5·厚度(mm) 时饱和，之后薄布被压实，形变回落至多 6%
SATURATION_BASE = 0.1
SATURATION_PER_MM = 0.5
RELAXATION = 0.06


@dataclass(frozen=True)
class MaterialParams:
    """由属性标签决定的材料参数"""
    thickness_mm: float
    texture_period_mm: float
    texture_amp_mm: float
    fiber_noise_amp: float
    compliance: float
    texture_motif: int
    stretch_coeff: float
    durability_coeff: float
    woolen_flag: bool
    windproof_flag: bool

    def to_dict(self) -> dict:
        return {
            'thickness_mm': self.thickness_mm,
            'texture_period_mm': self.texture_period_mm,
            'texture_amp_mm': self.texture_amp_mm,
            'fiber_noise_amp': self.fiber_noise_amp,
            'compliance': self.compliance,
            'texture_motif': self.texture_motif,
            'stretch_coeff': self.stretch_coeff,
            'durability_coeff': self.durability_coeff,
            'woolen_flag': self.woolen_flag,
            'windproof_flag': self.windproof_flag,
        }

    @classmethod
    def from_dict(cls, d: dict) -> 'MaterialParams':
        return cls(
            float(d['thickness_mm']), float(d['texture_period_mm']), float(d['texture_amp_mm']),
            float(d['fiber_noise_amp']), float(d['compliance']), int(d['texture_motif']),
            float(d['stretch_coeff']), float(d['durability_coeff']),
            bool(d['woolen_flag']), bool(d['windproof_flag']),
        )


@dataclass(frozen=True)
class ClothItem:
    item_id: str
    labels: PropertyLabels
    material: MaterialParams
    layout_seed: int
    item_seed: int = 0

    def to_dict(self) -> dict:
        return {
            'item_id': self.item_id,
            'item_seed': self.item_seed,
            'layout_seed': self.layout_seed,
            'labels': self.labels.as_dict(),
            'material': self.material.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> 'ClothItem':
        return cls(
            item_id=d['item_id'],
            labels=PropertyLabels.from_dict(d['labels']),
            material=MaterialParams.from_dict(d['material']),
            layout_seed=int(d['layout_seed']),
            item_seed=int(d['item_seed']),
        )


@dataclass
class TactileFrame:
    """一帧触觉图像：(48, 64) 的凝胶形变（毫米）"""
    deformation: np.ndarray
    force_proxy: float
    index: int


@dataclass
class TactileSequence:
    """一次抓取过程记录的触觉视频"""
    frames: List[TactileFrame]
    valid_contact: bool
    item_id: str
    candidate: Optional[GripCandidate] = None
    sensor_id: int = 0
    misalign_deg: float = 0.0
    quality: float = 0.0

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def forces(self) -> np.ndarray:
        return np.array([f.force_proxy for f in self.frames])

    def stack(self) -> np.ndarray:
        """(F, H, W) 形变"""
        return np.stack([f.deformation for f in self.frames])

    @classmethod
    def from_arrays(cls, frames, forces, item_id='', valid_contact=False, **kwargs) -> 'TactileSequence':
        return cls([TactileFrame(np.asarray(f, dtype=np.float64), float(p), i)
                    for i, (f, p) in enumerate(zip(frames, forces))],
                   valid_contact, item_id, **kwargs)


@dataclass(frozen=True)
class Wrinkle:
    """一条褶皱：弯曲中心线 + 高斯截面，两端逻辑函数收尾"""
    cx: float
    cy: float
    theta: float
    length: float
    curvature: float
    width: float
    height: float


def _season_rule(thickness: int) -> int:
    if thickness >= 3:
        return 3
    if thickness == 2:
        return 2
    if thickness == 0:
        return 1
    return 0


def _wash_rule(textile: int, thickness: int, durable: int, woolen: int) -> int:
    if woolen:
        return 5 if thickness >= 3 else 4
    if textile in DRY_CLEAN_TEXTILES:
        return 5
    if textile in GENTLE_TEXTILES:
        return 3
    if textile in COLD_TEXTILES:
        return 2
    if textile in HARDY_TEXTILES:
        return 0 if durable else 1
    if textile == 13:
        return 4
    return 1


def make_item(index: int, seed: int) -> ClothItem:
    """
    生成第 index 件衣物

    面料类型按下标轮换覆盖全部 20 类；物理属性按面料分布采样，季节与洗涤方式由物理属性推出，
    并带 10% 的标签噪声。

    :param index: 衣物序号
    :type index: int
    :param seed: 语料种子
    :type seed: int
    :rtype: ClothItem
    """
    rng = np.random.default_rng([seed, index])
    textile = index % len(TEXTILE_PROFILES)
    (t_lo, t_hi), (s_lo, s_hi), (f_lo, f_hi), p_soft, p_stretch, p_dur, p_wool, p_wind = TEXTILE_PROFILES[textile]

    thickness = int(rng.integers(t_lo, t_hi + 1))
    smoothness = int(rng.integers(s_lo, s_hi + 1))
    fuzziness = int(rng.integers(f_lo, f_hi + 1))
    softness = int(rng.random() < p_soft)
    stretchiness = int(rng.random() < p_stretch)
    durability = int(rng.random() < p_dur)
    woolen = int(rng.random() < p_wool)
    windproof = int(rng.random() < p_wind)

    season = _season_rule(thickness)
    if rng.random() < LABEL_NOISE:
        season = int(rng.integers(4))
    wash = _wash_rule(textile, thickness, durability, woolen)
    if rng.random() < LABEL_NOISE:
        wash = int(rng.integers(6))

    labels = PropertyLabels(
        thickness=thickness, smoothness=smoothness, fuzziness=fuzziness, season=season,
        textile_type=textile, wash_method=wash, softness=softness, stretchiness=stretchiness,
        durability=durability, woolen=woolen, windproof=windproof,
    )
    item_seed = int(rng.integers(2 ** 31))
    layout_seed = int(rng.integers(2 ** 31))
    return ClothItem(f"item{index:03d}", labels, label_to_material(labels, item_seed), layout_seed, item_seed)


def label_to_material(labels: PropertyLabels, item_seed: int) -> MaterialParams:
    """
    属性标签 -> 材料参数（单调映射，逐件 ±10% 抖动）

    :param labels: 属性真值
    :type labels: PropertyLabels
    :param item_seed: 衣物种子
    :type item_seed: int
    :rtype: MaterialParams
    """
    rng = np.random.default_rng(item_seed)
    jitter = 1.0 + rng.uniform(-0.1, 0.1, size=4)
    compliance = 0.3 + 0.45 * labels.softness + 0.05 * labels.thickness + rng.uniform(-0.03, 0.03)
    return MaterialParams(
        thickness_mm=THICKNESS_MM[labels.thickness] * jitter[0],
        texture_period_mm=TEXTURE_PERIOD_MM[labels.smoothness] * jitter[1],
        texture_amp_mm=TEXTURE_AMP_MM[labels.smoothness] * jitter[2],
        fiber_noise_amp=FIBER_NOISE_MM[labels.fuzziness] * jitter[3],
        compliance=float(np.clip(compliance, 0.05, 1.0)),
        texture_motif=labels.textile_type,
        stretch_coeff=0.1 + 0.8 * labels.stretchiness,
        durability_coeff=0.2 + 0.6 * labels.durability,
        woolen_flag=bool(labels.woolen),
        windproof_flag=bool(labels.windproof),
    )


def layout_wrinkles(item: ClothItem, table_extent: float, n_wrinkles: Optional[int] = None) -> List[Wrinkle]:
    """褶皱布局，第一条为主褶皱（高度 ≥ 20mm，宽度 8-16mm）"""
    rng = np.random.default_rng([item.layout_seed, 2])
    n = int(rng.integers(3, 9)) if n_wrinkles is None else int(n_wrinkles)
    scale = 0.5 + 0.125 * item.labels.thickness
    wrinkles = []
    for k in range(n):
        cx, cy = rng.uniform(0.15 * table_extent, 0.85 * table_extent, size=2)
        theta = rng.uniform(0.0, np.pi)
        length = rng.uniform(0.25, 0.75) * table_extent
        curvature = rng.uniform(-3.0, 3.0)
        if k == 0:
            width = rng.uniform(8.0, 16.0)
            height = max(20.0, 5.0 + 45.0 * rng.random() * scale)
        else:
            width = rng.uniform(5.0, 40.0)
            height = 5.0 + 45.0 * rng.random() * scale
        wrinkles.append(Wrinkle(cx, cy, theta, length, curvature, width * 1e-3, height * 1e-3))
    return wrinkles


def wrinkle_field(wrinkles: List[Wrinkle], X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """各褶皱取逐点最大值；截面 σ = 宽度/4（宽度为 1/e² 全宽）"""
    out = np.zeros_like(X)
    for w in wrinkles:
        c, s = np.cos(w.theta), np.sin(w.theta)
        along = (X - w.cx) * c + (Y - w.cy) * s
        across = -(X - w.cx) * s + (Y - w.cy) * c
        offset = across - 0.5 * w.curvature * along ** 2
        sigma = w.width / 4.0
        taper = expit(-(np.abs(along) - w.length / 2.0) / 0.01)
        np.maximum(out, w.height * np.exp(-offset ** 2 / (2.0 * sigma ** 2)) * taper, out=out)
    return out


def drape_field(layout_seed: int, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """低频起伏：5 个随机方向的余弦叠加，平移到非负"""
    rng = np.random.default_rng([layout_seed, 1])
    drape = np.zeros_like(X)
    for _ in range(5):
        amp = rng.uniform(0.5e-3, 1.5e-3)
        wavelength = rng.uniform(0.15, 0.4)
        angle = rng.uniform(0.0, np.pi)
        phase = rng.uniform(0.0, 2 * np.pi)
        drape += amp * np.cos(2 * np.pi * (X * np.cos(angle) + Y * np.sin(angle)) / wavelength + phase)
    return drape - drape.min()


def synth_cloth(item: ClothItem, table_extent: float = 0.6, mpp: float = 0.001,
                n_wrinkles: Optional[int] = None) -> WorldHeightMap:
    """
    合成衣物高度图

    高度 = 布料厚度 + 低频起伏 + 褶皱 + 微观纹理，完全由 (item_seed, layout_seed) 决定。

    :param item: 衣物
    :type item: ClothItem
    :param table_extent: 桌面边长（米），不小于 0.3
    :type table_extent: float
    :param mpp: 每像素米数
    :type mpp: float
    :param n_wrinkles: 强制指定褶皱数（0 表示无褶皱）
    :type n_wrinkles: int
    :rtype: WorldHeightMap
    """
    if table_extent < 0.3:
        raise ValueError(f"Table extent must be at least 0.3m, got {table_extent}")
    n = int(round(table_extent / mpp))
    coords = (np.arange(n) + 0.5) * mpp
    X, Y = np.meshgrid(coords, coords, indexing='xy')

    z = item.material.thickness_mm * 1e-3 + drape_field(item.layout_seed, X, Y)
    wrinkles = layout_wrinkles(item, table_extent, n_wrinkles)
    if wrinkles:
        z = z + wrinkle_field(wrinkles, X, Y)

    micro = gaussian_filter(np.random.default_rng([item.item_seed, 3]).standard_normal((n, n)), 1.0)
    z = z + micro * item.material.texture_amp_mm * 1e-3
    return WorldHeightMap(np.maximum(z, 0.0), mpp)


def render_depth(hm: WorldHeightMap, cam: CameraModel, noise_sd: float, seed: int = 0,
                 dropout: float = 0.02, march_steps: int = 48, bisect_steps: int = 30) -> DepthImage:
    """
    模拟 Kinect 深度图

    每条像素射线从 z = max(hm) 平面向下步进到桌面，找到第一次穿入表面的区间后二分细化；
    未碰到布料的射线返回与桌面的精确交点。之后叠加高斯噪声并随机丢弃 round(dropout·N) 个像素。

    :param hm: 世界坐标系高度图
    :type hm: WorldHeightMap
    :param cam: 相机
    :type cam: CameraModel
    :param noise_sd: 深度噪声标准差（米）
    :type noise_sd: float
    :param seed: 随机种子
    :type seed: int
    :rtype: DepthImage
    """
    cam.validate()
    origin, dirs = cam.pixel_rays()
    top = max(float(hm.z.max()), 0.0)
    if origin[2] <= 0:
        raise PoseError(f"Camera at z={origin[2]:.3f}m is not above the table")
    if origin[2] <= top:
        raise PoseError(f"Camera at z={origin[2]:.3f}m is inside the cloth (top {top:.3f}m)")

    dz = dirs[..., 2]
    downward = dz < 0
    safe_dz = np.where(downward, dz, -1.0)
    d_table = -origin[2] / safe_dz
    d_top = (top - origin[2]) / safe_dz

    def clearance(d):
        p = origin + d[..., None] * dirs
        return p[..., 2] - hm.height_at(p[..., 0], p[..., 1])

    lo = d_top.copy()
    hi = d_table.copy()
    found = np.zeros(dz.shape, dtype=bool)
    last_step = np.zeros(dz.shape, dtype=bool)
    prev = d_top
    for k in range(1, march_steps + 1):
        d = d_top + (d_table - d_top) * (k / march_steps)
        newly = ~found & (clearance(d) <= 0)
        lo[newly] = prev[newly]
        hi[newly] = d[newly]
        if k == march_steps:
            last_step = newly | ~found
        found |= newly
        prev = d

    for _ in range(bisect_steps):
        mid = 0.5 * (lo + hi)
        above = clearance(mid) > 0
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    depth = 0.5 * (lo + hi)

    table_x = origin[0] + d_table * dirs[..., 0]
    table_y = origin[1] + d_table * dirs[..., 1]
    bare = last_step & (hm.height_at(table_x, table_y) <= 0)
    depth = np.where(bare, d_table, depth)

    rng = np.random.default_rng(seed)
    if noise_sd > 0:
        depth = depth + rng.normal(0.0, noise_sd, size=depth.shape)
    valid = downward.copy()
    n_drop = int(round(dropout * depth.size))
    if n_drop:
        drop = rng.choice(depth.size, size=n_drop, replace=False)
        valid.flat[drop] = False
    depth = np.where(valid, depth, 0.0)
    return DepthImage(depth, valid)


def local_prominence(hm: WorldHeightMap, x: float, y: float, window: float = 0.11) -> float:
    """(x, y) 处高度减去周围 window x window 区域的中位数（米）"""
    col, row = hm.world_to_pixel(x, y)
    half = int(round(window / hm.mpp / 2))
    c, r = int(round(float(col))), int(round(float(row)))
    r0, r1 = max(r - half, 0), min(r + half + 1, hm.height)
    c0, c1 = max(c - half, 0), min(c + half + 1, hm.width)
    if r0 >= r1 or c0 >= c1:
        return float(hm.height_at(x, y))
    return float(hm.height_at(x, y)) - float(np.median(hm.z[r0:r1, c0:c1]))


def contact_quality(prominence_mm: float, misalign_deg: float, tau_p: float = 5.0) -> float:
    """q = σ(prominence/τ_p) · cos²(misalign)"""
    return float(expit(prominence_mm / tau_p) * np.cos(np.deg2rad(misalign_deg)) ** 2)


def true_wrinkle_direction(hm: WorldHeightMap, x: float, y: float, sigma_px: float = 3.0) -> float:
    """平滑后真实高度图 Hessian 最负曲率方向（跨褶皱方向），[0, π)"""
    col, row = hm.world_to_pixel(x, y)
    c = int(np.clip(round(float(col)), 0, hm.width - 1))
    r = int(np.clip(round(float(row)), 0, hm.height - 1))
    half = int(4 * sigma_px) + 2
    r0, r1 = max(r - half, 0), min(r + half + 1, hm.height)
    c0, c1 = max(c - half, 0), min(c + half + 1, hm.width)
    patch = hm.z[r0:r1, c0:c1]
    rr, cc = r - r0, c - c0
    hxx = gaussian_filter(patch, sigma_px, order=(0, 2))[rr, cc]
    hyy = gaussian_filter(patch, sigma_px, order=(2, 0))[rr, cc]
    hxy = gaussian_filter(patch, sigma_px, order=(1, 1))[rr, cc]
    # 最大特征值方向 + π/2 = 最负曲率方向
    angle = 0.5 * np.arctan2(2.0 * hxy, hxx - hyy) + np.pi / 2
    angle = float(np.mod(angle, np.pi))
    return 0.0 if angle >= np.pi else angle


def gripper_misalignment(hm: WorldHeightMap, cand: GripCandidate, rng: np.random.Generator,
                         noise_deg: float = 5.0) -> float:
    """候选方向与真实跨褶皱方向的夹角（度）加夹爪噪声"""
    truth = true_wrinkle_direction(hm, cand.x, cand.y)
    diff = np.rad2deg(cand.direction - truth)
    diff = (diff + 90.0) % 180.0 - 90.0
    return float(diff + rng.normal(0.0, noise_deg))


def sensor_response(sensor_id: int) -> Tuple[float, float]:
    """每块凝胶的增益与偏置"""
    rng = np.random.default_rng([sensor_id, 99])
    return 1.0 + rng.uniform(-0.08, 0.08), rng.uniform(-0.01, 0.01)


def texture_relief(material: MaterialParams, item_seed: int, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """
    布料表面纹理（毫米），X、Y 为世界坐标（毫米）

    图案由面料类型决定（种子 4000 + motif），幅值和周期由光滑度决定，
    起毛程度叠加纤维噪声，羊毛、防风、弹性、耐用性各自带有可区分的成分。
    """
    motif = material.texture_motif
    period = material.texture_period_mm
    mrng = np.random.default_rng(4000 + motif)
    n_gratings = 1 + motif % 3
    base_freq = 0.6 + 1.0 * ((motif * 7) % 20) / 19.0
    sharpness = mrng.uniform(0.5, 3.0)
    angles = mrng.uniform(0.0, np.pi, n_gratings)
    freqs = base_freq * mrng.uniform(0.85, 1.15, n_gratings)
    phases = mrng.uniform(0.0, 2 * np.pi, n_gratings)

    irng = np.random.default_rng([item_seed, 5])
    jitter_angle = irng.uniform(0.0, np.pi)
    jitter = (1.0 - material.durability_coeff) * 0.8 * np.cos(
        2 * np.pi * (X * np.cos(jitter_angle) + Y * np.sin(jitter_angle)) / (6.0 * period))

    relief = np.zeros_like(X)
    for a, f, ph in zip(angles, freqs, phases):
        wave = np.cos(2 * np.pi * f * (X * np.cos(a) + Y * np.sin(a)) / period + ph + jitter)
        relief += np.tanh(sharpness * wave) / np.tanh(sharpness)
    relief *= material.texture_amp_mm / n_gratings

    # 纤维：高频随机方向余弦叠加
    fibers = np.zeros_like(X)
    n_fibers = 24
    for _ in range(n_fibers):
        a = irng.uniform(0.0, np.pi)
        p = irng.uniform(0.6, 2.0)
        fibers += np.cos(2 * np.pi * (X * np.cos(a) + Y * np.sin(a)) / p + irng.uniform(0.0, 2 * np.pi))
    fibers *= material.fiber_noise_amp / np.sqrt(n_fibers / 2.0)

    if material.windproof_flag:
        relief = 0.6 * relief + 0.02 * np.cos(2 * np.pi * (X * np.cos(angles[0]) + Y * np.sin(angles[0])) / 0.7)
        fibers = 0.4 * fibers

    rib_angle = angles[0] + np.pi / 2
    rib = 0.5 * material.stretch_coeff * material.texture_amp_mm * np.cos(
        2 * np.pi * (X * np.cos(rib_angle) + Y * np.sin(rib_angle)) / (3.0 * period))

    crimp = 0.0
    if material.woolen_flag:
        crimp = 0.05 * np.cos(2 * np.pi * (Y + 0.4 * np.sin(2 * np.pi * X / 3.0)) / 1.2)
    return relief + fibers + rib + crimp


def gel_load(force: np.ndarray, thickness_mm: float) -> np.ndarray:
    """
    每帧的凝胶载荷，峰值为 1

    力代理值达到饱和点 0.1 + 0.5·厚度(mm) 前按 (1 - e^(-f/τ)) 上升（τ 随厚度增大），
    之后线性回落到 1 - RELAXATION。厚度约 1.8mm 以上的布料饱和点 ≥ 1，载荷单调不减，
    最后一帧形变最大；薄布在闭合前半段就达到最大接触。

    :param force: 各帧力代理值，[0, 1] 且不减
    :type force: np.ndarray
    :param thickness_mm: 布料厚度
    :type thickness_mm: float
    :rtype: np.ndarray
    """
    force = np.asarray(force, dtype=np.float64)
    saturation = min(1.0, SATURATION_BASE + SATURATION_PER_MM * thickness_mm)
    tau = 0.04 + 0.2 * thickness_mm
    rise = np.clip(force / saturation, 0.0, 1.0)
    load = (1.0 - np.exp(-rise / tau)) / (1.0 - np.exp(-1.0 / tau))
    if saturation < 1.0:
        after = np.clip((force - saturation) / (1.0 - saturation), 0.0, 1.0)
        load = load * (1.0 - RELAXATION * after)
    return load


def simulate_grip(item: ClothItem, hm: WorldHeightMap, cand: GripCandidate, misalign_deg: float,
                  seed: int, sensor_id: int = 0, grip: Optional[GripConfig] = None,
                  tactile: Optional[TactileConfig] = None) -> TactileSequence:
    """
    模拟一次夹爪闭合

    接触质量 q = σ(prominence/τ_p)·cos²(misalign)；q ≥ 0.5 且候选点下有布料时接触有效。
    每帧的接触区域随力代理值增大，形变 = 穹顶轮廓 × (压入深度 + 纹理)，截断到凝胶厚度；
    无效抓取的图像接近空白。

    :param item: 衣物
    :param hm: 衣物的真实高度图
    :param cand: 候选抓取点
    :param misalign_deg: 夹爪方向与褶皱方向的夹角（度）
    :param seed: 随机种子
    :param sensor_id: 凝胶编号
    :rtype: TactileSequence
    """
    grip = grip or GripConfig()
    tactile = tactile or TactileConfig()
    if not hm.contains(cand.x, cand.y):
        raise BoundsError(f"Grip point ({cand.x:.3f}, {cand.y:.3f}) is outside the raster")
    material = item.material
    rng = np.random.default_rng(seed)

    n_frames = int(rng.integers(grip.min_frames, grip.max_frames + 1))
    onset = rng.uniform(0.03, 0.15)
    t = np.arange(n_frames) / (n_frames - 1)
    force = np.clip((t - onset) / (1.0 - onset), 0.0, 1.0)
    load = gel_load(force, material.thickness_mm)

    prominence_mm = local_prominence(hm, cand.x, cand.y, grip.prominence_window) * 1e3
    quality = contact_quality(prominence_mm, misalign_deg, grip.tau_p_mm)
    on_cloth = float(hm.height_at(cand.x, cand.y)) > CLOTH_PRESENCE_M
    valid = bool(on_cloth and quality >= 0.5)

    h, w = tactile.height, tactile.width
    mm_per_px = tactile.mm_per_px
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    u = (cols - (w - 1) / 2.0) * mm_per_px
    v = (rows - (h - 1) / 2.0) * mm_per_px
    angle = cand.direction + np.deg2rad(misalign_deg)
    ca, sa = np.cos(angle), np.sin(angle)
    X = cand.x * 1e3 + u * ca - v * sa
    Y = cand.y * 1e3 + u * sa + v * ca
    relief = texture_relief(material, item.item_seed, X, Y)

    rho = np.hypot(cols - (w - 1) / 2.0, rows - (h - 1) / 2.0)
    depth_mm = 0.35 + 0.12 * material.thickness_mm + 0.3 * quality
    exponent = 2.5 - 1.5 * material.durability_coeff
    gain, bias = sensor_response(sensor_id)

    frames = []
    for k in range(n_frames):
        radius = (8.0 + 14.0 * material.compliance) * np.sqrt(load[k])
        if radius > 0:
            profile = np.clip(1.0 - (rho / radius) ** 2, 0.0, None) ** exponent
        else:
            profile = np.zeros_like(rho)
        raw = np.clip(load[k] * profile * (depth_mm + relief), 0.0, None)
        if not valid:
            raw = raw * INVALID_SCALE
        contact = raw > 0
        deformation = np.where(contact, np.clip(gain * raw + bias, 0.0, grip.gel_mm), 0.0)
        frames.append(TactileFrame(deformation, float(force[k]), k))

    logger.debug("Grip on %s at (%.3f, %.3f): q=%.3f valid=%s frames=%d",
                 item.item_id, cand.x, cand.y, quality, valid, n_frames)
    return TactileSequence(frames, valid, item.item_id, cand, sensor_id, float(misalign_deg), quality)


def relayout(item: ClothItem, episode_seed: int) -> ClothItem:
    """每次探索重新铺放衣物"""
    layout_seed = int(np.random.default_rng([item.layout_seed, episode_seed]).integers(2 ** 31))
    return replace(item, layout_seed=layout_seed)
