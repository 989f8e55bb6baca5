"""
主动触觉探索

深度图 -> 候选抓取点 -> 抓取质量模型排序 -> 抓取并判断接触 -> 属性预测，
洗涤方式的置信度低于阈值时换一个位置重新探索。
"""
import json
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.metrics import accuracy_score
from tqdm import tqdm

from config.errors import ConfigError, EmptyInputError, UnexplorableItemError
from config.settings import ExploreConfig, Settings, TactileConfig
from config.taxonomy import CHANCE, HEAD_NAMES, REPORT_ORDER, head_index
from network.clothsim import (ClothItem, TactileSequence, gripper_misalignment, relayout, render_depth,
                              simulate_grip, synth_cloth)
from network.geometry import (CameraModel, DepthImage, GridSpec, GripCandidate, WorldHeightMap, crop_grip_window,
                              extract_candidates, laplacian_pyramid_responses, project_to_world)
from network.model import MultiHeadModel, PropertyPrediction, confidence, predict
from network.tactile import (FilterBank, default_bank, detect_contact, extract_features, max_contact_frame,
                             sequence_features)

logger = logging.getLogger(__name__)

RANKINGS = ('grip_model', 'random')


@dataclass(frozen=True)
class ExplorePolicy:
    """
    重新探索策略

    :param confidence_head: 决定是否重试的属性头
    :param threshold: 置信度阈值，达到即停止
    :param max_retries: 每次探索最多抓取次数
    :param reuse_radius: 与已尝试点距离小于该值的候选点不再使用（米）
    :param ranking: ``grip_model`` 按抓取质量排序，``random`` 按随机顺序
    """
    confidence_head: str = 'wash_method'
    threshold: float = 0.75
    max_retries: int = 5
    reuse_radius: float = 0.02
    ranking: str = 'grip_model'

    def __post_init__(self):
        try:
            head_index(self.confidence_head)
        except KeyError as e:
            raise ConfigError(str(e.args[0])) from e
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"Confidence threshold must be in (0, 1), got {self.threshold}")
        if self.max_retries < 1:
            raise ConfigError(f"max_retries must be >= 1, got {self.max_retries}")
        if self.reuse_radius < 0:
            raise ConfigError(f"reuse_radius must be >= 0, got {self.reuse_radius}")
        if self.ranking not in RANKINGS:
            raise ConfigError(f"Unknown candidate ranking '{self.ranking}', expected one of {RANKINGS}")

    @classmethod
    def from_settings(cls, cfg: ExploreConfig) -> 'ExplorePolicy':
        return cls(cfg.confidence_head, float(cfg.threshold), int(cfg.max_retries), float(cfg.reuse_radius),
                   cfg.ranking)


@dataclass
class Trial:
    candidate: GripCandidate
    valid_contact: bool
    prediction: PropertyPrediction
    confidence: float

    def to_dict(self) -> dict:
        d = self.candidate.to_dict()
        d['score'] = self.candidate.score
        return {
            'candidate': d,
            'valid_contact': self.valid_contact,
            'confidence': round(self.confidence, 6),
            'prediction': self.prediction.to_dict()['classes'],
        }


@dataclass
class ExplorationRecord:
    """
    一次探索的完整记录

    ``final_prediction`` 取置信的那次抓取；预算用完时取有效接触中置信度最高的一次，
    都无效时取全部抓取中置信度最高的一次。
    """
    item_id: str
    trials: List[Trial]
    final_prediction: PropertyPrediction
    confident: bool
    seed: int = 0

    @property
    def trial_count(self) -> int:
        return len(self.trials)

    @property
    def easy_flag(self) -> bool:
        return self.confident and self.trial_count <= 2

    @property
    def first_prediction(self) -> PropertyPrediction:
        return self.trials[0].prediction

    def to_dict(self) -> dict:
        return {
            'item_id': self.item_id,
            'seed': self.seed,
            'trial_count': self.trial_count,
            'confident': self.confident,
            'easy': self.easy_flag,
            'final_prediction': self.final_prediction.to_dict(),
            'trials': [t.to_dict() for t in self.trials],
        }


def candidate_pool(depth: DepthImage, cam: CameraModel, settings: Settings,
                   seed: int = 0) -> Tuple[Optional[WorldHeightMap], List[GripCandidate]]:
    """
    从深度图估计高度图并提取候选池（随机顺序，最多 ``max_candidates`` 个）

    :return: ``(估计的高度图, 候选点)``，深度图全无效时为 ``(None, [])``
    """
    grid = GridSpec(settings.scene.table_extent, settings.scene.table_extent, settings.scene.grid_mpp)
    try:
        hm = project_to_world(depth, cam, grid)
    except EmptyInputError:
        logger.warning("Depth image has no valid pixels, nothing to plan")
        return None, []
    responses = laplacian_pyramid_responses(hm, settings.pyramid.levels)
    candidates = extract_candidates(responses, hm, settings.pyramid.threshold, seed)
    return hm, candidates[:settings.pyramid.max_candidates]


def plan_candidates(depth: DepthImage, cam: CameraModel, grip_model, settings: Optional[Settings] = None,
                    seed: int = 0, ranking: str = 'grip_model',
                    bank: Optional[FilterBank] = None) -> List[GripCandidate]:
    """
    生成并排序候选抓取点

    反投影 -> 拉普拉斯金字塔 -> 阈值与非极大值抑制，然后按抓取质量模型在每个候选点
    11cm 窗口上的得分降序排列（得分相同时保持候选池顺序）。

    :param depth: 深度图
    :type depth: DepthImage
    :param cam: 相机模型
    :type cam: CameraModel
    :param grip_model: 带 ``score(crops, bank)`` 方法的模型；``ranking='random'`` 时可为 None
    :param seed: 候选池置换的随机种子
    :type seed: int
    :return: 排好序的候选点，没有候选点时为空列表
    :rtype: list
    """
    settings = settings or Settings()
    hm, candidates = candidate_pool(depth, cam, settings, seed)
    if not candidates or ranking == 'random' or grip_model is None:
        return candidates

    crops = np.stack([crop_grip_window(hm, c.position, settings.grip.crop_side, settings.grip.crop_px)
                      for c in candidates])
    scores = np.asarray(grip_model.score(crops, bank), dtype=np.float64)
    order = sorted(range(len(candidates)), key=lambda i: (-scores[i], i))
    return [replace(candidates[i], score=float(scores[i])) for i in order]


class ClothWorld:
    """
    仿真世界：铺放衣物、拍摄深度图、执行抓取

    :param settings: 配置
    :type settings: Settings
    """
    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings or Settings()
        c = self.settings.camera
        extent = self.settings.scene.table_extent
        self.camera = CameraModel.tilted(c.width, c.height, c.fx, c.fy, c.cx, c.cy, c.mount_height, c.tilt_deg,
                                         look_at=(extent / 2.0, extent / 2.0))

    def scene(self, item: ClothItem, seed: int, relay: bool = True) -> Tuple[WorldHeightMap, DepthImage]:
        """铺放衣物并拍摄深度图；``relay`` 为 True 时按 ``seed`` 重新铺放"""
        s = self.settings.scene
        placed = relayout(item, seed) if relay else item
        hm = synth_cloth(placed, s.table_extent, s.grid_mpp)
        depth = render_depth(hm, self.camera, s.noise_sd, seed=seed, dropout=s.dropout,
                             march_steps=s.march_steps, bisect_steps=s.bisect_steps)
        return hm, depth

    def plan(self, depth: DepthImage, grip_model, seed: int, ranking: str = 'grip_model',
             bank: Optional[FilterBank] = None) -> List[GripCandidate]:
        return plan_candidates(depth, self.camera, grip_model, self.settings, seed, ranking, bank)

    def grip(self, item: ClothItem, hm: WorldHeightMap, cand: GripCandidate, seed: int,
             sensor_id: Optional[int] = None) -> TactileSequence:
        """夹爪沿估计的跨褶皱方向闭合；实际方向偏差来自真实褶皱方向和夹爪噪声"""
        rng = np.random.default_rng([seed, 7])
        misalign = gripper_misalignment(hm, cand, rng, self.settings.grip.angle_noise_deg)
        sensor = self.settings.explore.sensor_id if sensor_id is None else sensor_id
        return simulate_grip(item, hm, cand, misalign, seed, sensor, self.settings.grip, self.settings.tactile)


class TactilePerception:
    """
    触觉序列 -> 属性预测

    单帧模型使用最大接触帧，多帧模型使用以它结尾的 9 帧子序列。
    """
    def __init__(self, model: MultiHeadModel, bank: Optional[FilterBank] = None,
                 tactile: Optional[TactileConfig] = None):
        self.model = model
        self.bank = bank or default_bank()
        self.tactile = tactile or TactileConfig()

    def features(self, seq: TactileSequence) -> np.ndarray:
        if self.model.frames == 1:
            return extract_features(seq.frames[max_contact_frame(seq)], self.bank)
        return sequence_features(seq, self.bank, self.model.frames, self.tactile.frame_step)

    def perceive(self, seq: TactileSequence) -> PropertyPrediction:
        return predict(self.model, self.features(seq))


def _trial_seed(seed: int, trial: int) -> int:
    return int(np.random.default_rng([seed, trial]).integers(2 ** 31))


def _final_trial(trials: Sequence[Trial], confident: bool) -> Trial:
    if confident:
        return trials[-1]
    valid = [t for t in trials if t.valid_contact]
    pool = valid if valid else trials
    # 置信度相同时取较早的一次
    return max(pool, key=lambda t: t.confidence)


def explore_item(item: ClothItem, policy: ExplorePolicy, world, grip_model, perception, seed: int,
                 tactile: Optional[TactileConfig] = None) -> ExplorationRecord:
    """
    探索一件衣物

    依次尝试排好序的候选点（跳过距已尝试点 ``reuse_radius`` 以内的点），
    接触有效且置信度不低于阈值时停止，最多尝试 ``max_retries`` 次。

    :param item: 衣物
    :type item: ClothItem
    :param policy: 探索策略
    :type policy: ExplorePolicy
    :param world: 提供 ``scene`` / ``plan`` / ``grip`` 的仿真世界
    :param grip_model: 抓取质量模型
    :param perception: 提供 ``perceive(seq)`` 的属性感知
    :param seed: 探索随机种子
    :type seed: int
    :rtype: ExplorationRecord
    """
    tactile = tactile or TactileConfig()
    hm, depth = world.scene(item, seed)
    plan = world.plan(depth, grip_model, seed, policy.ranking)
    if not plan:
        raise UnexplorableItemError(item.item_id)

    trials: List[Trial] = []
    tried: List[np.ndarray] = []
    confident = False
    for cand in plan:
        if len(trials) >= policy.max_retries:
            break
        point = np.array([cand.x, cand.y])
        if any(np.hypot(*(point - p)) < policy.reuse_radius for p in tried):
            continue
        tried.append(point)

        seq = world.grip(item, hm, cand, _trial_seed(seed, len(trials)))
        valid = detect_contact(seq, tactile)
        prediction = perception.perceive(seq)
        conf = confidence(prediction, policy.confidence_head)
        trials.append(Trial(cand, valid, prediction, conf))
        logger.debug("%s trial %d: valid=%s %s=%.3f", item.item_id, len(trials), valid,
                     policy.confidence_head, conf)
        if valid and conf >= policy.threshold:
            confident = True
            break

    final = _final_trial(trials, confident)
    return ExplorationRecord(item.item_id, trials, final.prediction, confident, seed)


@dataclass
class PolicyReport:
    """
    在线探索评估结果

    ``without_retrial`` 只看第一次抓取，``with_retrial`` 看最终预测，
    ``easy`` 为易识别（2 次以内置信）的探索上的最终预测准确率。
    """
    without_retrial: Dict[str, float]
    with_retrial: Dict[str, float]
    easy: Dict[str, float]
    mean_trials: float
    easy_fraction: float
    unexplorable: int
    episodes: List[ExplorationRecord] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for name in REPORT_ORDER:
            rows.append({
                'property': name,
                'chance': CHANCE[name],
                'without_retrial': self.without_retrial.get(name, float('nan')),
                'with_retrial': self.with_retrial.get(name, float('nan')),
                'easy': self.easy.get(name, float('nan')),
            })
        return pd.DataFrame(rows).set_index('property')

    def summary(self) -> Dict[str, float]:
        return {
            'episodes': len(self.episodes),
            'mean_trials': self.mean_trials,
            'easy_fraction': self.easy_fraction,
            'unexplorable': self.unexplorable,
        }


def _accuracies(truth: np.ndarray, predicted: np.ndarray) -> Dict[str, float]:
    if len(truth) == 0:
        return {name: float('nan') for name in HEAD_NAMES}
    return {name: float(accuracy_score(truth[:, h], predicted[:, h])) for h, name in enumerate(HEAD_NAMES)}


def evaluate_policy(items: Sequence[ClothItem], world, grip_model, perception, policy: ExplorePolicy,
                    grips_per_item: int = 5, seed: int = 0, tactile: Optional[TactileConfig] = None,
                    progress: bool = False) -> PolicyReport:
    """
    在测试衣物上评估探索策略

    每件衣物探索 ``grips_per_item`` 次，每次重新铺放。没有候选点的探索记为不可探索并跳过。

    :param items: 测试衣物
    :type items: list
    :param policy: 探索策略
    :type policy: ExplorePolicy
    :param grips_per_item: 每件衣物的探索次数
    :type grips_per_item: int
    :rtype: PolicyReport
    """
    episodes: List[ExplorationRecord] = []
    truth = []
    unexplorable = 0
    jobs = [(i, item, g) for i, item in enumerate(items) for g in range(grips_per_item)]
    iterator = tqdm(jobs, desc="Exploring") if progress else jobs
    for i, item, g in iterator:
        episode_seed = int(np.random.default_rng([seed, i, g]).integers(2 ** 31))
        try:
            record = explore_item(item, policy, world, grip_model, perception, episode_seed, tactile)
        except UnexplorableItemError as e:
            logger.warning("%s (episode %d)", e, g)
            unexplorable += 1
            continue
        episodes.append(record)
        truth.append(item.labels.as_tuple())

    truth = np.asarray(truth, dtype=np.int64).reshape(-1, len(HEAD_NAMES))
    first = np.array([e.first_prediction.classes for e in episodes], dtype=np.int64).reshape(-1, len(HEAD_NAMES))
    final = np.array([e.final_prediction.classes for e in episodes], dtype=np.int64).reshape(-1, len(HEAD_NAMES))
    easy_mask = np.array([e.easy_flag for e in episodes], dtype=bool)

    return PolicyReport(
        without_retrial=_accuracies(truth, first),
        with_retrial=_accuracies(truth, final),
        easy=_accuracies(truth[easy_mask], final[easy_mask]),
        mean_trials=float(np.mean([e.trial_count for e in episodes])) if episodes else float('nan'),
        easy_fraction=float(easy_mask.mean()) if episodes else float('nan'),
        unexplorable=unexplorable,
        episodes=episodes,
    )


def write_episodes(path: str, episodes: Sequence[ExplorationRecord]) -> None:
    """每次探索写成一行 JSON，按衣物编号和种子排序"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w') as f:
        for record in sorted(episodes, key=lambda e: (e.item_id, e.seed)):
            f.write(json.dumps(record.to_dict(), sort_keys=True) + '\n')
