import argparse
import os
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from config.settings import load_settings, setup_logging
from config.data_loader import Corpus, GripRecord, build_split
from network.clothsim import TactileSequence
from network.explorer import ClothWorld, candidate_pool
from network.geometry import DepthImage, GripCandidate, WorldHeightMap, crop_grip_window
from network.tactile import BankConfig, FilterBank, detect_contact, sequence_features

logger = logging.getLogger(__name__)


# 参数解析器
def parse_args(argv=None):
    parser = argparse.ArgumentParser(description="Collect tactile data by gripping every item at random candidates")
    parser.add_argument("--corpus", "--c", type=str, default="./corpus",
                        help="Corpus directory")
    parser.add_argument("--grips", "--g", type=int, default=None,
                        help="Grips per item")
    parser.add_argument("--seed", type=int, default=0,
                        help="Random seed")
    parser.add_argument("--config", type=str, default=None,
                        help="YAML config file")
    return parser.parse_args(argv)


@dataclass
class RandomGrip:
    """一次随机抓取的结果"""
    iteration: int
    candidate: GripCandidate
    seed: int
    sensor_id: int
    sequence: TactileSequence
    detected: bool

    @property
    def valid_contact(self) -> bool:
        return bool(self.sequence.valid_contact and self.detected)


def random_grips(world: ClothWorld, item, grips: int, seed: int
                 ) -> Tuple[DepthImage, Optional[WorldHeightMap], List[RandomGrip]]:
    """
    对一件衣物做若干次随机抓取

    衣物只铺放一次；候选点按随机顺序轮流使用，每次抓取换一块凝胶（编号 = 次数 mod 5）。

    :return: ``(深度图, 估计的高度图, 抓取结果)``，没有候选点时抓取结果为空
    """
    settings = world.settings
    hm, depth = world.scene(item, seed, relay=False)
    estimated, candidates = candidate_pool(depth, world.camera, settings, seed)
    results = []
    for k in range(grips if candidates else 0):
        cand = candidates[k % len(candidates)]
        grip_seed = int(np.random.default_rng([seed, k]).integers(2 ** 31))
        sensor_id = k % settings.grip.n_sensors
        seq = world.grip(item, hm, cand, grip_seed, sensor_id=sensor_id)
        detected = detect_contact(seq, settings.tactile, settings.bank.contact_threshold)
        results.append(RandomGrip(k, cand, grip_seed, sensor_id, seq, bool(detected)))
    return depth, estimated, results


def collect_item(world: ClothWorld, corpus: Corpus, item, grips: int, seed: int, bank: FilterBank) -> list:
    """
    对一件衣物做若干次随机抓取并写入语料库

    :return: 本件衣物的 GripRecord 列表
    :rtype: list
    """
    settings = world.settings
    depth, estimated, results = random_grips(world, item, grips, seed)
    corpus.write_scene(item.item_id, depth.stored_values())
    if not results:
        logger.warning("Item '%s' has no grip candidates, skipping", item.item_id)
        return []

    crop_mpp = settings.grip.crop_side / settings.grip.crop_px
    records = []
    for grip in results:
        k, seq = grip.iteration, grip.sequence
        corpus.write_sequence(seq, k)
        crop = crop_grip_window(estimated, grip.candidate.position, settings.grip.crop_side, settings.grip.crop_px)
        corpus.write_crop(item.item_id, k, crop, crop_mpp)
        features = sequence_features(seq, bank, settings.tactile.n_frames, settings.tactile.frame_step)
        corpus.write_features(item.item_id, k, features, bank.config.digest())

        records.append(GripRecord(
            item_id=item.item_id,
            iteration=k,
            seed=grip.seed,
            sensor_id=grip.sensor_id,
            candidate=grip.candidate.to_dict(),
            misalign_deg=float(seq.misalign_deg),
            n_frames=len(seq),
            sim_valid=bool(seq.valid_contact),
            detected_contact=grip.detected,
            valid_contact=grip.valid_contact,
        ))
    return records


def main(argv=None):
    args = parse_args(argv)
    setup_logging()
    settings = load_settings(args.config).override(corpus__grips_per_item=args.grips)
    corpus = Corpus(args.corpus)
    items = corpus.load_items()
    world = ClothWorld(settings)
    bank = FilterBank(BankConfig.from_settings(settings.bank)).eval()
    grips = settings.corpus.grips_per_item

    print("Start collecting...")
    print(f"Items: {len(items)} | Grips per item: {grips} | Bank: {bank.config.digest().hex()}")
    print("=" * 50)

    records = []
    for index, item in enumerate(tqdm(sorted(items, key=lambda i: i.item_id), desc="Collecting")):
        item_seed = int(np.random.default_rng([args.seed, index]).integers(2 ** 31))
        records.extend(collect_item(world, corpus, item, grips, item_seed, bank))
    corpus.save_records(records)

    valid = sum(r.valid_contact for r in records)
    rate = valid / len(records) if records else 0.0
    print(f"Records: {len(records)} | Valid contact: {valid} ({rate:.3f})")

    split = build_split(items, settings.corpus.test_ratio, args.seed, settings.corpus.split_name,
                        settings.corpus.iteration_ratio, records)
    corpus.save_split(split)
    settings.dump(os.path.join(args.corpus, 'config.yaml'))
    print(f"Split '{split.name}': {len(split.test_items)} test items, {len(split.pool_items)} pool items, "
          f"{len(split.train_iterations)} train / {len(split.val_iterations)} val iterations")
    print("=" * 50)
    print("Collection finished!")
    return 0


if __name__ == "__main__":
    main()
