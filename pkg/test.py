import argparse
import time
import traceback

import numpy as np
import torch

from config.settings import load_settings, setup_logging
from network.clothsim import make_item
from network.explorer import ClothWorld, ExplorePolicy, TactilePerception, explore_item
from network.model import GripQualityModel, MultiHeadModel, confidence, grip_features
from network.tactile import BankConfig, FilterBank, detect_contact, max_contact_frame, sequence_features

seed = 42
np.random.seed(seed)
torch.manual_seed(seed)


def parse_args():
    parser = argparse.ArgumentParser(description="Smoke test of the tactile exploration pipeline")
    parser.add_argument("--config", type=str, default=None,
                        help="YAML config file")
    parser.add_argument("--item", "--i", type=int, default=0,
                        help="Item index to synthesize")
    parser.add_argument("--table-extent", "--te", type=float, default=0.3,
                        help="Table side length in meters (smaller is faster)")
    return parser.parse_args()


def test_pipeline(args):
    """
    对一件衣物跑通整个流水线：场景 -> 候选点 -> 抓取 -> 特征 -> 预测 -> 探索
    """
    settings = load_settings(args.config).override(scene__table_extent=args.table_extent)
    print(f"Table extent: {settings.scene.table_extent} m | Camera: {settings.camera.width}x{settings.camera.height}")
    print("=" * 50)

    try:
        print("1. Synthesizing item and scene...")
        item = make_item(args.item, seed)
        world = ClothWorld(settings)
        hm, depth = world.scene(item, seed)
        print(f"Item: {item.item_id} | Labels: {item.labels.as_tuple()}")
        print(f"Height map: {hm.z.shape}, max {hm.z.max() * 1000:.1f} mm | Valid depth pixels: "
              f"{int(depth.valid.sum())}")
        print("=" * 50)

        print("2. Planning grip candidates...")
        bank = FilterBank(BankConfig.from_settings(settings.bank)).eval()
        grip_model = GripQualityModel(grip_features(np.zeros((0, 64, 64)), bank).shape[1])
        plan = world.plan(depth, grip_model, seed, bank=bank)
        print(f"Candidates: {len(plan)}")
        if not plan:
            print("No candidates found, nothing to grip")
            return False
        top = plan[0]
        print(f"Top candidate: x={top.x:.3f} y={top.y:.3f} level={top.level} score={top.score:.3f}")
        print("=" * 50)

        print("3. Simulating grip...")
        start_time = time.time()
        seq = world.grip(item, hm, top, seed)
        peak = max_contact_frame(seq)
        print(f"Frames: {len(seq)} | Peak frame: {peak} | Valid contact: {seq.valid_contact} | "
              f"Detected: {detect_contact(seq, settings.tactile)}")
        print("=" * 50)

        print("4. Extracting features...")
        features = sequence_features(seq, bank, settings.tactile.n_frames, settings.tactile.frame_step)
        print(f"Feature shape: {features.shape} | Bank: {bank.config.digest().hex()}")
        print("=" * 50)

        print("5. Predicting properties...")
        model = MultiHeadModel(features.shape[1], settings.model.hidden, frames=settings.tactile.n_frames)
        perception = TactilePerception(model, bank, settings.tactile)
        prediction = perception.perceive(seq)
        print(f"Classes: {prediction.classes}")
        print(f"Wash method confidence: {confidence(prediction, 'wash_method'):.4f}")
        print("=" * 50)

        print("6. Exploring...")
        record = explore_item(item, ExplorePolicy.from_settings(settings.explore), world, grip_model, perception,
                              seed, settings.tactile)
        print(f"Trials: {record.trial_count} | Confident: {record.confident} | Easy: {record.easy_flag}")
        print("=" * 50)

        print(f"Time elapsed: {time.time() - start_time:.2f} seconds")
        return True

    except Exception as e:
        print(f"Error occurred: {str(e)}")
        traceback.print_exc()
        return False


if __name__ == "__main__":
    setup_logging()
    args = parse_args()
    success = test_pipeline(args)
    if success:
        print("=" * 50)
        print("Test passed successfully!")
    else:
        print("=" * 50)
        print("Test failed!")
