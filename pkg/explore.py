import argparse
import logging
import pandas as pd # type: ignore

from config.settings import load_settings, setup_logging
from config.data_loader import Corpus
from network.explorer import ClothWorld, ExplorePolicy, TactilePerception, evaluate_policy, write_episodes
from network.model import load_model
from network.tactile import BankConfig, FilterBank

logger = logging.getLogger(__name__)


# 参数解析器
def parse_args(argv=None):
    parser = argparse.ArgumentParser(description="Run the active exploration loop on the unseen test items")
    parser.add_argument("--corpus", "--c", type=str, default="./corpus",
                        help="Corpus directory")
    parser.add_argument("--config", type=str, default=None,
                        help="YAML config file")
    parser.add_argument("--split", type=str, default=None,
                        help="Split name")
    parser.add_argument("--seed", type=int, default=0,
                        help="Random seed")
    parser.add_argument("--grips", "--g", type=int, default=None,
                        help="Explorations per item")
    parser.add_argument("--threshold", "--t", type=float, default=None,
                        help="Confidence threshold of the gating head")
    parser.add_argument("--max-retries", "--mr", type=int, default=None,
                        help="Maximum grips per exploration")
    parser.add_argument("--frames", type=int, choices=[1, 9], default=9,
                        help="Use the single-frame (1) or the 9-frame (9) property model")
    parser.add_argument("--ranking", type=str, choices=["grip_model", "random"], default=None,
                        help="Candidate ranking")
    return parser.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    setup_logging()
    settings = load_settings(args.config).override(
        explore__grips_per_item=args.grips, explore__threshold=args.threshold,
        explore__max_retries=args.max_retries, explore__ranking=args.ranking,
    )
    policy = ExplorePolicy.from_settings(settings.explore)
    corpus = Corpus(args.corpus)
    bank = FilterBank(BankConfig.from_settings(settings.bank)).eval()
    digest = bank.config.digest()

    print("Start setting...")
    split = corpus.load_split(args.split or settings.corpus.split_name)
    test_items = [item for item in corpus.load_items() if item.item_id in set(split.test_items)]
    model_name = 'property_image' if args.frames == 1 else 'property_video'
    property_model = load_model(corpus.model_path(model_name), digest)
    grip_model = load_model(corpus.model_path('grip'), digest) if policy.ranking == 'grip_model' else None
    perception = TactilePerception(property_model, bank, settings.tactile)
    world = ClothWorld(settings)

    print(f"Test items: {len(test_items)} | Explorations per item: {settings.explore.grips_per_item}")
    print(f"Policy: head={policy.confidence_head} threshold={policy.threshold} "
          f"max_retries={policy.max_retries} ranking={policy.ranking} model={model_name}")
    print("=" * 50)

    report = evaluate_policy(test_items, world, grip_model, perception, policy,
                             settings.explore.grips_per_item, args.seed, settings.tactile, progress=True)

    table = report.to_frame()
    table.to_csv(corpus.result_path('explore.csv'), float_format='%.4f')
    summary = pd.DataFrame([report.summary()])
    summary.to_csv(corpus.result_path('explore_summary.csv'), index=False, float_format='%.4f')
    write_episodes(corpus.result_path('explore_episodes.jsonl'), report.episodes)

    print("Online accuracy:")
    print(table.to_string(float_format=lambda v: f"{v:.2f}"))
    print(f"Mean trials: {report.mean_trials:.2f} | Easy fraction: {report.easy_fraction:.4f} | "
          f"Unexplorable: {report.unexplorable}")
    print("=" * 50)
    print("Exploration finished!")
    return 0


if __name__ == "__main__":
    main()
