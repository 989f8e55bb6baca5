"""
生成合成衣物语料

每件衣物的面料类型按序号轮换，物理属性、季节和洗涤方式按面料分布采样；
结果写入 ``<corpus>/items.jsonl``。
"""
import os
import argparse

from tqdm import tqdm

from config.settings import load_settings, setup_logging
from config.data_loader import Corpus
from network.clothsim import make_item


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description="Generate a synthetic clothing corpus")
    parser.add_argument("--corpus", "--c", type=str, default="./corpus",
                        help="Corpus directory")
    parser.add_argument("--items", "--n", type=int, default=None,
                        help="Number of clothing items")
    parser.add_argument("--seed", type=int, default=0,
                        help="Random seed")
    parser.add_argument("--config", type=str, default=None,
                        help="YAML config file")
    return parser.parse_args(argv)


def generate_items(n_items: int, seed: int) -> list:
    """
    生成衣物清单

    :param n_items: 衣物数量
    :type n_items: int
    :param seed: 随机种子
    :type seed: int
    :rtype: list
    """
    return [make_item(i, seed) for i in tqdm(range(n_items), desc="Generating items", leave=False)]


def main(argv=None):
    args = parse_args(argv)
    setup_logging()
    settings = load_settings(args.config).override(corpus__items=args.items)
    n_items = settings.corpus.items

    print(f"Generating {n_items} items with seed {args.seed}...")
    corpus = Corpus(args.corpus)
    items = generate_items(n_items, args.seed)
    corpus.save_items(items)
    settings.dump(os.path.join(args.corpus, 'config.yaml'))

    textiles = len({item.labels.textile_type for item in items})
    print(f"Wrote {corpus.items_path} ({n_items} items, {textiles} textile types)")
    return 0


if __name__ == "__main__":
    main()
