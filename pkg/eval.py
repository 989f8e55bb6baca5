import argparse
import os
import logging
import numpy as np
import pandas as pd # type: ignore
from sklearn.metrics import accuracy_score, confusion_matrix  # type: ignore
from typing import Dict, Tuple

from config.settings import load_settings, setup_logging
from config.taxonomy import CHANCE, HEAD_DIMS, HEAD_NAMES, REPORT_ORDER
from config.data_loader import Corpus, filter_valid
from network.model import load_model, predict_proba
from network.tactile import BankConfig, FilterBank
from train import grip_dataset, label_matrix, split_records, stored_features
from utils.visualization import EvalVisualization

logger = logging.getLogger(__name__)

EVAL_COLUMNS = ('chance', 'image_seen', 'video_seen', 'image_unseen', 'video_unseen')


# 参数解析器
def parse_args(argv=None):
    parser = argparse.ArgumentParser(description="Evaluate property and grip quality models")
    parser.add_argument("--corpus", "--c", type=str, default="./corpus",
                        help="Corpus directory")
    parser.add_argument("--config", type=str, default=None,
                        help="YAML config file")
    parser.add_argument("--split", type=str, default=None,
                        help="Split name")
    parser.add_argument("--seed", type=int, default=0,
                        help="Random seed for the balanced grip subsample")
    parser.add_argument("--visualize", "--v", action="store_true",
                        help="Plot per-head confusion matrices and the accuracy table")
    return parser.parse_args(argv)


def evaluate_property(model, features: np.ndarray, labels: np.ndarray) -> Tuple[Dict[str, float], Dict[str, np.ndarray]]:
    """
    每个属性头的准确率和混淆矩阵

    :param model: MultiHeadModel
    :param features: (N, D) 或 (N, T, D)
    :param labels: (N, 11)
    :return: ``(accuracy, confusion)``，样本为空时准确率为 NaN
    :rtype: tuple
    """
    if len(labels) == 0:
        return {name: float('nan') for name in HEAD_NAMES}, {}
    probs = predict_proba(model, features)
    accuracy, matrices = {}, {}
    for h, (name, dim) in enumerate(zip(HEAD_NAMES, HEAD_DIMS)):
        predicted = probs[h].argmax(axis=1)
        accuracy[name] = float(accuracy_score(labels[:, h], predicted))
        matrices[name] = confusion_matrix(labels[:, h], predicted, labels=list(range(dim)))
    return accuracy, matrices


def property_table(columns: Dict[str, Dict[str, float]]) -> pd.DataFrame:
    """11 行属性 × (chance, image_seen, video_seen, image_unseen, video_unseen)"""
    rows = []
    for name in REPORT_ORDER:
        row = {'property': name, 'chance': CHANCE[name]}
        for column in EVAL_COLUMNS[1:]:
            row[column] = columns.get(column, {}).get(name, float('nan'))
        rows.append(row)
    return pd.DataFrame(rows, columns=('property',) + EVAL_COLUMNS).set_index('property')


def balanced_accuracy_sample(scores: np.ndarray, labels: np.ndarray, seed: int) -> Tuple[float, int]:
    """
    类别均衡子样本上的准确率（阈值 0.5）

    :return: ``(accuracy, 每类样本数)``，某一类为空时为 ``(nan, 0)``
    """
    labels = np.asarray(labels, dtype=bool)
    pos, neg = np.flatnonzero(labels), np.flatnonzero(~labels)
    n = min(len(pos), len(neg))
    if n == 0:
        return float('nan'), 0
    rng = np.random.default_rng(seed)
    chosen = np.concatenate([rng.choice(pos, n, replace=False), rng.choice(neg, n, replace=False)])
    return float(accuracy_score(labels[chosen], scores[chosen] >= 0.5)), n


def main(argv=None):
    args = parse_args(argv)
    setup_logging()
    settings = load_settings(args.config)
    corpus = Corpus(args.corpus)
    bank = FilterBank(BankConfig.from_settings(settings.bank)).eval()
    digest = bank.config.digest()

    print("Loading corpus...")
    items = {item.item_id: item for item in corpus.load_items()}
    records = corpus.load_records()
    split = corpus.load_split(args.split or settings.corpus.split_name)
    test_keys = [r.key for r in records if r.item_id in set(split.test_items)]
    seen = filter_valid(split_records(records, split.val_iterations))
    unseen = filter_valid(split_records(records, test_keys))
    print(f"Seen (val) samples: {len(seen)} | Unseen (test) samples: {len(unseen)}")
    print("=" * 50)

    columns: Dict[str, Dict[str, float]] = {}
    viz = EvalVisualization(os.path.join(corpus.results_dir, 'eval_visualizations')) if args.visualize else None
    for name, frames in (('image', 1), ('video', settings.tactile.n_frames)):
        path = corpus.model_path(f'property_{name}')
        print(f"Loading model from {path}...")
        model = load_model(path, digest)
        for part, subset in (('seen', seen), ('unseen', unseen)):
            features = stored_features(corpus, subset, bank, frames)
            accuracy, matrices = evaluate_property(model, features, label_matrix(subset, items))
            columns[f'{name}_{part}'] = accuracy
            if viz is not None and matrices:
                viz.plot_confusion_matrices(matrices, f'{name}_{part}')

    table = property_table(columns)
    table.to_csv(corpus.result_path('eval.csv'), float_format='%.4f')
    print("Property accuracy:")
    print(table.to_string(float_format=lambda v: f"{v:.2f}"))
    if viz is not None:
        viz.plot_accuracy_table(table.drop(columns='chance'), 'eval_accuracy.png')

    print("=" * 50)
    print("Evaluating grip quality model...")
    grip_model = load_model(corpus.model_path('grip'), digest)
    x_test, y_test = grip_dataset(corpus, split_records(records, test_keys), bank)
    scores = grip_model.score_features(x_test)
    accuracy, per_class = balanced_accuracy_sample(scores, y_test, args.seed)
    valid_rate = float(np.mean([r.valid_contact for r in records])) if records else float('nan')
    grip_table = pd.DataFrame([
        {'metric': 'balanced_test_accuracy', 'value': accuracy},
        {'metric': 'balanced_samples_per_class', 'value': per_class},
        {'metric': 'random_collection_valid_rate', 'value': valid_rate},
    ]).set_index('metric')
    grip_table.to_csv(corpus.result_path('eval_grip.csv'), float_format='%.4f')
    print(f"Grip ACC (balanced, {per_class} per class): {accuracy:.4f} | "
          f"Valid contact rate of random collection: {valid_rate:.4f}")
    print("=" * 50)
    print("Evaluation finished!")
    return 0


if __name__ == "__main__":
    main()
