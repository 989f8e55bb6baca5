"""
汇总评估结果

把离线评估（eval.csv）和在线探索（explore.csv / explore_summary.csv）的结果与
实体机器人实验的参考准确率放在同一张表中。
"""
import argparse
import os
import logging
import pandas as pd # type: ignore

from config.settings import setup_logging
from config.taxonomy import (REFERENCE_EASY_FRACTION, REFERENCE_MEAN_TRIALS, REFERENCE_OFFLINE,
                             REFERENCE_ONLINE, REPORT_ORDER)
from config.data_loader import Corpus

logger = logging.getLogger(__name__)

OFFLINE_COLUMNS = ('image_seen', 'video_seen', 'image_unseen', 'video_unseen')
ONLINE_COLUMNS = ('without_retrial', 'with_retrial', 'easy')


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description="Merge evaluation tables with reference accuracies")
    parser.add_argument("--corpus", "--c", type=str, default="./corpus",
                        help="Corpus directory")
    return parser.parse_args(argv)


def reference_table() -> pd.DataFrame:
    rows = []
    for name in REPORT_ORDER:
        row = {'property': name}
        row.update({f'ref_{c}': v for c, v in zip(OFFLINE_COLUMNS, REFERENCE_OFFLINE[name])})
        row.update({f'ref_{c}': v for c, v in zip(ONLINE_COLUMNS, REFERENCE_ONLINE[name])})
        rows.append(row)
    return pd.DataFrame(rows).set_index('property')


def merge_results(results_dir: str) -> pd.DataFrame:
    """
    合并结果表

    :param results_dir: 结果目录
    :type results_dir: str
    :return: 每行一个属性，测得值与参考值并列
    :rtype: pd.DataFrame
    """
    tables = []
    for filename in ('eval.csv', 'explore.csv'):
        path = os.path.join(results_dir, filename)
        if os.path.exists(path):
            tables.append(pd.read_csv(path, index_col='property'))
        else:
            logger.warning("Result file '%s' not found, leaving its columns out", path)
    if not tables:
        raise FileNotFoundError(f"No eval.csv or explore.csv in '{results_dir}'")

    merged = tables[0]
    for table in tables[1:]:
        merged = merged.join(table.drop(columns=['chance'], errors='ignore'), how='outer')
    merged = merged.join(reference_table(), how='left').reindex(list(REPORT_ORDER))
    merged.index.name = 'property'

    ordered = [c for c in ('chance',) + OFFLINE_COLUMNS + ONLINE_COLUMNS if c in merged.columns]
    for column in OFFLINE_COLUMNS + ONLINE_COLUMNS:
        if column in merged.columns:
            ordered.append(f'ref_{column}')
    return merged[ordered]


def summary_table(results_dir: str) -> pd.DataFrame:
    path = os.path.join(results_dir, 'explore_summary.csv')
    rows = []
    if os.path.exists(path):
        measured = pd.read_csv(path).iloc[0]
        rows.append({'metric': 'mean_trials', 'measured': measured['mean_trials'],
                     'reference': REFERENCE_MEAN_TRIALS})
        rows.append({'metric': 'easy_fraction', 'measured': measured['easy_fraction'],
                     'reference': REFERENCE_EASY_FRACTION})
        rows.append({'metric': 'unexplorable', 'measured': measured['unexplorable'], 'reference': 0})
    return pd.DataFrame(rows, columns=['metric', 'measured', 'reference'])


def main(argv=None):
    args = parse_args(argv)
    setup_logging()
    corpus = Corpus(args.corpus)

    print("Merging results...")
    merged = merge_results(corpus.results_dir)
    merged.to_csv(corpus.result_path('report.csv'), float_format='%.4f')
    summary = summary_table(corpus.results_dir)
    summary.to_csv(corpus.result_path('report_summary.csv'), index=False, float_format='%.4f')

    print(merged.to_string(float_format=lambda v: f"{v:.2f}"))
    if len(summary):
        print("=" * 50)
        print(summary.to_string(index=False))
    print("=" * 50)
    print(f"Report written to {corpus.result_path('report.csv')}")
    return 0


if __name__ == "__main__":
    main()
