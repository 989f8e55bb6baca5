import numpy as np
import pandas as pd
import pytest

from cli import EXIT_ERROR, EXIT_IO, EXIT_OK, EXIT_USAGE, run
from config.settings import Settings
from config.taxonomy import CHANCE, REPORT_ORDER
from eval import EVAL_COLUMNS, balanced_accuracy_sample, property_table
from network.explorer import ExplorePolicy, evaluate_policy
from report import merge_results, summary_table

from tests.test_explorer import OraclePerception, StubWorld, line_plan


@pytest.fixture
def small_config(tmp_path, small_settings):
    settings = small_settings.override(
        corpus__items=10, corpus__grips_per_item=8,
        train__epochs=3, train__augment=True, grip_train__epochs=3,
        model__hidden=16, explore__grips_per_item=1,
    )
    path = str(tmp_path / 'small.yaml')
    settings.dump(path)
    return path


def test_usage_exit_codes(capsys):
    assert run([]) == EXIT_USAGE
    assert run(['--help']) == EXIT_OK
    assert run(['bogus']) == EXIT_USAGE
    assert 'unknown subcommand' in capsys.readouterr().err
    assert run(['train', '--bogus']) == EXIT_USAGE


def test_missing_corpus_is_an_io_error(tmp_path):
    missing = str(tmp_path / 'missing')
    assert run(['eval', '--corpus', missing]) == EXIT_IO
    assert run(['report', '--corpus', missing]) == EXIT_IO


def test_gen_is_reproducible(tmp_path):
    a, b = tmp_path / 'a', tmp_path / 'b'
    assert run(['gen', '--corpus', str(a), '--items', '12', '--seed', '4']) == EXIT_OK
    assert run(['gen', '--corpus', str(b), '--items', '12', '--seed', '4']) == EXIT_OK
    assert (a / 'items.jsonl').read_bytes() == (b / 'items.jsonl').read_bytes()
    assert len((a / 'items.jsonl').read_text().splitlines()) == 12


def test_property_table_layout():
    table = property_table({'image_seen': {'wash_method': 0.5}})
    assert list(table.index) == list(REPORT_ORDER)
    assert tuple(table.columns) == EVAL_COLUMNS
    assert table.loc['textile_type', 'chance'] == CHANCE['textile_type']
    assert table.loc['wash_method', 'image_seen'] == 0.5
    assert np.isnan(table.loc['wash_method', 'video_unseen'])


def test_balanced_accuracy_sample():
    labels = np.array([True] * 3 + [False] * 10)
    scores = np.where(labels, 0.9, 0.1)
    assert balanced_accuracy_sample(scores, labels, 0) == (1.0, 3)
    accuracy, n = balanced_accuracy_sample(scores, np.zeros(13, dtype=bool), 0)
    assert np.isnan(accuracy) and n == 0


def test_merge_results(tmp_path, items):
    results = tmp_path / 'results'
    results.mkdir()
    property_table({'video_unseen': {name: 0.4 for name in REPORT_ORDER}}).to_csv(results / 'eval.csv')
    report = evaluate_policy(items[:2], StubWorld(line_plan(3)), None, OraclePerception(items), ExplorePolicy(),
                             grips_per_item=1)
    report.to_frame().to_csv(results / 'explore.csv')
    pd.DataFrame([report.summary()]).to_csv(results / 'explore_summary.csv', index=False)

    merged = merge_results(str(results))
    assert list(merged.index) == list(REPORT_ORDER)
    assert merged.loc['season', 'video_unseen'] == pytest.approx(0.4)
    assert merged.loc['season', 'with_retrial'] == pytest.approx(1.0)
    assert 'ref_with_retrial' in merged.columns
    assert list(merged.columns).count('chance') == 1

    summary = summary_table(str(results))
    assert summary.set_index('metric').loc['mean_trials', 'measured'] == pytest.approx(1.0)


def run_pipeline(corpus, config):
    for stage in ('gen', 'collect', 'train', 'eval', 'explore'):
        assert run([stage, '--corpus', corpus, '--config', config]) == EXIT_OK
    assert run(['report', '--corpus', corpus]) == EXIT_OK


def test_small_pipeline(tmp_path, small_config):
    run_pipeline(str(tmp_path / 'corpus'), small_config)

    results = tmp_path / 'corpus' / 'results'
    summary = pd.read_csv(results / 'explore_summary.csv').iloc[0]
    max_retries = Settings().explore.max_retries
    if summary['episodes'] > 0:
        assert 1.0 <= summary['mean_trials'] <= max_retries
    report = pd.read_csv(results / 'report.csv', index_col='property')
    assert list(report.index) == list(REPORT_ORDER)

    # 同样的种子再跑一遍，产物逐字节相同
    run_pipeline(str(tmp_path / 'again'), small_config)
    for name in ('records.jsonl', 'models/property_image.tmdl', 'models/property_video.tmdl', 'models/grip.tmdl',
                 'results/explore.csv', 'results/explore_episodes.jsonl'):
        assert (tmp_path / 'corpus' / name).read_bytes() == (tmp_path / 'again' / name).read_bytes(), name


def test_malformed_items_exit_with_a_diagnostic(tmp_path, capsys):
    corpus = tmp_path / 'corpus'
    corpus.mkdir()
    (corpus / 'items.jsonl').write_text('{"item_id": "item000"}\n')
    assert run(['collect', '--corpus', str(corpus)]) == EXIT_ERROR
    (corpus / 'items.jsonl').write_text('not json\n')
    assert run(['collect', '--corpus', str(corpus)]) == EXIT_ERROR
    diagnostics = [line for line in capsys.readouterr().err.splitlines() if line.startswith('collect: ')]
    assert len(diagnostics) == 2
    assert 'Traceback' not in ''.join(diagnostics)
