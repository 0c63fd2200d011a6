import os
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from clubforest.clubdrf import club_drf
from clubforest.errors import ConfigurationError, InputError
from clubforest.experiment import (CLUB_DRF, RF, RF_SAME_SIZE,
                                   ExperimentConfig, ForestLearner,
                                   benchmark, data_for_forest, derive_seed,
                                   diversity_table, load_config,
                                   parse_k_list, prepare_data,
                                   run_experiment, training_provenance,
                                   write_report)
from clubforest.forest import RandomForest, train_forest

from conftest import leaf_tree, make_synthetic


def small_config(datasets, out, **kwargs) -> ExperimentConfig:
    return ExperimentConfig(datasets=list(datasets), n_trees=10, k_list=(2, 5), runs=1, seed=7,
                            diversity_draws=3, bias_variance_reps=0, out=str(out)).updated(**kwargs)


def test_config_defaults():
    config = ExperimentConfig()
    assert config.n_trees == 500
    assert config.k_list == (5, 10, 15, 20, 25, 30, 35, 40)
    assert config.runs == 10
    assert config.train_fraction == 0.66
    assert config.policy == 'oob_best'
    assert config.bias_variance_reps == 10
    assert config.validate() is config
    assert replace(config, bias_variance_reps=0).validate().bias_variance_reps == 0


@pytest.mark.parametrize('overrides', [
    {'runs': 0},
    {'n_trees': 0},
    {'k_list': ()},
    {'k_list': (5, 600)},
    {'train_fraction': 1.0},
    {'policy': 'worst'},
    {'cluster_fraction': 0.0},
    {'bias_variance_reps': 1},
    {'diversity_draws': 0},
    {'seed': -1},
    {'subset_size': 0},
])
def test_config_validation(overrides):
    with pytest.raises(ConfigurationError):
        replace(ExperimentConfig(), **overrides).validate()


def test_config_from_dict():
    config = ExperimentConfig.from_dict({'datasets': 'a.csv', 'k_list': '2, 4', 'runs': 3})
    assert config.datasets == ['a.csv']
    assert config.k_list == (2, 4)
    assert config.runs == 3
    assert ExperimentConfig.from_dict(config.to_dict()) == config
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({'trees': 5})


def test_load_config(tmp_path):
    path = tmp_path / 'config.yaml'
    path.write_text('datasets:\n  - one.csv\n  - two.arff\nn_trees: 20\nk_list: [2, 3]\n', encoding='utf-8')
    config = load_config(str(path))
    assert config.datasets == ['one.csv', 'two.arff']
    assert config.n_trees == 20
    assert config.k_list == (2, 3)


def test_updated_skips_none():
    config = ExperimentConfig(runs=4).updated(runs=None, seed=9)
    assert (config.runs, config.seed) == (4, 9)


@pytest.mark.parametrize('value,expected', [('5,10', (5, 10)), (7, (7,)), ([1, 2], (1, 2)), ('3', (3,))])
def test_parse_k_list(value, expected):
    assert parse_k_list(value) == expected


def test_parse_k_list_rejects_garbage():
    with pytest.raises(ConfigurationError):
        parse_k_list('5,x')


def test_derive_seed():
    seed = derive_seed(0, 'diabetes', 0, 1)
    assert seed == derive_seed(0, 'diabetes', 0, 1)
    assert 0 <= seed < 2 ** 32
    others = {derive_seed(0, 'diabetes', 0, 2), derive_seed(0, 'glass', 0, 1),
              derive_seed(0, 'diabetes', 1, 1), derive_seed(1, 'diabetes', 0, 1), derive_seed(0, 'diabetes', 0, 2, 5)}
    assert seed not in others
    assert len(others) == 5


def test_experiment_smoke(tmp_path, synthetic_csv):
    report = run_experiment(small_config([synthetic_csv], tmp_path / 'out'), progress=False)
    assert report.failures == []

    runs = report.runs
    assert len(runs) == 5
    assert runs['model'].tolist() == [RF, CLUB_DRF, RF_SAME_SIZE, CLUB_DRF, RF_SAME_SIZE]
    rf = runs[runs['model'] == RF].iloc[0]
    assert rf['size'] == 10 and rf['pruning_level'] == 0
    for _, row in runs[runs['model'] == CLUB_DRF].iterrows():
        assert 1 <= row['size'] <= row['k']
        assert row['empty_clusters'] >= 0
    same = runs[runs['model'] == RF_SAME_SIZE]
    assert same['size'].tolist() == [2, 5]
    assert same['pruning_level'].tolist() == [80, 50]
    assert runs['accuracy'].between(0.0, 1.0).all()
    assert runs['auc'].between(0.0, 1.0).all()

    assert len(report.summary) == 4
    assert report.wins['k'].tolist() == [2, 5]
    assert (report.wins[['club_wins', 'ties', 'rf_wins']].sum(axis=1) == 1).all()
    assert report.speedup['estimated_speedup'].tolist() == [5.0, 2.0]
    assert report.speedup['pruning_level_exact'].tolist() == ['80/1', '50/1']

    diversity = report.diversity
    assert len(diversity) == 2
    assert diversity['club_at_least_random'].between(0, 3).all()
    assert report.bias_variance.empty

    written = write_report(report)
    names = sorted(os.path.basename(p) for p in written)
    assert names == ['diversity.csv', 'pruning.csv', 'report.yaml', 'rf_summary.csv', 'runs.csv',
                     'speedup.csv', 'summary.csv', 'wins.csv']
    loaded = pd.read_csv(tmp_path / 'out' / 'runs.csv')
    assert loaded.columns.tolist() == report.runs.columns.tolist()


def test_report_rounds_pruning_levels_like_prune(tmp_path, synthetic_csv):
    report = run_experiment(small_config([synthetic_csv], tmp_path / 'out', n_trees=8, k_list=(3,)), progress=False)
    # 100 * (1 - 3/8) = 62.5
    same = report.runs[report.runs['model'] == RF_SAME_SIZE]
    assert same['pruning_level'].tolist() == [63]
    assert report.speedup['pruning_level'].tolist() == [63]
    assert report.wins['pruning_level'].tolist() == [63]


def read_tree(root):
    return {name: (root / name).read_bytes() for name in sorted(os.listdir(root))}


def test_reports_are_reproducible(tmp_path, synthetic_csv):
    config = small_config([synthetic_csv], tmp_path / 'out', bias_variance_reps=2)
    write_report(run_experiment(config, progress=False), str(tmp_path / 'first'))
    write_report(run_experiment(config, progress=False), str(tmp_path / 'second'))
    assert read_tree(tmp_path / 'first') == read_tree(tmp_path / 'second')

    parallel = config.updated(jobs=2, out=str(tmp_path / 'elsewhere'))
    write_report(run_experiment(parallel, progress=False), str(tmp_path / 'parallel'))
    first, other = read_tree(tmp_path / 'first'), read_tree(tmp_path / 'parallel')
    assert 'report.yaml' in first
    assert first == other


def test_report_header_leaves_out_runtime_settings(tmp_path, synthetic_csv):
    report = run_experiment(small_config([synthetic_csv], tmp_path / 'out', jobs=2), progress=False)
    config = report.header()['config']
    assert 'jobs' not in config and 'out' not in config
    assert config['n_trees'] == 10
    assert config['k_list'] == [2, 5]


def test_failed_dataset_is_recorded(tmp_path, synthetic_csv):
    missing = str(tmp_path / 'absent.csv')
    report = run_experiment(small_config([missing, synthetic_csv], tmp_path / 'out'), progress=False)
    assert len(report.failures) == 1
    failure = report.failures[0]
    assert failure['dataset'] == 'absent'
    assert failure['stage'] == 'load'
    assert failure['error_type'] == 'InputError'
    assert failure['exit_code'] == 2
    assert set(report.runs['dataset']) == {'synthetic'}
    assert report.header()['failures'] == report.failures


def test_all_datasets_failing_gives_empty_tables(tmp_path):
    report = run_experiment(small_config([str(tmp_path / 'absent.csv')], tmp_path / 'out'), progress=False)
    assert report.runs.empty
    assert len(report.failures) == 1
    assert len(write_report(report)) == 8


def test_bias_variance_tables(tmp_path, synthetic_csv):
    config = small_config([synthetic_csv], tmp_path / 'out', bias_variance_reps=2)
    report = run_experiment(config, progress=False)
    bv = report.bias_variance
    assert len(bv) == 5
    assert sorted(bv['model'].unique()) == [CLUB_DRF, RF, RF_SAME_SIZE]
    assert (bv['repetitions'] == 2).all()
    assert bv['bias'].between(0.0, 1.0).all() and bv['variance'].between(0.0, 1.0).all()
    assert bv.loc[bv['model'] == RF, 'size'].tolist() == [10]
    assert report.bias_variance_pruning['measure'].tolist() == ['bias', 'variance']
    names = {os.path.basename(p) for p in write_report(report)}
    assert {'bias_variance.csv', 'bias_variance_pruning.csv'} <= names


def test_bias_variance_runs_by_default(tmp_path, synthetic_csv):
    config = ExperimentConfig(datasets=[synthetic_csv], n_trees=6, k_list=(2,), runs=1, diversity_draws=1,
                              out=str(tmp_path / 'out'))
    bv = run_experiment(config, progress=False).bias_variance
    assert bv['model'].tolist() == [RF, CLUB_DRF, RF_SAME_SIZE]
    assert (bv['repetitions'] == 10).all()


def test_forest_learner():
    d = make_synthetic(40, seed=4)
    train, test = d.subset(range(30)), d.subset(range(30, 40))
    full = ForestLearner(n_trees=6)(train, test, 3)
    assert set(full) == {RF}
    learner = ForestLearner(n_trees=6, k_list=(2, 3))
    predicted = learner(train, test, 3)
    assert set(predicted) == {RF, f'{CLUB_DRF}:2', f'{RF_SAME_SIZE}:2', f'{CLUB_DRF}:3', f'{RF_SAME_SIZE}:3'}
    assert all(p.shape == (10,) for p in predicted.values())
    assert np.array_equal(predicted[RF], full[RF])
    assert np.array_equal(predicted[f'{CLUB_DRF}:2'], learner(train, test, 3)[f'{CLUB_DRF}:2'])


def test_forest_learner_from_config():
    config = ExperimentConfig(n_trees=40, k_list=(5, 10), subset_size=2, policy='random', jobs=3)
    learner = ForestLearner.from_config(config)
    assert (learner.n_trees, learner.k_list, learner.s, learner.policy, learner.jobs) == (40, (5, 10), 2, 'random', 3)


def test_prepare_data_without_split_uses_everything(synthetic_csv):
    train, test = prepare_data(synthetic_csv)
    assert train == test
    assert train.n == 80


def test_data_for_forest_round_trip(synthetic_csv):
    train, test = prepare_data(synthetic_csv, train_fraction=0.66, split_seed=3)
    forest = train_forest(train, 3, seed=1, progress=False)
    forest = replace(forest, training=training_provenance(synthetic_csv, None, 0.66, 3, train))
    rebuilt_train, rebuilt_test = data_for_forest(forest)
    assert rebuilt_train == train
    assert rebuilt_test == test


def test_data_for_forest_mismatches(tmp_path, synthetic_csv, small_synthetic):
    forest = train_forest(small_synthetic, 3, seed=1, progress=False)
    with pytest.raises(InputError):
        data_for_forest(forest)
    with pytest.raises(InputError):
        data_for_forest(forest, dataset=synthetic_csv)

    train, _ = prepare_data(synthetic_csv, train_fraction=0.66, split_seed=3)
    grown = train_forest(train, 3, seed=1, progress=False)
    moved = replace(grown, training=training_provenance(synthetic_csv, None, 0.66, 4, train))
    with pytest.raises(InputError):
        data_for_forest(moved)


def test_benchmark(synthetic):
    full = train_forest(synthetic, 10, seed=1, progress=False)
    pruned = club_drf(full, synthetic, 2, seed=1).ensemble(full)
    table = benchmark(full, pruned, synthetic.subset(range(10)), iterations=1, progress=False)
    assert table['model'].tolist() == ['full', 'pruned']
    assert table['trees'].tolist() == [10, pruned.n_trees]
    assert table['estimated_speedup'].tolist() == [1.0, 10 / pruned.n_trees]
    assert (table['latency_us'] > 0).all()
    with pytest.raises(ConfigurationError):
        benchmark(full, pruned, synthetic, iterations=0, progress=False)


def test_diversity_table(synthetic):
    full = train_forest(synthetic, 8, seed=2, progress=False)
    table = diversity_table(full, full.subforest([3]), synthetic, draws=2, seed=1)
    assert table['ensemble'].tolist() == ['pruned', 'random_subset', 'random_subset', 'full']
    pruned_row = table.iloc[0]
    assert pruned_row['pairs'] == 0
    assert pd.isna(pruned_row['diversity'])
    assert table.iloc[-1]['pairs'] == 28
    with pytest.raises(ConfigurationError):
        diversity_table(full, full, synthetic, draws=0)


def test_identical_trees_have_no_diversity(synthetic):
    trees = tuple(leaf_tree(0, n_features=synthetic.schema.n_features) for _ in range(4))
    full = RandomForest(trees=trees, s=1, seed=0, schema=synthetic.schema)
    table = diversity_table(full, full.subforest([0, 1]), synthetic, draws=2)
    assert (table['diversity'] == 0.0).all()
    assert (table['disagreement'] == 0.0).all()
    assert table['double_fault'].tolist() == pytest.approx([float(np.mean(synthetic.y != 0))] * 4)
