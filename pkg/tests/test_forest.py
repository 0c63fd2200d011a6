from collections import Counter

import numpy as np
import pytest

from clubforest.dataset import BootstrapSample, bootstrap_sample
from clubforest.errors import ConfigurationError, ContainerError, UsageError
from clubforest.forest import (EmptyOutOfBagError, RandomForest,
                               cached_oob_accuracy, default_subset_size,
                               forest_to_container, label_matrix,
                               label_vector, load_forest, majority_vote,
                               oob_accuracy, predict_batch, predict_record,
                               predict_scores, save_forest, train_forest,
                               tree_rng)
from clubforest.io import dump_container, write_container
from clubforest.tree import predict, train_tree

from conftest import leaf_tree


def vote_forest(labels, n_classes=2):
    trees = tuple(leaf_tree(label, n_classes) for label in labels)
    return RandomForest(trees=trees, s=1, seed=0, schema=None)


def test_default_subset_size():
    assert [default_subset_size(f) for f in (1, 3, 4, 8, 9, 60)] == [1, 1, 2, 2, 3, 7]


def test_single_tree_forest_votes_like_its_tree(synthetic):
    forest = train_forest(synthetic, 1, seed=3, progress=False)
    for row in synthetic.X:
        assert majority_vote(forest, row) == predict(forest.trees[0], row)


@pytest.mark.parametrize('labels,expected', [
    ((0, 0, 1), 0),
    ((1, 1, 0), 1),
    ((0, 1), 0),
    ((1, 0), 0),
    ((2, 1, 1, 2), 1),
])
def test_majority_vote(labels, expected):
    forest = vote_forest(labels, n_classes=3)
    assert majority_vote(forest, [0.0]) == expected
    assert majority_vote(list(forest.trees), [0.0]) == expected


def test_majority_vote_needs_voters():
    with pytest.raises(UsageError):
        majority_vote([], [0.0])


def test_vote_matches_brute_force_mode(synthetic):
    forest = train_forest(synthetic, 20, seed=8, progress=False)
    batch = predict_batch(forest, synthetic.X)
    for pos, row in enumerate(synthetic.X[:30]):
        votes = Counter(predict(tree, row) for tree in forest.trees)
        top = max(votes.values())
        expected = min(label for label, count in votes.items() if count == top)
        assert majority_vote(forest, row) == expected
        assert batch[pos] == expected


def test_scores_are_vote_fractions(synthetic):
    forest = train_forest(synthetic, 7, seed=1, progress=False)
    scores = predict_scores(forest, synthetic.X)
    assert scores.shape == (synthetic.n, 2)
    assert np.allclose(scores.sum(axis=1), 1.0)
    assert np.allclose(scores * 7, np.round(scores * 7))


def test_predict_record_returns_label(synthetic):
    forest = train_forest(synthetic, 5, seed=1, progress=False)
    record = synthetic.record(0)
    expected = synthetic.schema.class_labels[majority_vote(forest, synthetic.X[0])]
    assert predict_record(forest, record) == expected


def test_train_forest_determinism_across_jobs(synthetic):
    sequential = train_forest(synthetic, 12, seed=21, jobs=1, progress=False)
    concurrent = train_forest(synthetic, 12, seed=21, jobs=2, progress=False)
    assert dump_container(forest_to_container(sequential)) == dump_container(forest_to_container(concurrent))


def test_different_seeds_differ(synthetic):
    a = train_forest(synthetic, 5, seed=1, progress=False)
    b = train_forest(synthetic, 5, seed=2, progress=False)
    assert dump_container(forest_to_container(a)) != dump_container(forest_to_container(b))


def test_oob_sets_come_from_per_tree_streams(synthetic):
    forest = train_forest(synthetic, 6, seed=4, progress=False)
    for i, tree in enumerate(forest.trees):
        sample = bootstrap_sample(synthetic, tree_rng(4, i))
        assert np.array_equal(tree.oob, sample.oob)
        covered = np.union1d(np.unique(sample.in_bag), tree.oob)
        assert covered.tolist() == list(range(synthetic.n))


@pytest.mark.parametrize('kwargs', [
    {'n_trees': 0},
    {'n_trees': 3, 's': 0},
    {'n_trees': 3, 's': 9},
    {'n_trees': 3, 'seed': -1},
])
def test_train_forest_rejects_bad_parameters(synthetic, kwargs):
    with pytest.raises(ConfigurationError):
        train_forest(synthetic, progress=False, **kwargs)


def test_label_vectors(synthetic):
    forest = train_forest(synthetic, 4, seed=2, progress=False)
    matrix = label_matrix(forest, synthetic)
    assert matrix.shape == (4, synthetic.n)
    for i in range(4):
        vector = label_vector(i, forest, synthetic)
        assert vector.tree_index == i
        assert np.array_equal(vector.labels, matrix[i])
        assert set(vector.labels.tolist()) <= {0, 1}
    assert np.array_equal(label_matrix(forest, synthetic, jobs=2), matrix)


def test_label_vector_of_leaf_is_constant(synthetic):
    forest = RandomForest(trees=(leaf_tree(1, n_features=4),), s=1, seed=0, schema=synthetic.schema)
    assert label_vector(0, forest, synthetic).labels.tolist() == [1] * synthetic.n
    with pytest.raises(UsageError):
        label_vector(1, forest, synthetic)


def test_label_vector_of_xor_tree(xor_dataset):
    tree = train_tree(xor_dataset, BootstrapSample(np.arange(4), np.array([], dtype=np.int64)), 2,
                      np.random.default_rng(0))
    forest = RandomForest(trees=(tree,), s=2, seed=0, schema=xor_dataset.schema)
    assert label_vector(0, forest, xor_dataset).labels.tolist() == xor_dataset.y.tolist()


def test_oob_accuracy_matches_hand_loop(synthetic):
    forest = train_forest(synthetic, 10, seed=6, progress=False)
    for i, tree in enumerate(forest.trees):
        correct = sum(predict(tree, synthetic.X[j]) == synthetic.y[j] for j in tree.oob)
        assert oob_accuracy(i, forest, synthetic) == pytest.approx(correct / tree.oob.size)
        assert cached_oob_accuracy(i, forest, synthetic) == oob_accuracy(i, forest, synthetic)


def test_oob_accuracy_ratio(synthetic):
    # a constant tree scores the share of its oob records carrying its label
    oob = np.flatnonzero(synthetic.y == 0)[:18].tolist() + np.flatnonzero(synthetic.y == 1)[:18].tolist()
    forest = RandomForest(trees=(leaf_tree(0, n_features=4, oob=sorted(oob)),), s=1, seed=0,
                          schema=synthetic.schema)
    assert oob_accuracy(0, forest, synthetic) == 0.5


def test_empty_oob_is_flagged(xor_dataset):
    tree = train_tree(xor_dataset, BootstrapSample(np.arange(4), np.array([], dtype=np.int64)), 2,
                      np.random.default_rng(0))
    forest = RandomForest(trees=(tree,), s=2, seed=0, schema=xor_dataset.schema)
    with pytest.raises(EmptyOutOfBagError):
        oob_accuracy(0, forest, xor_dataset)


def test_tiny_training_set_substitutes_in_bag_accuracy(xor_dataset):
    forest = train_forest(xor_dataset, 100, s=2, seed=0, progress=False)
    for tree in forest.trees:
        assert tree.oob_score is not None
        assert tree.oob_substituted == (tree.oob.size == 0)
    assert any(t.oob_substituted for t in forest.trees)


def test_subforest_keeps_tree_indices(synthetic):
    forest = train_forest(synthetic, 6, seed=2, progress=False)
    sub = forest.subforest([4, 1])
    assert sub.tree_indices == (4, 1)
    assert sub.trees[0] is forest.trees[4]
    assert sub.subforest([1]).tree_indices == (1,)


def test_save_and_load_forest(tmp_path, synthetic):
    forest = train_forest(synthetic, 5, seed=9, progress=False)
    first, second = tmp_path / 'a.json', tmp_path / 'b.json'
    save_forest(str(first), forest)
    loaded = load_forest(str(first))
    save_forest(str(second), loaded)
    assert first.read_bytes() == second.read_bytes()
    assert np.array_equal(predict_batch(loaded, synthetic.X), predict_batch(forest, synthetic.X))
    assert loaded.schema == synthetic.schema


def test_load_rejects_unknown_format(tmp_path):
    path = tmp_path / 'other.json'
    write_container(str(path), {'format': 'something-else/1'})
    with pytest.raises(ContainerError):
        load_forest(str(path))


def test_load_rejects_malformed_container(tmp_path, synthetic):
    forest = train_forest(synthetic, 2, seed=9, progress=False)
    data = forest_to_container(forest)
    data['params']['n_trees'] = 3
    path = tmp_path / 'bad.json'
    write_container(str(path), data)
    with pytest.raises(ContainerError):
        load_forest(str(path))
