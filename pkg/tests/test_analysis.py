import itertools

import numpy as np
import pytest

from clubforest.analysis import (BiasVariance, PairwiseCounts, bias_variance,
                                 bias_variance_many, decompose_zero_one,
                                 disagreement, diversity, double_fault,
                                 ensemble_diversity, evaluate,
                                 pairwise_counts, training_resample)
from clubforest.dataset import NUMERIC, Dataset, FeatureDescriptor, Schema
from clubforest.errors import ConfigurationError, UsageError
from clubforest.forest import LabelVector, predict_batch, train_forest

from conftest import make_synthetic

BINARY = Schema((FeatureDescriptor('x', NUMERIC),), ('neg', 'pos'), 1)


def test_diversity_example():
    assert diversity(list('YYNNY'), list('YNNYY')) == pytest.approx(0.4)


def test_diversity_bounds():
    labels = np.array([0, 1, 2, 1])
    assert diversity(labels, labels) == 0.0
    assert diversity(labels, (labels + 1) % 3) == 1.0


def test_diversity_accepts_label_vectors():
    a = LabelVector(0, np.array([0, 1, 1]))
    b = LabelVector(1, np.array([0, 0, 1]))
    assert diversity(a, b) == pytest.approx(1 / 3)


def test_diversity_errors():
    with pytest.raises(UsageError):
        diversity([0, 1], [0])
    with pytest.raises(UsageError):
        diversity([], [])


def test_pairwise_counts_hand_tally():
    truth = [0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1]
    c1 = [0, 1, 0, 1, 0, 1, 1, 0, 0, 1, 1, 0]
    c2 = [0, 1, 0, 0, 1, 1, 0, 0, 1, 0, 1, 1]
    counts = pairwise_counts(c1, c2, truth)
    assert counts == PairwiseCounts(n11=4, n10=4, n01=2, n00=2)
    assert counts.total == 12
    assert disagreement(counts) == pytest.approx(0.5)
    assert double_fault(counts) == pytest.approx(2 / 12)
    assert diversity(c1, c2) == pytest.approx(0.5)


def test_disagreement_and_double_fault():
    counts = PairwiseCounts(4, 2, 1, 3)
    assert disagreement(counts) == pytest.approx(0.3)
    assert double_fault(counts) == pytest.approx(0.3)


def test_measures_need_records():
    with pytest.raises(UsageError):
        disagreement(PairwiseCounts(0, 0, 0, 0))
    with pytest.raises(UsageError):
        double_fault(PairwiseCounts(0, 0, 0, 0))


def test_ensemble_diversity_matches_pairwise_loop():
    rng = np.random.default_rng(0)
    predictions = rng.integers(0, 3, size=(5, 20))
    truth = rng.integers(0, 3, size=20)
    result = ensemble_diversity(predictions, truth)

    pairs = list(itertools.combinations(range(5), 2))
    assert result['pairs'] == len(pairs) == 10
    counts = [pairwise_counts(predictions[i], predictions[j], truth) for i, j in pairs]
    assert result['diversity'] == pytest.approx(np.mean([diversity(predictions[i], predictions[j]) for i, j in pairs]))
    assert result['disagreement'] == pytest.approx(np.mean([disagreement(c) for c in counts]))
    assert result['double_fault'] == pytest.approx(np.mean([double_fault(c) for c in counts]))


def test_ensemble_diversity_of_one_member_is_undefined():
    result = ensemble_diversity(np.array([[0, 1, 1]]), np.array([0, 1, 0]))
    assert result == {'pairs': 0, 'diversity': None, 'disagreement': None, 'double_fault': None}


def test_evaluate_perfect():
    truth = np.array([0, 1, 1, 0, 1])
    report = evaluate(truth, truth, BINARY)
    assert report.accuracy == 1.0
    assert report.f_measure == 1.0
    assert report.auc == 1.0
    assert not report.auc_from_scores


def test_evaluate_confusion_counts():
    # TP=4 FN=1 on the positives, FP=1 TN=4 on the negatives
    truth = np.array([1] * 5 + [0] * 5)
    pred = np.array([1, 1, 1, 1, 0, 1, 0, 0, 0, 0])
    report = evaluate(pred, truth, BINARY)
    assert report.accuracy == pytest.approx(0.8)
    assert report.f_measure == pytest.approx(0.8)
    assert report.auc == pytest.approx(0.8)
    positive = report.per_class.set_index('label').loc['pos']
    assert positive['f1'] == pytest.approx(0.8)
    assert positive['support'] == 5
    assert report.confusion.tolist() == [[4, 1], [1, 4]]


def test_evaluate_constant_predictor():
    truth = np.array([0, 1] * 10)
    report = evaluate(np.zeros(20, dtype=np.int64), truth, BINARY)
    assert report.accuracy == 0.5
    assert report.auc == pytest.approx(0.5)


def test_evaluate_with_scores():
    truth = np.array([0, 0, 1, 1])
    pred = np.array([0, 1, 1, 1])
    scores = np.array([[0.9, 0.1], [0.4, 0.6], [0.3, 0.7], [0.2, 0.8]])
    report = evaluate(pred, truth, BINARY, scores=scores)
    assert report.auc_from_scores
    assert report.auc == pytest.approx(1.0)
    assert report.accuracy == pytest.approx(0.75)


def test_evaluate_single_class_truth_has_neutral_auc():
    report = evaluate(np.array([0, 0, 1]), np.array([0, 0, 0]), BINARY)
    assert report.auc == 0.5
    assert np.isnan(report.per_class['auc']).all()


@pytest.mark.parametrize('pred,truth,scores', [
    ([0, 1], [0], None),
    ([], [], None),
    ([0, 2], [0, 1], None),
    ([0, 1], [0, 1], np.zeros((2, 3))),
])
def test_evaluate_errors(pred, truth, scores):
    with pytest.raises(UsageError):
        evaluate(np.array(pred, dtype=np.int64), np.array(truth, dtype=np.int64), BINARY, scores=scores)


def test_decompose_hand_table():
    truth = np.array([0, 1, 1, 0])
    predictions = np.array([[0, 1, 0, 0], [0, 1, 1, 1], [1, 1, 0, 1]])
    result = decompose_zero_one(predictions, truth)
    assert result == BiasVariance(bias=0.5, variance=0.25, repetitions=3)


def test_decompose_ties_go_to_lowest_code():
    result = decompose_zero_one(np.array([[1], [0]]), np.array([1]))
    assert result.bias == 1.0
    assert result.variance == 0.5


def three_class(d: Dataset) -> Dataset:
    schema = Schema(d.schema.features, ('k0', 'k1', 'k2'), d.schema.class_index)
    return Dataset(schema, d.X, d.y)


def test_constant_wrong_learner():
    d = three_class(make_synthetic(40, seed=1))
    result = bias_variance(lambda train, test, seed: np.full(test.n, 2), d, repetitions=4, seed=3, progress=False)
    assert result.bias == 1.0
    assert result.variance == 0.0
    assert result.repetitions == 4


def test_oracle_learner():
    d = make_synthetic(40, seed=1)
    result = bias_variance(lambda train, test, seed: test.y.copy(), d, repetitions=3, seed=3, progress=False)
    assert (result.bias, result.variance) == (0.0, 0.0)


def test_bias_variance_of_forests_is_deterministic():
    d = make_synthetic(50, seed=2)

    def learner(train, test, seed):
        forest = train_forest(train, 5, seed=seed, progress=False)
        return {'forest': predict_batch(forest, test.X), 'first_tree': predict_batch(forest.subforest([0]), test.X)}

    first = bias_variance_many(learner, d, repetitions=3, seed=8, progress=False)
    second = bias_variance_many(learner, d, repetitions=3, seed=8, progress=False)
    assert first == second
    assert set(first) == {'forest', 'first_tree'}
    for result in first.values():
        assert 0.0 <= result.bias <= 1.0
        assert 0.0 <= result.variance <= 1.0


def test_training_resample_has_no_repeats():
    rng = np.random.default_rng(0)
    indices = training_resample(40, rng)
    assert len(indices) == 20
    assert len(np.unique(indices)) == 20
    assert indices.tolist() == sorted(indices.tolist())
    assert training_resample(3, rng).size == 2
    assert training_resample(5, rng, fraction=1.0).tolist() == [0, 1, 2, 3, 4]
    with pytest.raises(ConfigurationError):
        training_resample(5, rng, fraction=0.0)


def test_oob_records_are_never_copies_of_in_bag_records():
    d = make_synthetic(60, seed=5)
    seen = []

    def learner(train, test, seed):
        assert len(np.unique(train.X, axis=0)) == train.n
        forest = train_forest(train, 6, seed=seed, progress=False)
        for tree in forest.trees:
            in_bag = {tuple(row) for row in train.X[np.setdiff1d(np.arange(train.n), tree.oob)]}
            assert not any(tuple(row) in in_bag for row in train.X[tree.oob])
        seen.append(train.n)
        return np.zeros(test.n, dtype=np.int64)

    bias_variance(learner, d, repetitions=3, seed=2, progress=False)
    assert len(seen) == 3 and len(set(seen)) == 1


@pytest.mark.parametrize('repetitions', [0, 1])
def test_bias_variance_needs_two_repetitions(repetitions):
    d = make_synthetic(20, seed=1)
    with pytest.raises(ConfigurationError):
        bias_variance(lambda train, test, seed: test.y, d, repetitions=repetitions, progress=False)
