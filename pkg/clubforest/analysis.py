from dataclasses import dataclass
from typing import Callable, Dict, NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd
import tqdm
from sklearn.metrics import (confusion_matrix, f1_score,
                             precision_recall_fscore_support, roc_auc_score)

from clubforest.dataset import Dataset, Schema, holdout_split, impute_numeric
from clubforest.errors import ConfigurationError, UsageError
from clubforest.forest import LabelVector

Labels = Union[LabelVector, Sequence, np.ndarray]

# learner(train, test, seed) -> predicted class codes for every test record
Learner = Callable[[Dataset, Dataset, int], np.ndarray]

# share of the training part each bias/variance repetition trains on
RESAMPLE_FRACTION = 0.5


class PairwiseCounts(NamedTuple):
    ''' Correctness agreement of two classifiers against ground truth

    n11: both correct, n10: only the first correct, n01: only the second correct, n00: both wrong
    '''
    n11: int
    n10: int
    n01: int
    n00: int

    @property
    def total(self) -> int:
        return self.n11 + self.n10 + self.n01 + self.n00


@dataclass(frozen=True, eq=False)
class EvalReport:
    ''' Classification quality of a set of predictions

    Attributes:
    accuracy (float): correct / total
    f_measure (float): support-weighted mean of per-class F1
    auc (float): support-weighted one-vs-rest ROC AUC
    auc_from_scores (bool): False when AUC was computed from hard labels
    per_class (pd.DataFrame): precision, recall, f1, support and auc per class label
    confusion (np.ndarray): confusion matrix, rows are true classes, columns predicted
    '''
    accuracy: float
    f_measure: float
    auc: float
    auc_from_scores: bool
    per_class: pd.DataFrame
    confusion: np.ndarray


@dataclass(frozen=True)
class BiasVariance:
    ''' 0/1-loss bias and variance of a learner

    Attributes:
    bias (float): fraction of test records whose main (modal) prediction is wrong
    variance (float): mean fraction of repetitions disagreeing with the main prediction
    repetitions (int): number of training resamples
    '''
    bias: float
    variance: float
    repetitions: int


def _as_array(labels: Labels) -> np.ndarray:
    if isinstance(labels, LabelVector):
        labels = labels.labels
    return np.asarray(labels)


def _check_lengths(*arrays: np.ndarray) -> int:
    sizes = {a.shape[0] for a in arrays}
    if len(sizes) != 1:
        raise UsageError(f'Sequences must have equal lengths, got {sorted(sizes)}')
    return sizes.pop()


def diversity(c1: Labels, c2: Labels) -> float:
    ''' Fraction of records on which two classifiers assign different labels

    Works for any number of classes.
    '''
    a, b = _as_array(c1), _as_array(c2)
    n = _check_lengths(a, b)
    if n == 0:
        raise UsageError('Cannot measure diversity over zero records')
    return float(np.count_nonzero(a != b)) / n


def pairwise_counts(c1: Labels, c2: Labels, truth: Labels) -> PairwiseCounts:
    ''' Tally every record into one of the four correctness cells of a classifier pair
    '''
    a, b, t = _as_array(c1), _as_array(c2), _as_array(truth)
    _check_lengths(a, b, t)
    ok1 = a == t
    ok2 = b == t
    return PairwiseCounts(
        n11=int(np.count_nonzero(ok1 & ok2)),
        n10=int(np.count_nonzero(ok1 & ~ok2)),
        n01=int(np.count_nonzero(~ok1 & ok2)),
        n00=int(np.count_nonzero(~ok1 & ~ok2)),
    )


def disagreement(counts: PairwiseCounts) -> float:
    ''' (n10 + n01) / total
    '''
    if counts.total <= 0:
        raise UsageError('Disagreement is undefined for zero records')
    return (counts.n10 + counts.n01) / counts.total


def double_fault(counts: PairwiseCounts) -> float:
    ''' n00 / total
    '''
    if counts.total <= 0:
        raise UsageError('Double fault is undefined for zero records')
    return counts.n00 / counts.total


def ensemble_diversity(predictions: np.ndarray, truth: np.ndarray) -> Dict[str, Optional[float]]:
    ''' Mean over all member pairs of diversity, disagreement and double fault

    Parameters:
    predictions (np.ndarray): class codes [n members x n records]
    truth (np.ndarray): true class codes [n records]

    Returns:
    Dict[str, float|None] - keys 'pairs', 'diversity', 'disagreement', 'double_fault';
    the measures are None when there are fewer than two members
    '''
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    members, n = predictions.shape
    _check_lengths(predictions.T, truth)
    pairs = members * (members - 1) // 2
    if pairs == 0:
        return {'pairs': 0, 'diversity': None, 'disagreement': None, 'double_fault': None}
    if n == 0:
        raise UsageError('Cannot measure diversity over zero records')

    agree = np.zeros((members, members))
    for code in np.unique(predictions):
        onehot = (predictions == code).astype(float)
        agree += onehot @ onehot.T
    correct = (predictions == truth[np.newaxis, :]).astype(float)
    both_right = correct @ correct.T
    both_wrong = (1.0 - correct) @ (1.0 - correct).T

    upper = np.triu_indices(members, k=1)
    return {
        'pairs': pairs,
        'diversity': float(np.mean(1.0 - agree[upper] / n)),
        'disagreement': float(np.mean((n - both_right[upper] - both_wrong[upper]) / n)),
        'double_fault': float(np.mean(both_wrong[upper] / n)),
    }


def evaluate(predictions: Labels, truth: Labels, schema: Schema, scores: Optional[np.ndarray] = None) -> EvalReport:
    ''' Accuracy, F-measure and AUC of predicted class codes

    Parameters:
    predictions (Labels): predicted class codes
    truth (Labels): true class codes
    schema (Schema): schema the codes refer to
    scores (np.ndarray|None): per-class vote fractions [n records x n classes]; when absent
                              AUC falls back to hard labels (a two-point ROC per class)

    Returns:
    EvalReport - the metrics
    '''
    pred, true = _as_array(predictions).astype(np.int64), _as_array(truth).astype(np.int64)
    n = _check_lengths(pred, true)
    if n == 0:
        raise UsageError('Cannot evaluate zero predictions')
    n_classes = schema.n_classes
    for arr in (pred, true):
        if arr.min() < 0 or arr.max() >= n_classes:
            raise UsageError('Class codes outside of the schema class labels')
    if scores is not None and np.asarray(scores).shape != (n, n_classes):
        raise UsageError(f'Scores must have shape {(n, n_classes)}')

    labels = list(range(n_classes))
    confusion = confusion_matrix(true, pred, labels=labels)
    precision, recall, f1, support = precision_recall_fscore_support(
        true, pred, labels=labels, zero_division=0)
    f_measure = f1_score(true, pred, labels=labels, average='weighted', zero_division=0)

    class_auc = np.full(n_classes, np.nan)
    for code in labels:
        if 0 < support[code] < n:
            column = np.asarray(scores)[:, code] if scores is not None else (pred == code).astype(float)
            class_auc[code] = roc_auc_score(true == code, column)
    scorable = ~np.isnan(class_auc)
    auc = float(np.average(class_auc[scorable], weights=support[scorable])) if scorable.any() else 0.5

    per_class = pd.DataFrame({
        'label': list(schema.class_labels),
        'precision': precision,
        'recall': recall,
        'f1': f1,
        'support': support,
        'auc': class_auc,
    })
    return EvalReport(
        accuracy=float(np.trace(confusion)) / float(confusion.sum()),
        f_measure=float(f_measure),
        auc=auc,
        auc_from_scores=scores is not None,
        per_class=per_class,
        confusion=confusion,
    )


def decompose_zero_one(predictions: np.ndarray, truth: np.ndarray, n_classes: Optional[int] = None) -> BiasVariance:
    ''' 0/1-loss decomposition of a repetitions x records prediction table

    The main prediction of a record is its modal predicted code (ties to the lowest code).

    Parameters:
    predictions (np.ndarray): class codes [repetitions x n records]
    truth (np.ndarray): true class codes [n records]
    n_classes (int|None): number of classes, inferred if None

    Returns:
    BiasVariance - bias and variance
    '''
    predictions = np.asarray(predictions, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    reps, n = predictions.shape
    _check_lengths(predictions.T, truth)
    if n == 0:
        raise UsageError('Cannot decompose over zero records')
    if n_classes is None:
        n_classes = int(max(predictions.max(), truth.max())) + 1
    tally = np.zeros((n, n_classes), dtype=np.int64)
    rows = np.arange(n)
    for rep in predictions:
        tally[rows, rep] += 1
    main = np.argmax(tally, axis=1)
    return BiasVariance(
        bias=float(np.mean(main != truth)),
        variance=float(np.mean(predictions != main[np.newaxis, :])),
        repetitions=reps,
    )


def training_resample(n: int, rng: np.random.Generator, fraction: float = RESAMPLE_FRACTION) -> np.ndarray:
    ''' Sorted, distinct indices of a seeded subsample of `n` records (at least 2 of them)

    No record appears twice, so the out-of-bag records of a forest grown on the subsample
    are never copies of its in-bag records.
    '''
    if not 0.0 < fraction <= 1.0:
        raise ConfigurationError(f'Resample fraction must lie in (0, 1], got {fraction}')
    size = min(n, max(2, int(round(fraction * n))))
    return np.sort(rng.choice(n, size=size, replace=False))


def bias_variance_many(learner: Callable[[Dataset, Dataset, int], Dict[str, np.ndarray]], d: Dataset,
                       repetitions: int = 10, seed: int = 0, train_fraction: float = 0.66,
                       progress: bool = True, resample_fraction: float = RESAMPLE_FRACTION) -> Dict[str, BiasVariance]:
    ''' Bias and variance of several models trained together on each resample

    The dataset is split once; every repetition trains on a fresh seeded subsample of the
    training part, and `learner` returns predictions for the whole test part keyed by
    model name.

    Parameters:
    learner (Callable): (train, test, seed) -> {model name: predicted codes for test}
    d (Dataset): the dataset
    repetitions (int): number of training resamples, >= 2
    seed (int): master seed of the split and the resamples
    train_fraction (float): size of the training part
    progress (bool): show a progress bar
    resample_fraction (float): share of the training part drawn, without replacement, per repetition

    Returns:
    Dict[str, BiasVariance] - decomposition per model name
    '''
    if repetitions < 2:
        raise ConfigurationError(f'bias_variance needs at least 2 repetitions, got {repetitions}')
    split_stream, *rep_streams = np.random.SeedSequence(entropy=seed).spawn(repetitions + 1)
    pool, test = holdout_split(d, train_fraction, int(split_stream.generate_state(1)[0]))
    pool, test = impute_numeric(pool, test)

    tables: Dict[str, np.ndarray] = {}
    for rep, stream in enumerate(tqdm.tqdm(rep_streams, desc='Bias/variance repetitions',
                                           leave=False, disable=not progress)):
        rng = np.random.default_rng(stream)
        train = pool.subset(training_resample(pool.n, rng, resample_fraction))
        for name, predicted in learner(train, test, int(rng.integers(0, 2 ** 31 - 1))).items():
            if name not in tables:
                tables[name] = np.empty((repetitions, test.n), dtype=np.int64)
            tables[name][rep] = predicted
    return {name: decompose_zero_one(table, test.y, d.schema.n_classes) for name, table in tables.items()}


def bias_variance(learner: Learner, d: Dataset, repetitions: int = 10, seed: int = 0,
                  train_fraction: float = 0.66, progress: bool = True,
                  resample_fraction: float = RESAMPLE_FRACTION) -> BiasVariance:
    ''' Estimate bias and variance of one learner on a fixed test split

    Parameters:
    learner (Learner): callable (train, test, seed) -> predicted codes for test
    d (Dataset): the dataset
    repetitions (int): number of training resamples, >= 2
    seed (int): master seed of the split and the resamples
    train_fraction (float): size of the training part
    progress (bool): show a progress bar
    resample_fraction (float): share of the training part drawn per repetition

    Returns:
    BiasVariance - the decomposition
    '''
    single = lambda train, test, rep_seed: {'learner': learner(train, test, rep_seed)}
    return bias_variance_many(single, d, repetitions, seed, train_fraction, progress, resample_fraction)['learner']
