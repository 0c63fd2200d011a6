import os

import numpy as np
import pytest

from clubforest.dataset import (CATEGORICAL, NUMERIC, Dataset,
                                FeatureDescriptor, Schema, save_dataset)
from clubforest.tree import DecisionTree

UCI_DIR_ENV = 'CLUBFOREST_UCI_DIR'


def make_synthetic(n: int, n_numeric: int = 3, n_categorical: int = 1, n_classes: int = 2,
                   seed: int = 0, noise: float = 0.1) -> Dataset:
    ''' Seeded mixed-type dataset whose class depends on the first features plus label noise
    '''
    rng = np.random.default_rng(seed)
    numeric = np.round(rng.normal(size=(n, n_numeric)), 3)
    categorical = rng.integers(0, 3, size=(n, n_categorical)).astype(float)
    score = numeric[:, 0] + 0.5 * numeric[:, 1]
    if n_categorical:
        score = score + (categorical[:, 0] == 1)
    cuts = np.quantile(score, np.linspace(0, 1, n_classes + 1)[1:-1])
    y = np.digitize(score, cuts)
    flip = rng.random(n) < noise
    y[flip] = rng.integers(0, n_classes, size=int(flip.sum()))

    features = tuple(FeatureDescriptor(f'x{i}', NUMERIC) for i in range(n_numeric))
    features += tuple(FeatureDescriptor(f'c{i}', CATEGORICAL, ('a', 'b', 'c')) for i in range(n_categorical))
    schema = Schema(features, tuple(f'k{i}' for i in range(n_classes)), n_numeric + n_categorical)
    return Dataset(schema, np.column_stack([numeric, categorical]), y)


def leaf_tree(label: int, n_classes: int = 2, n_features: int = 1, oob=()) -> DecisionTree:
    ''' Single-leaf tree always predicting `label`
    '''
    counts = np.zeros((1, n_classes), dtype=np.int64)
    counts[0, label] = 1
    return DecisionTree(
        feature=np.array([-1]),
        categorical=np.array([False]),
        threshold=np.array([0.0]),
        right=np.array([-1]),
        label=np.array([label]),
        counts=counts,
        seen=((),),
        oob=np.array(oob, dtype=np.int64),
        n_features=n_features,
    )


@pytest.fixture
def synthetic():
    return make_synthetic(60, seed=3)


@pytest.fixture
def small_synthetic():
    return make_synthetic(30, n_numeric=2, seed=11)


@pytest.fixture
def xor_dataset():
    schema = Schema((FeatureDescriptor('a', NUMERIC), FeatureDescriptor('b', NUMERIC)), ('no', 'yes'), 2)
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([0, 1, 1, 0])
    return Dataset(schema, X, y)


@pytest.fixture
def synthetic_csv(tmp_path):
    path = tmp_path / 'synthetic.csv'
    with open(path, 'w', encoding='utf-8', newline='') as out_file:
        save_dataset(make_synthetic(80, seed=5), out_file)
    return str(path)


@pytest.fixture
def uci_dir():
    path = os.environ.get(UCI_DIR_ENV)
    if not path or not os.path.isdir(path):
        pytest.skip(f'set {UCI_DIR_ENV} to a directory holding the UCI diabetes and glass files')
    return path


def uci_file(uci_dir: str, name: str) -> str:
    for ext in ('.csv', '.arff'):
        candidate = os.path.join(uci_dir, name + ext)
        if os.path.exists(candidate):
            return candidate
    pytest.skip(f'{name}.csv or {name}.arff not found in {uci_dir}')
    return ''
