from dataclasses import dataclass, field, replace
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from clubforest.dataset import BootstrapSample, Dataset
from clubforest.errors import (ConfigurationError, ContainerError, InputError,
                               UsageError)

NUMERIC_THRESHOLD = 'numeric_threshold'
CATEGORICAL_EQUALS = 'categorical_equals'

# gains closer than this are treated as ties
GAIN_TOLERANCE = 1e-12


class SplitRule(NamedTuple):
    ''' Binary split at an internal node

    numeric_threshold sends a record left when value <= `value`;
    categorical_equals sends it left when value == `value` (a category code).
    '''
    feature_index: int
    kind: str
    value: float
    gain: float = 0.0

    def goes_left(self, x: np.ndarray) -> np.ndarray:
        ''' Vectorised routing of feature values `x`
        '''
        if self.kind == CATEGORICAL_EQUALS:
            return x == self.value
        return x <= self.value


@dataclass(frozen=True, eq=False)
class DecisionTree:
    ''' Unpruned binary classification tree stored as preorder node arrays

    The left child of internal node i is always i + 1; `right[i]` holds the right child.

    Attributes:
    feature (np.ndarray): split feature per node, -1 at leaves
    categorical (np.ndarray): True where the node's rule is categorical_equals
    threshold (np.ndarray): threshold or category code per internal node
    right (np.ndarray): right child per node, -1 at leaves
    label (np.ndarray): majority class code per node
    counts (np.ndarray): in-bag class distribution per node [n_nodes x n_classes], with multiplicity
    seen (Tuple[Tuple[int, ...], ...]): category codes present at each categorical node
    oob (np.ndarray): out-of-bag record indices of the bootstrap draw the tree was grown on
    n_features (int): width of the records the tree accepts
    oob_score (float|None): cached out-of-bag accuracy
    oob_substituted (bool): True when `oob_score` is an in-bag accuracy because `oob` was empty
    '''
    feature: np.ndarray
    categorical: np.ndarray
    threshold: np.ndarray
    right: np.ndarray
    label: np.ndarray
    counts: np.ndarray
    seen: Tuple[Tuple[int, ...], ...]
    oob: np.ndarray
    n_features: int
    oob_score: Optional[float] = None
    oob_substituted: bool = False
    _flat: tuple = field(init=False, repr=False)

    def __post_init__(self):
        mass = self.counts.sum(axis=1)
        heavier_left = [False] * len(self.feature)
        seen_sets = [frozenset()] * len(self.feature)
        for node in np.flatnonzero(self.feature >= 0):
            heavier_left[node] = bool(mass[node + 1] >= mass[self.right[node]])
            seen_sets[node] = frozenset(float(c) for c in self.seen[node])
        object.__setattr__(self, '_flat', (
            self.feature.tolist(),
            self.categorical.tolist(),
            self.threshold.tolist(),
            self.right.tolist(),
            self.label.tolist(),
            heavier_left,
            seen_sets,
        ))

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def n_classes(self) -> int:
        return int(self.counts.shape[1])

    @property
    def leaf_count(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                depth[node + 1] = depth[node] + 1
                depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def rule(self, node: int) -> Optional[SplitRule]:
        ''' The split rule at `node`, or None for a leaf
        '''
        if self.feature[node] < 0:
            return None
        kind = CATEGORICAL_EQUALS if self.categorical[node] else NUMERIC_THRESHOLD
        return SplitRule(int(self.feature[node]), kind, float(self.threshold[node]))

    def predict_codes(self, X: np.ndarray) -> np.ndarray:
        ''' Vectorised prediction of class codes for every row of `X`
        '''
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise InputError(f'Expected records with {self.n_features} features, got shape {X.shape}')
        _, _, _, _, _, heavier_left, _ = self._flat
        heavier_left = np.array(heavier_left, dtype=bool)
        seen_mask = self._seen_mask()

        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.flatnonzero(self.feature[node] >= 0)
        while rows.size:
            nd = node[rows]
            values = X[rows, self.feature[nd]]
            cat = self.categorical[nd]
            go_left = np.where(cat, values == self.threshold[nd], values <= self.threshold[nd])
            if cat.any():
                bad = np.isnan(values) | (values < 0) | (values >= seen_mask.shape[1])
                codes = np.where(bad, 0, values).astype(np.int64)
                unseen = cat & (bad | ~seen_mask[nd, codes])
                go_left = np.where(unseen, heavier_left[nd], go_left)
            node[rows] = np.where(go_left, nd + 1, self.right[nd])
            rows = rows[self.feature[node[rows]] >= 0]
        return self.label[node]

    def _seen_mask(self) -> np.ndarray:
        width = 1 + max((max(s) for s in self.seen if s), default=0)
        mask = np.zeros((self.n_nodes, width), dtype=bool)
        for node, codes in enumerate(self.seen):
            mask[node, list(codes)] = True
        return mask

    def to_dict(self) -> dict:
        ''' Plain representation used by forest containers
        '''
        nodes = []
        for node in range(self.n_nodes):
            nodes.append([
                int(self.feature[node]),
                int(self.categorical[node]),
                float(self.threshold[node]),
                int(self.right[node]),
                int(self.label[node]),
                [int(c) for c in self.counts[node]],
                [int(c) for c in self.seen[node]],
            ])
        return {
            'n_features': self.n_features,
            'nodes': nodes,
            'oob': [int(i) for i in self.oob],
            'oob_score': self.oob_score,
            'oob_substituted': self.oob_substituted,
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'DecisionTree':
        try:
            nodes = data['nodes']
            tree = cls(
                feature=np.array([n[0] for n in nodes], dtype=np.int64),
                categorical=np.array([bool(n[1]) for n in nodes], dtype=bool),
                threshold=np.array([n[2] for n in nodes], dtype=float),
                right=np.array([n[3] for n in nodes], dtype=np.int64),
                label=np.array([n[4] for n in nodes], dtype=np.int64),
                counts=np.array([n[5] for n in nodes], dtype=np.int64),
                seen=tuple(tuple(int(c) for c in n[6]) for n in nodes),
                oob=np.array(data['oob'], dtype=np.int64),
                n_features=int(data['n_features']),
                oob_score=data.get('oob_score'),
                oob_substituted=bool(data.get('oob_substituted', False)),
            )
        except (KeyError, IndexError, TypeError, ValueError) as excpt:
            raise ContainerError(f'Malformed tree description: {excpt}') from excpt
        if tree.n_nodes == 0 or tree.counts.ndim != 2:
            raise ContainerError('Tree description has no nodes')
        return tree


def predict(tree: DecisionTree, row: Sequence[float]) -> int:
    ''' Route one encoded record to a leaf and return the leaf's class code

    A categorical value never seen at an internal node goes to the child holding
    the larger training mass (ties go left).

    Parameters:
    tree (DecisionTree): trained tree
    row (Sequence[float]): encoded record, see `Schema.encode`

    Returns:
    int - predicted class code
    '''
    if len(row) != tree.n_features:
        raise InputError(f'Expected a record with {tree.n_features} features, got {len(row)}')
    feature, categorical, threshold, right, label, heavier_left, seen = tree._flat
    node = 0
    while feature[node] >= 0:
        value = row[feature[node]]
        if categorical[node]:
            if value in seen[node]:
                left = value == threshold[node]
            else:
                left = heavier_left[node]
        else:
            left = value <= threshold[node]
        node = node + 1 if left else right[node]
    return label[node]


def gini_gain(X: np.ndarray, y: np.ndarray, rule: SplitRule, n_classes: int) -> float:
    ''' Gini impurity decrease of applying `rule` to the records (X, y)

    Parameters:
    X (np.ndarray): encoded records at the node
    y (np.ndarray): class codes at the node
    rule (SplitRule): rule to evaluate
    n_classes (int): number of classes in the schema

    Returns:
    float - impurity decrease, weighted by child sizes
    '''
    left = rule.goes_left(X[:, rule.feature_index])
    n = y.shape[0]
    parent = np.bincount(y, minlength=n_classes)
    lcounts = np.bincount(y[left], minlength=n_classes)
    rcounts = parent - lcounts
    n_left = int(left.sum())
    n_right = n - n_left
    if n_left == 0 or n_right == 0:
        return 0.0
    score = float((lcounts ** 2).sum()) / n_left + float((rcounts ** 2).sum()) / n_right
    return (score - float((parent ** 2).sum()) / n) / n


def best_split(X: np.ndarray, y: np.ndarray, candidate_features: Sequence[int],
               categorical_mask: np.ndarray, n_classes: int, require_gain: bool = True) -> Optional[SplitRule]:
    ''' Find the split with the largest Gini impurity decrease

    Numeric cut points are midpoints between consecutive distinct sorted values;
    categorical cut points are one-vs-rest per category. Ties go to the lower feature
    index, then the lower threshold or the first category in schema order.

    Parameters:
    X (np.ndarray): encoded records at the node, with multiplicity
    y (np.ndarray): class codes of those records
    candidate_features (Sequence[int]): feature indices to search
    categorical_mask (np.ndarray): True for categorical features
    n_classes (int): number of classes in the schema
    require_gain (bool): if True, only rules with strictly positive decrease qualify;
                         otherwise any rule separating the records does

    Returns:
    SplitRule|None - the best rule, or None if no rule qualifies
    '''
    n = y.shape[0]
    if n == 0:
        raise UsageError('best_split needs at least one record')
    parent = np.bincount(y, minlength=n_classes).astype(float)
    parent_term = float((parent ** 2).sum()) / n

    best: Optional[SplitRule] = None
    floor = GAIN_TOLERANCE if require_gain else -np.inf
    for feat in sorted(int(f) for f in candidate_features):
        if categorical_mask[feat]:
            found = _best_categorical_cut(X[:, feat], y, parent, parent_term, n_classes)
            kind = CATEGORICAL_EQUALS
        else:
            found = _best_numeric_cut(X[:, feat], y, parent, parent_term, n_classes)
            kind = NUMERIC_THRESHOLD
        if found is None:
            continue
        value, gain = found
        if gain > floor and (best is None or gain > best.gain + GAIN_TOLERANCE):
            best = SplitRule(feat, kind, value, gain)
    return best


def _first_best(gains: np.ndarray) -> int:
    return int(np.flatnonzero(gains >= gains.max() - GAIN_TOLERANCE)[0])


def _best_numeric_cut(x: np.ndarray, y: np.ndarray, parent: np.ndarray, parent_term: float,
                      n_classes: int) -> Optional[Tuple[float, float]]:
    n = y.shape[0]
    if n < 2:
        return None
    order = np.argsort(x, kind='stable')
    xs = x[order]
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y[order]] = 1.0
    left = np.cumsum(onehot, axis=0)[:-1]
    right = parent[np.newaxis, :] - left
    n_left = np.arange(1, n, dtype=float)
    n_right = n - n_left
    valid = xs[:-1] < xs[1:]
    if not valid.any():
        return None
    gains = ((left ** 2).sum(axis=1) / n_left + (right ** 2).sum(axis=1) / n_right - parent_term) / n
    gains = np.where(valid, gains, -np.inf)
    pos = _first_best(gains)
    threshold = (xs[pos] + xs[pos + 1]) / 2.0
    if not threshold < xs[pos + 1]:
        threshold = float(xs[pos])
    return float(threshold), float(gains[pos])


def _best_categorical_cut(x: np.ndarray, y: np.ndarray, parent: np.ndarray, parent_term: float,
                          n_classes: int) -> Optional[Tuple[float, float]]:
    n = y.shape[0]
    codes = x.astype(np.int64)
    present = np.unique(codes)
    if present.size < 2:
        return None
    table = np.zeros((int(present.max()) + 1, n_classes))
    np.add.at(table, (codes, y), 1.0)
    left = table[present]
    right = parent[np.newaxis, :] - left
    n_left = left.sum(axis=1)
    n_right = n - n_left
    gains = ((left ** 2).sum(axis=1) / n_left + (right ** 2).sum(axis=1) / n_right - parent_term) / n
    pos = _first_best(gains)
    return float(present[pos]), float(gains[pos])


def train_tree(train: Dataset, sample: BootstrapSample, s: int, rng: np.random.Generator,
               max_depth: Optional[int] = None) -> DecisionTree:
    ''' Grow one unpruned tree on the in-bag records of `sample`

    At every node `s` candidate features are drawn without replacement. Growth stops at
    pure nodes, nodes with fewer than 2 records, nodes no candidate rule separates, and
    (only if given) at `max_depth`.

    Parameters:
    train (Dataset): training set the sample indexes into
    sample (BootstrapSample): bootstrap draw; its OOB indices are stored on the tree
    s (int): feature subset size, 1 <= s <= number of features
    rng (np.random.Generator): random stream owned by this tree
    max_depth (int|None): optional depth cap for pathological data

    Returns:
    DecisionTree - the grown tree
    '''
    n_features = train.schema.n_features
    if not 1 <= s <= n_features:
        raise ConfigurationError(f'Feature subset size s={s} must lie in [1, {n_features}]')
    if max_depth is not None and max_depth < 0:
        raise ConfigurationError(f'max_depth must be >= 0, got {max_depth}')
    if sample.in_bag.size == 0:
        raise UsageError('Cannot grow a tree on an empty in-bag sample')

    X, y = train.X, train.y
    n_classes = train.schema.n_classes
    categorical_mask = train.schema.categorical_mask

    feature: List[int] = []
    categorical: List[bool] = []
    threshold: List[float] = []
    right: List[int] = []
    label: List[int] = []
    counts: List[np.ndarray] = []
    seen: List[Tuple[int, ...]] = []

    # entries: (record indices, depth, parent node waiting for its right child or -1)
    stack = [(np.asarray(sample.in_bag, dtype=np.int64), 0, -1)]
    while stack:
        idx, depth, parent = stack.pop()
        node = len(feature)
        if parent >= 0:
            right[parent] = node

        node_y = y[idx]
        node_counts = np.bincount(node_y, minlength=n_classes)
        rule = None
        if np.count_nonzero(node_counts) > 1 and idx.size >= 2 and (max_depth is None or depth < max_depth):
            candidates = rng.choice(n_features, size=s, replace=False)
            node_X = X[idx]
            rule = best_split(node_X, node_y, candidates, categorical_mask, n_classes)
            if rule is None:
                rule = best_split(node_X, node_y, candidates, categorical_mask, n_classes, require_gain=False)

        counts.append(node_counts)
        label.append(int(np.argmax(node_counts)))
        right.append(-1)
        if rule is None:
            feature.append(-1)
            categorical.append(False)
            threshold.append(0.0)
            seen.append(())
            continue

        is_cat = rule.kind == CATEGORICAL_EQUALS
        values = X[idx, rule.feature_index]
        feature.append(rule.feature_index)
        categorical.append(is_cat)
        threshold.append(rule.value)
        seen.append(tuple(int(c) for c in np.unique(values)) if is_cat else ())
        go_left = rule.goes_left(values)
        # right pushed first so the left subtree is numbered next (preorder)
        stack.append((idx[~go_left], depth + 1, node))
        stack.append((idx[go_left], depth + 1, -1))

    return DecisionTree(
        feature=np.array(feature, dtype=np.int64),
        categorical=np.array(categorical, dtype=bool),
        threshold=np.array(threshold, dtype=float),
        right=np.array(right, dtype=np.int64),
        label=np.array(label, dtype=np.int64),
        counts=np.array(counts, dtype=np.int64).reshape(len(counts), n_classes),
        seen=tuple(seen),
        oob=np.asarray(sample.oob, dtype=np.int64),
        n_features=n_features,
    )


def with_oob_score(tree: DecisionTree, score: float, substituted: bool) -> DecisionTree:
    ''' Copy of `tree` carrying a cached out-of-bag score
    '''
    return replace(tree, oob_score=float(score), oob_substituted=bool(substituted))
