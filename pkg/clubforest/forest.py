import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import tqdm
from joblib import Parallel, delayed

from clubforest.dataset import Dataset, Record, Schema, bootstrap_sample
from clubforest.errors import ConfigurationError, ContainerError, UsageError
from clubforest.io import read_container, write_container
from clubforest.tree import DecisionTree, predict, train_tree, with_oob_score

FORMAT_TAG = 'clubforest-forest/1'


class EmptyOutOfBagError(UsageError):
    ''' A tree has no out-of-bag records to be scored on
    '''


@dataclass(frozen=True, eq=False)
class RandomForest:
    ''' An ordered collection of trees grown on bootstraps of one training set

    Attributes:
    trees (Tuple[DecisionTree, ...]): trees in construction order
    s (int): feature subset size used at every node
    seed (int): master seed the per-tree streams were derived from
    schema (Schema): schema of the training set
    max_depth (int|None): depth cap used while growing, None for unpruned growth
    tree_indices (Tuple[int, ...]): index of every tree in the forest it was grown in;
                                    differs from range(n_trees) only for pruned ensembles
    training (dict|None): provenance of the training set (path, split, fingerprint)
    pruned_from (dict|None): pruning metadata when this is a pruned ensemble
    '''
    trees: Tuple[DecisionTree, ...]
    s: int
    seed: int
    schema: Schema
    max_depth: Optional[int] = None
    tree_indices: Tuple[int, ...] = ()
    training: Optional[dict] = None
    pruned_from: Optional[dict] = None

    def __post_init__(self):
        if len(self.trees) == 0:
            raise UsageError('A forest needs at least one tree')
        object.__setattr__(self, 'trees', tuple(self.trees))
        if not self.tree_indices:
            object.__setattr__(self, 'tree_indices', tuple(range(len(self.trees))))
        elif len(self.tree_indices) != len(self.trees):
            raise UsageError('tree_indices must have one entry per tree')

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def oob_scores(self) -> np.ndarray:
        return np.array([np.nan if t.oob_score is None else t.oob_score for t in self.trees])

    def subforest(self, positions: Sequence[int], pruned_from: Optional[dict] = None) -> 'RandomForest':
        ''' Forest made of the trees at `positions`, keeping their original tree indices
        '''
        positions = [int(p) for p in positions]
        return RandomForest(
            trees=tuple(self.trees[p] for p in positions),
            s=self.s,
            seed=self.seed,
            schema=self.schema,
            max_depth=self.max_depth,
            tree_indices=tuple(self.tree_indices[p] for p in positions),
            training=self.training,
            pruned_from=pruned_from,
        )


class LabelVector(NamedTuple):
    ''' Class codes one tree assigns to every record of a dataset, in record order
    '''
    tree_index: int
    labels: np.ndarray


def default_subset_size(n_features: int) -> int:
    ''' floor(sqrt(F)), at least 1
    '''
    return max(1, int(math.isqrt(n_features)))


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    ''' Random stream of tree `tree_index`, derived from the master seed by counter

    The stream depends only on (seed, tree_index), never on execution order.
    '''
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(tree_index,)))


def _grow_tree(train: Dataset, tree_index: int, s: int, seed: int, max_depth: Optional[int]) -> DecisionTree:
    rng = tree_rng(seed, tree_index)
    sample = bootstrap_sample(train, rng)
    tree = train_tree(train, sample, s, rng, max_depth=max_depth)
    if tree.oob.size > 0:
        oob = tree.oob
        substituted = False
    else:
        oob = sample.in_bag
        substituted = True
    score = float(np.mean(tree.predict_codes(train.X[oob]) == train.y[oob]))
    return with_oob_score(tree, score, substituted)


def train_forest(train: Dataset, n_trees: int, s: Optional[int] = None, seed: int = 0,
                 max_depth: Optional[int] = None, jobs: int = 1, progress: bool = True) -> RandomForest:
    ''' Grow a random forest

    Tree i uses its own random stream derived from (seed, i) for both its bootstrap draw
    and its node feature subsets, so the result does not depend on `jobs`.

    Parameters:
    train (Dataset): training set
    n_trees (int): number of trees, >= 1
    s (int|None): feature subset size; floor(sqrt(F)) if None
    seed (int): non-negative master seed
    max_depth (int|None): optional depth cap
    jobs (int): number of parallel workers (joblib semantics, -1 for all cores)
    progress (bool): show a progress bar

    Returns:
    RandomForest - the trained forest, every tree carrying its cached OOB score
    '''
    if n_trees < 1:
        raise ConfigurationError(f'n_trees must be >= 1, got {n_trees}')
    if seed < 0:
        raise ConfigurationError(f'seed must be non-negative, got {seed}')
    if s is None:
        s = default_subset_size(train.schema.n_features)
    if not 1 <= s <= train.schema.n_features:
        raise ConfigurationError(f'Feature subset size s={s} must lie in [1, {train.schema.n_features}]')

    tasks = (delayed(_grow_tree)(train, i, s, seed, max_depth)
             for i in tqdm.tqdm(range(n_trees), desc='Growing trees', leave=False, disable=not progress))
    trees = Parallel(n_jobs=jobs)(tasks)

    substituted = [i for i, t in enumerate(trees) if t.oob_substituted]
    if substituted:
        tqdm.tqdm.write(f'WARNING: {len(substituted)} tree(s) had no out-of-bag records; '
                        'their OOB score is the in-bag accuracy')
        tqdm.tqdm.write(f' -> trees {substituted[:10]}{" ..." if len(substituted) > 10 else ""}')

    return RandomForest(trees=tuple(trees), s=s, seed=seed, schema=train.schema, max_depth=max_depth)


def _voters(voters: Union[RandomForest, Sequence[DecisionTree]]) -> Sequence[DecisionTree]:
    trees = voters.trees if isinstance(voters, RandomForest) else list(voters)
    if len(trees) == 0:
        raise UsageError('Cannot vote with an empty set of trees')
    return trees


def majority_vote(voters: Union[RandomForest, Sequence[DecisionTree]], row: Sequence[float]) -> int:
    ''' One vote per tree on an encoded record; ties go to the earliest class in schema order

    Parameters:
    voters (RandomForest|Sequence[DecisionTree]): the voting trees
    row (Sequence[float]): encoded record

    Returns:
    int - winning class code
    '''
    trees = _voters(voters)
    tally = [0] * trees[0].n_classes
    for tree in trees:
        tally[predict(tree, row)] += 1
    return tally.index(max(tally))


def predict_record(forest: RandomForest, record: Record) -> str:
    ''' Majority vote of the forest on a decoded record, returned as a class label
    '''
    return forest.schema.class_labels[majority_vote(forest, forest.schema.encode(record.values))]


def vote_counts(voters: Union[RandomForest, Sequence[DecisionTree]], X: np.ndarray) -> np.ndarray:
    ''' Number of votes per class for every row of `X` [n rows x n classes]
    '''
    trees = _voters(voters)
    n_rows = np.asarray(X).shape[0]
    votes = np.zeros((n_rows, trees[0].n_classes), dtype=np.int64)
    rows = np.arange(n_rows)
    for tree in trees:
        votes[rows, tree.predict_codes(X)] += 1
    return votes


def predict_batch(voters: Union[RandomForest, Sequence[DecisionTree]], X: np.ndarray) -> np.ndarray:
    ''' Majority vote for every row of `X`; agrees with `majority_vote` row by row
    '''
    return np.argmax(vote_counts(voters, X), axis=1)


def predict_scores(voters: Union[RandomForest, Sequence[DecisionTree]], X: np.ndarray) -> np.ndarray:
    ''' Per-class vote fractions for every row of `X`
    '''
    votes = vote_counts(voters, X)
    return votes / votes.sum(axis=1, keepdims=True)


def _check_tree_index(forest: RandomForest, tree_index: int) -> None:
    if not 0 <= tree_index < forest.n_trees:
        raise UsageError(f'Tree index {tree_index} out of range for a forest of {forest.n_trees} trees')


def label_vector(tree_index: int, forest: RandomForest, t: Dataset) -> LabelVector:
    ''' Predictions of one tree over every record of `t`

    Parameters:
    tree_index (int): position of the tree in the forest
    forest (RandomForest): the forest
    t (Dataset): dataset to classify, normally the training set

    Returns:
    LabelVector - class codes in record order
    '''
    _check_tree_index(forest, tree_index)
    return LabelVector(tree_index, forest.trees[tree_index].predict_codes(t.X))


def label_matrix(forest: RandomForest, t: Dataset, jobs: int = 1) -> np.ndarray:
    ''' All label vectors stacked [n_trees x n records], row i belonging to tree i
    '''
    rows = Parallel(n_jobs=jobs, prefer='threads')(delayed(tree.predict_codes)(t.X) for tree in forest.trees)
    return np.vstack(rows).astype(np.int64)


def oob_accuracy(tree_index: int, forest: RandomForest, train: Dataset) -> float:
    ''' Fraction of a tree's out-of-bag records it classifies correctly

    Parameters:
    tree_index (int): position of the tree in the forest
    forest (RandomForest): the forest
    train (Dataset): the training set the forest was grown on

    Returns:
    float - accuracy in [0, 1]
    '''
    _check_tree_index(forest, tree_index)
    tree = forest.trees[tree_index]
    if tree.oob.size == 0:
        raise EmptyOutOfBagError(f'Tree {tree_index} has no out-of-bag records')
    if tree.oob.max() >= train.n:
        raise UsageError(f'Tree {tree_index} was not grown on this training set')
    return float(np.mean(tree.predict_codes(train.X[tree.oob]) == train.y[tree.oob]))


def cached_oob_accuracy(tree_index: int, forest: RandomForest, train: Dataset) -> float:
    ''' OOB score stored at build time, recomputed only when the tree carries none
    '''
    _check_tree_index(forest, tree_index)
    score = forest.trees[tree_index].oob_score
    return oob_accuracy(tree_index, forest, train) if score is None else float(score)


def forest_to_container(forest: RandomForest) -> dict:
    ''' Plain, versioned representation of a forest
    '''
    trees = []
    for index, tree in zip(forest.tree_indices, forest.trees):
        trees.append({'tree_index': int(index), **tree.to_dict()})
    return {
        'format': FORMAT_TAG,
        'schema': forest.schema.to_dict(),
        'params': {
            'n_trees': forest.n_trees,
            'subset_size': forest.s,
            'seed': forest.seed,
            'max_depth': forest.max_depth,
        },
        'training': forest.training,
        'pruned_from': forest.pruned_from,
        'trees': trees,
    }


def forest_from_container(data: dict) -> RandomForest:
    if data.get('format') != FORMAT_TAG:
        raise ContainerError(f'Unknown container format {data.get("format")!r}, expected {FORMAT_TAG!r}')
    try:
        params = data['params']
        trees: List[DecisionTree] = [DecisionTree.from_dict(t) for t in data['trees']]
        forest = RandomForest(
            trees=tuple(trees),
            s=int(params['subset_size']),
            seed=int(params['seed']),
            schema=Schema.from_dict(data['schema']),
            max_depth=params.get('max_depth'),
            tree_indices=tuple(int(t['tree_index']) for t in data['trees']),
            training=data.get('training'),
            pruned_from=data.get('pruned_from'),
        )
    except (KeyError, TypeError, ValueError, UsageError) as excpt:
        raise ContainerError(f'Malformed forest container: {excpt}') from excpt
    if int(params['n_trees']) != forest.n_trees:
        raise ContainerError(f'Container declares {params["n_trees"]} trees but holds {forest.n_trees}')
    return forest


def save_forest(path: str, forest: RandomForest) -> None:
    ''' Persist a forest (or pruned ensemble) container
    '''
    write_container(path, forest_to_container(forest))


def load_forest(path: str) -> RandomForest:
    ''' Load a forest (or pruned ensemble) container
    '''
    return forest_from_container(read_container(path, FORMAT_TAG))
