import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Tuple

import numpy as np

from clubforest.dataset import Dataset
from clubforest.errors import ConfigurationError, UsageError
from clubforest.forest import RandomForest, cached_oob_accuracy, label_matrix
from clubforest.kmodes import DEFAULT_MAX_ITERATIONS, Clustering, kmodes_cluster

OOB_BEST = 'oob_best'
RANDOM = 'random'
POLICIES = (OOB_BEST, RANDOM)

# k values swept by the experiment protocol
DEFAULT_K_LIST = (5, 10, 15, 20, 25, 30, 35, 40)


@dataclass(frozen=True, eq=False)
class PrunedEnsemble:
    ''' Outcome of clustering-based pruning

    Attributes:
    representative_tree_indices (Tuple[int, ...]): one parent tree per non-empty cluster, by cluster id
    k_requested (int): number of clusters asked for
    k_effective (int): number of non-empty clusters
    parent_size (int): number of trees in the parent forest
    pruning_level (Fraction): exact 100 * (1 - k_effective / parent_size)
    policy (str): representative selection policy
    seed (int): seed of the clustering (and of random selection)
    cluster_fraction (float): fraction of training records the label vectors covered
    clustering (Clustering): the underlying K-modes result
    '''
    representative_tree_indices: Tuple[int, ...]
    k_requested: int
    k_effective: int
    parent_size: int
    pruning_level: Fraction
    policy: str
    seed: int
    cluster_fraction: float
    clustering: Clustering

    @property
    def pruning_percent(self) -> int:
        ''' Pruning level rounded to the nearest integer percent
        '''
        return pruning_percent(self.parent_size, self.k_effective)

    @property
    def speedup(self) -> float:
        return speedup_estimate(self.parent_size, self.k_effective)

    def metadata(self, parent: RandomForest) -> dict:
        ''' The `pruned_from` block stored in pruned ensemble containers
        '''
        return {
            'parent_seed': parent.seed,
            'parent_size': self.parent_size,
            'k': self.k_requested,
            'k_effective': self.k_effective,
            'policy': self.policy,
            'cluster_seed': self.seed,
            'cluster_fraction': self.cluster_fraction,
            'representatives': [int(parent.tree_indices[i]) for i in self.representative_tree_indices],
            'pruning_level': f'{self.pruning_level.numerator}/{self.pruning_level.denominator}',
            'pruning_percent': self.pruning_percent,
            'empty_clusters': self.clustering.empty_clusters,
            'kmodes_cost': self.clustering.cost,
            'kmodes_iterations': self.clustering.iterations,
        }

    def ensemble(self, parent: RandomForest) -> RandomForest:
        ''' The representatives as a forest that votes like any other
        '''
        return parent.subforest(self.representative_tree_indices, pruned_from=self.metadata(parent))


def pruning_level(parent_size: int, pruned_size: int) -> Fraction:
    ''' Size reduction in percent, 100 * (1 - pruned_size / parent_size), as an exact fraction
    '''
    if not 1 <= pruned_size <= parent_size:
        raise UsageError(f'Expected 1 <= pruned_size <= parent_size, got {pruned_size} and {parent_size}')
    return 100 * (1 - Fraction(pruned_size, parent_size))


def pruning_percent(parent_size: int, pruned_size: int) -> int:
    ''' Pruning level rounded to the nearest integer percent, halves rounded up
    '''
    return int(math.floor(pruning_level(parent_size, pruned_size) + Fraction(1, 2)))


def speedup_estimate(parent_size: int, pruned_size: int) -> float:
    ''' Classification speedup under the model that trees traversed dominate the cost
    '''
    if not 1 <= pruned_size <= parent_size:
        raise UsageError(f'Expected 1 <= pruned_size <= parent_size, got {pruned_size} and {parent_size}')
    return parent_size / pruned_size


def select_representative(cluster_members: Sequence[int], forest: RandomForest, train: Dataset,
                          policy: str = OOB_BEST, rng: Optional[np.random.Generator] = None) -> int:
    ''' Pick the tree that stands for a cluster

    Parameters:
    cluster_members (Sequence[int]): tree positions in the cluster
    forest (RandomForest): the parent forest
    train (Dataset): training set, used when a tree carries no cached OOB score
    policy (str): 'oob_best' (highest OOB accuracy, ties to the lowest index) or 'random'
    rng (np.random.Generator|None): stream used by the 'random' policy

    Returns:
    int - position of the representative in the forest
    '''
    if len(cluster_members) == 0:
        raise UsageError('Cannot select a representative from an empty cluster')
    members = sorted(int(m) for m in cluster_members)
    if policy == RANDOM:
        if rng is None:
            raise UsageError('The random policy needs a random stream')
        return int(rng.choice(members))
    if policy != OOB_BEST:
        raise ConfigurationError(f'Unknown representative policy "{policy}", expected one of {POLICIES}')

    best, best_score = members[0], cached_oob_accuracy(members[0], forest, train)
    for member in members[1:]:
        score = cached_oob_accuracy(member, forest, train)
        if score > best_score:
            best, best_score = member, score
    return best


def club_drf(forest: RandomForest, train: Dataset, k: int, seed: int = 0, policy: str = OOB_BEST,
             cluster_fraction: float = 1.0, max_iterations: Optional[int] = DEFAULT_MAX_ITERATIONS,
             jobs: int = 1, label_vectors: Optional[np.ndarray] = None) -> PrunedEnsemble:
    ''' Prune a forest down to one representative tree per cluster of similar behaviour

    Every tree's label vector over the training set is clustered with K-modes, then one
    representative per non-empty cluster is kept.

    Parameters:
    forest (RandomForest): the parent forest
    train (Dataset): the training set the forest was grown on
    k (int): number of clusters, 1 <= k <= forest size
    seed (int): seed of the clustering, the record subsample and random selection
    policy (str): 'oob_best' or 'random'
    cluster_fraction (float): fraction of training records the label vectors cover
    max_iterations (int|None): K-modes sweep limit
    jobs (int): workers used to extract label vectors
    label_vectors (np.ndarray|None): precomputed `label_matrix(forest, train)`, reused across k values

    Returns:
    PrunedEnsemble - selected representatives and bookkeeping
    '''
    if not 1 <= k <= forest.n_trees:
        raise ConfigurationError(f'k={k} must lie in [1, {forest.n_trees}]')
    if policy not in POLICIES:
        raise ConfigurationError(f'Unknown representative policy "{policy}", expected one of {POLICIES}')
    if not 0.0 < cluster_fraction <= 1.0:
        raise ConfigurationError(f'cluster_fraction must lie in (0, 1], got {cluster_fraction}')

    streams = np.random.SeedSequence(entropy=seed).spawn(2)
    records = train
    if cluster_fraction < 1.0:
        size = max(1, int(math.ceil(cluster_fraction * train.n)))
        picked = np.sort(np.random.default_rng(streams[0]).choice(train.n, size=size, replace=False))
        records = train.subset(picked)

    if label_vectors is None:
        vectors = label_matrix(forest, records, jobs=jobs)
    else:
        vectors = np.asarray(label_vectors)
        if vectors.shape != (forest.n_trees, train.n):
            raise UsageError(f'label_vectors must have shape {(forest.n_trees, train.n)}')
        if cluster_fraction < 1.0:
            vectors = vectors[:, picked]
    clustering = kmodes_cluster(vectors, k, seed=seed, max_iterations=max_iterations)

    rng = np.random.default_rng(streams[1])
    representatives = tuple(
        select_representative(clustering.members(c), forest, train, policy=policy, rng=rng)
        for c in clustering.non_empty()
    )
    return PrunedEnsemble(
        representative_tree_indices=representatives,
        k_requested=k,
        k_effective=len(representatives),
        parent_size=forest.n_trees,
        pruning_level=pruning_level(forest.n_trees, len(representatives)),
        policy=policy,
        seed=seed,
        cluster_fraction=cluster_fraction,
        clustering=clustering,
    )


def check_representatives(pruned: PrunedEnsemble, forest: RandomForest, train: Dataset) -> None:
    ''' Raise if an oob_best representative is beaten by another member of its cluster
    '''
    if pruned.policy != OOB_BEST:
        return
    for cluster, rep in zip(pruned.clustering.non_empty(), pruned.representative_tree_indices):
        rep_score = cached_oob_accuracy(rep, forest, train)
        for member in pruned.clustering.members(cluster):
            if cached_oob_accuracy(member, forest, train) > rep_score:
                raise RuntimeError(f'Tree {member} beats representative {rep} of cluster {cluster}')
