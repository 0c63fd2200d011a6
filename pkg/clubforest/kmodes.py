import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Set, Tuple, Union

import numpy as np
import pandas as pd
import tqdm

from clubforest.errors import ConfigurationError, UsageError

DEFAULT_MAX_ITERATIONS = 100


class CategoricalPoint(NamedTuple):
    ''' A vector of categories plus the id of the object it describes (a tree index)
    '''
    values: tuple
    payload_id: int


@dataclass(frozen=True, eq=False)
class Clustering:
    ''' Result of a K-modes run

    Attributes:
    k (int): requested number of clusters
    assignments (np.ndarray): cluster id per point, in input order
    modes (np.ndarray): mode per cluster [k x m], in the input's categories
    cost (int): total matching dissimilarity of points to their cluster modes
    iterations (int): reassignment sweeps performed
    converged (bool): True when the last sweep moved nothing
    empty_clusters (int): clusters left empty after repair was exhausted
    cost_history (Tuple[int, ...]): cost after the initial allocation and after every sweep
    payload_ids (Tuple[int, ...]): payload id per point, in input order
    '''
    k: int
    assignments: np.ndarray
    modes: np.ndarray
    cost: int
    iterations: int
    converged: bool
    empty_clusters: int
    cost_history: Tuple[int, ...]
    payload_ids: Tuple[int, ...]

    def members(self, cluster: int) -> List[int]:
        ''' Payload ids of the points assigned to `cluster`
        '''
        return [self.payload_ids[i] for i in np.flatnonzero(self.assignments == cluster)]

    def non_empty(self) -> List[int]:
        ''' Ids of clusters holding at least one point, ascending
        '''
        return sorted(int(c) for c in np.unique(self.assignments))


def matching_dissimilarity(x: Union[CategoricalPoint, Sequence], y: Union[CategoricalPoint, Sequence]) -> int:
    ''' Number of positions at which two equal-length categorical vectors differ

    Parameters:
    x, y (CategoricalPoint|Sequence): the vectors to compare

    Returns:
    int - simple matching dissimilarity
    '''
    xv = np.asarray(x.values if isinstance(x, CategoricalPoint) else x, dtype=object)
    yv = np.asarray(y.values if isinstance(y, CategoricalPoint) else y, dtype=object)
    if xv.shape != yv.shape:
        raise UsageError(f'Cannot compare vectors of lengths {xv.shape[0]} and {yv.shape[0]}')
    return int(np.count_nonzero(xv != yv))


def rule_of_thumb_k(n: int) -> int:
    ''' Number of clusters for n points: round(sqrt(n / 2)), at least 1
    '''
    if n < 2:
        raise UsageError(f'The rule of thumb needs n >= 2, got {n}')
    return max(1, int(math.floor(math.sqrt(n / 2.0) + 0.5)))


def _encode_points(points) -> Tuple[np.ndarray, Tuple[int, ...], Optional[np.ndarray]]:
    ''' Turn the input into a code matrix; codes follow first-appearance order for generic points
    '''
    if isinstance(points, np.ndarray):
        if points.ndim != 2 or points.shape[0] == 0:
            raise UsageError('Expected a non-empty 2-D array of category codes')
        if not np.issubdtype(points.dtype, np.integer) or points.min() < 0:
            raise UsageError('Array input must hold non-negative integer category codes')
        return points.astype(np.int64), tuple(range(points.shape[0])), None

    points = list(points)
    if len(points) == 0:
        raise UsageError('Cannot cluster an empty set of points')
    width = len(points[0].values)
    if any(len(p.values) != width for p in points):
        raise UsageError('All points must have the same length')
    flat = [v for p in points for v in p.values]
    codes, uniques = pd.factorize(pd.Series(flat, dtype=object), sort=False)
    matrix = np.asarray(codes, dtype=np.int64).reshape(len(points), width)
    return matrix, tuple(int(p.payload_id) for p in points), np.asarray(uniques, dtype=object)


class _KModesState:
    ''' Frequency tables and modes, updated incrementally as points move
    '''
    def __init__(self, P: np.ndarray, k: int, initial: Sequence[int]):
        self.P = P
        n_points, width = P.shape
        self.cols = np.arange(width)
        self.freq = np.zeros((k, width, int(P.max()) + 1), dtype=np.int64)
        self.sizes = np.zeros(k, dtype=np.int64)
        self.modes = P[list(initial)].copy()
        self.assign = np.full(n_points, -1, dtype=np.int64)

    def distances(self, point: int) -> np.ndarray:
        return np.count_nonzero(self.modes != self.P[point], axis=1)

    def _refresh(self, cluster: int) -> None:
        # an empty cluster keeps its last mode; ties resolve to the lowest code
        if self.sizes[cluster] > 0:
            self.modes[cluster] = self.freq[cluster].argmax(axis=1)

    def add(self, point: int, cluster: int) -> None:
        self.freq[cluster, self.cols, self.P[point]] += 1
        self.sizes[cluster] += 1
        self.assign[point] = cluster
        self._refresh(cluster)

    def move(self, point: int, src: int, dst: int) -> None:
        self.freq[src, self.cols, self.P[point]] -= 1
        self.sizes[src] -= 1
        self._refresh(src)
        self.add(point, dst)

    def cost(self) -> int:
        return int(np.count_nonzero(self.modes[self.assign] != self.P))


def _initial_modes(P: np.ndarray, k: int, rng: np.random.Generator) -> List[int]:
    ''' k seeded random points, distinct vectors first, duplicates only when too few distinct exist
    '''
    order = rng.permutation(P.shape[0])
    chosen: List[int] = []
    seen: Set[bytes] = set()
    for idx in order:
        key = P[idx].tobytes()
        if key not in seen:
            seen.add(key)
            chosen.append(int(idx))
            if len(chosen) == k:
                return chosen
    taken = set(chosen)
    chosen.extend(int(i) for i in order if int(i) not in taken)
    return chosen[:k]


def _repair(state: _KModesState, empty: int, used: Set[Tuple[int, int]]) -> None:
    ''' Reseed an empty cluster with the member of the largest cluster farthest from its mode
    '''
    largest = int(np.argmax(state.sizes))
    if state.sizes[largest] <= 1:
        return
    members = np.flatnonzero(state.assign == largest)
    far = np.count_nonzero(state.P[members] != state.modes[largest], axis=1)
    point = int(members[int(np.argmax(far))])
    if (empty, point) in used:
        # repair is cycling; the cluster stays empty
        return
    used.add((empty, point))
    state.move(point, largest, empty)


def kmodes_cluster(points: Union[Sequence[CategoricalPoint], np.ndarray], k: int, seed: int = 0,
                   max_iterations: Optional[int] = DEFAULT_MAX_ITERATIONS) -> Clustering:
    ''' K-modes clustering under the simple matching dissimilarity

    1. k distinct points drawn with `seed` become the initial modes.
    2. Points are allocated in order to the nearest mode (ties to the lowest cluster id);
       the receiving cluster's mode is updated after each allocation.
    3. Sweeps re-test every point and move it when another mode is strictly nearer,
       updating both modes, until a sweep moves nothing or `max_iterations` is reached.

    A cluster emptied along the way is reseeded with the point farthest from its mode
    among the largest cluster's members; when that cycles the cluster stays empty and
    is counted in `empty_clusters`.

    Parameters:
    points (Sequence[CategoricalPoint]|np.ndarray): the points, or a matrix of
        non-negative category codes (row i gets payload id i)
    k (int): number of clusters, 1 <= k <= number of points
    seed (int): seed of the initial mode draw
    max_iterations (int|None): sweep limit, None for no limit

    Returns:
    Clustering - assignments, modes and bookkeeping
    '''
    P, payload_ids, categories = _encode_points(points)
    n_points = P.shape[0]
    if not 1 <= k <= n_points:
        raise ConfigurationError(f'k={k} must lie in [1, {n_points}]')
    if max_iterations is not None and max_iterations < 1:
        raise ConfigurationError(f'max_iterations must be >= 1, got {max_iterations}')

    rng = np.random.default_rng(seed)
    state = _KModesState(P, k, _initial_modes(P, k, rng))
    used: Set[Tuple[int, int]] = set()

    for point in range(n_points):
        state.add(point, int(np.argmin(state.distances(point))))
    for cluster in range(k):
        if state.sizes[cluster] == 0:
            _repair(state, cluster, used)

    history = [state.cost()]
    iterations = 0
    converged = False
    while max_iterations is None or iterations < max_iterations:
        iterations += 1
        moves = 0
        for point in range(n_points):
            current = int(state.assign[point])
            dist = state.distances(point)
            nearest = int(np.argmin(dist))
            if dist[nearest] < dist[current]:
                state.move(point, current, nearest)
                moves += 1
                if state.sizes[current] == 0:
                    _repair(state, current, used)
        cost = state.cost()
        if cost > history[-1]:
            raise RuntimeError(f'K-modes cost increased from {history[-1]} to {cost} in sweep {iterations}')
        history.append(cost)
        if moves == 0:
            converged = True
            break

    empty = int(np.count_nonzero(state.sizes == 0))
    if empty:
        tqdm.tqdm.write(f'WARNING: {empty} of {k} clusters are empty after repair')

    modes = state.modes if categories is None else categories[state.modes]
    return Clustering(
        k=k,
        assignments=state.assign.copy(),
        modes=modes,
        cost=history[-1],
        iterations=iterations,
        converged=converged,
        empty_clusters=empty,
        cost_history=tuple(history),
        payload_ids=payload_ids,
    )
