import os
import time
import traceback
import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import tqdm

from clubforest.analysis import (bias_variance_many, ensemble_diversity,
                                 evaluate)
from clubforest.clubdrf import (DEFAULT_K_LIST, OOB_BEST, POLICIES,
                                check_representatives, club_drf,
                                pruning_level, pruning_percent,
                                speedup_estimate)
from clubforest.dataset import (Dataset, holdout_split, impute_numeric,
                                load_dataset_file)
from clubforest.errors import ClubForestError, ConfigurationError, InputError
from clubforest.forest import (RandomForest, label_matrix, majority_vote,
                               predict_batch, predict_scores, train_forest)
from clubforest.io import read_yaml, write_table, write_yaml

REPORT_FORMAT = 'clubforest-report/1'
SEED_RULE = ('seed = SeedSequence([master_seed, crc32(dataset name), run, stream, *extra]); '
             'stream 0: holdout split, 1: forest, 2: clustering (extra = k), 3: random subsets (extra = k), '
             '4: bias/variance')

RF = 'rf'
CLUB_DRF = 'club_drf'
RF_SAME_SIZE = 'rf_same_size'

# accuracy differences below this count as ties
TIE_TOLERANCE = 1e-9

# settings that never change a result, left out of report.yaml
RUNTIME_KEYS = ('jobs', 'out')


@dataclass
class ExperimentConfig:
    ''' Parameters of the experimental protocol; defaults are 500 trees, a 66/34 split and 10 runs

    Attributes:
    datasets (List[str]): dataset files (csv or arff)
    class_column (str|None): class column name or position, the last column if None
    train_fraction (float): holdout training fraction
    n_trees (int): parent forest size
    subset_size (int|None): feature subset size, floor(sqrt(F)) if None
    k_list (Tuple[int, ...]): cluster counts to sweep
    runs (int): runs per dataset, each with a fresh split and forest
    seed (int): master seed
    policy (str): representative policy, 'oob_best' or 'random'
    out (str): output directory
    jobs (int): parallel workers for tree growing and label vectors
    max_depth (int|None): optional tree depth cap
    cluster_fraction (float): fraction of training records label vectors cover
    bias_variance_reps (int): resamples for the bias/variance tables, 0 disables them
    diversity_draws (int): random subsets compared against each pruned ensemble
    '''
    datasets: List[str] = field(default_factory=list)
    class_column: Optional[str] = None
    train_fraction: float = 0.66
    n_trees: int = 500
    subset_size: Optional[int] = None
    k_list: Tuple[int, ...] = DEFAULT_K_LIST
    runs: int = 10
    seed: int = 0
    policy: str = OOB_BEST
    out: str = 'clubforest-report'
    jobs: int = 1
    max_depth: Optional[int] = None
    cluster_fraction: float = 1.0
    bias_variance_reps: int = 10
    diversity_draws: int = 10

    def validate(self) -> 'ExperimentConfig':
        ''' Raise ConfigurationError for any invalid field; returns self
        '''
        if self.runs < 1:
            raise ConfigurationError(f'runs must be >= 1, got {self.runs}')
        if self.n_trees < 1:
            raise ConfigurationError(f'n_trees must be >= 1, got {self.n_trees}')
        if len(self.k_list) == 0:
            raise ConfigurationError('k_list must not be empty')
        for k in self.k_list:
            if not 1 <= k <= self.n_trees:
                raise ConfigurationError(f'k={k} must lie in [1, n_trees={self.n_trees}]')
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigurationError(f'train_fraction must lie in (0, 1), got {self.train_fraction}')
        if self.policy not in POLICIES:
            raise ConfigurationError(f'Unknown policy "{self.policy}", expected one of {POLICIES}')
        if not 0.0 < self.cluster_fraction <= 1.0:
            raise ConfigurationError(f'cluster_fraction must lie in (0, 1], got {self.cluster_fraction}')
        if self.bias_variance_reps < 0 or self.bias_variance_reps == 1:
            raise ConfigurationError('bias_variance_reps must be 0 (disabled) or >= 2')
        if self.diversity_draws < 1:
            raise ConfigurationError(f'diversity_draws must be >= 1, got {self.diversity_draws}')
        if self.seed < 0:
            raise ConfigurationError(f'seed must be non-negative, got {self.seed}')
        if self.subset_size is not None and self.subset_size < 1:
            raise ConfigurationError(f'subset_size must be >= 1, got {self.subset_size}')
        return self

    def to_dict(self) -> dict:
        data = asdict(self)
        data['datasets'] = list(self.datasets)
        data['k_list'] = list(self.k_list)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> 'ExperimentConfig':
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f'Unknown configuration keys: {unknown}')
        data = dict(data)
        if 'k_list' in data:
            data['k_list'] = parse_k_list(data['k_list'])
        if isinstance(data.get('datasets'), str):
            data['datasets'] = [data['datasets']]
        return cls(**data)

    def updated(self, **overrides) -> 'ExperimentConfig':
        ''' Copy with every override that is not None applied
        '''
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def load_config(path: str) -> ExperimentConfig:
    ''' Read an ExperimentConfig from a yaml file
    '''
    return ExperimentConfig.from_dict(read_yaml(path))


def parse_k_list(value) -> Tuple[int, ...]:
    ''' Accept "5,10,15", a single int, or a sequence of ints
    '''
    if isinstance(value, int):
        return (value,)
    if isinstance(value, str):
        parts = [p.strip() for p in value.split(',') if p.strip()]
    else:
        parts = list(value)
    try:
        return tuple(int(p) for p in parts)
    except (TypeError, ValueError) as excpt:
        raise ConfigurationError(f'Invalid k list {value!r}') from excpt


def dataset_name(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def derive_seed(master: int, name: str, run: int, stream: int, *extra: int) -> int:
    ''' Seed of one random stream of the protocol, see SEED_RULE
    '''
    entropy = [int(master), zlib.crc32(name.encode('utf-8')), int(run), int(stream), *(int(e) for e in extra)]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


@dataclass(frozen=True)
class ForestLearner:
    ''' Learner for bias/variance estimation: grows one forest per resample and predicts with it,
    with its CLUB-DRF ensemble and with its first k trees for every k

    Attributes:
    n_trees (int): forest size
    k_list (Tuple[int, ...]): cluster counts; empty keeps only the whole forest
    s (int|None): feature subset size
    policy (str): representative policy
    cluster_fraction (float): fraction of training records label vectors cover
    max_depth (int|None): optional depth cap
    jobs (int): parallel workers
    '''
    n_trees: int
    k_list: Tuple[int, ...] = ()
    s: Optional[int] = None
    policy: str = OOB_BEST
    cluster_fraction: float = 1.0
    max_depth: Optional[int] = None
    jobs: int = 1

    @classmethod
    def from_config(cls, config: ExperimentConfig) -> 'ForestLearner':
        return cls(config.n_trees, tuple(config.k_list), config.subset_size, config.policy,
                   config.cluster_fraction, config.max_depth, config.jobs)

    def __call__(self, train: Dataset, test: Dataset, seed: int) -> Dict[str, np.ndarray]:
        ''' Predicted codes for `test`, keyed 'rf', 'club_drf:<k>' and 'rf_same_size:<k>'
        '''
        forest = train_forest(train, self.n_trees, self.s, seed, max_depth=self.max_depth, jobs=self.jobs,
                              progress=False)
        out = {RF: predict_batch(forest, test.X)}
        if not self.k_list:
            return out
        vectors = label_matrix(forest, train, jobs=self.jobs)
        for k in self.k_list:
            pruned = club_drf(forest, train, k, seed=seed, policy=self.policy,
                              cluster_fraction=self.cluster_fraction, label_vectors=vectors)
            out[f'{CLUB_DRF}:{k}'] = predict_batch(pruned.ensemble(forest), test.X)
            out[f'{RF_SAME_SIZE}:{k}'] = predict_batch(forest.subforest(range(k)), test.X)
        return out


@dataclass
class ExperimentReport:
    ''' Every table produced by one experiment

    Tables are pandas DataFrames with fixed column orders; `bias_variance` and
    `bias_variance_pruning` are empty when bias/variance estimation is disabled.
    '''
    config: ExperimentConfig
    runs: pd.DataFrame
    summary: pd.DataFrame
    rf_summary: pd.DataFrame
    wins: pd.DataFrame
    pruning: pd.DataFrame
    diversity: pd.DataFrame
    bias_variance: pd.DataFrame
    bias_variance_pruning: pd.DataFrame
    speedup: pd.DataFrame
    failures: List[dict] = field(default_factory=list)

    def header(self) -> dict:
        from clubforest import __version__
        return {
            'format': REPORT_FORMAT,
            'version': __version__,
            'master_seed': self.config.seed,
            'seed_rule': SEED_RULE,
            'config': {k: v for k, v in self.config.to_dict().items() if k not in RUNTIME_KEYS},
            'datasets': [dataset_name(p) for p in self.config.datasets],
            'failures': self.failures,
        }


RUN_COLUMNS = ['dataset', 'run', 'model', 'k', 'size', 'accuracy', 'f_measure', 'auc',
               'auc_from_scores', 'pruning_level', 'estimated_speedup', 'empty_clusters', 'kmodes_iterations']
DIVERSITY_COLUMNS = ['dataset', 'run', 'k', 'size', 'pairs',
                     'club_diversity', 'random_diversity', 'club_at_least_random',
                     'club_disagreement', 'random_disagreement', 'club_double_fault', 'random_double_fault',
                     'forest_diversity', 'forest_disagreement', 'forest_double_fault']
BIAS_VARIANCE_COLUMNS = ['dataset', 'model', 'k', 'size', 'bias', 'variance', 'repetitions']


def _eval_row(name: str, run: int, model: str, k: Optional[int], ensemble: RandomForest,
              test: Dataset, parent_size: int) -> dict:
    scores = predict_scores(ensemble, test.X)
    report = evaluate(np.argmax(scores, axis=1), test.y, test.schema, scores=scores)
    return {
        'dataset': name,
        'run': run,
        'model': model,
        'k': k,
        'size': ensemble.n_trees,
        'accuracy': report.accuracy,
        'f_measure': report.f_measure,
        'auc': report.auc,
        'auc_from_scores': report.auc_from_scores,
        'pruning_level': pruning_percent(parent_size, ensemble.n_trees),
        'estimated_speedup': speedup_estimate(parent_size, ensemble.n_trees),
        'empty_clusters': None,
        'kmodes_iterations': None,
    }


def _diversity_row(name: str, run: int, k: int, vectors: np.ndarray, representatives: Sequence[int],
                   truth: np.ndarray, forest_div: dict, draws: int, seed: int) -> dict:
    size = len(representatives)
    club = ensemble_diversity(vectors[list(representatives)], truth)
    rng = np.random.default_rng(seed)
    random_divs = []
    for _ in range(draws):
        subset = np.sort(rng.choice(vectors.shape[0], size=size, replace=False))
        random_divs.append(ensemble_diversity(vectors[subset], truth))

    def _mean(key):
        values = [r[key] for r in random_divs if r[key] is not None]
        return float(np.mean(values)) if values else None

    at_least = None
    if club['diversity'] is not None:
        at_least = int(sum(club['diversity'] >= r['diversity'] - TIE_TOLERANCE for r in random_divs))
    return {
        'dataset': name,
        'run': run,
        'k': k,
        'size': size,
        'pairs': club['pairs'],
        'club_diversity': club['diversity'],
        'random_diversity': _mean('diversity'),
        'club_at_least_random': at_least,
        'club_disagreement': club['disagreement'],
        'random_disagreement': _mean('disagreement'),
        'club_double_fault': club['double_fault'],
        'random_double_fault': _mean('double_fault'),
        'forest_diversity': forest_div['diversity'],
        'forest_disagreement': forest_div['disagreement'],
        'forest_double_fault': forest_div['double_fault'],
    }


def run_dataset(name: str, d: Dataset, config: ExperimentConfig,
                progress: bool = True) -> Tuple[List[dict], List[dict], List[dict]]:
    ''' All runs of the protocol on one dataset

    Parameters:
    name (str): dataset name used in seeds and reports
    d (Dataset): the dataset
    config (ExperimentConfig): validated configuration
    progress (bool): show progress bars

    Returns:
    Tuple[List[dict], List[dict], List[dict]] - (run rows, diversity rows, bias/variance rows)
    '''
    run_rows: List[dict] = []
    diversity_rows: List[dict] = []
    for run in tqdm.tqdm(range(config.runs), desc=f'{name} runs', leave=False, disable=not progress):
        train, test = holdout_split(d, config.train_fraction, derive_seed(config.seed, name, run, 0))
        train, test = impute_numeric(train, test)
        forest = train_forest(train, config.n_trees, config.subset_size, derive_seed(config.seed, name, run, 1),
                              max_depth=config.max_depth, jobs=config.jobs, progress=progress)
        run_rows.append(_eval_row(name, run, RF, None, forest, test, forest.n_trees))

        vectors = label_matrix(forest, train, jobs=config.jobs)
        forest_div = ensemble_diversity(vectors, train.y)
        for k in config.k_list:
            pruned = club_drf(forest, train, k, seed=derive_seed(config.seed, name, run, 2, k),
                              policy=config.policy, cluster_fraction=config.cluster_fraction,
                              label_vectors=vectors)
            check_representatives(pruned, forest, train)
            row = _eval_row(name, run, CLUB_DRF, k, pruned.ensemble(forest), test, forest.n_trees)
            row['empty_clusters'] = pruned.clustering.empty_clusters
            row['kmodes_iterations'] = pruned.clustering.iterations
            run_rows.append(row)
            run_rows.append(_eval_row(name, run, RF_SAME_SIZE, k, forest.subforest(range(k)), test, forest.n_trees))
            diversity_rows.append(_diversity_row(name, run, k, vectors, pruned.representative_tree_indices,
                                                 train.y, forest_div, config.diversity_draws,
                                                 derive_seed(config.seed, name, run, 3, k)))

    bias_rows: List[dict] = []
    if config.bias_variance_reps >= 2:
        results = bias_variance_many(ForestLearner.from_config(config), d, config.bias_variance_reps,
                                     seed=derive_seed(config.seed, name, 0, 4),
                                     train_fraction=config.train_fraction, progress=progress)
        for key, decomposition in results.items():
            model, _, k = key.partition(':')
            bias_rows.append({
                'dataset': name,
                'model': model,
                'k': int(k) if k else None,
                'size': int(k) if k else config.n_trees,
                'bias': decomposition.bias,
                'variance': decomposition.variance,
                'repetitions': decomposition.repetitions,
            })
    return run_rows, diversity_rows, bias_rows


def _summarize(runs: pd.DataFrame) -> Tuple[pd.DataFrame, pd.DataFrame]:
    pruned = runs[runs['model'] != RF]
    summary = pruned.groupby(['dataset', 'model', 'k'], sort=False).agg(
        accuracy_mean=('accuracy', 'mean'),
        accuracy_min=('accuracy', 'min'),
        accuracy_max=('accuracy', 'max'),
        accuracy_std=('accuracy', 'std'),
        f_measure=('f_measure', 'mean'),
        auc=('auc', 'mean'),
        size_mean=('size', 'mean'),
        size_min=('size', 'min'),
        pruning_level_min=('pruning_level', 'min'),
        pruning_level_max=('pruning_level', 'max'),
    ).reset_index()
    summary['accuracy_std'] = summary['accuracy_std'].fillna(0.0)
    summary['k'] = summary['k'].astype(int)

    rf_summary = runs[runs['model'] == RF].groupby('dataset', sort=False).agg(
        accuracy_mean=('accuracy', 'mean'),
        accuracy_min=('accuracy', 'min'),
        accuracy_max=('accuracy', 'max'),
        accuracy_std=('accuracy', 'std'),
        f_measure=('f_measure', 'mean'),
        auc=('auc', 'mean'),
        size=('size', 'first'),
    ).reset_index()
    rf_summary['accuracy_std'] = rf_summary['accuracy_std'].fillna(0.0)
    return summary, rf_summary


def _wins_and_pruning(summary: pd.DataFrame, rf_summary: pd.DataFrame, config: ExperimentConfig
                      ) -> Tuple[pd.DataFrame, pd.DataFrame]:
    club = summary[summary['model'] == CLUB_DRF].merge(
        rf_summary[['dataset', 'accuracy_mean']].rename(columns={'accuracy_mean': 'rf_accuracy'}), on='dataset')
    diff = club['accuracy_mean'] - club['rf_accuracy']
    club = club.assign(win=diff > TIE_TOLERANCE, tie=diff.abs() <= TIE_TOLERANCE, loss=diff < -TIE_TOLERANCE)

    wins = []
    for k in config.k_list:
        at_k = club[club['k'] == k]
        wins.append({
            'k': k,
            'pruning_level': pruning_percent(config.n_trees, k),
            'club_wins': int(at_k['win'].sum()),
            'ties': int(at_k['tie'].sum()),
            'rf_wins': int(at_k['loss'].sum()),
        })

    pruning = []
    for name, rows in club.groupby('dataset', sort=False):
        matching = rows[rows['win'] | rows['tie']]
        best = rows.sort_values(['accuracy_mean', 'k'], ascending=[False, True], kind='mergesort').iloc[0]
        pruning.append({
            'dataset': name,
            'rf_accuracy': float(rows['rf_accuracy'].iloc[0]),
            'max_pruning_level': int(matching['pruning_level_min'].max()) if len(matching) else None,
            'best_k': int(best['k']),
            'best_accuracy': float(best['accuracy_mean']),
            'best_pruning_level': int(best['pruning_level_min']),
        })
    return (pd.DataFrame(wins, columns=['k', 'pruning_level', 'club_wins', 'ties', 'rf_wins']),
            pd.DataFrame(pruning, columns=['dataset', 'rf_accuracy', 'max_pruning_level', 'best_k',
                                           'best_accuracy', 'best_pruning_level']).astype({'max_pruning_level': 'Int64'}))


def _bias_variance_pruning(bias_variance: pd.DataFrame, n_trees: int) -> pd.DataFrame:
    ''' Per dataset and measure: pruning level of the best CLUB-DRF and of the smallest one beating RF
    '''
    rows = []
    for name, group in bias_variance.groupby('dataset', sort=False):
        rf_row = group[group['model'] == RF]
        club = group[group['model'] == CLUB_DRF]
        if rf_row.empty or club.empty:
            continue
        for measure in ('bias', 'variance'):
            rf_value = float(rf_row[measure].iloc[0])
            best = club.sort_values([measure, 'k'], kind='mergesort').iloc[0]
            better = club[club[measure] < rf_value - TIE_TOLERANCE]
            smallest = better.sort_values('k', kind='mergesort').iloc[0] if len(better) else None
            rows.append({
                'dataset': name,
                'measure': measure,
                'rf_value': rf_value,
                'best_k': int(best['k']),
                'best_value': float(best[measure]),
                'best_pruning_level': pruning_percent(n_trees, int(best['k'])),
                'smallest_outperforming_k': None if smallest is None else int(smallest['k']),
                'smallest_outperforming_pruning_level':
                    None if smallest is None else pruning_percent(n_trees, int(smallest['k'])),
            })
    return pd.DataFrame(rows, columns=['dataset', 'measure', 'rf_value', 'best_k', 'best_value', 'best_pruning_level',
                                       'smallest_outperforming_k', 'smallest_outperforming_pruning_level']).astype(
        {'smallest_outperforming_k': 'Int64', 'smallest_outperforming_pruning_level': 'Int64'})


def _speedup_table(config: ExperimentConfig) -> pd.DataFrame:
    rows = []
    for k in config.k_list:
        level = pruning_level(config.n_trees, k)
        rows.append({
            'k': k,
            'pruning_level_exact': f'{level.numerator}/{level.denominator}',
            'pruning_level': pruning_percent(config.n_trees, k),
            'estimated_speedup': speedup_estimate(config.n_trees, k),
        })
    return pd.DataFrame(rows, columns=['k', 'pruning_level_exact', 'pruning_level', 'estimated_speedup'])


def run_experiment(config: ExperimentConfig, progress: bool = True) -> ExperimentReport:
    ''' Run the full protocol on every configured dataset

    A dataset that fails at any stage is recorded in `failures` and skipped; the other
    datasets still run.

    Parameters:
    config (ExperimentConfig): the configuration, validated here
    progress (bool): show progress bars

    Returns:
    ExperimentReport - all tables
    '''
    config.validate()
    run_rows: List[dict] = []
    diversity_rows: List[dict] = []
    bias_rows: List[dict] = []
    failures: List[dict] = []

    for path in tqdm.tqdm(config.datasets, desc='Datasets', disable=not progress):
        name = dataset_name(path)
        stage = 'load'
        try:
            d = load_dataset_file(path, class_column=config.class_column)
            stage = 'protocol'
            runs, divs, biases = run_dataset(name, d, config, progress=progress)
        except Exception as excpt: # pylint: disable=broad-except
            tqdm.tqdm.write(f'ERROR! Dataset "{name}" failed during {stage}:')
            tqdm.tqdm.write(traceback.format_exc())
            failures.append({
                'dataset': name,
                'path': path,
                'stage': stage,
                'error_type': type(excpt).__name__,
                'message': str(excpt),
                'exit_code': excpt.exit_code if isinstance(excpt, ClubForestError) else ClubForestError.exit_code,
            })
            continue
        run_rows.extend(runs)
        diversity_rows.extend(divs)
        bias_rows.extend(biases)

    runs_df = pd.DataFrame(run_rows, columns=RUN_COLUMNS).astype(
        {'k': 'Int64', 'empty_clusters': 'Int64', 'kmodes_iterations': 'Int64'})
    if run_rows:
        summary, rf_summary = _summarize(runs_df)
        wins, pruning = _wins_and_pruning(summary, rf_summary, config)
    else:
        summary, rf_summary = pd.DataFrame(), pd.DataFrame()
        wins, pruning = pd.DataFrame(), pd.DataFrame()

    diversity = pd.DataFrame(diversity_rows, columns=DIVERSITY_COLUMNS).astype({'club_at_least_random': 'Int64'})
    bias_variance = pd.DataFrame(bias_rows, columns=BIAS_VARIANCE_COLUMNS).astype({'k': 'Int64'})
    return ExperimentReport(
        config=config,
        runs=runs_df,
        summary=summary,
        rf_summary=rf_summary,
        wins=wins,
        pruning=pruning,
        diversity=diversity,
        bias_variance=bias_variance,
        bias_variance_pruning=_bias_variance_pruning(bias_variance, config.n_trees),
        speedup=_speedup_table(config),
        failures=failures,
    )


def write_report(report: ExperimentReport, out_dir: Optional[str] = None) -> List[str]:
    ''' Write every report table as csv plus the yaml summary

    Parameters:
    report (ExperimentReport): the report
    out_dir (str|None): destination directory, `report.config.out` if None

    Returns:
    List[str] - paths written
    '''
    out_dir = report.config.out if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    tables = {
        'runs.csv': report.runs,
        'summary.csv': report.summary,
        'rf_summary.csv': report.rf_summary,
        'wins.csv': report.wins,
        'pruning.csv': report.pruning,
        'diversity.csv': report.diversity,
        'speedup.csv': report.speedup,
    }
    if len(report.bias_variance):
        tables['bias_variance.csv'] = report.bias_variance
        tables['bias_variance_pruning.csv'] = report.bias_variance_pruning

    written = []
    for filename, table in tables.items():
        path = os.path.join(out_dir, filename)
        write_table(path, table)
        written.append(path)
    summary_path = os.path.join(out_dir, 'report.yaml')
    write_yaml(summary_path, report.header())
    written.append(summary_path)
    return written


def training_provenance(path: str, class_column: Optional[str], train_fraction: Optional[float],
                        split_seed: int, train: Dataset) -> dict:
    ''' The `training` block stored in forest containers
    '''
    return {
        'dataset': path,
        'class_column': class_column,
        'train_fraction': train_fraction,
        'split_seed': split_seed,
        'n_records': train.n,
        'fingerprint': train.fingerprint(),
    }


def prepare_data(path: str, class_column: Optional[str] = None, train_fraction: Optional[float] = None,
                 split_seed: int = 0) -> Tuple[Dataset, Dataset]:
    ''' Load a dataset and split it; without a train fraction the whole dataset serves as both parts

    Returns:
    Tuple[Dataset, Dataset] - (train, test), numeric gaps imputed from train
    '''
    d = load_dataset_file(path, class_column=class_column)
    if train_fraction is None:
        train, test = d, d
    else:
        train, test = holdout_split(d, train_fraction, split_seed)
    train, test = impute_numeric(train, test)
    return train, test


def data_for_forest(forest: RandomForest, dataset: Optional[str] = None,
                    class_column: Optional[str] = None) -> Tuple[Dataset, Dataset]:
    ''' Rebuild the (train, test) pair a persisted forest was grown with

    Parameters:
    forest (RandomForest): forest or pruned ensemble loaded from a container
    dataset (str|None): dataset path overriding the stored provenance
    class_column (str|None): class column overriding the stored provenance

    Returns:
    Tuple[Dataset, Dataset] - (train, test)
    '''
    provenance = forest.training or {}
    path = dataset or provenance.get('dataset')
    if path is None:
        raise InputError('The forest does not record its training data; pass a dataset explicitly')
    if class_column is None:
        class_column = provenance.get('class_column')
    train, test = prepare_data(path, class_column, provenance.get('train_fraction'), provenance.get('split_seed', 0))
    if provenance.get('fingerprint') and provenance['fingerprint'] != train.fingerprint():
        raise InputError(f'Training records rebuilt from "{path}" do not match the ones the forest was grown on')
    if train.schema != forest.schema:
        raise InputError(f'Dataset "{path}" does not match the schema of the forest')
    return train, test


def benchmark(full: RandomForest, pruned: RandomForest, test: Dataset, iterations: int = 3,
              progress: bool = True) -> pd.DataFrame:
    ''' Measure per-record classification latency of two ensembles, one record at a time

    Parameters:
    full (RandomForest): the parent forest
    pruned (RandomForest): the pruned ensemble
    test (Dataset): records to classify
    iterations (int): passes over `test` per ensemble, >= 1
    progress (bool): show a progress bar

    Returns:
    pd.DataFrame - latency per record and measured vs estimated speedup
    '''
    if iterations < 1:
        raise ConfigurationError(f'iterations must be >= 1, got {iterations}')
    rows = [list(map(float, row)) for row in test.X]
    latencies = {}
    for label, ensemble in tqdm.tqdm((('full', full), ('pruned', pruned)), desc='Benchmarking',
                                     leave=False, disable=not progress):
        start = time.perf_counter()
        for _ in range(iterations):
            for row in rows:
                majority_vote(ensemble, row)
        latencies[label] = (time.perf_counter() - start) / (iterations * len(rows))

    measured = latencies['full'] / latencies['pruned']
    estimated = speedup_estimate(full.n_trees, pruned.n_trees)
    return pd.DataFrame([
        {'model': 'full', 'trees': full.n_trees, 'latency_us': latencies['full'] * 1e6,
         'measured_speedup': 1.0, 'estimated_speedup': 1.0},
        {'model': 'pruned', 'trees': pruned.n_trees, 'latency_us': latencies['pruned'] * 1e6,
         'measured_speedup': measured, 'estimated_speedup': estimated},
    ], columns=['model', 'trees', 'latency_us', 'measured_speedup', 'estimated_speedup'])


def diversity_table(full: RandomForest, pruned: RandomForest, train: Dataset, draws: int = 10,
                    seed: int = 0) -> pd.DataFrame:
    ''' Mean pairwise diversity, disagreement and double fault of the pruned ensemble,
    of equal-size random subsets of the full forest, and of the full forest

    Parameters:
    full (RandomForest): the parent forest
    pruned (RandomForest): the pruned ensemble
    train (Dataset): records the label vectors are taken over
    draws (int): number of random subsets
    seed (int): seed of the random subsets

    Returns:
    pd.DataFrame - one row per ensemble; measures are empty when an ensemble has fewer than two trees
    '''
    if draws < 1:
        raise ConfigurationError(f'draws must be >= 1, got {draws}')
    vectors = label_matrix(full, train)
    pruned_vectors = np.vstack([t.predict_codes(train.X) for t in pruned.trees])

    rows = [{'ensemble': 'pruned', 'draw': None, 'size': pruned.n_trees,
             **ensemble_diversity(pruned_vectors, train.y)}]
    rng = np.random.default_rng(seed)
    for draw in range(draws):
        subset = np.sort(rng.choice(full.n_trees, size=pruned.n_trees, replace=False))
        rows.append({'ensemble': 'random_subset', 'draw': draw, 'size': pruned.n_trees,
                     **ensemble_diversity(vectors[subset], train.y)})
    rows.append({'ensemble': 'full', 'draw': None, 'size': full.n_trees, **ensemble_diversity(vectors, train.y)})
    return pd.DataFrame(rows, columns=['ensemble', 'draw', 'size', 'pairs', 'diversity', 'disagreement',
                                       'double_fault']).astype({'draw': 'Int64'})
