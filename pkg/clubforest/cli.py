import traceback
from dataclasses import replace

import click
import tqdm
from click_option_group import optgroup

from clubforest.clubdrf import OOB_BEST, POLICIES, club_drf
from clubforest.errors import ClubForestError, ConfigurationError, InputError
from clubforest.experiment import (ExperimentConfig, benchmark,
                                   data_for_forest, diversity_table,
                                   load_config, parse_k_list, prepare_data,
                                   run_experiment, training_provenance,
                                   write_report)
from clubforest.forest import load_forest, save_forest, train_forest
from clubforest.io import click_monkey_patch_option_show_defaults, write_table
from clubforest.kmodes import rule_of_thumb_k

click_monkey_patch_option_show_defaults()

# click reports usage errors with 2, which here means a data error
USAGE_EXIT_CODE = 1


class ClubForestGroup(click.Group):
    ''' Command group translating clubforest errors into exit codes
    '''
    def make_context(self, *args, **kwargs):
        try:
            return super().make_context(*args, **kwargs)
        except click.UsageError as excpt:
            excpt.exit_code = USAGE_EXIT_CODE
            raise

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except click.UsageError as excpt:
            excpt.exit_code = USAGE_EXIT_CODE
            raise
        except (click.exceptions.Exit, click.exceptions.Abort, click.ClickException):
            raise
        except ClubForestError as excpt:
            click.echo(f'ERROR! {type(excpt).__name__}: {excpt}', err=True)
            ctx.exit(excpt.exit_code)
        except Exception: # pylint: disable=broad-except
            click.echo(traceback.format_exc(), err=True)
            ctx.exit(ClubForestError.exit_code)


@click.group(cls=ClubForestGroup)
def cli():
    ''' Toolbox for growing random forests and pruning them with CLUB-DRF,
        clustering trees by their predictions and keeping one representative per cluster.
    '''
    pass # pylint: disable=unnecessary-pass


def _parse_k(value: str, n_trees: int) -> int:
    if value == 'auto':
        return rule_of_thumb_k(n_trees)
    try:
        return int(value)
    except ValueError:
        raise ConfigurationError(f'--k expects an integer or "auto", got {value!r}') from None


@cli.command(name='train', short_help='Grow a random forest and save it')
@click.argument('dataset', type=click.Path(dir_okay=False))
@click.option('--out', required=True, type=click.Path(dir_okay=False), help='Destination of the forest container')
@click.option('--class-column', default=None, help='Class column name or 0-based position; the last column if omitted')
@click.option('--trees', 'n_trees', default=500, type=int, help='Number of trees to grow')
@click.option('--subset-size', default=None, type=int, help='Features tried at every node; floor(sqrt(F)) if omitted')
@click.option('--seed', default=0, type=int, help='Master seed of the per-tree random streams')
@click.option('--max-depth', default=None, type=int, help='Optional depth cap')
@click.option('--train-fraction', default=None, type=float, help='Hold out the rest of the dataset; train on everything if omitted')
@click.option('--split-seed', default=0, type=int, help='Seed of the holdout split')
@click.option('--jobs', default=1, type=int, help='Parallel workers growing trees')
def train(dataset, out, class_column, n_trees, subset_size, seed, max_depth, train_fraction, split_seed, jobs):
    ''' Grow a random forest on a dataset and save it as a container
    '''
    train_set, _ = prepare_data(dataset, class_column, train_fraction, split_seed)
    forest = train_forest(train_set, n_trees, subset_size, seed, max_depth=max_depth, jobs=jobs)
    provenance = training_provenance(dataset, class_column, train_fraction, split_seed, train_set)
    forest = replace(forest, training=provenance)
    save_forest(out, forest)

    substituted = sum(t.oob_substituted for t in forest.trees)
    print(f'Grew {forest.n_trees} trees (s={forest.s}) on {train_set.n} records')
    print(f'Mean OOB accuracy {float(forest.oob_scores.mean()):.4f}; {substituted} tree(s) without OOB records')
    print(f'Saved forest to "{out}"')


@cli.command(name='prune', short_help='Prune a forest with CLUB-DRF')
@click.argument('forest-path', type=click.Path(dir_okay=False))
@click.option('--out', required=True, type=click.Path(dir_okay=False), help='Destination of the pruned ensemble container')
@click.option('--k', 'k', default='auto', help='Number of clusters, or "auto" for round(sqrt(n_trees / 2))')
@click.option('--policy', default=OOB_BEST, type=click.Choice(POLICIES), help='How each cluster picks its representative')
@click.option('--seed', default=0, type=int, help='Seed of the clustering and of random selection')
@click.option('--cluster-fraction', default=1.0, type=float, help='Fraction of training records the label vectors cover')
@click.option('--dataset', default=None, type=click.Path(dir_okay=False), help='Training data, overriding the path stored in the forest')
@click.option('--class-column', default=None, help='Class column overriding the one stored in the forest')
@click.option('--jobs', default=1, type=int, help='Parallel workers extracting label vectors')
def prune(forest_path, out, k, policy, seed, cluster_fraction, dataset, class_column, jobs):
    ''' Cluster the trees of a forest and keep one representative per cluster
    '''
    forest = load_forest(forest_path)
    train_set, _ = data_for_forest(forest, dataset, class_column)
    k = _parse_k(k, forest.n_trees)

    pruned = club_drf(forest, train_set, k, seed=seed, policy=policy, cluster_fraction=cluster_fraction, jobs=jobs)
    save_forest(out, pruned.ensemble(forest))

    print(f'Kept {pruned.k_effective} of {forest.n_trees} trees (k={k}, policy={policy})')
    if pruned.k_effective < k:
        print(f' -> {k - pruned.k_effective} cluster(s) ended up empty')
    print(f'Pruning level {pruned.pruning_percent}%, estimated speedup {pruned.speedup:.2f}x')
    print(f'Saved pruned ensemble to "{out}"')


@cli.command(name='experiment', short_help='Run the RF vs CLUB-DRF experimental protocol')
@optgroup.group('Data', help='Datasets and how they are split')
@optgroup.option('--dataset', 'datasets', multiple=True, type=click.Path(dir_okay=False), help='Dataset file (csv or arff); repeat for several')
@optgroup.option('--class-column', default=None, help='Class column name or 0-based position [default: last column]')
@optgroup.option('--train-fraction', default=None, type=float, help='Holdout training fraction [default: 0.66]')
@optgroup.group('Forest', help='Random forest parameters')
@optgroup.option('--trees', 'n_trees', default=None, type=int, help='Trees per forest [default: 500]')
@optgroup.option('--subset-size', default=None, type=int, help='Features tried at every node [default: floor(sqrt(F))]')
@optgroup.option('--max-depth', default=None, type=int, help='Optional depth cap')
@optgroup.group('Pruning', help='CLUB-DRF parameters')
@optgroup.option('--k-list', default=None, help='Comma separated cluster counts [default: 5,10,...,40]')
@optgroup.option('--policy', default=None, type=click.Choice(POLICIES), help='Representative policy [default: oob_best]')
@optgroup.option('--cluster-fraction', default=None, type=float, help='Fraction of training records clustered [default: 1.0]')
@optgroup.group('Protocol', help='Repetitions, seeds and extra analyses')
@optgroup.option('--runs', default=None, type=int, help='Runs per dataset [default: 10]')
@optgroup.option('--seed', default=None, type=int, help='Master seed [default: 0]')
@optgroup.option('--bias-variance-reps', default=None, type=int, help='Resamples for bias/variance, 0 disables [default: 10]')
@optgroup.option('--diversity-draws', default=None, type=int, help='Random subsets per diversity comparison [default: 10]')
@optgroup.option('--jobs', default=None, type=int, help='Parallel workers [default: 1]')
@click.option('--config', 'config_path', default=None, type=click.Path(exists=True, dir_okay=False), help='YAML file with experiment settings; flags take precedence')
@click.option('--out', default=None, type=click.Path(file_okay=False), help='Report directory [default: clubforest-report]')
def experiment(datasets, class_column, train_fraction, n_trees, subset_size, max_depth, k_list, policy,
               cluster_fraction, runs, seed, bias_variance_reps, diversity_draws, jobs, config_path, out):
    ''' Run the experimental protocol on one or more datasets and write the report
    '''
    config = load_config(config_path) if config_path is not None else ExperimentConfig()
    config = config.updated(
        datasets=list(datasets) if datasets else None,
        class_column=class_column,
        train_fraction=train_fraction,
        n_trees=n_trees,
        subset_size=subset_size,
        max_depth=max_depth,
        k_list=parse_k_list(k_list) if k_list is not None else None,
        policy=policy,
        cluster_fraction=cluster_fraction,
        runs=runs,
        seed=seed,
        bias_variance_reps=bias_variance_reps,
        diversity_draws=diversity_draws,
        jobs=jobs,
        out=out,
    )
    if not config.datasets:
        raise ConfigurationError('No datasets given; pass --dataset or list them under "datasets" in --config')
    config.validate()

    report = run_experiment(config)
    written = write_report(report)

    print()
    for _, row in report.pruning.iterrows():
        print(f'{row["dataset"]}: RF accuracy {row["rf_accuracy"]:.4f}, '
              f'best CLUB-DRF k={row["best_k"]} accuracy {row["best_accuracy"]:.4f} '
              f'(pruning level {row["best_pruning_level"]}%)')
    for failure in report.failures:
        tqdm.tqdm.write(f'WARNING: dataset "{failure["dataset"]}" failed during {failure["stage"]}')
        tqdm.tqdm.write(f' -> {failure["error_type"]}: {failure["message"]}')
    print(f'Wrote {len(written)} report files to "{config.out}"')

    if report.failures and len(report.failures) == len(config.datasets):
        raise click.exceptions.Exit(report.failures[0]['exit_code'])


def _load_pair(forest_path, pruned_path, dataset, class_column):
    forest = load_forest(forest_path)
    pruned = load_forest(pruned_path)
    if pruned.schema != forest.schema:
        raise InputError(f'"{pruned_path}" was not built on the schema of "{forest_path}"')
    train_set, test_set = data_for_forest(forest, dataset, class_column)
    return forest, pruned, train_set, test_set


@cli.command(name='bench', short_help='Measure per-record classification latency')
@click.argument('forest-path', type=click.Path(dir_okay=False))
@click.argument('pruned-path', type=click.Path(dir_okay=False))
@click.option('--dataset', default=None, type=click.Path(dir_okay=False), help='Dataset, overriding the path stored in the forest')
@click.option('--class-column', default=None, help='Class column overriding the one stored in the forest')
@click.option('--iterations', default=3, type=int, help='Passes over the test records per ensemble')
@click.option('--out', default=None, type=click.Path(dir_okay=False), help='Optional csv destination of the latency table')
def bench(forest_path, pruned_path, dataset, class_column, iterations, out):
    ''' Classify the test records one at a time with the full forest and the pruned ensemble
    '''
    forest, pruned, _, test_set = _load_pair(forest_path, pruned_path, dataset, class_column)
    table = benchmark(forest, pruned, test_set, iterations=iterations)
    print(table.to_string(index=False, float_format=lambda v: f'{v:.3f}'))
    if out is not None:
        write_table(out, table)


@cli.command(name='diversity', short_help='Compare the diversity of a pruned ensemble and random subsets')
@click.argument('forest-path', type=click.Path(dir_okay=False))
@click.argument('pruned-path', type=click.Path(dir_okay=False))
@click.option('--dataset', default=None, type=click.Path(dir_okay=False), help='Dataset, overriding the path stored in the forest')
@click.option('--class-column', default=None, help='Class column overriding the one stored in the forest')
@click.option('--draws', default=10, type=int, help='Random equal-size subsets of the full forest')
@click.option('--seed', default=0, type=int, help='Seed of the random subsets')
@click.option('--out', default=None, type=click.Path(dir_okay=False), help='Optional csv destination of the diversity table')
def diversity(forest_path, pruned_path, dataset, class_column, draws, seed, out):
    ''' Mean pairwise diversity, disagreement and double fault over the training records
    '''
    forest, pruned, train_set, _ = _load_pair(forest_path, pruned_path, dataset, class_column)
    table = diversity_table(forest, pruned, train_set, draws=draws, seed=seed)
    print(table.to_string(index=False, na_rep='n/a', float_format=lambda v: f'{v:.4f}'))
    if out is not None:
        write_table(out, table)


if __name__ == '__main__':
    cli()
