import logging
import math
import os
from dataclasses import replace

import click
import numpy as np

from commands.options import data_option, out_option, train_options
from config import validate_config
from core.errors import ConfigValidationError
from core.evaluation import PROTOCOLS, evaluate_split
from core.trainer import run
from middleware import manifest_required
from utils.embedding_io import load_dataset
from utils.plots import sweep_lines
from utils.reports import write_csv

logger = logging.getLogger(__name__)

RUNS_FILE = 'runs.csv'
TABLE_FILE = 'ablation.csv'
SWEEP_FILE = 'sweep.csv'
SWEEP_PLOT = 'sweep.svg'

SWEEPABLE = ('alpha', 'beta', 'gamma', 'k', 'quantile_level')

# SemiAG ablation rows: naive KNN with label priors, then one component removed at a time.
TABLE_ROWS = (
    ('knn-baseline', {'cknn': False, 'ap': False, 'semipriori': True, 'semicl': True}),
    ('no-semicl', {'cknn': True, 'ap': True, 'semipriori': True, 'semicl': False}),
    ('no-semipriori', {'cknn': True, 'ap': True, 'semipriori': False, 'semicl': True}),
    ('no-ap', {'cknn': True, 'ap': False, 'semipriori': True, 'semicl': True}),
    ('full', {'cknn': True, 'ap': True, 'semipriori': True, 'semicl': True}),
)

TOGGLE_COLUMNS = ('cknn', 'ap', 'semipriori', 'semicl')


def parse_seeds(text, default):
    if not text:
        return [default]
    try:
        return [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise ConfigValidationError({'--seeds': f'expected comma-separated integers, got {text!r}'}) from None


def parse_sweep(text):
    """'name=start:stop:step' -> (field name, inclusive list of values)."""
    try:
        name, bounds = text.split('=', 1)
        start, stop, step = (float(part) for part in bounds.split(':'))
    except ValueError:
        raise ConfigValidationError({'--sweep': f'expected name=start:stop:step, got {text!r}'}) from None
    name = name.strip().replace('-', '_')
    if name not in SWEEPABLE:
        raise ConfigValidationError({'--sweep': f"cannot sweep {name!r}; choose from {', '.join(SWEEPABLE)}"})
    if step <= 0 or stop < start:
        raise ConfigValidationError({'--sweep': 'need step > 0 and stop >= start'})
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    values = [round(start + i * step, 10) for i in range(count)]
    if name == 'k':
        values = [int(v) for v in values]
    return name, values


def _mean(values):
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


def run_variant(split, config, seeds, protocol):
    """Train and evaluate one configuration per seed; returns one result dict per seed."""
    results = []
    for seed in seeds:
        variant = validate_config(replace(config, seed=seed))
        trained = run(split, variant)
        report, _, _, _ = evaluate_split(split, trained.stage2_best.student_cls, protocol, seed=seed)
        results.append({'seed': seed, 'accAll': report.acc_all, 'accKnown': report.acc_known,
                        'accNew': report.acc_new})
    return results


def summarize(results):
    return tuple(_mean([r[key] for r in results]) for key in ('accAll', 'accKnown', 'accNew'))


def _cell(value):
    return '' if value is None else f'{value:.6f}'


@click.command('ablate')
@data_option
@click.option('--knn-baseline', 'knn_baseline', is_flag=True, default=None,
              help='Mutual-KNN edges plus label priors instead of SemiAG.')
@click.option('--seeds', default=None, help='Comma-separated seeds (default: --seed).')
@click.option('--table', is_flag=True, default=False, help='Run every SemiAG ablation row.')
@click.option('--sweep', default=None, help='name=start:stop:step over alpha, beta, gamma, k or quantile_level.')
@click.option('--protocol', type=click.Choice(PROTOCOLS), default='transductive', show_default=True)
@train_options()
@out_option
@manifest_required('ablate', inputs=('data',),
                   layout={'runs': RUNS_FILE, 'table': TABLE_FILE, 'sweep': SWEEP_FILE, 'sweepPlot': SWEEP_PLOT})
def ablate(manifest, config, data, seeds, table, sweep, protocol, out):
    """Stage-2 accuracy of SemiAG ablations or a hyperparameter sweep, averaged over seeds."""
    if table and sweep:
        raise click.UsageError('--table and --sweep cannot be combined')
    seeds = parse_seeds(seeds, config.seed)
    split = load_dataset(data)

    if sweep:
        name, values = parse_sweep(sweep)
        variants = [(f'{name}={value}', replace(config, **{name: value})) for value in values]
    elif table:
        variants = [(label, replace(config, **toggles)) for label, toggles in TABLE_ROWS]
    else:
        variants = [('selected', config)]

    runs, summary = [], []
    for label, variant in variants:
        logger.info('ablate: running %s over seeds %s', label, seeds)
        results = run_variant(split, variant, seeds, protocol)
        toggles = [int(getattr(variant, name)) for name in TOGGLE_COLUMNS]
        for r in results:
            runs.append([label, r['seed'], *toggles, _cell(r['accAll']), _cell(r['accKnown']), _cell(r['accNew'])])
        means = summarize(results)
        summary.append((label, variant, toggles, means))
        click.echo(f'{label:>16}  All {_cell(means[0])}  Known {_cell(means[1])}  New {_cell(means[2])}')

    write_csv(os.path.join(out, RUNS_FILE),
              ['variant', 'seed', *TOGGLE_COLUMNS, 'acc_all', 'acc_known', 'acc_new'], runs)
    if sweep:
        rows = [(getattr(variant, name), *means) for _, variant, _, means in summary]
        write_csv(os.path.join(out, SWEEP_FILE), [name, 'acc_all', 'acc_known', 'acc_new'],
                  [[value, *(_cell(m) for m in means)] for value, *means in rows])
        sweep_lines(name, rows, os.path.join(out, SWEEP_PLOT))
    else:
        write_csv(os.path.join(out, TABLE_FILE),
                  ['variant', *TOGGLE_COLUMNS, 'seeds', 'acc_all', 'acc_known', 'acc_new'],
                  [[label, *toggles, len(seeds), *(_cell(m) for m in means)]
                   for label, _, toggles, means in summary])
