import os

import click

from commands.options import data_option, out_option, train_options
from core.data import mark_test_subset, split_gncd, synth_gen
from middleware import manifest_required
from utils.embedding_io import DATASET_FILE, EMBEDDINGS_FILE, SPLITS_FILE, TRUTH_FILE, load_dataset, write_dataset
from utils.reports import read_json

DATASET_LAYOUT = {
    'embeddings': EMBEDDINGS_FILE,
    'truth': TRUTH_FILE,
    'splits': SPLITS_FILE,
    'dataset': DATASET_FILE,
}


@click.command('gen')
@click.option('--num-classes', type=int, default=10, show_default=True)
@click.option('--dim', type=int, default=16, show_default=True)
@click.option('--samples-per-class', type=int, default=200, show_default=True)
@click.option('--separation', type=float, default=0.3, show_default=True,
              help='Minimum pairwise cosine distance between class means.')
@click.option('--noise-sigma', type=float, default=0.1, show_default=True)
@train_options(['seed'])
@out_option
@manifest_required('gen', layout=DATASET_LAYOUT)
def gen(manifest, config, num_classes, dim, samples_per_class, separation, noise_sigma, out):
    """Generate a synthetic open-set embedding dataset."""
    split = synth_gen(num_classes, dim, samples_per_class, separation, noise_sigma, config.seed)
    generation = {
        'numClasses': num_classes,
        'dim': dim,
        'samplesPerClass': samples_per_class,
        'separation': separation,
        'noiseSigma': noise_sigma,
        'seed': config.seed,
    }
    write_dataset(split, out, {'generation': generation})
    click.echo(f'Generated {len(split)} items over {num_classes} classes in {out}')


@click.command('split')
@data_option
@click.option('--known-fraction', type=float, default=0.5, show_default=True)
@click.option('--labeling-ratio', type=float, default=0.5, show_default=True)
@click.option('--test-fraction', type=float, default=0.0, show_default=True,
              help='Per-class share held out as the inductive test subset.')
@train_options(['seed'])
@out_option
@manifest_required('split', inputs=('data',), layout=DATASET_LAYOUT)
def split(manifest, config, data, known_fraction, labeling_ratio, test_fraction, out):
    """Choose known classes and label a share of their training items."""
    base = load_dataset(data)
    if test_fraction > 0:
        base = mark_test_subset(base, test_fraction, [config.seed, 1])
    result = split_gncd(base, known_fraction, labeling_ratio, config.seed)

    source = read_json(os.path.join(data, DATASET_FILE))
    write_dataset(result, out, {
        'generation': source.get('generation', {}),
        'split': {
            'knownFraction': known_fraction,
            'labelingRatio': labeling_ratio,
            'testFraction': test_fraction,
            'seed': config.seed,
        },
    })
    click.echo(
        f'{len(result.known_classes)} known classes, {int(result.labeled_mask.sum())} labeled items in {out}'
    )
