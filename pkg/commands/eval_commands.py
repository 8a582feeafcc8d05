import os

import click

from commands.options import data_option, out_option, train_options
from core.errors import EvaluationError
from core.evaluation import PROTOCOLS, evaluate_split, knn_precision, retrieval_dump, silhouette
from middleware import manifest_required
from utils.embedding_io import load_dataset
from utils.plots import accuracy_bars
from utils.reports import write_csv, write_json

REPORT_FILE = 'report.json'
CONFUSION_FILE = 'confusion.csv'
ACCURACY_PLOT = 'accuracy.svg'
RETRIEVAL_FILE = 'retrieval.csv'


def _format(value):
    return '-' if value is None else f'{value:.4f}'


@click.command('eval')
@data_option
@click.option('--embeddings', 'embeddings_path', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Table to evaluate, e.g. <cal out>/stage2/student_cls.f32 (default: the dataset table).')
@click.option('--protocol', type=click.Choice(PROTOCOLS), default='transductive', show_default=True)
@click.option('--task-informed', is_flag=True, default=False,
              help='Also cluster the known and new sub-populations separately.')
@click.option('--k', 'knn_k', type=int, default=8, show_default=True, help='Neighbours for KNN precision.')
@click.option('--retrieval-dump', 'dump_queries', type=int, default=0,
              help='Number of random queries to dump with their k-NN.')
@train_options(['seed'])
@out_option
@manifest_required('eval', inputs=('data', 'embeddings_path'),
                   layout={'report': REPORT_FILE, 'confusion': CONFUSION_FILE, 'accuracyPlot': ACCURACY_PLOT})
def evaluate(manifest, config, data, embeddings_path, protocol, task_informed, knn_k, dump_queries, out):
    """SemiKMeans clustering accuracy on All/Known/New."""
    split = load_dataset(data, embeddings_path)
    report, rows, scored, labels = evaluate_split(split, split.base_vectors, protocol, config.seed, task_informed)
    embeddings = split.base_vectors[rows]
    targets = split.targets[rows]

    new = scored & ~split.known_mask[rows]
    try:
        silhouette_new = silhouette(embeddings[new], labels[new])
    except EvaluationError:
        silhouette_new = None

    payload = {
        'protocol': protocol,
        'numEvaluated': int(scored.sum()),
        **report.to_dict(),
        'knnPrecision': knn_precision(embeddings, targets, knn_k, mask=scored),
        'silhouetteNew': silhouette_new,
    }
    if task_informed:
        payload['knownStar'] = report.known_star
        payload['newStar'] = report.new_star
    write_json(os.path.join(out, REPORT_FILE), payload, schema='AccuracyReport')

    size = report.confusion.shape[0]
    write_csv(os.path.join(out, CONFUSION_FILE), ['class'] + [f'pred_{j}' for j in range(size)],
              [[i] + report.confusion[i].tolist() for i in range(size)])
    accuracy_bars(payload, os.path.join(out, ACCURACY_PLOT))

    if dump_queries:
        ids = [split.samples[i].id for i in rows]
        dump = retrieval_dump(embeddings, targets, ids, dump_queries, knn_k, config.seed)
        write_csv(os.path.join(out, RETRIEVAL_FILE), ['query', 'rank', 'neighbor', 'correct'],
                  [[r['query'], r['rank'], r['neighbor'], int(r['correct'])] for r in dump])

    line = f"All {_format(report.acc_all)}  Known {_format(report.acc_known)}  New {_format(report.acc_new)}"
    if task_informed:
        line += f"  Known* {_format(report.known_star)}  New* {_format(report.new_star)}"
    click.echo(line)
