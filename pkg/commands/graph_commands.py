import os

import click
import numpy as np

from commands.options import GRAPH_FIELDS, out_option, train_options
from core.errors import EmbeddingFormatError
from core.graph import consensus_graph, pseudo_label_quality, semiag
from middleware import manifest_required
from models import SampleMeta
from utils.embedding_io import read_embeddings, read_splits_csv, read_truth_csv
from utils.reports import write_csv, write_json

EDGES_FILE = 'edges.csv'
REPORT_FILE = 'report.json'


def _labeled_metas(ids, visible, truth):
    metas = []
    for sample_id in ids:
        label, labeled = visible[sample_id]
        known = truth[sample_id][1] if truth else labeled
        metas.append(SampleMeta(id=sample_id, class_label=label, is_labeled=labeled,
                                is_known_class=known, view_group=sample_id))
    return metas


@click.command('pseudo-label')
@click.option('--embeddings', 'embeddings_path', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--labels', 'labels_path', required=True, type=click.Path(exists=True, dir_okay=False),
              help='splits.csv with the training-visible labels.')
@click.option('--truth', 'truth_path', type=click.Path(exists=True, dir_okay=False), default=None,
              help='truth.csv; adds pseudo-label precision and recall to the report.')
@click.option('--num-classes', type=int, default=None,
              help='Class count for K=auto (default: from --truth or the largest label).')
@train_options(GRAPH_FIELDS)
@out_option
@manifest_required('pseudo-label', inputs=('embeddings_path', 'labels_path', 'truth_path'),
                   layout={'edges': EDGES_FILE, 'report': REPORT_FILE})
def pseudo_label(manifest, config, embeddings_path, labels_path, truth_path, num_classes, out):
    """Run SemiAG on one embedding table and write the binarized graph."""
    table = read_embeddings(embeddings_path).astype(np.float64)
    visible = read_splits_csv(labels_path)
    truth = read_truth_csv(truth_path) if truth_path else None
    ids = sorted(visible)
    if len(ids) != table.shape[0]:
        raise EmbeddingFormatError(f'{labels_path} lists {len(ids)} samples but the table holds {table.shape[0]} rows')

    metas = _labeled_metas(ids, visible, truth)
    if num_classes is None:
        labels = [t[0] for t in truth.values()] if truth else [m.class_label for m in metas if m.is_labeled]
        num_classes = max(labels) + 1 if labels else 1
    k = min(config.resolve_k(num_classes), len(ids))

    graph = semiag(table, metas, k, config.eta, config.quantile_level,
                   cknn=config.cknn, ap=config.ap, semipriori=config.semipriori)

    report = graph.report()
    report.update(k=k, eta=config.eta, quantileLevel=config.quantile_level)
    if config.cknn:
        report['consensusEdges'] = int((np.triu(consensus_graph(table, k).counts, k=1) > 0).sum())
    if truth:
        targets = np.array([truth[sample_id][0] for sample_id in ids])
        report.update(pseudo_label_quality(graph, targets))

    write_csv(os.path.join(out, EDGES_FILE), ['i', 'j'], [(ids[i], ids[j]) for i, j in graph.edges()])
    write_json(os.path.join(out, REPORT_FILE), report, schema='PseudoLabelReport')
    click.echo(f"{report['edges']} edges over {report['nodes']} nodes (K={k}, threshold={report['threshold']})")
