import logging
import os
from dataclasses import replace

import click
import numpy as np

from commands.options import data_option, out_option, train_options
from core.data import normalize_rows
from core.errors import SizeMismatchError
from core.trainer import run
from middleware import manifest_required
from models import ModelState
from utils.embedding_io import load_dataset, read_embeddings, write_embeddings
from utils.plots import loss_curve
from utils.reports import write_jsonl

logger = logging.getLogger(__name__)

METRICS_FILE = 'metrics.jsonl'
LOSS_PLOT = 'loss.svg'

TRAINING_LAYOUT = {
    'stage1': 'stage1/',
    'stage2': 'stage2/',
    'metrics': METRICS_FILE,
    'lossPlot': LOSS_PLOT,
}


def write_checkpoint(state, directory):
    os.makedirs(directory, exist_ok=True)
    for name, table in state.tables().items():
        write_embeddings(table, os.path.join(directory, f'{name}.f32'))


def read_checkpoint(directory, split):
    """Student tables of a checkpoint; the teacher starts as a copy of the student."""
    tables = {}
    for name in ('student_cls', 'student_prompt'):
        table = read_embeddings(os.path.join(directory, f'{name}.f32')).astype(np.float64)
        if table.shape != split.base_vectors.shape:
            raise SizeMismatchError(
                f'{directory}/{name}.f32 has shape {table.shape}, dataset has {split.base_vectors.shape}'
            )
        tables[name] = table
    return ModelState(
        student_cls=tables['student_cls'],
        student_prompt=tables['student_prompt'],
        teacher_cls=tables['student_cls'].copy(),
        teacher_prompt=tables['student_prompt'].copy(),
        init_cls=normalize_rows(np.asarray(split.base_vectors, dtype=np.float64)),
    )


def _write_history(result, out):
    write_jsonl(os.path.join(out, METRICS_FILE), result.history, schema='EpochMetrics')
    loss_curve(result.history, os.path.join(out, LOSS_PLOT))


def _final_summary(result):
    if not result.history:
        return 'no epochs run'
    val = result.history[-1]['val']
    return f"last epoch val known={val['accKnown']} silhouetteNew={val['silhouetteNew']}"


@click.command('warmup')
@data_option
@train_options()
@out_option
@manifest_required('warmup', inputs=('data',), layout={'stage1': 'stage1/', 'metrics': METRICS_FILE,
                                                      'lossPlot': LOSS_PLOT})
def warmup(manifest, config, data, out):
    """Stage 1: SemiCL warm-up of the class and prompt streams."""
    split = load_dataset(data)
    result = run(split, replace(config, epochs_stage2=0))
    write_checkpoint(result.stage1_best, os.path.join(out, 'stage1'))
    _write_history(result, out)
    click.echo(f'Warm-up finished ({config.epochs_stage1} epochs): {_final_summary(result)}')


@click.command('cal')
@data_option
@click.option('--init', 'init_dir', type=click.Path(exists=True, file_okay=False), default=None,
              help='warmup output directory to start stage 2 from (stage 1 is skipped).')
@click.option('--dump-memory', is_flag=True, default=False,
              help='Write the final memory banks as embedding files.')
@train_options()
@out_option
@manifest_required('cal', inputs=('data', 'init_dir'), layout=TRAINING_LAYOUT)
def cal(manifest, config, data, init_dir, dump_memory, out):
    """Stage 2: contrastive affinity learning with SemiAG pseudo-labels."""
    split = load_dataset(data)
    k = config.resolve_k(split.num_classes)
    logger.info('K resolved to %d for %d classes and memory size %d', k, split.num_classes, config.memory_size)
    click.echo(f'K = {k}')

    if init_dir:
        start = read_checkpoint(os.path.join(init_dir, 'stage1'), split)
        result = run(split, config, initial_state=start, skip_stage1=True)
    else:
        result = run(split, config)
        write_checkpoint(result.stage1_best, os.path.join(out, 'stage1'))
    write_checkpoint(result.stage2_best, os.path.join(out, 'stage2'))
    _write_history(result, out)

    if dump_memory:
        if not result.banks:
            logger.warning('No stage-2 epochs ran; there is no memory to dump')
        for stream, bank in result.banks.items():
            embeddings, _ = bank.contents()
            if len(bank):
                write_embeddings(embeddings, os.path.join(out, f'memory_{stream}.f32'))
    click.echo(f'Contrastive affinity learning finished ({config.epochs_stage2} epochs): {_final_summary(result)}')
