"""Embedding binary files and split/label CSV files."""
import csv
import json
import logging
import os

import numpy as np

from core.errors import (
    EmbeddingFormatError,
    NonFiniteValueError,
    NonNormalizableRowError,
    SizeMismatchError,
    TruncatedPayloadError,
)
from models import DatasetSplit, SampleMeta
from utils.reports import write_json

logger = logging.getLogger(__name__)

DTYPE = 'f32le'
NORM_TOLERANCE = 1e-4

EMBEDDINGS_FILE = 'embeddings.f32'
TRUTH_FILE = 'truth.csv'
SPLITS_FILE = 'splits.csv'
DATASET_FILE = 'dataset.json'


def write_embeddings(table, path):
    """Header line {"n","d","dtype"} followed by row-major little-endian float32."""
    table = np.asarray(table)
    if table.ndim != 2:
        raise EmbeddingFormatError(f'Expected a 2-D table, got shape {table.shape}')
    n, d = table.shape
    header = json.dumps({'n': n, 'd': d, 'dtype': DTYPE}, separators=(',', ':'))
    with open(path, 'wb') as fh:
        fh.write(header.encode('ascii') + b'\n')
        fh.write(np.ascontiguousarray(table, dtype='<f4').tobytes())


def read_embeddings(path):
    """Read a table; rows off unit norm by more than 1e-4 are re-normalized (counted in the log)."""
    with open(path, 'rb') as fh:
        header_line = fh.readline()
        payload = fh.read()

    try:
        header = json.loads(header_line.decode('ascii'))
        n, d = int(header['n']), int(header['d'])
    except (ValueError, KeyError, UnicodeDecodeError) as e:
        raise EmbeddingFormatError(f'{path}: unreadable header ({e})') from e
    if header.get('dtype', DTYPE) != DTYPE:
        raise EmbeddingFormatError(f"{path}: unsupported dtype {header.get('dtype')!r}")

    if len(payload) % 4:
        raise TruncatedPayloadError(f'{path}: payload of {len(payload)} bytes ends mid-float')
    count = len(payload) // 4
    if count != n * d:
        raise SizeMismatchError(f'{path}: header says n={n}, d={d} but {count} floats present')

    table = np.frombuffer(payload, dtype='<f4').reshape(n, d).copy()
    if not np.all(np.isfinite(table)):
        raise NonFiniteValueError(f'{path}: table contains non-finite values')

    norms = np.linalg.norm(table.astype(np.float64), axis=1)
    if np.any(norms == 0):
        rows = np.flatnonzero(norms == 0).tolist()
        raise NonNormalizableRowError(f'{path}: zero rows cannot be normalized: {rows[:10]}')
    off = np.abs(norms - 1.0) > NORM_TOLERANCE
    if off.any():
        logger.warning('%s: re-normalized %d row(s) that were not unit-norm', path, int(off.sum()))
        table[off] = (table[off] / norms[off, None]).astype(np.float32)
    return table


def write_splits_csv(split, path):
    """Training-visible labels: id,class,labeled (class empty when unlabeled)."""
    with open(path, 'w', newline='') as fh:
        writer = csv.writer(fh)
        writer.writerow(['id', 'class', 'labeled'])
        for s in split.samples:
            writer.writerow([s.id, '' if s.class_label is None else s.class_label, int(s.is_labeled)])


def write_truth_csv(split, path):
    with open(path, 'w', newline='') as fh:
        writer = csv.writer(fh)
        writer.writerow(['id', 'class', 'known', 'view_group', 'subset'])
        for i, s in enumerate(split.samples):
            writer.writerow([s.id, int(split.targets[i]), int(s.is_known_class), s.view_group, split.subset[i]])


def read_splits_csv(path):
    """Returns {id: (class_label or None, is_labeled)}."""
    rows = {}
    with open(path, newline='') as fh:
        for row in csv.DictReader(fh):
            label = int(row['class']) if row['class'] != '' else None
            rows[int(row['id'])] = (label, row['labeled'] == '1')
    return rows


def read_truth_csv(path):
    rows = {}
    with open(path, newline='') as fh:
        for row in csv.DictReader(fh):
            rows[int(row['id'])] = (
                int(row['class']),
                row['known'] == '1',
                int(row['view_group']),
                row.get('subset') or 'train',
            )
    return rows


def load_split(embeddings_path, truth_path, splits_path=None, num_classes=None, known_classes=None,
               labeling_ratio=0.0):
    """Assemble a DatasetSplit from the files written by ``gen``/``split``.

    Without ``splits_path`` every sample is unlabeled.
    """
    table = read_embeddings(embeddings_path).astype(np.float64)
    truth = read_truth_csv(truth_path)
    visible = read_splits_csv(splits_path) if splits_path else {}
    ids = sorted(truth)
    if len(ids) != table.shape[0]:
        raise EmbeddingFormatError(
            f'{truth_path} lists {len(ids)} samples but {embeddings_path} holds {table.shape[0]} rows'
        )

    samples, targets, subset = [], [], []
    for sample_id in ids:
        target, known, view_group, tag = truth[sample_id]
        label, labeled = visible.get(sample_id, (None, False))
        samples.append(SampleMeta(id=sample_id, class_label=label, is_labeled=labeled,
                                  is_known_class=known, view_group=view_group))
        targets.append(target)
        subset.append(tag)

    targets = np.asarray(targets, dtype=np.int64)
    if known_classes is None:
        known_classes = {int(t) for t, s in zip(targets, samples) if s.is_known_class}
    return DatasetSplit(
        num_classes=num_classes if num_classes is not None else int(targets.max()) + 1,
        samples=samples,
        base_vectors=table,
        targets=targets,
        known_classes=frozenset(known_classes),
        labeling_ratio=labeling_ratio,
        subset=np.asarray(subset, dtype=object),
    )


def dataset_files(data_dir):
    """Existing data files of a dataset directory, in hashing order."""
    names = (EMBEDDINGS_FILE, TRUTH_FILE, SPLITS_FILE)
    return [os.path.join(data_dir, name) for name in names if os.path.exists(os.path.join(data_dir, name))]


def write_dataset(split, data_dir, provenance):
    """Embeddings, truth.csv, splits.csv and dataset.json of ``split``."""
    os.makedirs(data_dir, exist_ok=True)
    write_embeddings(split.base_vectors, os.path.join(data_dir, EMBEDDINGS_FILE))
    write_truth_csv(split, os.path.join(data_dir, TRUTH_FILE))
    write_splits_csv(split, os.path.join(data_dir, SPLITS_FILE))
    write_json(os.path.join(data_dir, DATASET_FILE), {**split.to_dict(), **provenance}, schema='Dataset')


def load_dataset(data_dir, embeddings_path=None):
    """DatasetSplit of a directory written by ``gen`` or ``split``.

    ``embeddings_path`` swaps in another table (e.g. a trained checkpoint).
    """
    with open(os.path.join(data_dir, DATASET_FILE)) as fh:
        manifest = json.load(fh)
    splits_path = os.path.join(data_dir, SPLITS_FILE)
    return load_split(
        embeddings_path or os.path.join(data_dir, EMBEDDINGS_FILE),
        os.path.join(data_dir, TRUTH_FILE),
        splits_path if os.path.exists(splits_path) else None,
        num_classes=manifest['numClasses'],
        known_classes=manifest.get('knownClasses'),
        labeling_ratio=manifest.get('labelingRatio', 0.0),
    )
