"""Synthetic open-set datasets and GNCD splitting."""
import logging
import math

import numpy as np

from core.errors import SeparationInfeasibleError, SplitError
from models import DatasetSplit, SampleMeta

logger = logging.getLogger(__name__)

MAX_MEAN_ATTEMPTS = 10000


def normalize_rows(matrix):
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    return matrix / np.where(norms > 0, norms, 1.0)


def _random_unit(rng, dim):
    while True:
        v = rng.standard_normal(dim)
        norm = np.linalg.norm(v)
        if norm > 1e-12:
            return v / norm


def _violations(means, candidates, separation):
    """Per candidate, the number of placed means closer than ``separation``."""
    return np.sum(1.0 - np.atleast_2d(candidates) @ np.asarray(means).T < separation, axis=1)


def _class_means(num_classes, dim, separation, rng):
    means = [_random_unit(rng, dim)]
    while len(means) < num_classes:
        best, best_violations = None, math.inf
        for _ in range(MAX_MEAN_ATTEMPTS):
            candidate = _random_unit(rng, dim)
            violations = int(_violations(means, candidate, separation)[0])
            if violations == 0:
                means.append(candidate)
                break
            if violations < best_violations:
                best, best_violations = candidate, violations
        else:
            # Finish with the least-violating draws and count what is left.
            means.append(best)
            while len(means) < num_classes:
                candidates = normalize_rows(rng.standard_normal((MAX_MEAN_ATTEMPTS, dim)))
                means.append(candidates[int(np.argmin(_violations(means, candidates, separation)))])
            full = np.vstack(means)
            failing = int(np.sum(np.triu(1.0 - full @ full.T < separation, k=1)))
            raise SeparationInfeasibleError(failing, num_classes, separation)
    return np.vstack(means)


def synth_gen(num_classes, dim, samples_per_class, class_separation, noise_sigma, seed):
    """Class means on the unit sphere plus Gaussian noise, one base vector per item."""
    if dim < 2:
        raise SplitError('dim must be >= 2')
    if class_separation < 0 or noise_sigma < 0:
        raise SplitError('class_separation and noise_sigma must be non-negative')
    if num_classes < 1 or samples_per_class < 1:
        raise SplitError('num_classes and samples_per_class must be >= 1')

    rng = np.random.default_rng(seed)
    means = _class_means(num_classes, dim, class_separation, rng)

    targets = np.repeat(np.arange(num_classes), samples_per_class)
    noise = rng.normal(0.0, noise_sigma, size=(targets.size, dim)) if noise_sigma > 0 else 0.0
    base = normalize_rows(means[targets] + noise)

    samples = [SampleMeta(id=i, view_group=i) for i in range(targets.size)]
    logger.info('Generated %d items over %d classes (dim=%d)', targets.size, num_classes, dim)
    return DatasetSplit(num_classes=num_classes, samples=samples, base_vectors=base, targets=targets)


def round_half_up(x):
    # The rounding guard keeps 0.8 * 5 == 4.000000000000001 from drifting.
    return int(math.floor(round(x, 9) + 0.5))


def split_gncd(base, known_fraction, labeling_ratio, seed):
    """Pick the known classes and label a fixed share of their items."""
    if not 0 < known_fraction <= 1:
        raise SplitError('known_fraction must lie in (0, 1]')
    if not 0 < labeling_ratio <= 1:
        raise SplitError('labeling_ratio must lie in (0, 1]')
    n_known = round(known_fraction * base.num_classes, 9)
    if n_known < 1:
        raise SplitError(
            f'known_fraction * num_classes = {n_known} < 1: at least one known class is required'
        )
    n_known = math.ceil(n_known)

    rng = np.random.default_rng(seed)
    known = frozenset(int(c) for c in rng.permutation(base.num_classes)[:n_known])

    labeled = np.zeros(len(base), dtype=bool)
    train = base.subset == 'train'
    for c in sorted(known):
        members = np.flatnonzero((base.targets == c) & train)
        n_labeled = round_half_up(labeling_ratio * members.size)
        labeled[rng.permutation(members)[:n_labeled]] = True

    samples = [
        SampleMeta(
            id=s.id,
            class_label=int(base.targets[i]) if labeled[i] else None,
            is_labeled=bool(labeled[i]),
            is_known_class=int(base.targets[i]) in known,
            view_group=s.view_group,
        )
        for i, s in enumerate(base.samples)
    ]
    logger.info('Split: %d known classes, %d labeled items', len(known), int(labeled.sum()))
    return DatasetSplit(
        num_classes=base.num_classes,
        samples=samples,
        base_vectors=base.base_vectors,
        targets=base.targets,
        known_classes=known,
        labeling_ratio=labeling_ratio,
        subset=base.subset.copy(),
    )


def mark_test_subset(base, test_fraction, seed):
    """Tag a per-class share of items as the held-out test subset (never labeled)."""
    if not 0 <= test_fraction < 1:
        raise SplitError('test_fraction must lie in [0, 1)')
    rng = np.random.default_rng(seed)
    subset = np.array(['train'] * len(base), dtype=object)
    for c in range(base.num_classes):
        members = np.flatnonzero(base.targets == c)
        subset[rng.permutation(members)[:round_half_up(test_fraction * members.size)]] = 'test'
    return DatasetSplit(
        num_classes=base.num_classes,
        samples=list(base.samples),
        base_vectors=base.base_vectors,
        targets=base.targets,
        known_classes=base.known_classes,
        labeling_ratio=base.labeling_ratio,
        subset=subset,
    )


def holdout(split, fraction, seed):
    """Seeded random hold-out over all items (labeled and unlabeled).

    Returns index arrays (train, validation) into ``split``.
    """
    order = np.random.default_rng(seed).permutation(len(split))
    n_val = int(round(fraction * len(split)))
    return np.sort(order[n_val:]), np.sort(order[:n_val])
