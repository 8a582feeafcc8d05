import numpy as np

from core.data import normalize_rows
from models import SampleMeta


def random_unit(rng, n, d):
    return normalize_rows(rng.standard_normal((n, d)))


def paired_metas(n_items, labels=None):
    """Two views per item; ``labels[i]`` is the visible class of item i or None."""
    labels = labels if labels is not None else [None] * n_items
    metas = [
        SampleMeta(id=i, class_label=label, is_labeled=label is not None,
                   is_known_class=label is not None, view_group=i)
        for i, label in enumerate(labels)
    ]
    return metas + metas


def relative_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def numeric_gradient(f, x, h=1e-5):
    """Central differences of scalar f at every coordinate of x."""
    grad = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        step = np.zeros_like(x)
        step[idx] = h
        grad[idx] = (f(x + step) - f(x - step)) / (2 * h)
    return grad
