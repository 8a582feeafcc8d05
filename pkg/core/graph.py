"""Semi-supervised affinity generation (SemiAG).

consensus KNN graph -> affinity propagation -> label-constrained binarization,
all on dense n x n matrices.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from core.errors import GraphError

logger = logging.getLogger(__name__)


@dataclass
class ConsensusGraph:
    counts: np.ndarray
    normalized: np.ndarray


@dataclass
class DiffusedGraph:
    values: np.ndarray
    steps_applied: int


@dataclass
class Threshold:
    q: float
    degenerate: bool


@dataclass
class BinarizedGraph:
    adjacency: np.ndarray
    threshold_used: float
    degenerate: bool = False
    label_forced_positive: int = 0
    label_forced_negative: int = 0

    @property
    def edge_count(self):
        return int(np.triu(self.adjacency, k=1).sum())

    def edges(self):
        """Sorted (i, j) pairs with i < j."""
        i, j = np.nonzero(np.triu(self.adjacency, k=1))
        return list(zip(i.tolist(), j.tolist()))

    def report(self):
        return {
            'threshold': self.threshold_used if math.isfinite(self.threshold_used) else None,
            'thresholdDegenerate': self.degenerate,
            'nodes': int(self.adjacency.shape[0]),
            'edges': self.edge_count,
            'labelForcedPositive': self.label_forced_positive,
            'labelForcedNegative': self.label_forced_negative,
        }


def cosine_graph(embeddings):
    return embeddings @ embeddings.T


def knn_neighborhoods(embeddings, k):
    """(n, k) neighbour indices per node, the node itself first.

    Remaining neighbours by decreasing cosine similarity, ties to the lower index.
    """
    n = embeddings.shape[0]
    if not 1 <= k <= n:
        raise GraphError(f'K must lie in [1, n={n}], got {k}')
    sims = cosine_graph(embeddings)
    np.fill_diagonal(sims, np.inf)
    order = np.argsort(-sims, axis=1, kind='stable')
    return order[:, :k]


def membership(neighborhoods, n):
    member = np.zeros((n, n), dtype=np.float64)
    rows = np.repeat(np.arange(n), neighborhoods.shape[1])
    member[rows, neighborhoods.ravel()] = 1
    return member


def row_normalize(matrix):
    sums = matrix.sum(axis=1, keepdims=True)
    return np.divide(matrix, sums, out=np.zeros(matrix.shape, dtype=np.float64), where=sums > 0)


def consensus_graph(embeddings, k):
    """g_ij = number of centers whose K-neighbourhood holds both i and j; zero diagonal."""
    n = embeddings.shape[0]
    member = membership(knn_neighborhoods(embeddings, k), n)
    # exact in float64: counts never exceed n
    counts = np.rint(member.T @ member).astype(np.int64)
    np.fill_diagonal(counts, 0)
    return ConsensusGraph(counts=counts, normalized=row_normalize(counts.astype(np.float64)))


def mutual_knn_graph(embeddings, k):
    """Naive baseline: i ~ j when each is in the other's K-neighbourhood."""
    n = embeddings.shape[0]
    member = membership(knn_neighborhoods(embeddings, k), n).astype(bool)
    adjacency = member & member.T
    np.fill_diagonal(adjacency, False)
    return adjacency


def diffuse(normalized, eta=1):
    """Apply G_d <- G_c G_d G_c^T + I ``eta`` times, starting from G_d = G_c."""
    if normalized.ndim != 2 or normalized.shape[0] != normalized.shape[1]:
        raise GraphError(f'diffusion needs a square matrix, got {normalized.shape}')
    if eta < 1:
        raise GraphError(f'eta must be >= 1, got {eta}')
    if eta > 1:
        logger.warning('Diffusing for %d steps; larger steps admit noisy false positives', eta)

    identity = np.eye(normalized.shape[0])
    values = normalized
    for step in range(eta):
        values = normalized @ values @ normalized.T + identity
        if not np.all(np.isfinite(values)):
            raise GraphError(f'non-finite affinities after diffusion step {step + 1}')
    return DiffusedGraph(values=values, steps_applied=eta)


def semiag_threshold(affinities, quantile_level):
    """Nearest-rank quantile of the off-diagonal affinities above the mean non-zero affinity."""
    if not 0 < quantile_level < 1:
        raise GraphError(f'quantile level must lie in (0, 1), got {quantile_level}')
    off = affinities[~np.eye(affinities.shape[0], dtype=bool)]
    nonzero = off[off != 0]
    if nonzero.size == 0:
        return Threshold(q=math.inf, degenerate=True)

    mean = nonzero.mean()
    above = off[(off > mean) & ~np.isclose(off, mean, rtol=1e-12, atol=0.0)]
    if above.size == 0:
        return Threshold(q=math.inf, degenerate=True)

    above = np.sort(above)
    rank = math.ceil(round(quantile_level * above.size, 9))
    return Threshold(q=float(above[max(rank, 1) - 1]), degenerate=False)


def _visible_labels(metas):
    labeled = np.array([m.is_labeled for m in metas], dtype=bool)
    labels = np.array([m.class_label if m.is_labeled else -1 for m in metas], dtype=np.int64)
    return labeled, labels


def binarize_semi_priori(affinities, q, metas, use_priori=True):
    """Threshold the symmetrized affinities, then let labeled pairs override."""
    n = affinities.shape[0]
    if len(metas) != n:
        raise GraphError(f'{len(metas)} metas for a {n}-node graph')

    adjacency = (affinities + affinities.T) / 2.0 > q
    forced_pos = forced_neg = 0
    if use_priori:
        adjacency, forced_pos, forced_neg = apply_semi_priori(adjacency, metas)
    np.fill_diagonal(adjacency, False)
    return BinarizedGraph(adjacency=adjacency, threshold_used=float(q),
                          label_forced_positive=forced_pos, label_forced_negative=forced_neg)


def apply_semi_priori(adjacency, metas):
    """Labeled pairs get edge = [y_i == y_j]; mixed and unlabeled pairs are left alone."""
    labeled, labels = _visible_labels(metas)
    both = np.outer(labeled, labeled)
    np.fill_diagonal(both, False)
    same = labels[:, None] == labels[None, :]

    forced_pos = int(np.triu(both & same & ~adjacency, k=1).sum())
    forced_neg = int(np.triu(both & ~same & adjacency, k=1).sum())
    adjacency = adjacency.copy()
    adjacency[both] = same[both]
    return adjacency, forced_pos, forced_neg


def semiag(embeddings, metas, k, eta=1, quantile_level=0.5, cknn=True, ap=True, semipriori=True):
    """consensus_graph -> diffuse -> threshold -> binarize, with ablation switches.

    ``cknn=False`` selects the naive mutual-KNN graph (no propagation possible);
    ``ap=False`` thresholds the normalized consensus graph directly.
    """
    if ap and not cknn:
        raise GraphError('affinity propagation requires the consensus KNN graph')

    if not cknn:
        adjacency = mutual_knn_graph(embeddings, k)
        forced_pos = forced_neg = 0
        if semipriori:
            adjacency, forced_pos, forced_neg = apply_semi_priori(adjacency, metas)
        np.fill_diagonal(adjacency, False)
        return BinarizedGraph(adjacency=adjacency, threshold_used=math.nan,
                              label_forced_positive=forced_pos, label_forced_negative=forced_neg)

    affinities = consensus_graph(embeddings, k).normalized
    if ap:
        affinities = diffuse(affinities, eta).values
    threshold = semiag_threshold(affinities, quantile_level)
    if threshold.degenerate:
        logger.warning('SemiAG threshold degenerate on %d nodes; only label-forced edges remain',
                       affinities.shape[0])
    graph = binarize_semi_priori(affinities, threshold.q, metas, use_priori=semipriori)
    graph.degenerate = threshold.degenerate
    return graph


def pseudo_label_quality(graph, targets):
    """Precision/recall of the binarized edges against ground-truth co-membership."""
    upper = np.triu(np.ones_like(graph.adjacency, dtype=bool), k=1)
    truth = (targets[:, None] == targets[None, :]) & upper
    predicted = graph.adjacency & upper
    tp = int((truth & predicted).sum())
    n_pred, n_true = int(predicted.sum()), int(truth.sum())
    return {
        'precision': tp / n_pred if n_pred else None,
        'recall': tp / n_true if n_true else None,
    }
