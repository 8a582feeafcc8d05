"""Clustering evaluation: SemiKMeans, Hungarian-matched accuracy, Silhouette, KNN precision."""
import logging
from dataclasses import replace

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.cluster import kmeans_plusplus
from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score, silhouette_score

from core.data import normalize_rows
from core.errors import EvaluationError
from models import AccuracyReport, ClusterAssignment

logger = logging.getLogger(__name__)


def _objective(embeddings, centroids, labels):
    return float(np.sum(1.0 - np.sum(embeddings * centroids[labels], axis=1)))


def _plus_plus(points, fixed, n_clusters, seed):
    """k-means++ picks that also count distance to the already fixed centroids."""
    if not len(fixed):
        seeds, _ = kmeans_plusplus(points, n_clusters=n_clusters, random_state=seed)
        return seeds
    rng = np.random.default_rng(seed)
    centers = list(fixed)
    picks = []
    closest = np.min(np.sum((points[:, None, :] - np.asarray(centers)[None]) ** 2, axis=2), axis=1)
    for _ in range(n_clusters):
        total = closest.sum()
        index = int(rng.choice(len(points), p=closest / total)) if total > 0 else int(rng.integers(len(points)))
        picks.append(points[index])
        closest = np.minimum(closest, np.sum((points - points[index]) ** 2, axis=1))
    return np.vstack(picks)


def semikmeans(embeddings, metas, num_clusters, seed=0, max_iter=100, tol=1e-4, on_iteration=None):
    """k-means under cosine distance with labeled samples pinned to their class cluster.

    Known-class centroids start at the labeled class means; the rest come from
    k-means++ over the unlabeled points, seeded away from the known centroids.
    Cluster id == class id for known classes.
    ``on_iteration(iteration, labels)`` is called after every assignment step.
    """
    embeddings = normalize_rows(np.asarray(embeddings, dtype=np.float64))
    labeled = np.array([m.is_labeled for m in metas], dtype=bool)
    pinned = np.array([m.class_label if m.is_labeled else -1 for m in metas], dtype=np.int64)
    known = np.unique(pinned[labeled])
    if known.size > num_clusters:
        raise EvaluationError(f'{known.size} labeled classes but only {num_clusters} clusters')
    if known.size and known.max() >= num_clusters:
        raise EvaluationError(f'class label {known.max()} outside [0, {num_clusters})')

    dim = embeddings.shape[1]
    centroids = np.zeros((num_clusters, dim))
    for c in known:
        centroids[c] = embeddings[pinned == c].mean(axis=0)
    free = np.setdiff1d(np.arange(num_clusters), known)
    unlabeled = np.flatnonzero(~labeled)
    if free.size:
        if unlabeled.size >= free.size:
            centroids[free] = _plus_plus(embeddings[unlabeled], normalize_rows(centroids[known]), free.size, seed)
        else:
            logger.warning('Only %d unlabeled points for %d free clusters', unlabeled.size, free.size)
    centroids = normalize_rows(centroids)

    labels = pinned.copy()
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        if unlabeled.size:
            labels[unlabeled] = np.argmax(embeddings[unlabeled] @ centroids.T, axis=1)
        if on_iteration is not None:
            on_iteration(n_iter, labels.copy())
        history.append(_objective(embeddings, centroids, labels))

        updated = np.zeros_like(centroids)
        for c in range(num_clusters):
            members = labels == c
            if members.any():
                updated[c] = embeddings[members].mean(axis=0)
            elif unlabeled.size:
                distance = 1.0 - np.sum(embeddings[unlabeled] * centroids[labels[unlabeled]], axis=1)
                farthest = unlabeled[int(np.argmax(distance))]
                logger.warning('Cluster %d empty at iteration %d; re-seeding at sample %d', c, n_iter, farthest)
                updated[c] = embeddings[farthest]
                labels[farthest] = c
            else:
                updated[c] = centroids[c]
        updated = normalize_rows(updated)
        shift = float(np.max(np.linalg.norm(updated - centroids, axis=1)))
        centroids = updated
        if shift < tol:
            break

    history.append(_objective(embeddings, centroids, labels))
    return ClusterAssignment(labels=labels, centroids=centroids, n_iter=n_iter, objective_history=history)


def hungarian_accuracy(cluster_ids, targets, known_mask=None, num_classes=None):
    """Accuracy under the single best cluster -> class bijection.

    Known/New accuracies are measured on their sub-populations under that same
    mapping. The confusion matrix is indexed [true class, mapped class].
    """
    cluster_ids = np.asarray(cluster_ids, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    if cluster_ids.shape != targets.shape:
        raise EvaluationError('cluster ids and targets must have the same length')
    if targets.size == 0:
        raise EvaluationError('nothing to evaluate')
    size = max(int(cluster_ids.max()) + 1, int(targets.max()) + 1, num_classes or 0)

    counts = np.zeros((size, size), dtype=np.int64)
    np.add.at(counts, (cluster_ids, targets), 1)
    rows, cols = linear_sum_assignment(-counts)
    mapping = dict(zip(rows.tolist(), cols.tolist()))
    mapped = np.array([mapping[c] for c in cluster_ids], dtype=np.int64)
    correct = mapped == targets

    confusion = np.zeros((size, size), dtype=np.int64)
    np.add.at(confusion, (targets, mapped), 1)

    def subset_accuracy(mask):
        return float(correct[mask].mean()) if mask.any() else None

    if known_mask is None:
        acc_known = acc_new = None
    else:
        known_mask = np.asarray(known_mask, dtype=bool)
        acc_known = subset_accuracy(known_mask)
        acc_new = subset_accuracy(~known_mask)
    return AccuracyReport(acc_all=float(correct.mean()), acc_known=acc_known, acc_new=acc_new,
                          mapping=mapping, confusion=confusion)


def clustering_report(cluster_ids, targets, known_mask, num_classes):
    """Hungarian accuracy plus NMI and ARI on the same subset."""
    report = hungarian_accuracy(cluster_ids, targets, known_mask, num_classes)
    report.nmi = float(normalized_mutual_info_score(targets, cluster_ids))
    report.ari = float(adjusted_rand_score(targets, cluster_ids))
    return report


def task_informed_accuracy(embeddings, metas, targets, known_mask, eval_mask, num_known, num_new, seed=0):
    """Cluster the known and new sub-populations separately; returns (known*, new*).

    An empty sub-population is reported as None.
    """
    known_mask = np.asarray(known_mask, dtype=bool)
    eval_mask = np.asarray(eval_mask, dtype=bool)
    results = []
    for population, n_clusters in ((known_mask, num_known), (~known_mask, num_new)):
        if not (population & eval_mask).any() or n_clusters < 1:
            results.append(None)
            continue
        rows = np.flatnonzero(population)
        sub_metas = [metas[i] for i in rows]
        # Known labels are re-indexed to 0..n-1 so they can pin clusters.
        classes = np.unique(targets[rows])
        index = {c: i for i, c in enumerate(classes)}
        sub_metas = [replace(m, class_label=index[m.class_label] if m.is_labeled else None) for m in sub_metas]
        n_clusters = max(n_clusters, classes.size)
        assignment = semikmeans(embeddings[rows], sub_metas, n_clusters, seed=seed)
        scored = eval_mask[rows]
        sub_targets = np.array([index[t] for t in targets[rows]])
        report = hungarian_accuracy(assignment.labels[scored], sub_targets[scored], num_classes=n_clusters)
        results.append(report.acc_all)
    return tuple(results)


def silhouette(embeddings, labels):
    """Mean silhouette under cosine distance; singleton clusters contribute 0."""
    labels = np.asarray(labels)
    n_clusters = np.unique(labels).size
    if n_clusters < 2:
        raise EvaluationError('silhouette needs at least two non-empty clusters')
    try:
        return float(silhouette_score(embeddings, labels, metric='cosine'))
    except ValueError as e:
        raise EvaluationError(f'silhouette undefined: {e}') from e


def nearest_neighbors(embeddings, k):
    """(n, k) indices of the k most similar other rows, ties to the lower index."""
    n = embeddings.shape[0]
    if not 1 <= k < n:
        raise EvaluationError(f'k must lie in [1, n={n}), got {k}')
    sims = embeddings @ embeddings.T
    np.fill_diagonal(sims, -np.inf)
    return np.argsort(-sims, axis=1, kind='stable')[:, :k]


def knn_precision(embeddings, targets, k, mask=None):
    """Share of the k nearest neighbours (self excluded) that share the query's class.

    ``mask`` restricts the queries to samples with known ground truth; the
    neighbour search always runs over all rows.
    """
    targets = np.asarray(targets)
    neighbors = nearest_neighbors(embeddings, k)
    hits = targets[neighbors] == targets[:, None]
    queries = np.ones(len(targets), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    return float(hits[queries].mean())


def retrieval_dump(embeddings, targets, ids, n_queries, k=8, seed=0):
    """Random queries with their k nearest neighbours and correctness flags."""
    rng = np.random.default_rng(seed)
    queries = np.sort(rng.choice(len(targets), size=min(n_queries, len(targets)), replace=False))
    neighbors = nearest_neighbors(embeddings, k)
    rows = []
    for q in queries:
        for rank, j in enumerate(neighbors[q], start=1):
            rows.append({
                'query': int(ids[q]),
                'rank': rank,
                'neighbor': int(ids[j]),
                'correct': bool(targets[j] == targets[q]),
            })
    return rows


PROTOCOLS = ('transductive', 'inductive')


def protocol_subsets(split, protocol):
    """(cluster rows, scored rows) of ``split`` under an evaluation protocol.

    transductive: cluster every training item, score the unlabeled ones.
    inductive: cluster and score the held-out test items.
    """
    if protocol not in PROTOCOLS:
        raise EvaluationError(f'unknown protocol {protocol!r}')
    if protocol == 'transductive':
        rows = split.indices('train')
        scored = ~split.labeled_mask[rows]
    else:
        rows = split.indices('test')
        scored = np.ones(rows.size, dtype=bool)
    if not scored.any():
        raise EvaluationError(f'no samples to score under the {protocol} protocol')
    return rows, scored


def evaluate_split(split, embeddings, protocol='transductive', seed=0, task_informed=False):
    """SemiKMeans over the protocol's items, then accuracy, NMI and ARI on the scored ones.

    Returns (AccuracyReport, cluster rows, scored mask, cluster labels).
    """
    rows, scored = protocol_subsets(split, protocol)
    metas = [split.samples[i] for i in rows]
    if protocol == 'inductive':
        metas = [replace(m, class_label=None, is_labeled=False) for m in metas]
    embeddings = np.asarray(embeddings, dtype=np.float64)[rows]
    targets = split.targets[rows]
    known = split.known_mask[rows]

    assignment = semikmeans(embeddings, metas, split.num_classes, seed=seed)
    report = clustering_report(assignment.labels[scored], targets[scored], known[scored], split.num_classes)
    if task_informed:
        num_known = len(split.known_classes)
        report.known_star, report.new_star = task_informed_accuracy(
            embeddings, metas, targets, known, scored, num_known, split.num_classes - num_known, seed=seed)
    return report, rows, scored, assignment.labels
