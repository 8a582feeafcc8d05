import logging
import time

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from core.errors import GraphError
from core.graph import (
    apply_semi_priori,
    binarize_semi_priori,
    consensus_graph,
    diffuse,
    knn_neighborhoods,
    mutual_knn_graph,
    pseudo_label_quality,
    row_normalize,
    semiag,
    semiag_threshold,
)
from models import SampleMeta
from tests.helpers import random_unit


def brute_force_consensus(embeddings, k):
    n = embeddings.shape[0]
    neighborhoods = [set(row) for row in knn_neighborhoods(embeddings, k)]
    counts = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            if i != j:
                counts[i, j] = sum(1 for hood in neighborhoods if i in hood and j in hood)
    return counts


def naive_matmul(a, b):
    n, m, p = a.shape[0], a.shape[1], b.shape[1]
    out = np.zeros((n, p))
    for i in range(n):
        for j in range(p):
            total = 0.0
            for t in range(m):
                total += a[i, t] * b[t, j]
            out[i, j] = total
    return out


def _metas(labels):
    return [SampleMeta(id=i, class_label=label, is_labeled=label is not None,
                       is_known_class=label is not None, view_group=i)
            for i, label in enumerate(labels)]


@seed(20240)
@settings(max_examples=200, deadline=None)
@given(n=st.integers(2, 32), d=st.integers(2, 8), k=st.integers(1, 8), data_seed=st.integers(0, 2**32 - 1))
def test_consensus_counts_match_brute_force(n, d, k, data_seed):
    k = min(k, n)
    embeddings = random_unit(np.random.default_rng(data_seed), n, d)
    graph = consensus_graph(embeddings, k)
    assert np.array_equal(graph.counts, brute_force_consensus(embeddings, k))
    assert np.array_equal(graph.counts, graph.counts.T)


def test_neighborhood_contains_self_first(rng):
    embeddings = random_unit(rng, 10, 3)
    hoods = knn_neighborhoods(embeddings, 4)
    assert np.array_equal(hoods[:, 0], np.arange(10))


def test_neighborhood_ties_go_to_the_lower_index():
    embeddings = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [0.0, 1.0]])
    assert knn_neighborhoods(embeddings, 2)[0].tolist() == [0, 1]


@pytest.mark.parametrize('k', [0, 6])
def test_neighborhood_size_out_of_range(rng, k):
    with pytest.raises(GraphError):
        knn_neighborhoods(random_unit(rng, 5, 3), k)


def test_single_node_graph_is_empty():
    graph = consensus_graph(np.array([[1.0, 0.0]]), 1)
    assert graph.counts.tolist() == [[0]]
    assert graph.normalized.tolist() == [[0.0]]


def test_consensus_counts_are_exact_integers_on_a_memory_sized_graph():
    embeddings = random_unit(np.random.default_rng(11), 1152, 16)
    start = time.perf_counter()
    graph = consensus_graph(embeddings, 25)
    elapsed = time.perf_counter() - start
    assert graph.counts.dtype == np.int64
    assert np.array_equal(graph.counts, graph.counts.T)
    # every neighbourhood contributes k (k - 1) ordered pairs
    assert graph.counts.sum() == 1152 * 25 * 24
    assert elapsed < 2.0


def test_diffusion_matches_naive_triple_loop():
    rng = np.random.default_rng(99)
    for _ in range(100):
        normalized = row_normalize(rng.random((8, 8)))
        expected = naive_matmul(naive_matmul(normalized, normalized), normalized.T) + np.eye(8)
        assert np.max(np.abs(diffuse(normalized, 1).values - expected)) <= 1e-9


def test_three_diffusion_steps_equal_three_manual_applications(caplog):
    normalized = row_normalize(np.random.default_rng(5).random((6, 6)))
    manual = normalized
    for _ in range(3):
        manual = normalized @ manual @ normalized.T + np.eye(6)
    with caplog.at_level(logging.WARNING):
        diffused = diffuse(normalized, 3)
    assert diffused.steps_applied == 3
    assert np.allclose(diffused.values, manual, atol=1e-12)
    assert 'Diffusing for 3 steps' in caplog.text


def test_diffusion_rejects_bad_input():
    with pytest.raises(GraphError):
        diffuse(np.ones((2, 3)))
    with pytest.raises(GraphError):
        diffuse(np.eye(2), eta=0)


@seed(31337)
@settings(max_examples=100, deadline=None)
@given(n=st.integers(2, 20), data_seed=st.integers(0, 2**32 - 1))
def test_diffusion_keeps_a_symmetric_input_symmetric(n, data_seed):
    a = np.random.default_rng(data_seed).random((n, n))
    values = diffuse((a + a.T) / 2).values
    assert np.allclose(values, values.T, rtol=1e-12, atol=1e-12)


def test_label_constraints_hold_exhaustively():
    rng = np.random.default_rng(6)
    violations = 0
    for _ in range(1000):
        n = int(rng.integers(2, 12))
        affinities = rng.random((n, n))
        labels = [int(rng.integers(0, 3)) if rng.random() < 0.5 else None for _ in range(n)]
        graph = binarize_semi_priori(affinities, float(rng.random()), _metas(labels))
        for i in range(n):
            for j in range(n):
                if i == j or labels[i] is None or labels[j] is None:
                    continue
                violations += graph.adjacency[i, j] != (labels[i] == labels[j])
    assert violations == 0


def test_mixed_pairs_follow_the_threshold():
    affinities = np.array([[0.0, 0.9, 0.1], [0.9, 0.0, 0.1], [0.1, 0.1, 0.0]])
    graph = binarize_semi_priori(affinities, 0.5, _metas([0, None, 1]))
    assert graph.adjacency[0, 1] and graph.adjacency[1, 0]
    assert not graph.adjacency[1, 2]
    assert not graph.adjacency.diagonal().any()


def test_forced_edge_counts():
    adjacency = np.array([[False, False, True], [False, False, False], [True, False, False]])
    forced, pos, neg = apply_semi_priori(adjacency, _metas([0, 0, 1]))
    assert (pos, neg) == (1, 1)
    assert forced[0, 1] and not forced[0, 2]


def test_threshold_uses_values_above_the_mean_nonzero_affinity():
    affinities = np.array([
        [0.0, 1.0, 2.0, 3.0],
        [1.0, 0.0, 4.0, 5.0],
        [2.0, 4.0, 0.0, 6.0],
        [3.0, 5.0, 6.0, 0.0],
    ])
    # mean 3.5; values above it: 4, 4, 5, 5, 6, 6
    assert semiag_threshold(affinities, 0.5).q == 5.0
    assert semiag_threshold(affinities, 0.99).q == 6.0


def test_threshold_is_degenerate_without_spread():
    uniform = np.ones((4, 4)) - np.eye(4)
    threshold = semiag_threshold(uniform, 0.5)
    assert threshold.degenerate and threshold.q == np.inf
    assert semiag_threshold(np.zeros((3, 3)), 0.5).degenerate


def test_degenerate_threshold_keeps_only_label_forced_edges(caplog):
    embeddings = np.tile([1.0, 0.0], (4, 1))
    with caplog.at_level(logging.WARNING):
        graph = semiag(embeddings, _metas([0, 0, None, None]), k=4)
    assert graph.degenerate
    assert graph.edges() == [(0, 1)]
    assert 'degenerate' in caplog.text
    assert graph.report()['threshold'] is None


def test_mutual_knn_graph_is_symmetric(rng):
    adjacency = mutual_knn_graph(random_unit(rng, 12, 3), 3)
    assert np.array_equal(adjacency, adjacency.T)
    assert not adjacency.diagonal().any()


def test_ablation_switches(rng):
    embeddings = random_unit(rng, 16, 4)
    metas = _metas([0, 1] + [None] * 14)
    with pytest.raises(GraphError):
        semiag(embeddings, metas, k=4, cknn=False, ap=True)
    baseline = semiag(embeddings, metas, k=4, cknn=False, ap=False)
    assert np.isnan(baseline.threshold_used)
    assert not baseline.adjacency[0, 1]
    no_priori = semiag(embeddings, metas, k=4, semipriori=False)
    assert no_priori.label_forced_positive == no_priori.label_forced_negative == 0


@seed(4242)
@settings(max_examples=60, deadline=None)
@given(n=st.integers(4, 24), d=st.integers(2, 6), k=st.integers(1, 6), data_seed=st.integers(0, 2**32 - 1))
def test_semiag_is_deterministic_and_permutation_equivariant(n, d, k, data_seed):
    k = min(k, n)
    rng = np.random.default_rng(data_seed)
    embeddings = random_unit(rng, n, d)
    metas = _metas([int(c) if rng.random() < 0.4 else None for c in rng.integers(0, 3, n)])
    perm = rng.permutation(n)

    graph = semiag(embeddings, metas, k)
    assert np.array_equal(semiag(embeddings, metas, k).adjacency, graph.adjacency)
    permuted = semiag(embeddings[perm], [metas[i] for i in perm], k)

    # pairs sitting on the threshold may flip with summation order
    affinities = diffuse(consensus_graph(embeddings, k).normalized).values
    q = semiag_threshold(affinities, 0.5).q
    clear = ~np.isclose((affinities + affinities.T) / 2, q, rtol=0.0, atol=1e-9)[np.ix_(perm, perm)]
    expected = graph.adjacency[np.ix_(perm, perm)]
    assert np.array_equal(permuted.adjacency[clear], expected[clear])


def test_two_clusters_are_recovered():
    rng = np.random.default_rng(8)
    centers = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    targets = np.repeat([0, 1], 10)
    embeddings = centers[targets] + rng.normal(0, 0.05, (20, 3))
    embeddings /= np.linalg.norm(embeddings, axis=1, keepdims=True)
    graph = semiag(embeddings, _metas([None] * 20), k=5)
    quality = pseudo_label_quality(graph, targets)
    assert quality['precision'] == 1.0
    assert graph.edge_count > 0
