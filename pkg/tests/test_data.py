import numpy as np
import pytest

from core.data import holdout, mark_test_subset, round_half_up, split_gncd, synth_gen
from core.errors import SeparationInfeasibleError, SplitError


def test_single_class_without_noise_gives_identical_rows():
    split = synth_gen(num_classes=1, dim=4, samples_per_class=3, class_separation=0.0, noise_sigma=0.0, seed=0)
    assert split.base_vectors.shape == (3, 4)
    assert np.allclose(split.base_vectors, split.base_vectors[0])
    assert np.isclose(np.linalg.norm(split.base_vectors[0]), 1.0)


def test_generated_rows_are_unit_norm_and_means_are_separated():
    split = synth_gen(num_classes=10, dim=16, samples_per_class=200, class_separation=0.3, noise_sigma=0.1, seed=7)
    assert split.base_vectors.shape == (2000, 16)
    assert np.all(np.abs(np.linalg.norm(split.base_vectors, axis=1) - 1.0) < 1e-6)

    means = np.vstack([split.base_vectors[split.targets == c].mean(axis=0) for c in range(10)])
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    distance = 1.0 - means @ means.T
    assert np.all(distance[np.triu_indices(10, k=1)] > 0.1)
    assert len(np.unique(np.round(means, 6), axis=0)) == 10


def test_generation_is_deterministic():
    a = synth_gen(5, 8, 20, 0.3, 0.1, seed=11)
    b = synth_gen(5, 8, 20, 0.3, 0.1, seed=11)
    assert np.array_equal(a.base_vectors, b.base_vectors)
    assert np.array_equal(a.targets, b.targets)


def test_infeasible_separation_names_failing_pairs():
    with pytest.raises(SeparationInfeasibleError) as excinfo:
        synth_gen(num_classes=20, dim=2, samples_per_class=1, class_separation=1.9, noise_sigma=0.0, seed=0)
    assert excinfo.value.failing_pairs > 0
    assert 'pair' in str(excinfo.value)


def test_infeasible_separation_counts_the_best_placement():
    # three means on a circle are at most 1.5 apart; the closest placement misses by one pair
    with pytest.raises(SeparationInfeasibleError) as excinfo:
        synth_gen(num_classes=3, dim=2, samples_per_class=1, class_separation=1.6, noise_sigma=0.0, seed=0)
    assert excinfo.value.failing_pairs == 1


@pytest.mark.parametrize('kwargs', [
    {'dim': 1},
    {'class_separation': -0.1},
    {'noise_sigma': -1.0},
    {'samples_per_class': 0},
])
def test_synth_gen_rejects_bad_arguments(kwargs):
    params = {'num_classes': 2, 'dim': 4, 'samples_per_class': 3, 'class_separation': 0.1,
              'noise_sigma': 0.1, 'seed': 0}
    params.update(kwargs)
    with pytest.raises(SplitError):
        synth_gen(**params)


def test_split_is_a_partition_with_labels_only_on_known_classes(toy_split):
    labeled = toy_split.labeled_mask
    assert len(toy_split.samples) == 48
    assert len({s.id for s in toy_split.samples}) == 48
    for i, s in enumerate(toy_split.samples):
        if s.is_labeled:
            assert s.class_label == toy_split.targets[i]
            assert int(toy_split.targets[i]) in toy_split.known_classes
        else:
            assert s.class_label is None
    assert labeled.sum() == 2 * 6
    assert len(toy_split.known_classes) == 2


def test_cifar100_shaped_split():
    base = synth_gen(num_classes=100, dim=4, samples_per_class=5, class_separation=0.0, noise_sigma=0.1, seed=0)
    split = split_gncd(base, known_fraction=0.8, labeling_ratio=0.8, seed=0)
    assert len(split.known_classes) == 80
    for c in split.known_classes:
        members = split.targets == c
        assert split.labeled_mask[members].sum() == 4
    unknown = ~np.isin(split.targets, list(split.known_classes))
    assert not split.labeled_mask[unknown].any()


def test_low_label_split_shape():
    base = synth_gen(num_classes=10, dim=8, samples_per_class=10, class_separation=0.1, noise_sigma=0.1, seed=1)
    split = split_gncd(base, known_fraction=0.1, labeling_ratio=0.5, seed=1)
    assert len(split.known_classes) == 1
    assert split.labeled_mask.sum() == 5


def test_closed_set_split_labels_everything():
    base = synth_gen(num_classes=3, dim=4, samples_per_class=4, class_separation=0.1, noise_sigma=0.1, seed=2)
    split = split_gncd(base, known_fraction=1.0, labeling_ratio=1.0, seed=2)
    assert split.labeled_mask.all()
    assert split.known_classes == frozenset({0, 1, 2})


def test_split_needs_a_known_class():
    base = synth_gen(num_classes=4, dim=4, samples_per_class=2, class_separation=0.1, noise_sigma=0.1, seed=2)
    with pytest.raises(SplitError):
        split_gncd(base, known_fraction=0.2, labeling_ratio=0.5, seed=0)


@pytest.mark.parametrize('x, expected', [(0.5, 1), (1.5, 2), (2.5, 3), (4.000000000000001, 4), (2.4999, 2)])
def test_round_half_up(x, expected):
    assert round_half_up(x) == expected


def test_test_subset_is_never_labeled():
    base = synth_gen(num_classes=4, dim=4, samples_per_class=10, class_separation=0.1, noise_sigma=0.1, seed=4)
    tagged = mark_test_subset(base, 0.2, seed=4)
    assert (tagged.subset == 'test').sum() == 8
    split = split_gncd(tagged, known_fraction=0.5, labeling_ratio=1.0, seed=4)
    test = split.subset == 'test'
    assert not split.labeled_mask[test].any()
    for c in split.known_classes:
        assert split.labeled_mask[(split.targets == c) & ~test].all()


def test_holdout_is_disjoint_and_seeded(toy_split):
    train, val = holdout(toy_split, 0.1, seed=5)
    assert len(val) == 5
    assert not set(train) & set(val)
    assert len(train) + len(val) == len(toy_split)
    again = holdout(toy_split, 0.1, seed=5)
    assert np.array_equal(train, again[0]) and np.array_equal(val, again[1])
