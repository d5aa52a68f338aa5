import itertools
from math import log

import numpy as np
import pytest

from surfclust.partitions import (
    NEW,
    InvalidCluster,
    InvalidInput,
    Membership,
    PersistenceFlags,
    bell_number,
    canonical_labels,
    coclustering_accuracy,
    compatible,
    crp_log_eppf,
    crp_predictive,
    enumerate_partitions,
    eppf_extension_log_ratio,
    log_eppf_of,
    nvi_distance,
    simulate_trpm,
    vi_distance,
)


def test_canonical_labels():
    assert canonical_labels([7, 7, 2, 7, 2]).tolist() == [1, 1, 2, 1, 2]
    assert canonical_labels([3, 1, 2]).tolist() == [1, 2, 3]
    out = canonical_labels([1, 2, 1])
    assert np.array_equal(canonical_labels(out), out)


def test_membership_canonicalizes():
    m = Membership((5, 5, 9, 2))
    assert m.labels == (1, 1, 2, 3)
    assert m.n_clusters == 3
    assert m.cluster_sizes().tolist() == [2, 1, 1]
    assert m.restrict([2, 3]).labels == (1, 2)


def test_persistence_flags_validation():
    assert PersistenceFlags((0, 1, 0)).as_array().tolist() == [0, 1, 0]
    with pytest.raises(InvalidInput):
        PersistenceFlags((0, 2))


def test_eppf_hand_values():
    assert crp_log_eppf([3], 1.0) == pytest.approx(log(1 / 3))
    assert crp_log_eppf([1], 2.7) == pytest.approx(0.0)
    assert crp_log_eppf([1, 1, 1], 1.0) == pytest.approx(log(1 / 6))
    assert crp_log_eppf([], 1.0) == 0.0


def test_eppf_invalid_inputs():
    with pytest.raises(InvalidInput):
        crp_log_eppf([2, 0], 1.0)
    with pytest.raises(InvalidInput):
        crp_log_eppf([2], -1.0)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6])
@pytest.mark.parametrize("M", [0.3, 1.0, 3.0])
def test_eppf_normalization(n, M):
    total = sum(
        np.exp(log_eppf_of(labels, M)) for labels in enumerate_partitions(n)
    )
    assert total == pytest.approx(1.0, abs=1e-10)


def test_eppf_relabel_invariance():
    labels = [1, 2, 2, 3, 1]
    shuffled = [3, 1, 1, 2, 3]
    assert log_eppf_of(labels, 1.7) == pytest.approx(log_eppf_of(shuffled, 1.7))


def test_crp_predictive_hand_values():
    m = Membership((1, 1, 1, 2))  # sizes {3, 1}
    assert crp_predictive(m, 1, 1.0) == pytest.approx(3 / 5)
    assert crp_predictive(Membership(()), NEW, 4.2) == 1.0
    m2 = Membership((1, 1, 2, 2))
    assert crp_predictive(m2, NEW, 2.0) == pytest.approx(1 / 3)
    with pytest.raises(InvalidCluster):
        crp_predictive(m, 5, 1.0)


def test_extension_ratio_examples():
    full = Membership((1, 1, 2))
    assert eppf_extension_log_ratio(full, [0, 1, 2], 1.3) == 0.0
    pair = Membership((1, 1))
    assert eppf_extension_log_ratio(pair, [0], 1.0) == pytest.approx(log(0.5))


@pytest.mark.parametrize("n,n_fixed,M", [(4, 2, 1.7), (5, 2, 0.5), (6, 3, 2.0)])
def test_extension_normalization(n, n_fixed, M):
    rng = np.random.default_rng(n * 7 + n_fixed)
    fixed = sorted(rng.choice(n, size=n_fixed, replace=False).tolist())
    base = next(
        labels for labels in enumerate_partitions(n)
        if max(labels) >= min(2, n_fixed)
    )
    target = canonical_labels(np.asarray(base)[fixed])
    total = 0.0
    for labels in enumerate_partitions(n):
        if np.array_equal(canonical_labels(np.asarray(labels)[fixed]), target):
            total += np.exp(eppf_extension_log_ratio(labels, fixed, M))
    assert total == pytest.approx(1.0, abs=1e-10)


def test_compatible():
    prev = [1, 1, 2]
    assert compatible(prev, [2, 1, 1], [0, 0, 0])
    assert compatible(prev, [2, 2, 1], [1, 1, 1])  # relabeling of prev
    assert not compatible(prev, [1, 2, 3], [1, 1, 0])
    with pytest.raises(InvalidInput):
        compatible([1, 1], [1, 1, 2], [0, 0, 0])


def test_simulate_trpm_degenerate_persistence():
    rng = np.random.default_rng(0)
    seq = simulate_trpm(6, 5, 1.0, 2.0, rng)
    first = seq[0][0]
    assert all(flag == 0 for flag in seq[0][1].flags)
    for mem, flags in seq[1:]:
        assert all(f == 1 for f in flags.flags)
        assert mem.labels == first.labels  # canonical form kills relabeling
    with pytest.raises(InvalidInput):
        simulate_trpm(3, 2, 1.5, 1.0, rng)


def test_simulate_trpm_always_compatible():
    rng = np.random.default_rng(3)
    for _ in range(200):
        seq = simulate_trpm(5, 4, 0.6, 1.3, rng)
        for (prev, _), (nxt, flags) in zip(seq, seq[1:]):
            assert compatible(prev, nxt, flags)


def test_trpm_marginal_matches_crp():
    # second-period law stays CRP over 2e5 forward draws
    n, M, alpha = 4, 1.0, 0.5
    rng = np.random.default_rng(2024)
    counts: dict[tuple, int] = {}
    reps = 200_000
    for _ in range(reps):
        seq = simulate_trpm(n, 2, alpha, M, rng)
        key = seq[1][0].labels
        counts[key] = counts.get(key, 0) + 1
    tv = 0.0
    for labels in enumerate_partitions(n):
        expected = np.exp(log_eppf_of(labels, M))
        observed = counts.get(tuple(labels), 0) / reps
        tv += abs(expected - observed)
    assert tv / 2 < 0.02


def test_vi_hand_values():
    assert vi_distance([1, 1, 2], [2, 2, 1]) == 0.0
    assert vi_distance([1, 1, 2, 2], [1, 2, 1, 2]) == pytest.approx(2 * log(2))
    assert vi_distance([1, 1], [1, 2]) == pytest.approx(log(2))
    with pytest.raises(InvalidInput):
        vi_distance([1, 1], [1, 1, 2])


def test_vi_metric_properties_small():
    parts = [list(labels) for labels in enumerate_partitions(4)]
    for a, b in itertools.combinations(parts, 2):
        dab = vi_distance(a, b)
        assert dab == pytest.approx(vi_distance(b, a))
        assert dab > 0
    for a, b, c in itertools.permutations(parts[:8], 3):
        assert vi_distance(a, b) <= vi_distance(a, c) + vi_distance(c, b) + 1e-12


def test_nvi():
    assert nvi_distance([1, 2, 1], [2, 1, 2]) == 0.0
    assert nvi_distance([1, 1, 2, 2], [1, 2, 1, 2]) == pytest.approx(1.0)
    n = 6
    assert nvi_distance([1] * n, list(range(1, n + 1))) == pytest.approx(1.0)
    assert nvi_distance([1], [1]) == 0.0


def test_coclustering_accuracy():
    assert coclustering_accuracy([1, 2, 1], [2, 1, 2]) == 1.0
    assert coclustering_accuracy([1, 2, 3], [1, 1, 1]) == 0.0
    assert coclustering_accuracy([1, 1, 2, 2], [1, 1, 1, 1]) == pytest.approx(2 / 6)
    with pytest.raises(InvalidInput):
        coclustering_accuracy([1], [1])


def test_enumerate_partitions_bell_counts():
    for n, bell in [(0, 1), (1, 1), (2, 2), (3, 5), (4, 15), (5, 52), (8, 4140)]:
        parts = list(enumerate_partitions(n))
        assert len(parts) == bell
        assert len(set(parts)) == bell
        assert bell_number(n) == bell
        for labels in parts[:50]:
            assert tuple(canonical_labels(labels)) == labels
