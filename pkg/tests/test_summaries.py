import itertools

import numpy as np
import pytest

from surfclust.partitions import canonical_labels, enumerate_partitions, vi_distance
from surfclust.store import DrawStore, NoDraws
from surfclust.summaries import (
    IndicatorPanel,
    accuracy_trajectory,
    beta_trajectories,
    cluster_count_trajectory,
    coclustering,
    eta_squared,
    eta_squared_cell,
    min_vi_partition,
    nvi_between_runs,
    point_partitions,
    summarize_draws,
)


def test_coclustering_hand_cases():
    one_block = np.ones((4, 3), dtype=int)
    assert np.array_equal(coclustering(one_block), np.ones((3, 3)))
    singles = np.tile(np.arange(1, 4), (4, 1))
    assert np.array_equal(coclustering(singles), np.eye(3))
    draws = np.array([[1, 1, 2], [1, 2, 2]])
    P = coclustering(draws)
    assert P[0, 1] == pytest.approx(0.5)
    assert P[1, 2] == pytest.approx(0.5)
    assert P[0, 2] == pytest.approx(0.0)
    assert np.allclose(P, P.T)
    assert np.allclose(np.diag(P), 1.0)


def test_coclustering_requires_draws():
    with pytest.raises(NoDraws):
        coclustering(np.empty((0, 3), dtype=int))


def test_min_vi_all_equal_and_majority():
    draws = np.tile([1, 1, 2, 2], (5, 1))
    assert min_vi_partition(draws).tolist() == [1, 1, 2, 2]
    a, b = [1, 1, 2, 2], [1, 2, 2, 2]
    draws = np.array([a, a, a, b])
    assert min_vi_partition(draws).tolist() == a


def test_min_vi_matches_bruteforce():
    rng = np.random.default_rng(3)
    parts = [list(lab) for lab in enumerate_partitions(5)]
    for _ in range(25):
        idx = rng.integers(0, len(parts), size=10)
        draws = np.array([parts[k] for k in idx])
        got = min_vi_partition(draws)
        objective = {
            cand: np.mean([vi_distance(cand, row) for row in draws])
            for cand in {tuple(parts[k]) for k in idx}
        }
        best_value = min(objective.values())
        assert objective[tuple(got)] == pytest.approx(best_value, abs=1e-9)
        strict = [c for c, v in objective.items() if v < best_value + 1e-9]
        if len(strict) == 1:
            assert tuple(got) == strict[0]


def test_min_vi_invariances():
    rng = np.random.default_rng(4)
    draws = np.array(
        [canonical_labels(rng.integers(1, 3, size=5)) for _ in range(12)]
    )
    base = min_vi_partition(draws)
    perm = rng.permutation(12)
    assert np.array_equal(min_vi_partition(draws[perm]), base)
    relabeled = draws.copy()
    relabeled[relabeled == 1] = 9
    assert np.array_equal(min_vi_partition(relabeled), base)


def test_trajectories():
    assert cluster_count_trajectory(np.array([[1.0], [5.0]]))[0] == 3.0
    one = np.ones((6, 2, 3))
    assert np.array_equal(beta_trajectories(one), np.ones((2, 3)))
    draws = np.stack([np.full((2, 3), 1.0), np.full((2, 3), 3.0)])
    assert np.array_equal(beta_trajectories(draws), np.full((2, 3), 2.0))


def test_accuracy_trajectory():
    truth = np.array([[[1, 1, 1, 1]]])
    draws = np.array([[[[1, 1, 2, 2]]], [[[1, 1, 1, 1]]]])
    acc = accuracy_trajectory(draws, truth)
    assert acc[0, 0] == pytest.approx((2 / 6 + 1.0) / 2)


def test_eta_squared_hand_cases():
    draws = np.array([[1, 1, 2, 2]])
    assert eta_squared_cell(draws, [1.0, 2.0, 3.0, 4.0]) == pytest.approx(4 / 5)
    assert eta_squared_cell(draws, [1.0, 1.0, 4.0, 4.0]) == pytest.approx(1.0)
    assert eta_squared_cell(np.array([[1, 1, 1, 1]]), [1.0, 2.0, 3.0, 4.0]) == 0.0
    assert eta_squared_cell(draws, [2.0, 2.0, 2.0, 2.0]) == 0.0  # zero variance
    assert np.isnan(eta_squared_cell(draws, [1.0, np.nan, np.nan, np.nan]))


def test_eta_squared_affine_invariance_and_missing():
    rng = np.random.default_rng(5)
    draws = np.array(
        [canonical_labels(rng.integers(1, 4, size=6)) for _ in range(40)]
    )
    w = rng.standard_normal(6)
    base = eta_squared_cell(draws, w)
    assert eta_squared_cell(draws, 3.0 * w - 7.0) == pytest.approx(base)
    w_missing = w.copy()
    w_missing[2] = np.nan
    reduced = eta_squared_cell(draws, w_missing)
    keep = [0, 1, 3, 4, 5]
    manual = eta_squared_cell(draws[:, keep], w[keep])
    assert reduced == pytest.approx(manual)


def test_eta_squared_panel_shape_and_mask():
    rng = np.random.default_rng(6)
    D, p, T, n = 30, 2, 3, 5
    c = np.stack(
        [
            np.stack(
                [
                    np.stack([canonical_labels(rng.integers(1, 3, size=n)) for _ in range(T)])
                    for _ in range(p)
                ]
            )
            for _ in range(D)
        ]
    )
    values = rng.standard_normal((1, n, T))
    observed = np.ones((1, n, T), dtype=bool)
    observed[0, :, 0] = False  # a period with no data
    observed[0, 2:, 1] = False  # only two populations left
    panel = IndicatorPanel(["gdp"], np.where(observed, values, 0.0), observed)
    out = eta_squared(c, panel)
    assert out.shape == (1, p, T)
    assert np.isnan(out[0, :, 0]).all()
    assert np.all((out[0, :, 2] >= 0) & (out[0, :, 2] <= 1))


def test_nvi_between_runs():
    a = np.array([[[1, 1, 2, 2]]])
    same = nvi_between_runs(a, a)
    assert same[0, 0] == 0.0
    b = np.array([[[1, 2, 3, 4]]])
    one_block = np.array([[[1, 1, 1, 1]]])
    assert nvi_between_runs(one_block, b)[0, 0] == pytest.approx(1.0)


def make_store(D=8, p=2, T=3, n=4, seed=0):
    rng = np.random.default_rng(seed)
    store = DrawStore.allocate(
        D, p, T, n,
        populations=[f"pop{i}" for i in range(n)],
        ages=np.arange(5),
        periods=np.arange(1, T + 1),
    )
    for d in range(D):
        store.iters[d] = d + 1
        for j in range(p):
            for t in range(T):
                labels = canonical_labels(rng.integers(1, 3, size=n))
                store.c[d, j, t] = labels
                vals = rng.standard_normal(int(labels.max()))
                store.beta[d, j, t] = vals[labels - 1]
        store.K[d] = store.c[d].max(axis=2)
        store.psi[d] = rng.standard_normal((p, T))
        store.alpha[d] = rng.uniform(size=p)
        store.M[d] = rng.uniform(0.5, 2, size=p)
        store.sigma2[d] = rng.uniform(0.1, 1, size=n)
    store._row = D
    return store


def test_summarize_draws_consistency():
    store = make_store()
    truth = np.ones((2, 3, 4), dtype=int)
    summary = summarize_draws(store, truth=truth)
    p, T, n, _ = summary.cocluster.shape
    assert (p, T, n) == (2, 3, 4)
    for j in range(p):
        for t in range(T):
            block = summary.cocluster[j, t]
            assert np.allclose(block, block.T)
            assert np.allclose(np.diag(block), 1.0)
            assert block.min() >= 0 and block.max() <= 1
    assert summary.partitions.shape == (2, 3, 4)
    assert summary.accuracy.shape == (2, 3)
    # accuracy equals one exactly when every draw is the truth partition
    store2 = make_store()
    store2.c[:] = 1
    summary2 = summarize_draws(store2, truth=truth)
    assert np.all(summary2.accuracy == 1.0)


def test_store_roundtrip(tmp_path):
    store = make_store(D=5)
    store.manifest["seed"] = 3
    store.save(tmp_path / "run")
    back = DrawStore.load(tmp_path / "run")
    assert np.array_equal(back.c, store.c)
    assert np.allclose(back.beta, store.beta)
    assert np.allclose(back.psi, store.psi)
    assert np.allclose(back.alpha, store.alpha)
    assert np.allclose(back.M, store.M)
    assert np.allclose(back.sigma2, store.sigma2)
    assert np.array_equal(back.K, store.K)
    assert back.populations == store.populations
    assert back.manifest["seed"] == 3


def test_store_concat():
    a = make_store(D=4, seed=1)
    b = make_store(D=3, seed=2)
    merged = DrawStore.concat([a, b])
    assert merged.n_draws == 7
    assert np.array_equal(merged.c[:4], a.c)
    assert np.array_equal(merged.c[4:], b.c)
    point_partitions(merged.c)  # smoke: summaries accept merged stores
