"""Posterior summarization of retained draws.

Turns membership draws into co-clustering matrices, minimum-VI point
partitions, cluster-count and coefficient trajectories, accuracy against a
known truth, association coefficients with external indicators, and
normalized VI between the point partitions of two runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from surfclust.partitions import (
    InvalidInput,
    canonical_labels,
    coclustering_accuracy,
    nvi_distance,
    vi_distance,
)
from surfclust.store import DrawStore, NoDraws


@dataclass
class IndicatorPanel:
    """External per-population indicator series with a missingness mask."""

    names: list[str]
    values: np.ndarray    # (Q, n, T)
    observed: np.ndarray  # (Q, n, T)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        self.observed = np.asarray(self.observed, dtype=bool)
        if self.values.shape != self.observed.shape:
            raise InvalidInput("indicator values and mask shapes differ")
        if len(self.names) != self.values.shape[0]:
            raise InvalidInput("one name per indicator required")
        if not np.all(np.isfinite(self.values[self.observed])):
            raise InvalidInput("non-finite indicator value marked observed")

    @property
    def Q(self) -> int:
        return len(self.names)


def _draws_2d(c_draws) -> np.ndarray:
    arr = np.asarray(c_draws)
    if arr.ndim != 2:
        raise InvalidInput(f"expected draws of shape (D, n), got {arr.shape}")
    if arr.shape[0] == 0:
        raise NoDraws("no membership draws supplied")
    return arr


def coclustering(c_draws) -> np.ndarray:
    """Pairwise co-assignment frequencies.

    Accepts draws of shape (D, n) and returns (n, n); or a whole array of
    shape (D, p, T, n) and returns (p, T, n, n).
    """
    arr = np.asarray(c_draws)
    if arr.ndim == 2:
        arr = _draws_2d(arr)
        same = arr[:, :, None] == arr[:, None, :]
        return same.mean(axis=0)
    if arr.ndim == 4:
        if arr.shape[0] == 0:
            raise NoDraws("no membership draws supplied")
        D, p, T, n = arr.shape
        out = np.empty((p, T, n, n))
        for j in range(p):
            for t in range(T):
                block = arr[:, j, t, :]
                out[j, t] = (block[:, :, None] == block[:, None, :]).mean(axis=0)
        return out
    raise InvalidInput(f"unsupported draw array shape {arr.shape}")


def min_vi_partition(c_draws) -> np.ndarray:
    """The sampled partition minimizing mean VI to all draws.

    The search space is the set of distinct sampled partitions; ties break
    toward fewer clusters and then lexicographically smaller canonical
    labels.
    """
    arr = _draws_2d(c_draws)
    D = arr.shape[0]
    canon = np.stack([canonical_labels(row) for row in arr])
    uniq, counts = np.unique(canon, axis=0, return_counts=True)
    U = uniq.shape[0]
    if U == 1:
        return uniq[0].copy()
    dist = np.zeros((U, U))
    for a in range(U):
        for b in range(a + 1, U):
            d = vi_distance(uniq[a], uniq[b])
            dist[a, b] = dist[b, a] = d
    mean_vi = dist @ counts / D
    order = sorted(
        range(U), key=lambda u: (mean_vi[u], int(uniq[u].max()), tuple(uniq[u]))
    )
    return uniq[order[0]].copy()


def cluster_count_trajectory(K_draws) -> np.ndarray:
    """Posterior mean cluster counts; averages over the first axis."""
    arr = np.asarray(K_draws, dtype=float)
    if arr.shape[0] == 0:
        raise NoDraws("no draws supplied")
    return arr.mean(axis=0)


def beta_trajectories(beta_draws) -> np.ndarray:
    """Posterior mean per-population coefficients; averages the first axis."""
    arr = np.asarray(beta_draws, dtype=float)
    if arr.shape[0] == 0:
        raise NoDraws("no draws supplied")
    return arr.mean(axis=0)


def accuracy_trajectory(c_draws, truth) -> np.ndarray:
    """Posterior mean pairwise agreement with the true partitions.

    ``c_draws`` has shape (D, p, T, n) and ``truth`` (p, T, n); the result
    is the (p, T) array of mean co-clustering accuracies.
    """
    arr = np.asarray(c_draws)
    truth = np.asarray(truth)
    if arr.ndim != 4 or truth.shape != arr.shape[1:]:
        raise InvalidInput(
            f"draws {arr.shape} and truth {truth.shape} are inconsistent"
        )
    if arr.shape[0] == 0:
        raise NoDraws("no membership draws supplied")
    D, p, T, n = arr.shape
    iu = np.triu_indices(n, k=1)
    out = np.empty((p, T))
    for j in range(p):
        for t in range(T):
            block = arr[:, j, t, :]
            same = (block[:, :, None] == block[:, None, :])[:, iu[0], iu[1]]
            truth_same = (truth[j, t][:, None] == truth[j, t][None, :])[iu]
            out[j, t] = (same == truth_same).mean()
    return out


def eta_squared_cell(c_draws, values, observed=None) -> float:
    """Mean share of indicator variance explained by the sampled clusters.

    ``values`` holds one indicator at one period over all populations;
    populations marked unobserved are dropped.  Returns NaN when fewer than
    two populations remain; a zero-variance indicator yields zero.
    """
    arr = _draws_2d(c_draws)
    w = np.asarray(values, dtype=float)
    mask = np.isfinite(w) if observed is None else np.asarray(observed, dtype=bool)
    keep = np.nonzero(mask)[0]
    if keep.size < 2:
        return float("nan")
    w = w[keep]
    labels = arr[:, keep]
    D, nv = labels.shape
    grand = w.mean()
    sst = float(((w - grand) ** 2).sum())
    if sst == 0.0:
        return 0.0
    offset = labels + (nv + 1) * np.arange(D)[:, None]
    flat = offset.ravel()
    size = (nv + 1) * D
    sums = np.bincount(flat, weights=np.tile(w, D), minlength=size)
    counts = np.bincount(flat, minlength=size)
    with np.errstate(divide="ignore", invalid="ignore"):
        per_cluster = np.where(counts > 0, sums**2 / np.where(counts, counts, 1), 0.0)
    ssb = per_cluster.reshape(D, nv + 1).sum(axis=1) - nv * grand**2
    eta2 = np.clip(ssb / sst, 0.0, 1.0)
    return float(eta2.mean())


def eta_squared(c_draws, indicators: IndicatorPanel) -> np.ndarray:
    """Posterior mean eta-squared per (indicator, basis, period), NaN-masked."""
    arr = np.asarray(c_draws)
    if arr.ndim != 4:
        raise InvalidInput(f"expected draws of shape (D, p, T, n), got {arr.shape}")
    D, p, T, n = arr.shape
    if indicators.values.shape[1:] != (n, T):
        raise InvalidInput(
            f"indicator panel {indicators.values.shape} does not match (n={n}, T={T})"
        )
    out = np.full((indicators.Q, p, T), np.nan)
    for q in range(indicators.Q):
        for t in range(T):
            obs = indicators.observed[q, :, t]
            if obs.sum() < 2:
                continue
            w = indicators.values[q, :, t]
            for j in range(p):
                out[q, j, t] = eta_squared_cell(arr[:, j, t, :], w, obs)
    return out


def point_partitions(c_draws) -> np.ndarray:
    """Minimum-VI point partition per (basis, period), shape (p, T, n)."""
    arr = np.asarray(c_draws)
    if arr.ndim != 4:
        raise InvalidInput(f"expected draws of shape (D, p, T, n), got {arr.shape}")
    D, p, T, n = arr.shape
    out = np.empty((p, T, n), dtype=np.int64)
    for j in range(p):
        for t in range(T):
            out[j, t] = min_vi_partition(arr[:, j, t, :])
    return out


def nvi_between_runs(points_a, points_b) -> np.ndarray:
    """Normalized VI between two runs' point partitions, per (basis, period)."""
    a = np.asarray(points_a)
    b = np.asarray(points_b)
    if a.shape != b.shape:
        raise InvalidInput(f"shape mismatch: {a.shape} vs {b.shape}")
    p, T, _ = a.shape
    out = np.empty((p, T))
    for j in range(p):
        for t in range(T):
            out[j, t] = nvi_distance(a[j, t], b[j, t])
    return out


@dataclass
class PosteriorSummary:
    """Everything the reporting layer writes out for one run."""

    populations: list[str]
    periods: np.ndarray
    cocluster: np.ndarray                 # (p, T, n, n)
    partitions: np.ndarray                # (p, T, n)
    cluster_counts: np.ndarray            # (p, T)
    beta_mean: np.ndarray                 # (p, T, n)
    accuracy: Optional[np.ndarray] = None  # (p, T)
    eta2: Optional[np.ndarray] = None      # (Q, p, T)
    indicator_names: list[str] = field(default_factory=list)
    nvi: Optional[np.ndarray] = None       # (p, T)


def summarize_draws(
    store: DrawStore,
    truth: Optional[np.ndarray] = None,
    indicators: Optional[IndicatorPanel] = None,
    compare: Optional[DrawStore] = None,
) -> PosteriorSummary:
    """Compute the full posterior summary of one draw store."""
    if store.n_draws == 0:
        raise NoDraws("store holds no draws")
    c = store.c[: store.n_draws]
    summary = PosteriorSummary(
        populations=store.populations,
        periods=store.periods,
        cocluster=coclustering(c),
        partitions=point_partitions(c),
        cluster_counts=cluster_count_trajectory(store.K[: store.n_draws]),
        beta_mean=beta_trajectories(store.beta[: store.n_draws]),
    )
    if truth is not None:
        summary.accuracy = accuracy_trajectory(c, truth)
    if indicators is not None:
        summary.eta2 = eta_squared(c, indicators)
        summary.indicator_names = list(indicators.names)
    if compare is not None:
        other = point_partitions(compare.c[: compare.n_draws])
        summary.nvi = nvi_between_runs(summary.partitions, other)
    return summary
