"""Random-partition calculus.

Chinese restaurant process probabilities (exchangeable partition probability
function and urn predictive), the temporal random partition construction used
as the prior on cluster memberships, and metrics for comparing partitions
(variation of information and pairwise co-clustering agreement).

Memberships are stored in canonical order-of-appearance form: the first unit
carries label 1, and each new cluster takes the next unused integer.  This
makes equality of set partitions equality of label vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import lgamma, log
from typing import Iterable, Iterator, Sequence

import numpy as np

#: Sentinel accepted by :func:`crp_predictive` for "open a new cluster".
NEW = "new"


class InvalidInput(ValueError):
    """Malformed partition arguments (length mismatch, bad sizes, bad M)."""


class InvalidCluster(ValueError):
    """A cluster label that does not exist in the membership."""


def canonical_labels(labels) -> np.ndarray:
    """Relabel a membership vector to order-of-appearance canonical form."""
    labels = np.asarray(labels)
    mapping: dict[int, int] = {}
    out = np.empty(labels.size, dtype=np.int64)
    for idx, lab in enumerate(labels.tolist()):
        if lab not in mapping:
            mapping[lab] = len(mapping) + 1
        out[idx] = mapping[lab]
    return out


def _labels_of(m) -> np.ndarray:
    """Accept a Membership, array or sequence and return raw labels."""
    return np.asarray(getattr(m, "labels", m))


@dataclass(frozen=True)
class Membership:
    """A set partition of n units, canonically labelled.

    ``labels[i]`` is the cluster of unit i, in {1, ..., K}; unit 0 always has
    label 1 and new labels appear in increasing order.
    """

    labels: tuple[int, ...]

    def __post_init__(self) -> None:
        canon = canonical_labels(self.labels)
        object.__setattr__(self, "labels", tuple(int(v) for v in canon))

    @classmethod
    def from_labels(cls, labels) -> "Membership":
        return cls(tuple(int(v) for v in np.asarray(labels).tolist()))

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def n_clusters(self) -> int:
        return max(self.labels) if self.labels else 0

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(np.asarray(self.labels), minlength=self.n_clusters + 1)[1:]

    def restrict(self, subset: Iterable[int]) -> "Membership":
        """Partition induced on a subset of unit indices."""
        idx = sorted(set(int(i) for i in subset))
        labs = np.asarray(self.labels)
        return Membership.from_labels(labs[idx]) if idx else Membership(())

    def as_array(self) -> np.ndarray:
        return np.asarray(self.labels, dtype=np.int64)


@dataclass(frozen=True)
class PersistenceFlags:
    """Per-unit binary indicators of cluster persistence between periods."""

    flags: tuple[int, ...]

    def __post_init__(self) -> None:
        vals = tuple(int(v) for v in self.flags)
        if any(v not in (0, 1) for v in vals):
            raise InvalidInput("persistence flags must be 0 or 1")
        object.__setattr__(self, "flags", vals)

    @property
    def n(self) -> int:
        return len(self.flags)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.flags, dtype=np.int8)


def crp_log_eppf(cluster_sizes, M: float) -> float:
    """Log probability of a set partition with the given cluster sizes.

    The empty partition (no clusters) has probability one.  Concentration
    M must be positive; any nonpositive size is rejected.
    """
    if M <= 0:
        raise InvalidInput(f"concentration must be positive, got {M}")
    sizes = [int(s) for s in cluster_sizes]
    if any(s <= 0 for s in sizes):
        raise InvalidInput(f"cluster sizes must be positive, got {sizes}")
    m = sum(sizes)
    if m == 0:
        return 0.0
    return (
        len(sizes) * log(M)
        + sum(lgamma(s) for s in sizes)
        + lgamma(M)
        - lgamma(M + m)
    )


def log_eppf_of(membership, M: float) -> float:
    """Log EPPF of a membership vector (empty vector allowed)."""
    labels = _labels_of(membership)
    if labels.size == 0:
        return crp_log_eppf([], M)
    sizes = np.bincount(canonical_labels(labels))[1:]
    return crp_log_eppf(sizes, M)


def crp_predictive(restricted, target_cluster, M: float) -> float:
    """Urn probability that a new unit lands in a given cluster.

    Given m units already seated, an existing cluster of size s is chosen
    with probability s/(M+m) and a new cluster with probability M/(M+m).
    ``target_cluster`` is an existing label or the module constant ``NEW``.
    """
    if M <= 0:
        raise InvalidInput(f"concentration must be positive, got {M}")
    labels = _labels_of(restricted)
    m = labels.size
    if target_cluster == NEW:
        return M / (M + m)
    k = int(target_cluster)
    size = int(np.count_nonzero(labels == k))
    if size == 0:
        raise InvalidCluster(f"no cluster labelled {k} among {m} units")
    return size / (M + m)


def eppf_extension_log_ratio(full, fixed_subset, M: float) -> float:
    """Log EPPF of a partition minus log EPPF of its restriction.

    Equals the log probability, under sequential urn insertion, of extending
    the restricted partition on ``fixed_subset`` to the full one; summed over
    all possible extensions the probabilities add to one.
    """
    labels = _labels_of(full)
    idx = sorted(set(int(i) for i in fixed_subset))
    restricted = labels[idx]
    return log_eppf_of(labels, M) - log_eppf_of(restricted, M)


def compatible(prev, nxt, flags) -> bool:
    """Whether two consecutive memberships agree on all flagged units.

    True iff the partitions induced on {i : flags[i] = 1} by ``prev`` and
    ``nxt`` are identical as set partitions.
    """
    prev_l = _labels_of(prev)
    next_l = _labels_of(nxt)
    flag_a = _labels_of(flags) if not isinstance(flags, PersistenceFlags) else flags.as_array()
    if not (prev_l.size == next_l.size == flag_a.size):
        raise InvalidInput(
            f"length mismatch: {prev_l.size}, {next_l.size}, {flag_a.size}"
        )
    keep = np.nonzero(flag_a)[0]
    if keep.size == 0:
        return True
    return np.array_equal(
        canonical_labels(prev_l[keep]), canonical_labels(next_l[keep])
    )


def _urn_insert(fixed_labels: np.ndarray, free_index: Sequence[int], n: int, M: float, rng) -> np.ndarray:
    """Seat free units sequentially by the urn, given fixed occupied labels.

    ``fixed_labels`` holds labels > 0 for already-seated units and 0 for free
    ones; free units are inserted in ascending index order.
    """
    labels = fixed_labels.copy()
    counts: dict[int, int] = {}
    for lab in labels[labels > 0].tolist():
        counts[lab] = counts.get(lab, 0) + 1
    next_label = max(counts) + 1 if counts else 1
    for i in free_index:
        m = sum(counts.values())
        u = rng.random() * (M + m)
        chosen = 0
        acc = 0.0
        for lab, cnt in counts.items():
            acc += cnt
            if u < acc:
                chosen = lab
                break
        if chosen == 0:
            chosen = next_label
            next_label += 1
            counts[chosen] = 1
        else:
            counts[chosen] += 1
        labels[i] = chosen
    return canonical_labels(labels)


def simulate_trpm(
    n: int, T: int, alpha: float, M: float, rng
) -> list[tuple[Membership, PersistenceFlags]]:
    """Forward-simulate the temporal random partition process.

    The first membership is a Chinese restaurant draw with concentration M.
    At each later period every unit independently keeps its cluster with
    probability ``alpha``; the remaining units are reseated by the urn given
    the sub-partition of the persisting ones, which makes every marginal a
    CRP(M) draw.  Flags at the first period are all zero.
    """
    if not 0.0 <= alpha <= 1.0:
        raise InvalidInput(f"alpha must be in [0, 1], got {alpha}")
    if M <= 0:
        raise InvalidInput(f"concentration must be positive, got {M}")
    out: list[tuple[Membership, PersistenceFlags]] = []
    labels = _urn_insert(np.zeros(n, dtype=np.int64), range(n), n, M, rng)
    out.append((Membership.from_labels(labels), PersistenceFlags((0,) * n)))
    for _ in range(1, T):
        flags = (rng.random(n) < alpha).astype(np.int8)
        fixed = np.where(flags == 1, labels, 0)
        free = [i for i in range(n) if flags[i] == 0]
        labels = _urn_insert(fixed, free, n, M, rng)
        out.append((Membership.from_labels(labels), PersistenceFlags(tuple(flags.tolist()))))
    return out


def _contingency(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ka = a.max()
    kb = b.max()
    table = np.zeros((ka, kb), dtype=np.int64)
    for la, lb in zip(a.tolist(), b.tolist()):
        table[la - 1, lb - 1] += 1
    return table


def vi_distance(a, b) -> float:
    """Variation of information between two partitions (natural log)."""
    la = canonical_labels(_labels_of(a))
    lb = canonical_labels(_labels_of(b))
    if la.size != lb.size:
        raise InvalidInput(f"length mismatch: {la.size} vs {lb.size}")
    n = la.size
    if n == 0 or np.array_equal(la, lb):
        return 0.0
    if tuple(lb) < tuple(la):  # fixed argument order keeps symmetry exact
        la, lb = lb, la
    table = _contingency(la, lb)
    pa = table.sum(axis=1) / n
    pb = table.sum(axis=0) / n
    h_a = -np.sum(pa * np.log(pa, where=pa > 0, out=np.zeros_like(pa)))
    h_b = -np.sum(pb * np.log(pb, where=pb > 0, out=np.zeros_like(pb)))
    pj = table / n
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = pj / np.outer(pa, pb)
        terms = np.where(pj > 0, pj * np.log(ratio, where=pj > 0, out=np.zeros_like(pj)), 0.0)
    mi = terms.sum()
    return float(max(h_a + h_b - 2.0 * mi, 0.0))


def nvi_distance(a, b) -> float:
    """VI normalized by log(n); zero for single-unit partitions."""
    la = _labels_of(a)
    n = la.size
    if n < 2:
        return 0.0
    return vi_distance(a, b) / log(n)


def coclustering_accuracy(estimate, truth) -> float:
    """Fraction of unit pairs whose co-clustering status matches the truth."""
    le = canonical_labels(_labels_of(estimate))
    lt = canonical_labels(_labels_of(truth))
    if le.size != lt.size:
        raise InvalidInput(f"length mismatch: {le.size} vs {lt.size}")
    n = le.size
    if n < 2:
        raise InvalidInput("need at least two units to compare pairs")
    same_e = le[:, None] == le[None, :]
    same_t = lt[:, None] == lt[None, :]
    iu = np.triu_indices(n, k=1)
    return float(np.mean(same_e[iu] == same_t[iu]))


def enumerate_partitions(n: int) -> Iterator[tuple[int, ...]]:
    """Yield every set partition of n units as a canonical label tuple.

    Enumeration walks restricted growth strings, so each partition appears
    exactly once and already in order-of-appearance form.
    """
    if n == 0:
        yield ()
        return
    labels = [1] * n

    def rec(i: int, k: int):
        if i == n:
            yield tuple(labels)
            return
        for lab in range(1, k + 2):
            labels[i] = lab
            yield from rec(i + 1, max(k, lab))

    yield from rec(1, 1)


def bell_number(n: int) -> int:
    """Number of set partitions of n units (Bell triangle recurrence)."""
    if n < 0:
        raise InvalidInput("n must be nonnegative")
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]
