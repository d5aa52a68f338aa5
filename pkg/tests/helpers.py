"""Shared oracle machinery for the sampler tests.

Everything here is written independently of the library's update formulas:
enumeration over partition/flag configurations and closed-form Gaussian
integrals, used to pin down exact targets the sampler must match.
"""

import numpy as np

from surfclust.partitions import canonical_labels, enumerate_partitions, log_eppf_of


def restricted_equal(a, b, subset) -> bool:
    idx = sorted(subset)
    if not idx:
        return True
    return np.array_equal(
        canonical_labels(np.asarray(a)[idx]), canonical_labels(np.asarray(b)[idx])
    )


def cluster_members(labels):
    labels = np.asarray(labels)
    return [np.nonzero(labels == k)[0] for k in range(1, labels.max() + 1)]


def log_marginal_lik_cluster(y_rows, g, sigma2_rows, psi, delta2) -> float:
    """Log of integral over one shared coefficient of a Gaussian cluster.

    ``y_rows``: list of 1-D observation vectors (one per member over ages),
    ``g``: basis values at those ages, ``sigma2_rows``: member noise
    variances; the coefficient prior is N(psi, delta2).
    """
    lam = 1.0 / delta2
    h = psi / delta2
    quad = psi**2 / delta2
    n_obs = 0
    log_norm = 0.0
    for y, s2 in zip(y_rows, sigma2_rows):
        lam += (g @ g) / s2
        h += (y @ g) / s2
        quad += (y @ y) / s2
        n_obs += y.size
        log_norm += -0.5 * y.size * np.log(2 * np.pi * s2)
    return log_norm - 0.5 * np.log(delta2 * lam) - 0.5 * (quad - h**2 / lam)


def micro_joint_log_prob(c1, gamma2, c2, y, g, sigma2, psi, delta2, alpha, M):
    """Exact log joint of (c1, gamma2, c2) for the one-basis micro model.

    ``y`` has shape (n, X, 2); the per-period cluster coefficients are
    integrated out analytically.
    """
    c1 = np.asarray(c1)
    c2 = np.asarray(c2)
    gamma2 = np.asarray(gamma2)
    keep = np.nonzero(gamma2)[0]
    if not restricted_equal(c1, c2, keep):
        return -np.inf
    lp = log_eppf_of(c1, M)
    lp += float(np.sum(np.where(gamma2 == 1, np.log(alpha), np.log1p(-alpha))))
    lp += log_eppf_of(c2, M) - log_eppf_of(c1[sorted(keep)], M)
    for t, labels in ((0, c1), (1, c2)):
        for members in cluster_members(labels):
            lp += log_marginal_lik_cluster(
                [y[i, :, t] for i in members],
                g,
                [sigma2[i] for i in members],
                psi[t],
                delta2,
            )
    return lp


def micro_exact_distribution(y, g, sigma2, psi, delta2, alpha, M):
    """Normalized exact law over all (c1, gamma2, c2) states of the micro model."""
    n = y.shape[0]
    states = []
    logps = []
    for c1 in enumerate_partitions(n):
        for mask in range(2**n):
            gamma2 = tuple((mask >> i) & 1 for i in range(n))
            for c2 in enumerate_partitions(n):
                lp = micro_joint_log_prob(
                    c1, gamma2, c2, y, g, sigma2, psi, delta2, alpha, M
                )
                if np.isfinite(lp):
                    states.append((c1, gamma2, c2))
                    logps.append(lp)
    logps = np.asarray(logps)
    probs = np.exp(logps - logps.max())
    probs /= probs.sum()
    return {s: float(p) for s, p in zip(states, probs)}


def batch_mean_se(series, n_batches: int = 100) -> float:
    """Autocorrelation-robust standard error of a chain mean."""
    x = np.asarray(series, dtype=float)
    size = x.size // n_batches
    if size < 1:
        return float(x.std(ddof=1) / np.sqrt(x.size))
    trimmed = x[: size * n_batches].reshape(n_batches, size)
    means = trimmed.mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(n_batches))
