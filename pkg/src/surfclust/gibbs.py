"""Gibbs sampler for the clustered surface model.

One sweep updates, in a fixed order: the persistence flags and cluster
memberships of every (basis, period) cell, the persistence and concentration
parameters of each basis, the cluster-level coefficients and their smooth
trend, the per-population noise variances, and the two scale hyperparameters.
Flag and membership draws use closed-form urn probabilities; membership
moves propose fresh coefficients for new clusters (auxiliary-variable style);
the concentration parameter is slice-sampled on the log scale against its
exact target.  All categorical weights are handled in log space.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from math import exp, lgamma, log

import numpy as np

from surfclust.calibrate import calibrate_mu, initialize_state
from surfclust.modelcore import (
    GPCovariance,
    Hyperparameters,
    ModelState,
    NumericError,
    SurfacePanel,
)
from surfclust.partitions import canonical_labels


@dataclass
class UpdateToggles:
    """Per-block switches, for debugging and consistency tests."""

    gamma: bool = True
    membership: bool = True
    alpha: bool = True
    concentration: bool = True
    beta_star: bool = True
    psi: bool = True
    sigma2: bool = True
    scales: bool = True

    @classmethod
    def none(cls) -> "UpdateToggles":
        return cls(**{k: False for k in cls().__dict__})


@dataclass
class SamplerConfig:
    """Chain-length settings and the seed for one chain.

    ``seed`` is anything ``numpy.random.default_rng`` accepts; multi-chain
    runs pass ``[base_seed, chain_index]``.
    """

    iterations: int
    burn_in: int
    thin: int = 1
    seed: int | list[int] = 0
    n_aux: int = 1
    toggles: UpdateToggles = field(default_factory=UpdateToggles)

    def __post_init__(self) -> None:
        if self.iterations <= 0 or self.burn_in < 0:
            raise ValueError("iterations must be positive and burn_in nonnegative")
        if self.burn_in >= self.iterations:
            raise ValueError(
                f"burn_in {self.burn_in} must be below iterations {self.iterations}"
            )
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.n_aux < 1:
            raise ValueError("need at least one auxiliary coefficient draw")

    @property
    def n_draws(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


def slice_sample_1d(logf, x0: float, rng, width: float = 1.0, max_expand: int = 64) -> float:
    """One univariate slice-sampling transition with stepping out.

    Returns a new point leaving the density exp(logf) invariant.
    """
    f0 = logf(x0)
    if not np.isfinite(f0):
        raise NumericError(f"slice sampler started at zero-density point {x0}")
    height = f0 + log(1.0 - rng.random())
    u = rng.random()
    lo = x0 - width * u
    hi = lo + width
    for _ in range(max_expand):
        if logf(lo) < height:
            break
        lo -= width
    for _ in range(max_expand):
        if logf(hi) < height:
            break
        hi += width
    while True:
        x = lo + rng.random() * (hi - lo)
        if logf(x) > height:
            return x
        if x < x0:
            lo = x
        else:
            hi = x


class GibbsSampler:
    """Owns one chain: the state, the data caches, and one random stream."""

    def __init__(
        self,
        panel: SurfacePanel,
        basis,
        hyper: Hyperparameters,
        state: ModelState,
        gp: GPCovariance | None = None,
        rng=None,
        n_aux: int = 1,
        toggles: UpdateToggles | None = None,
    ):
        if hyper.mu is None:
            raise ValueError("hyperparameters need calibrated mean curves (mu)")
        self.panel = panel
        self.basis = basis
        self.hyper = hyper
        self.state = state
        self.gp = gp or GPCovariance.from_length_scale(
            panel.n_periods, hyper.gp_length_scale
        )
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.n_aux = int(n_aux)
        self.toggles = toggles or UpdateToggles()

        self.G = basis.design
        self.supports = basis.column_supports
        self.n, self.X, self.T = panel.n, panel.n_ages, panel.n_periods
        self.p = basis.p
        # period-major copies keep the per-age slices contiguous
        self.logm = np.ascontiguousarray(panel.log_rates.transpose(0, 2, 1))
        self.obs = np.ascontiguousarray(panel.observed.transpose(0, 2, 1))
        self.complete = panel.complete
        self._g_cols = [np.ascontiguousarray(self.G[lo:hi, j]) for j, (lo, hi) in enumerate(self.supports)]
        self._gg_full = np.array([g @ g for g in self._g_cols])
        self._log_size = np.log(np.arange(1, self.n + 1, dtype=float))
        self.beta_exp = state.beta_expanded()
        self.fitted = np.einsum("xj,njt->ntx", self.G, self.beta_exp)

    # ------------------------------------------------------------------
    # observation handling

    def set_observations(self, log_rates: np.ndarray) -> None:
        """Replace the observed panel values (surfaces and state unchanged)."""
        self.logm = np.ascontiguousarray(
            np.asarray(log_rates, dtype=float).transpose(0, 2, 1)
        )

    def refresh_caches(self) -> None:
        """Recompute the fitted-surface caches from the current state."""
        self.beta_exp = self.state.beta_expanded()
        self.fitted = np.einsum("xj,njt->ntx", self.G, self.beta_exp)

    def _mask(self, i: int, t: int, lo: int, hi: int):
        return None if self.complete else self.obs[i, t, lo:hi]

    def _suff_stats(self, i: int, j: int, t: int):
        """(sum g^2, sum r*g) over observed ages in the support of basis j."""
        lo, hi = self.supports[j]
        g = self._g_cols[j]
        d = self.logm[i, t, lo:hi] - self.fitted[i, t, lo:hi]
        v_old = self.beta_exp[i, j, t]
        if self.complete:
            gg = self._gg_full[j]
            rg = d @ g + v_old * gg
        else:
            m = self.obs[i, t, lo:hi]
            gm = np.where(m, g, 0.0)
            gg = gm @ gm
            rg = np.where(m, d, 0.0) @ gm + v_old * gg
        return gg, rg

    # ------------------------------------------------------------------
    # persistence flags

    def gamma_success_prob(self, j: int, t: int, i: int) -> float:
        """Closed-form conditional probability that unit i keeps its cluster."""
        labels_t = self.state.c[j, t]
        labels_prev = self.state.c[j, t - 1]
        flags = self.state.gamma[j, t]
        others = [u for u in range(self.n) if u != i and flags[u] == 1]
        kept = sorted(others + [i])
        if not np.array_equal(
            canonical_labels(labels_prev[kept]), canonical_labels(labels_t[kept])
        ):
            return 0.0
        m = len(others)
        s = int(sum(1 for u in others if labels_t[u] == labels_t[i]))
        M = self.state.M[j]
        rho = (s if s > 0 else M) / (M + m)
        a = self.state.alpha[j]
        return a / (a + (1.0 - a) * rho)

    def update_gamma(self, j: int, t: int, i: int) -> int:
        prob = self.gamma_success_prob(j, t, i)
        draw = 1 if self.rng.random() < prob else 0
        self.state.gamma[j, t, i] = draw
        return draw

    # ------------------------------------------------------------------
    # cluster memberships

    def membership_candidates(self, j: int, t: int, i: int):
        """Candidate clusters for unit i with log weights and coefficients.

        Returns (labels, values, logw): ``labels[k] > 0`` points at an
        existing cluster, ``labels[k] == 0`` opens a new one with coefficient
        ``values[k]``.  Weights combine the urn counts, the Gaussian
        likelihood of the unit's partial residuals, and the compatibility
        constraint against the next period.
        """
        state = self.state
        labels_t = state.c[j, t]
        beta_jt = state.beta_star[j][t]
        old_label = int(labels_t[i])
        sizes = np.bincount(labels_t, minlength=len(beta_jt) + 1)[1:]
        sizes_minus = sizes.copy()
        sizes_minus[old_label - 1] -= 1
        was_singleton = sizes_minus[old_label - 1] == 0

        existing = np.nonzero(sizes_minus)[0] + 1
        n_aux = self.n_aux
        fresh_needed = n_aux - 1 if was_singleton else n_aux
        psi_jt = state.psi[j, t]
        sd = np.sqrt(state.delta2[j])
        fresh = psi_jt + sd * self.rng.standard_normal(fresh_needed)
        if was_singleton:
            aux_vals = np.concatenate(([beta_jt[old_label - 1]], fresh))
        else:
            aux_vals = fresh

        cand_labels = np.concatenate([existing, np.zeros(n_aux, dtype=np.int64)])
        cand_vals = np.concatenate([beta_jt[existing - 1], aux_vals])
        log_prior = np.concatenate(
            [
                self._log_size[sizes_minus[existing - 1] - 1],
                np.full(n_aux, log(state.M[j]) - log(n_aux)),
            ]
        )
        gg, rg = self._suff_stats(i, j, t)
        loglik = (cand_vals * rg - 0.5 * cand_vals**2 * gg) / state.sigma2[i]
        logw = log_prior + loglik

        if t + 1 < self.T and state.gamma[j, t + 1, i] == 1:
            flags_next = state.gamma[j, t + 1]
            labels_next = state.c[j, t + 1]
            group = [
                u for u in range(self.n) if u != i and flags_next[u] == 1
            ]
            mates = {u for u in group if labels_next[u] == labels_next[i]}
            for idx, k in enumerate(cand_labels):
                if k == 0:
                    ok = not mates
                else:
                    here = {u for u in group if labels_t[u] == k}
                    ok = here == mates
                if not ok:
                    logw[idx] = -np.inf
        return cand_labels, cand_vals, logw

    def update_membership(self, j: int, t: int, i: int) -> None:
        cand_labels, cand_vals, logw = self.membership_candidates(j, t, i)
        top = logw.max()
        if not np.isfinite(top):
            raise AssertionError(
                f"no feasible cluster for unit {i} at (j={j}, t={t})"
            )
        w = np.exp(logw - top)
        cdf = np.cumsum(w)
        idx = int(np.searchsorted(cdf, self.rng.random() * cdf[-1]))
        idx = min(idx, len(w) - 1)
        self._assign(j, t, i, int(cand_labels[idx]), float(cand_vals[idx]))

    def _assign(self, j: int, t: int, i: int, label: int, value: float) -> None:
        """Move unit i to ``label`` (0 opens a new cluster with ``value``).

        Keeps labels canonical, compacts emptied clusters, and updates the
        expanded-coefficient and fitted-surface caches incrementally.
        """
        state = self.state
        labels = state.c[j, t]
        beta_jt = state.beta_star[j][t]
        old_value = self.beta_exp[i, j, t]
        values = {lab: beta_jt[lab - 1] for lab in range(1, len(beta_jt) + 1)}
        if label == 0:
            label = len(beta_jt) + 1
            values[label] = value
        labels[i] = label
        mapping: dict[int, int] = {}
        new_beta = []
        for u in range(self.n):
            lab = int(labels[u])
            if lab not in mapping:
                mapping[lab] = len(mapping) + 1
                new_beta.append(values[lab])
            labels[u] = mapping[lab]
        state.beta_star[j][t] = np.asarray(new_beta)
        new_value = values[label]
        dv = new_value - old_value
        if dv != 0.0:
            self.beta_exp[i, j, t] = new_value
            lo, hi = self.supports[j]
            self.fitted[i, t, lo:hi] += dv * self._g_cols[j]

    # ------------------------------------------------------------------
    # persistence and concentration hyperparameters

    def alpha_posterior(self, j: int) -> tuple[float, float]:
        flags = self.state.gamma[j, 1:, :]
        s = float(flags.sum())
        total = self.n * (self.T - 1)
        return self.hyper.a_alpha + s, self.hyper.b_alpha + total - s

    def update_alpha(self, j: int) -> float:
        a, b = self.alpha_posterior(j)
        draw = float(self.rng.beta(a, b))
        self.state.alpha[j] = draw
        return draw

    def _concentration_stats(self, j: int) -> tuple[int, list[int]]:
        """Sufficient statistics of the concentration target for basis j.

        Returns the net power of M across all per-period extension factors
        and the sizes of the nonempty persisting subsets.
        """
        net_power = 0
        kept_sizes: list[int] = []
        for t in range(self.T):
            labels = self.state.c[j, t]
            net_power += int(labels.max())
            if t >= 1:
                keep = np.nonzero(self.state.gamma[j, t])[0]
                if keep.size:
                    net_power -= int(np.unique(labels[keep]).size)
                    kept_sizes.append(int(keep.size))
        return net_power, kept_sizes

    @staticmethod
    def _concentration_logpdf(M: float, a_M: float, b_M: float, n: int, T: int,
                              net_power: int, kept_sizes: list[int]) -> float:
        """Log target for the concentration, M-independent terms dropped."""
        if M <= 0:
            return -np.inf
        lp = (a_M - 1.0 + net_power) * log(M) - b_M * M
        lp += (T - len(kept_sizes)) * lgamma(M) - T * lgamma(M + n)
        for m in kept_sizes:
            lp += lgamma(M + m)
        return lp

    def concentration_log_target(self, j: int, M: float) -> float:
        """Unnormalized log density of the concentration parameter.

        Gamma prior times, per period, the probability of extending the
        persisting sub-partition to the full partition (which at the first
        period is the plain partition probability).
        """
        net_power, kept_sizes = self._concentration_stats(j)
        return self._concentration_logpdf(
            M, self.hyper.a_M, self.hyper.b_M, self.n, self.T, net_power, kept_sizes
        )

    def update_concentration(self, j: int) -> float:
        net_power, kept_sizes = self._concentration_stats(j)
        a_M, b_M, n, T = self.hyper.a_M, self.hyper.b_M, self.n, self.T

        def logf(x: float) -> float:
            return self._concentration_logpdf(
                exp(x), a_M, b_M, n, T, net_power, kept_sizes
            ) + x

        x = slice_sample_1d(logf, log(self.state.M[j]), self.rng)
        draw = exp(x)
        self.state.M[j] = draw
        return draw

    # ------------------------------------------------------------------
    # coefficients and trends

    def beta_star_moments(self, j: int, t: int, k: int) -> tuple[float, float]:
        """Posterior mean and variance of one cluster coefficient."""
        state = self.state
        members = np.nonzero(state.c[j, t] == k)[0]
        if members.size == 0:
            raise AssertionError(f"empty cluster {k} at (j={j}, t={t})")
        prec = 1.0 / state.delta2[j]
        lin = state.psi[j, t] / state.delta2[j]
        for i in members:
            gg, rg = self._suff_stats(i, j, t)
            prec += gg / state.sigma2[i]
            lin += rg / state.sigma2[i]
        var = 1.0 / prec
        return lin * var, var

    def update_beta_star(self, j: int, t: int, k: int) -> float:
        mean, var = self.beta_star_moments(j, t, k)
        draw = mean + np.sqrt(var) * self.rng.standard_normal()
        state = self.state
        members = np.nonzero(state.c[j, t] == k)[0]
        dv = draw - state.beta_star[j][t][k - 1]
        state.beta_star[j][t][k - 1] = draw
        self.beta_exp[members, j, t] = draw
        lo, hi = self.supports[j]
        self.fitted[members, t, lo:hi] += dv * self._g_cols[j]
        return float(draw)

    def psi_moments(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and precision Cholesky factor of one trend vector."""
        state = self.state
        K = np.array([len(state.beta_star[j][t]) for t in range(self.T)], dtype=float)
        beta_bar = np.array([state.beta_star[j][t].sum() for t in range(self.T)])
        prec = self.gp.inv / state.omega2[j] + np.diag(K / state.delta2[j])
        lin = self.gp.inv @ self.hyper.mu[j] / state.omega2[j] + beta_bar / state.delta2[j]
        try:
            L = np.linalg.cholesky(prec)
        except np.linalg.LinAlgError:
            try:
                L = np.linalg.cholesky(prec + 1e-10 * np.eye(self.T))
            except np.linalg.LinAlgError as exc:
                raise NumericError(f"trend precision not factorizable at j={j}") from exc
        z = np.linalg.solve(L, lin)
        mean = np.linalg.solve(L.T, z)
        return mean, L

    def update_psi(self, j: int) -> np.ndarray:
        mean, L = self.psi_moments(j)
        draw = mean + np.linalg.solve(L.T, self.rng.standard_normal(self.T))
        self.state.psi[j] = draw
        return draw

    def sigma2_posterior(self, i: int) -> tuple[float, float]:
        resid = self.logm[i] - self.fitted[i]
        if self.complete:
            count = resid.size
            ss = float(np.sum(resid * resid))
        else:
            m = self.obs[i]
            count = int(m.sum())
            ss = float(np.sum(resid * resid, where=m))
        return self.hyper.a_sigma + 0.5 * count, self.hyper.b_sigma + 0.5 * ss

    def update_sigma2(self, i: int) -> float:
        a, b = self.sigma2_posterior(i)
        draw = b / self.rng.gamma(a)
        self.state.sigma2[i] = draw
        return float(draw)

    def scale_posteriors(self, j: int):
        """Shape/rate pairs of the coefficient-spread and trend-spread updates."""
        state = self.state
        total_K = 0
        ss = 0.0
        for t in range(self.T):
            vals = state.beta_star[j][t]
            total_K += vals.size
            dev = vals - state.psi[j, t]
            ss += float(dev @ dev)
        d = state.psi[j] - self.hyper.mu[j]
        quad = float(d @ self.gp.inv @ d)
        delta_ab = (self.hyper.a_delta + 0.5 * total_K, self.hyper.b_delta + 0.5 * ss)
        omega_ab = (self.hyper.a_omega + 0.5 * self.T, self.hyper.b_omega + 0.5 * quad)
        return delta_ab, omega_ab

    def update_scales(self, j: int) -> tuple[float, float]:
        (ad, bd), (ao, bo) = self.scale_posteriors(j)
        d2 = bd / self.rng.gamma(ad)
        o2 = bo / self.rng.gamma(ao)
        self.state.delta2[j] = d2
        self.state.omega2[j] = o2
        return float(d2), float(o2)

    # ------------------------------------------------------------------

    def sweep(self) -> None:
        """One full pass over every update block, in the documented order."""
        tog = self.toggles
        state = self.state
        for j in range(self.p):
            for t in range(self.T):
                if t >= 1 and tog.gamma:
                    for i in range(self.n):
                        self.update_gamma(j, t, i)
                if tog.membership:
                    flags = state.gamma[j, t]
                    for i in range(self.n):
                        if t >= 1 and flags[i] == 1:
                            continue
                        self.update_membership(j, t, i)
            if tog.alpha:
                self.update_alpha(j)
            if tog.concentration:
                self.update_concentration(j)
            if tog.beta_star:
                for t in range(self.T):
                    for k in range(1, len(state.beta_star[j][t]) + 1):
                        self.update_beta_star(j, t, k)
            if tog.psi:
                self.update_psi(j)
        if tog.sigma2:
            for i in range(self.n):
                self.update_sigma2(i)
        if tog.scales:
            for j in range(self.p):
                self.update_scales(j)


def run_chain(
    panel: SurfacePanel,
    basis,
    hyper: Hyperparameters | None = None,
    config: SamplerConfig | None = None,
    *,
    loess_span: float = 0.75,
    loess_degree: int = 2,
    manifest_extra: dict | None = None,
):
    """Calibrate, initialize and run one chain; return its draw store.

    The chain is fully deterministic given the panel, settings and seed.
    """
    from surfclust.store import DrawStore

    if config is None:
        raise ValueError("a SamplerConfig is required")
    hyper = hyper or Hyperparameters()
    if hyper.mu is None:
        hyper = hyper.with_mu(calibrate_mu(panel, basis, span=loess_span, degree=loess_degree))
    rng = np.random.default_rng(config.seed)
    state = initialize_state(panel, basis, hyper, rng)
    sampler = GibbsSampler(
        panel, basis, hyper, state, rng=rng,
        n_aux=config.n_aux, toggles=config.toggles,
    )
    store = DrawStore.allocate(
        n_draws=config.n_draws,
        p=basis.p,
        T=panel.n_periods,
        n=panel.n,
        populations=panel.populations,
        ages=panel.ages,
        periods=panel.periods,
    )
    store.manifest.update(
        {
            "seed": config.seed,
            "iterations": config.iterations,
            "burn_in": config.burn_in,
            "thin": config.thin,
            "n_aux": config.n_aux,
            "loess_span": loess_span,
            "loess_degree": loess_degree,
            "basis": {"degree": basis.degree, "knots": basis.knots.tolist()},
            "hyperparameters": {
                k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in asdict(hyper).items()
            },
            "data_digest": panel.digest(),
        }
    )
    if manifest_extra:
        store.manifest.update(manifest_extra)
    for it in range(1, config.iterations + 1):
        sampler.sweep()
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            store.record(it, sampler)
    return store
