"""Domain types and shared numerics for the surface model.

Holds the observed panel of log-rates, the prior hyperparameters, the
squared-exponential covariance over periods, and the full latent state of one
sampler chain, together with the surface/likelihood evaluations every update
relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from surfclust.partitions import canonical_labels, compatible


class MissingData(ValueError):
    """A computation touched a cell flagged as missing."""


class InvalidIndex(IndexError):
    """Population, age or period index outside the panel."""


class NumericError(RuntimeError):
    """A linear-algebra step failed beyond recoverable jitter."""


@dataclass
class SurfacePanel:
    """Observed log-mortality rates for n populations over ages and periods.

    ``log_rates`` has shape (n, X, T); ``observed`` marks valid cells.  Cells
    with zero deaths or zero exposure are flagged missing rather than mapped
    to infinities.
    """

    populations: list[str]
    ages: np.ndarray
    periods: np.ndarray
    log_rates: np.ndarray
    observed: np.ndarray
    deaths: Optional[np.ndarray] = None
    exposures: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.ages = np.asarray(self.ages, dtype=int)
        self.periods = np.asarray(self.periods, dtype=int)
        self.log_rates = np.asarray(self.log_rates, dtype=float)
        self.observed = np.asarray(self.observed, dtype=bool)
        n, X, T = len(self.populations), self.ages.size, self.periods.size
        if self.log_rates.shape != (n, X, T):
            raise InvalidIndex(
                f"log_rates shape {self.log_rates.shape} != {(n, X, T)}"
            )
        if self.observed.shape != self.log_rates.shape:
            raise InvalidIndex("observed mask shape mismatch")
        if not np.all(np.isfinite(self.log_rates[self.observed])):
            raise MissingData("non-finite value in an observed cell")

    @classmethod
    def from_rates(cls, populations, ages, periods, log_rates, observed=None) -> "SurfacePanel":
        log_rates = np.asarray(log_rates, dtype=float)
        if observed is None:
            observed = np.isfinite(log_rates)
        return cls(list(populations), ages, periods, log_rates, observed)

    @classmethod
    def from_counts(cls, populations, ages, periods, deaths, exposures) -> "SurfacePanel":
        deaths = np.asarray(deaths, dtype=float)
        exposures = np.asarray(exposures, dtype=float)
        observed = (deaths > 0) & (exposures > 0) & np.isfinite(deaths) & np.isfinite(exposures)
        log_rates = np.full(deaths.shape, np.nan)
        np.log(deaths / exposures, where=observed, out=log_rates)
        return cls(
            list(populations), ages, periods, log_rates, observed,
            deaths=deaths, exposures=exposures,
        )

    @property
    def n(self) -> int:
        return len(self.populations)

    @property
    def n_ages(self) -> int:
        return self.ages.size

    @property
    def n_periods(self) -> int:
        return self.periods.size

    @property
    def complete(self) -> bool:
        return bool(self.observed.all())

    def digest(self) -> str:
        """Stable content hash of the panel, for run manifests."""
        import hashlib
        import json

        h = hashlib.sha256()
        h.update(json.dumps(self.populations).encode())
        for arr in (self.ages, self.periods, self.log_rates.round(12), self.observed):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


@dataclass
class Hyperparameters:
    """Shape/rate pairs of every variance prior plus the GP settings.

    ``mu`` is the (p, T) array of prior mean curves for the basis-level
    trends; it is usually produced by the calibration step.
    """

    a_sigma: float = 1e-3
    b_sigma: float = 1e-3
    a_delta: float = 1e-3
    b_delta: float = 1e-3
    a_omega: float = 1e-3
    b_omega: float = 1e-3
    a_M: float = 2e-3
    b_M: float = 1e-3
    a_alpha: float = 1.0
    b_alpha: float = 1.0
    gp_length_scale: float = 1.5
    mu: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        for name in ("a_sigma", "b_sigma", "a_delta", "b_delta", "a_omega",
                     "b_omega", "a_M", "b_M", "a_alpha", "b_alpha",
                     "gp_length_scale"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.mu is not None:
            self.mu = np.asarray(self.mu, dtype=float)

    def with_mu(self, mu: np.ndarray) -> "Hyperparameters":
        return replace(self, mu=np.asarray(mu, dtype=float))


@dataclass(frozen=True)
class GPCovariance:
    """Squared-exponential correlation over the period grid, with caches.

    Periods are rescaled so consecutive ones are one unit apart; the length
    scale applies in those units.  A small diagonal jitter is added if the
    Cholesky factorization fails.
    """

    Sigma: np.ndarray
    chol: np.ndarray = field(repr=False)
    inv: np.ndarray = field(repr=False)
    log_det: float

    @classmethod
    def from_length_scale(cls, T: int, length_scale: float, jitter: float = 1e-10) -> "GPCovariance":
        if length_scale <= 0:
            raise ValueError("length scale must be positive")
        t = np.arange(T, dtype=float)
        d = t[:, None] - t[None, :]
        Sigma = np.exp(-0.5 * d**2 / length_scale**2)
        try:
            chol = np.linalg.cholesky(Sigma)
        except np.linalg.LinAlgError:
            try:
                chol = np.linalg.cholesky(Sigma + jitter * np.eye(T))
            except np.linalg.LinAlgError as exc:
                raise NumericError(
                    f"covariance factorization failed for T={T}, "
                    f"length scale {length_scale}"
                ) from exc
            Sigma = Sigma + jitter * np.eye(T)
        inv_chol = np.linalg.inv(chol)
        inv = inv_chol.T @ inv_chol
        log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
        for arr in (Sigma, chol, inv):
            arr.setflags(write=False)
        return cls(Sigma=Sigma, chol=chol, inv=inv, log_det=log_det)

    @property
    def T(self) -> int:
        return self.Sigma.shape[0]


@dataclass
class ModelState:
    """All latent quantities of one sampler chain.

    Memberships ``c`` and persistence flags ``gamma`` have shape (p, T, n);
    labels are canonical per (j, t).  ``beta_star`` is ragged: one array of
    cluster-level coefficients per (j, t) whose length equals the number of
    clusters there.
    """

    c: np.ndarray
    gamma: np.ndarray
    beta_star: list[list[np.ndarray]]
    psi: np.ndarray
    sigma2: np.ndarray
    delta2: np.ndarray
    omega2: np.ndarray
    alpha: np.ndarray
    M: np.ndarray

    def __post_init__(self) -> None:
        self.c = np.asarray(self.c, dtype=np.int64)
        self.gamma = np.asarray(self.gamma, dtype=np.int8)
        self.psi = np.asarray(self.psi, dtype=float)
        self.sigma2 = np.asarray(self.sigma2, dtype=float)
        self.delta2 = np.asarray(self.delta2, dtype=float)
        self.omega2 = np.asarray(self.omega2, dtype=float)
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.M = np.asarray(self.M, dtype=float)

    @property
    def p(self) -> int:
        return self.c.shape[0]

    @property
    def n_periods(self) -> int:
        return self.c.shape[1]

    @property
    def n(self) -> int:
        return self.c.shape[2]

    def n_clusters(self, j: int, t: int) -> int:
        return int(self.c[j, t].max())

    def cluster_counts(self) -> np.ndarray:
        """K[j, t]: number of clusters per basis and period."""
        return self.c.max(axis=2)

    def beta_expanded(self) -> np.ndarray:
        """Per-population coefficients, shape (n, p, T)."""
        p, T, n = self.c.shape
        out = np.empty((n, p, T))
        for j in range(p):
            for t in range(T):
                out[:, j, t] = self.beta_star[j][t][self.c[j, t] - 1]
        return out

    def copy(self) -> "ModelState":
        return ModelState(
            c=self.c.copy(),
            gamma=self.gamma.copy(),
            beta_star=[[b.copy() for b in row] for row in self.beta_star],
            psi=self.psi.copy(),
            sigma2=self.sigma2.copy(),
            delta2=self.delta2.copy(),
            omega2=self.omega2.copy(),
            alpha=self.alpha.copy(),
            M=self.M.copy(),
        )


def surface_matrix(state: ModelState, basis) -> np.ndarray:
    """Dense expected surface, shape (n, X, T)."""
    G = basis.design
    return np.einsum("xj,njt->nxt", G, state.beta_expanded())


def surface_value(state: ModelState, basis, i: int, x, t: int) -> float:
    """Expected log-rate for population i at age x and period index t."""
    p, T, n = state.c.shape
    if not (0 <= i < n and 0 <= t < T):
        raise InvalidIndex(f"(i={i}, t={t}) outside (n={n}, T={T})")
    r = basis.age_index(x)
    g = basis.design[r]
    coefs = np.array([state.beta_star[j][t][state.c[j, t, i] - 1] for j in range(p)])
    return float(g @ coefs)


def partial_residual(panel: SurfacePanel, state: ModelState, basis, i: int, x, t: int, j: int) -> float:
    """Observed log-rate minus every basis contribution except the j-th."""
    if not 0 <= j < state.p:
        raise InvalidIndex(f"basis index {j} outside p={state.p}")
    r = basis.age_index(x)
    if not panel.observed[i, r, t]:
        raise MissingData(f"cell (i={i}, x={x}, t={t}) is missing")
    f = surface_value(state, basis, i, x, t)
    own = state.beta_star[j][t][state.c[j, t, i] - 1] * basis.design[r, j]
    return float(panel.log_rates[i, r, t] - f + own)


def log_likelihood(panel: SurfacePanel, state: ModelState, basis) -> float:
    """Gaussian log likelihood over all observed cells."""
    f = surface_matrix(state, basis)
    resid = panel.log_rates - f
    obs = panel.observed
    sigma2 = state.sigma2[:, None, None]
    cell = -0.5 * (np.log(2.0 * np.pi * sigma2) + resid**2 / sigma2)
    return float(np.sum(cell, where=obs))


def validate_state(state: ModelState, panel: Optional[SurfacePanel] = None) -> None:
    """Check every structural invariant of a state; raise ValueError if broken."""
    p, T, n = state.c.shape
    if state.gamma.shape != (p, T, n):
        raise ValueError("gamma shape mismatch")
    if np.any(state.gamma[:, 0, :] != 0):
        raise ValueError("persistence flags at the first period must be zero")
    if state.psi.shape != (p, T):
        raise ValueError("psi shape mismatch")
    for name in ("sigma2", "delta2", "omega2", "M"):
        if np.any(getattr(state, name) <= 0):
            raise ValueError(f"{name} must be strictly positive")
    if np.any((state.alpha < 0) | (state.alpha > 1)):
        raise ValueError("alpha outside [0, 1]")
    if panel is not None and panel.n != n:
        raise ValueError("panel population count differs from state")
    for j in range(p):
        for t in range(T):
            labels = state.c[j, t]
            if not np.array_equal(labels, canonical_labels(labels)):
                raise ValueError(f"labels at (j={j}, t={t}) not canonical")
            K = int(labels.max())
            if len(state.beta_star[j][t]) != K:
                raise ValueError(
                    f"beta_star at (j={j}, t={t}) has {len(state.beta_star[j][t])}"
                    f" entries for {K} clusters"
                )
            if t >= 1 and not compatible(state.c[j, t - 1], labels, state.gamma[j, t]):
                raise ValueError(f"incompatible memberships at (j={j}, t={t})")
