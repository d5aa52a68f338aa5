"""Data-driven prior means and chain initialization.

The prior mean curve of each basis coefficient is calibrated from the data:
a pooled least-squares spline fit per period, smoothed across periods by
classical locally weighted regression.  The same machinery seeds the first
state of a sampler chain.
"""

from __future__ import annotations

import math

import numpy as np

from surfclust.modelcore import Hyperparameters, ModelState, SurfacePanel


class InvalidSpan(ValueError):
    """Smoothing window too small for the local polynomial degree."""


def ols_period_fit(panel: SurfacePanel, basis, t: int) -> np.ndarray:
    """Pooled least-squares coefficients for one period.

    All populations share a single coefficient vector; every observed
    (population, age) cell at period index ``t`` enters the fit.  On a
    rank-deficient design a small ridge proportional to trace(GtG)/p is
    added, so only a period with fewer than p observations fails.
    """
    G = basis.design
    p = basis.p
    A = np.zeros((p, p))
    b = np.zeros(p)
    n_obs = 0
    for i in range(panel.n):
        obs = panel.observed[i, :, t]
        if obs.all():
            Gi, yi = G, panel.log_rates[i, :, t]
        else:
            Gi, yi = G[obs], panel.log_rates[i, obs, t]
        A += Gi.T @ Gi
        b += Gi.T @ yi
        n_obs += Gi.shape[0]
    if n_obs < p:
        raise ValueError(
            f"period index {t} has {n_obs} observed cells, fewer than p={p}"
        )
    try:
        beta = np.linalg.solve(A, b)
        if not np.all(np.isfinite(beta)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        ridge = 1e-8 * np.trace(A) / p
        beta = np.linalg.solve(A + ridge * np.eye(p), b)
    return beta


def loess_smooth(series, span: float = 0.75, degree: int = 2) -> np.ndarray:
    """Locally weighted polynomial smoothing with tricube weights.

    For each point the ``ceil(span * T)`` nearest points (by index distance)
    get tricube weights and a weighted polynomial of the given degree is
    fitted; the returned sequence collects the fitted values.  No robustness
    iterations are applied.
    """
    y = np.asarray(series, dtype=float)
    T = y.size
    if degree not in (1, 2):
        raise InvalidSpan(f"degree must be 1 or 2, got {degree}")
    if not 0.0 < span <= 1.0:
        raise InvalidSpan(f"span must be in (0, 1], got {span}")
    if T < degree + 1:
        raise InvalidSpan(f"need at least degree+1={degree + 1} points, got {T}")
    r = math.ceil(span * T)
    if r < degree + 1:
        raise InvalidSpan(
            f"span {span} gives window {r}, too small for degree {degree}"
        )
    x = np.arange(T, dtype=float)
    out = np.empty(T)
    for t in range(T):
        d = np.abs(x - x[t])
        h = np.sort(d)[r - 1]
        if h == 0.0:
            out[t] = y[t]
            continue
        w = np.clip(d / h, 0.0, 1.0)
        w = (1.0 - w**3) ** 3
        sw = np.sqrt(w)
        design = np.vander(x - x[t], degree + 1, increasing=True)
        coef, *_ = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)
        out[t] = coef[0]
    return out


def calibrate_mu(panel: SurfacePanel, basis, span: float = 0.75, degree: int = 2) -> np.ndarray:
    """Prior mean curves, shape (p, T): per-period OLS then LOESS over periods.

    Degenerately short panels fall back gracefully: the polynomial degree is
    capped at T-1 and the window widened to fit it, so a single period simply
    passes the raw OLS estimates through.
    """
    T = panel.n_periods
    raw = np.column_stack([ols_period_fit(panel, basis, t) for t in range(T)])
    if T == 1:
        return raw
    eff_degree = min(degree, 2, T - 1)
    eff_span = max(span, (eff_degree + 1) / T)
    mu = np.empty_like(raw)
    for j in range(basis.p):
        mu[j] = loess_smooth(raw[j], span=eff_span, degree=eff_degree)
    return mu


def initialize_state(panel: SurfacePanel, basis, hyper: Hyperparameters, rng) -> ModelState:
    """First chain state: one cluster everywhere, coefficients at the prior mean.

    Noise variances start at the per-population residual variance of the
    calibration fit (floored away from zero); persistence flags start at
    zero and all scale parameters at neutral values.
    """
    p, T, n = basis.p, panel.n_periods, panel.n
    mu = hyper.mu
    if mu is None:
        mu = calibrate_mu(panel, basis)
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (p, T):
        raise ValueError(f"mu shape {mu.shape} != {(p, T)}")
    fitted = basis.design @ mu  # (X, T)
    sigma2 = np.empty(n)
    for i in range(n):
        obs = panel.observed[i]
        resid = panel.log_rates[i][obs] - fitted[obs]
        sigma2[i] = max(float(np.var(resid)) if resid.size else 1.0, 1e-6)
    beta_star = [[np.array([mu[j, t]]) for t in range(T)] for j in range(p)]
    return ModelState(
        c=np.ones((p, T, n), dtype=np.int64),
        gamma=np.zeros((p, T, n), dtype=np.int8),
        beta_star=beta_star,
        psi=mu.copy(),
        sigma2=sigma2,
        delta2=np.full(p, 0.01),
        omega2=np.full(p, 0.01),
        alpha=np.full(p, 0.5),
        M=np.ones(p),
    )
