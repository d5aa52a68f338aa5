import numpy as np
import pytest

from surfclust.calibrate import (
    InvalidSpan,
    calibrate_mu,
    initialize_state,
    loess_smooth,
    ols_period_fit,
)
from surfclust.modelcore import Hyperparameters, SurfacePanel, validate_state
from surfclust.splinebasis import build_basis, simulation_basis


def representable_panel(basis, coefs, noise=0.0, seed=0, n=4):
    """Panel whose surfaces equal G @ coefs (same for every population)."""
    rng = np.random.default_rng(seed)
    T = coefs.shape[1]
    f = basis.design @ coefs  # (X, T)
    log_rates = np.repeat(f[None], n, axis=0) + noise * rng.standard_normal(
        (n, f.shape[0], T)
    )
    return SurfacePanel.from_rates(
        populations=[f"pop{i}" for i in range(n)],
        ages=basis.age_grid.astype(int),
        periods=np.arange(1, T + 1),
        log_rates=log_rates,
    )


def reference_loess(y, span, degree):
    """Independent tricube local regression (direct normal equations)."""
    T = len(y)
    x = np.arange(T, dtype=float)
    r = int(np.ceil(span * T))
    out = np.empty(T)
    for t in range(T):
        d = np.abs(x - t)
        h = np.sort(d)[r - 1]
        if h == 0:
            out[t] = y[t]
            continue
        w = np.where(d < h, (1 - (d / h) ** 3) ** 3, 0.0)
        X = np.vander(x - t, degree + 1, increasing=True)
        W = np.diag(w)
        coef = np.linalg.pinv(X.T @ W @ X) @ (X.T @ W @ np.asarray(y, float))
        out[t] = coef[0]
    return out


def test_ols_exact_recovery_noiseless():
    basis = simulation_basis()
    rng = np.random.default_rng(1)
    coefs = rng.standard_normal((basis.p, 3))
    panel = representable_panel(basis, coefs)
    for t in range(3):
        est = ols_period_fit(panel, basis, t)
        assert np.abs(est - coefs[:, t]).max() < 1e-10


def test_ols_intercept_only_is_mean():
    basis = build_basis(0, [], np.arange(5), boundary=(0.0, 4.0))
    assert basis.p == 1
    rng = np.random.default_rng(2)
    log_rates = rng.standard_normal((3, 5, 2))
    panel = SurfacePanel.from_rates(
        ["a", "b", "c"], np.arange(5), [2000, 2001], log_rates
    )
    est = ols_period_fit(panel, basis, 1)
    assert est[0] == pytest.approx(log_rates[:, :, 1].mean())


def test_ols_matches_normal_equations_with_missing():
    basis = simulation_basis()
    rng = np.random.default_rng(3)
    coefs = rng.standard_normal((basis.p, 2))
    panel = representable_panel(basis, coefs, noise=0.3, seed=3)
    panel.observed[0, 10:30, 0] = False
    panel.observed[2, 80:, 0] = False
    rows = []
    ys = []
    for i in range(panel.n):
        for r in range(panel.n_ages):
            if panel.observed[i, r, 0]:
                rows.append(basis.design[r])
                ys.append(panel.log_rates[i, r, 0])
    X = np.asarray(rows)
    y = np.asarray(ys)
    ref = np.linalg.solve(X.T @ X, X.T @ y)
    est = ols_period_fit(panel, basis, 0)
    assert np.abs(est - ref).max() < 1e-8 * max(1.0, np.abs(ref).max())


def test_ols_residual_orthogonality():
    basis = simulation_basis()
    rng = np.random.default_rng(4)
    coefs = rng.standard_normal((basis.p, 1))
    panel = representable_panel(basis, coefs, noise=0.5, seed=4)
    est = ols_period_fit(panel, basis, 0)
    fitted = basis.design @ est
    ortho = np.zeros(basis.p)
    for i in range(panel.n):
        resid = panel.log_rates[i, :, 0] - fitted
        ortho += basis.design.T @ resid
    assert np.abs(ortho).max() < 1e-8


def test_ols_needs_enough_observations():
    basis = simulation_basis()
    panel = representable_panel(basis, np.zeros((basis.p, 1)))
    panel.observed[:, :, 0] = False
    panel.observed[0, :3, 0] = True
    with pytest.raises(ValueError):
        ols_period_fit(panel, basis, 0)


def test_loess_preserves_lines_and_constants():
    y = 2.0 + 0.5 * np.arange(12)
    for span in [0.4, 0.75, 1.0]:
        for degree in (1, 2):
            out = loess_smooth(y, span=span, degree=degree)
            assert np.abs(out - y).max() < 1e-10
    const = np.full(9, 3.3)
    assert np.abs(loess_smooth(const, 0.6, 2) - const).max() < 1e-12


def test_loess_matches_reference():
    rng = np.random.default_rng(5)
    y = np.sin(np.linspace(0, 3, 10)) + 0.1 * rng.standard_normal(10)
    for span, degree in [(0.75, 2), (0.5, 1), (1.0, 2)]:
        got = loess_smooth(y, span=span, degree=degree)
        ref = reference_loess(y, span, degree)
        assert np.abs(got - ref).max() < 1e-8


def test_loess_is_linear_in_input():
    rng = np.random.default_rng(6)
    a = rng.standard_normal(11)
    b = rng.standard_normal(11)
    lhs = loess_smooth(a + b, 0.7, 2)
    rhs = loess_smooth(a, 0.7, 2) + loess_smooth(b, 0.7, 2)
    assert np.abs(lhs - rhs).max() < 1e-10


def test_loess_invalid_span():
    y = np.arange(10.0)
    with pytest.raises(InvalidSpan):
        loess_smooth(y, span=0.1, degree=2)  # window of 1 point
    with pytest.raises(InvalidSpan):
        loess_smooth(y, span=1.5, degree=2)
    with pytest.raises(InvalidSpan):
        loess_smooth(np.arange(2.0), span=1.0, degree=2)


def test_calibrate_mu_recovers_smooth_truth():
    basis = simulation_basis()
    T = 10
    coefs = np.vstack(
        [(-1.0 - 0.3 * j) - 0.02 * np.arange(T) for j in range(basis.p)]
    )
    panel = representable_panel(basis, coefs)
    mu = calibrate_mu(panel, basis)
    assert np.abs(mu - coefs).max() < 1e-6


def test_calibrate_mu_single_period_passthrough():
    basis = simulation_basis()
    rng = np.random.default_rng(7)
    coefs = rng.standard_normal((basis.p, 1))
    panel = representable_panel(basis, coefs, noise=0.1, seed=7)
    mu = calibrate_mu(panel, basis)
    assert np.allclose(mu[:, 0], ols_period_fit(panel, basis, 0))


def test_calibrate_mu_short_panel_degrades_gracefully():
    basis = simulation_basis()
    rng = np.random.default_rng(8)
    coefs = rng.standard_normal((basis.p, 2))
    panel = representable_panel(basis, coefs, noise=0.05, seed=8)
    mu = calibrate_mu(panel, basis)  # T=2 cannot support a quadratic fit
    assert mu.shape == (basis.p, 2)
    assert np.all(np.isfinite(mu))


def test_calibrate_mu_population_relabel_invariant():
    basis = simulation_basis()
    rng = np.random.default_rng(9)
    coefs = rng.standard_normal((basis.p, 4))
    panel = representable_panel(basis, coefs, noise=0.2, seed=9)
    mu = calibrate_mu(panel, basis)
    perm = [2, 0, 3, 1]
    shuffled = SurfacePanel.from_rates(
        [panel.populations[i] for i in perm],
        panel.ages,
        panel.periods,
        panel.log_rates[perm],
    )
    assert np.allclose(calibrate_mu(shuffled, basis), mu)


def test_initialize_state():
    basis = simulation_basis()
    rng = np.random.default_rng(10)
    coefs = rng.standard_normal((basis.p, 5))
    panel = representable_panel(basis, coefs, noise=0.1, seed=10)
    hyper = Hyperparameters().with_mu(calibrate_mu(panel, basis))
    state = initialize_state(panel, basis, hyper, rng)
    validate_state(state, panel)
    assert np.all(state.cluster_counts() == 1)
    assert np.all(state.sigma2 > 0)
    assert np.allclose(state.psi, hyper.mu)
    for j in range(basis.p):
        for t in range(5):
            assert state.beta_star[j][t][0] == hyper.mu[j, t]
