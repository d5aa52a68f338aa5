"""Synthetic-data generation.

Produces panels from known latent structure: a default desk-scale scenario
with hand-fixed local clustering patterns, generation of arbitrary panels
from supplied truth assignments, and forward draws of the whole prior (used
for prior-predictive checks and sampler consistency tests).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np
import pandas as pd

from surfclust.modelcore import GPCovariance, Hyperparameters, ModelState, SurfacePanel
from surfclust.partitions import canonical_labels, simulate_trpm
from surfclust.splinebasis import SplineBasis, simulation_basis


def load_truth_csv(path) -> np.ndarray:
    """Read a (j, t, i, label) CSV into a (p, T, n) label array."""
    df = pd.read_csv(path)
    for col in ("j", "t", "i", "label"):
        if col not in df.columns:
            raise ValueError(f"truth file missing column {col!r}")
    p, T, n = int(df["j"].max()), int(df["t"].max()), int(df["i"].max())
    truth = np.zeros((p, T, n), dtype=np.int64)
    truth[df["j"] - 1, df["t"] - 1, df["i"] - 1] = df["label"]
    if np.any(truth == 0):
        raise ValueError("truth file does not cover every (j, t, i) cell")
    for j in range(p):
        for t in range(T):
            truth[j, t] = canonical_labels(truth[j, t])
    return truth


def save_truth_csv(truth: np.ndarray, path) -> None:
    """Write a (p, T, n) label array as a (j, t, i, label) CSV."""
    p, T, n = truth.shape
    jj, tt, ii = np.indices((p, T, n))
    pd.DataFrame(
        {
            "j": jj.ravel() + 1,
            "t": tt.ravel() + 1,
            "i": ii.ravel() + 1,
            "label": truth.ravel(),
        }
    ).to_csv(path, index=False)


def default_truth_scenario() -> np.ndarray:
    """The versioned desk-scale clustering scenario, shape (6, 10, 5).

    Bases 3 and 4 keep constant partitions over all periods, bases 1, 2 and
    5 change membership once mid-series, and basis 6 switches partition
    every two-to-three periods.
    """
    with resources.as_file(
        resources.files("surfclust").joinpath("data/default_truth.csv")
    ) as path:
        return load_truth_csv(path)


@dataclass
class TruthRecord:
    """Full latent record of one synthetic panel."""

    truth: np.ndarray
    beta_star: list[list[np.ndarray]]
    psi: np.ndarray
    sigma: np.ndarray
    seed: int
    slope: float
    intercepts: np.ndarray
    delta: np.ndarray

    def beta_expanded(self) -> np.ndarray:
        """Per-population coefficients implied by the record, shape (n, p, T)."""
        p, T, n = self.truth.shape
        out = np.empty((n, p, T))
        for j in range(p):
            for t in range(T):
                out[:, j, t] = self.beta_star[j][t][self.truth[j, t] - 1]
        return out

    def to_json(self, path) -> None:
        payload = {
            "seed": self.seed,
            "slope": self.slope,
            "intercepts": self.intercepts.tolist(),
            "delta": self.delta.tolist(),
            "sigma": self.sigma.tolist(),
            "psi": self.psi.tolist(),
            "truth": self.truth.tolist(),
            "beta_star": [[b.tolist() for b in row] for row in self.beta_star],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)

    @classmethod
    def from_json(cls, path) -> "TruthRecord":
        with open(path) as fh:
            d = json.load(fh)
        return cls(
            truth=np.asarray(d["truth"], dtype=np.int64),
            beta_star=[[np.asarray(b, dtype=float) for b in row] for row in d["beta_star"]],
            psi=np.asarray(d["psi"], dtype=float),
            sigma=np.asarray(d["sigma"], dtype=float),
            seed=int(d["seed"]),
            slope=float(d["slope"]),
            intercepts=np.asarray(d["intercepts"], dtype=float),
            delta=np.asarray(d["delta"], dtype=float),
        )


def generate_simulation(
    truth: np.ndarray | None = None,
    seed: int = 0,
    *,
    basis: SplineBasis | None = None,
    sigma: float = 0.05,
    delta=None,
    slope: float = -0.02,
    intercepts=None,
    min_cluster_gap: float | None = None,
    populations=None,
) -> tuple[SurfacePanel, TruthRecord]:
    """Simulate a log-rate panel with known local clustering.

    Basis-level trends are parallel decreasing lines; cluster coefficients
    scatter around them with per-basis spread ``delta``; population values
    are tied by the truth assignments and observation noise has standard
    deviation ``sigma``.  With ``min_cluster_gap`` set, coefficient draws at
    each (basis, period) cell are resampled until all clusters sit at least
    that far apart (then spread deterministically if resampling keeps
    failing), which keeps the truth recoverable.
    """
    if truth is None:
        truth = default_truth_scenario()
    truth = np.asarray(truth, dtype=np.int64)
    p, T, n = truth.shape
    if basis is None:
        basis = simulation_basis()
    if basis.p != p:
        raise ValueError(f"truth has {p} bases but basis has p={basis.p}")
    if delta is None:
        delta = np.full(p, 0.05)
        if p >= 5:
            delta[4] = 0.1
    delta = np.asarray(delta, dtype=float)
    if intercepts is None:
        intercepts = -1.0 - 0.5 * np.arange(p)
    intercepts = np.asarray(intercepts, dtype=float)
    rng = np.random.default_rng(seed)

    psi = intercepts[:, None] + slope * np.arange(T)[None, :]
    beta_star: list[list[np.ndarray]] = []
    for j in range(p):
        row = []
        for t in range(T):
            K = int(truth[j, t].max())
            for _ in range(200):
                vals = psi[j, t] + delta[j] * rng.standard_normal(K)
                if K == 1 or min_cluster_gap is None:
                    break
                if np.diff(np.sort(vals)).min() >= min_cluster_gap:
                    break
            else:
                # spread a centered copy of the last draw apart instead of
                # rejecting forever (tight spreads make the gap rare)
                order = np.argsort(vals)
                ordered = vals[order]
                widened = np.concatenate(
                    [[0.0], np.cumsum(np.maximum(np.diff(ordered), min_cluster_gap))]
                )
                vals[order] = widened - widened.mean() + ordered.mean()
            row.append(vals)
        beta_star.append(row)

    beta_exp = np.empty((n, p, T))
    for j in range(p):
        for t in range(T):
            beta_exp[:, j, t] = beta_star[j][t][truth[j, t] - 1]
    surface = np.einsum("xj,njt->nxt", basis.design, beta_exp)
    noise = sigma * rng.standard_normal(surface.shape)
    log_rates = surface + noise

    if populations is None:
        populations = [f"pop{i + 1}" for i in range(n)]
    panel = SurfacePanel.from_rates(
        populations=populations,
        ages=basis.age_grid.astype(int),
        periods=np.arange(1, T + 1),
        log_rates=log_rates,
    )
    record = TruthRecord(
        truth=truth,
        beta_star=beta_star,
        psi=psi,
        sigma=np.full(n, sigma),
        seed=seed,
        slope=slope,
        intercepts=intercepts,
        delta=delta,
    )
    return panel, record


def sample_prior_state(n: int, T: int, basis: SplineBasis, hyper: Hyperparameters, rng) -> ModelState:
    """Draw a complete latent state from the prior.

    Requires ``hyper.mu``; used by prior-predictive checks and by the
    sampler-consistency tests that compare forward and conditional
    simulation.
    """
    p = basis.p
    mu = np.asarray(hyper.mu, dtype=float)
    if mu.shape != (p, T):
        raise ValueError(f"mu shape {mu.shape} != {(p, T)}")
    gp = GPCovariance.from_length_scale(T, hyper.gp_length_scale)
    c = np.empty((p, T, n), dtype=np.int64)
    gamma = np.zeros((p, T, n), dtype=np.int8)
    alpha = np.empty(p)
    M = np.empty(p)
    delta2 = np.empty(p)
    omega2 = np.empty(p)
    psi = np.empty((p, T))
    beta_star: list[list[np.ndarray]] = []
    for j in range(p):
        alpha[j] = rng.beta(hyper.a_alpha, hyper.b_alpha)
        M[j] = rng.gamma(hyper.a_M, 1.0 / hyper.b_M)
        seq = simulate_trpm(n, T, alpha[j], M[j], rng)
        for t, (mem, flags) in enumerate(seq):
            c[j, t] = mem.as_array()
            gamma[j, t] = flags.as_array()
        delta2[j] = 1.0 / rng.gamma(hyper.a_delta, 1.0 / hyper.b_delta)
        omega2[j] = 1.0 / rng.gamma(hyper.a_omega, 1.0 / hyper.b_omega)
        psi[j] = mu[j] + np.sqrt(omega2[j]) * (gp.chol @ rng.standard_normal(T))
        beta_star.append(
            [
                psi[j, t] + np.sqrt(delta2[j]) * rng.standard_normal(int(c[j, t].max()))
                for t in range(T)
            ]
        )
    sigma2 = 1.0 / rng.gamma(hyper.a_sigma, 1.0 / hyper.b_sigma, size=n)
    return ModelState(
        c=c, gamma=gamma, beta_star=beta_star, psi=psi,
        sigma2=sigma2, delta2=delta2, omega2=omega2, alpha=alpha, M=M,
    )


def sample_observations(state: ModelState, basis: SplineBasis, rng) -> np.ndarray:
    """Draw a log-rate array (n, X, T) given a latent state."""
    from surfclust.modelcore import surface_matrix

    surface = surface_matrix(state, basis)
    noise = np.sqrt(state.sigma2)[:, None, None] * rng.standard_normal(surface.shape)
    return surface + noise
