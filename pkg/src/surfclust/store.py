"""Retained posterior draws and their on-disk format.

One store holds the monitored quantities of one chain: memberships, expanded
per-population coefficients, cluster counts, trends, and the scalar
parameters.  On disk a store is a JSON manifest plus columnar CSV files, one
row per (draw, index) cell, so runs are diffable and loadable elsewhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd


class NoDraws(ValueError):
    """A summary was requested from a store holding no draws."""


@dataclass
class DrawStore:
    """Columnar arrays of retained draws (first axis: draw)."""

    iters: np.ndarray
    c: np.ndarray        # (D, p, T, n) cluster labels
    beta: np.ndarray     # (D, p, T, n) per-population coefficients
    K: np.ndarray        # (D, p, T) cluster counts
    psi: np.ndarray      # (D, p, T) trends
    alpha: np.ndarray    # (D, p)
    M: np.ndarray        # (D, p)
    sigma2: np.ndarray   # (D, n)
    populations: list[str]
    ages: np.ndarray
    periods: np.ndarray
    manifest: dict = field(default_factory=dict)
    _row: int = 0

    @classmethod
    def allocate(cls, n_draws: int, p: int, T: int, n: int, populations, ages, periods) -> "DrawStore":
        return cls(
            iters=np.zeros(n_draws, dtype=np.int64),
            c=np.zeros((n_draws, p, T, n), dtype=np.int16),
            beta=np.zeros((n_draws, p, T, n)),
            K=np.zeros((n_draws, p, T), dtype=np.int16),
            psi=np.zeros((n_draws, p, T)),
            alpha=np.zeros((n_draws, p)),
            M=np.zeros((n_draws, p)),
            sigma2=np.zeros((n_draws, n)),
            populations=list(populations),
            ages=np.asarray(ages),
            periods=np.asarray(periods),
        )

    def record(self, iteration: int, sampler) -> None:
        """Store the sampler's current state as the next retained draw."""
        d = self._row
        state = sampler.state
        self.iters[d] = iteration
        self.c[d] = state.c
        self.beta[d] = sampler.beta_exp.transpose(1, 2, 0)
        self.K[d] = state.cluster_counts()
        self.psi[d] = state.psi
        self.alpha[d] = state.alpha
        self.M[d] = state.M
        self.sigma2[d] = state.sigma2
        self._row = d + 1

    @property
    def n_draws(self) -> int:
        return self._row

    @property
    def dims(self) -> tuple[int, int, int]:
        _, p, T, n = self.c.shape
        return p, T, n

    def truncate(self) -> "DrawStore":
        """Drop unused preallocated rows (no-op when full)."""
        d = self._row
        if d == self.iters.size:
            return self
        for name in ("iters", "c", "beta", "K", "psi", "alpha", "M", "sigma2"):
            setattr(self, name, getattr(self, name)[:d])
        return self

    @classmethod
    def concat(cls, stores: list["DrawStore"]) -> "DrawStore":
        """Pool the draws of several chains over the same panel."""
        if not stores:
            raise NoDraws("no stores to concatenate")
        first = stores[0].truncate()
        for other in stores[1:]:
            other.truncate()
            if other.dims != first.dims or other.populations != first.populations:
                raise ValueError("stores cover different panels")
        merged = cls(
            iters=np.concatenate([s.iters for s in stores]),
            c=np.concatenate([s.c for s in stores]),
            beta=np.concatenate([s.beta for s in stores]),
            K=np.concatenate([s.K for s in stores]),
            psi=np.concatenate([s.psi for s in stores]),
            alpha=np.concatenate([s.alpha for s in stores]),
            M=np.concatenate([s.M for s in stores]),
            sigma2=np.concatenate([s.sigma2 for s in stores]),
            populations=first.populations,
            ages=first.ages,
            periods=first.periods,
            manifest=dict(first.manifest),
        )
        merged._row = merged.iters.size
        return merged

    # ------------------------------------------------------------------
    # persistence

    def save(self, outdir) -> None:
        """Write manifest.json plus the three columnar CSV files."""
        self.truncate()
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        p, T, n = self.dims
        D = self.n_draws

        manifest = dict(self.manifest)
        manifest.update(
            {
                "format": 1,
                "draw_count": D,
                "dims": {"p": p, "T": T, "n": n},
                "populations": self.populations,
                "ages": self.ages.tolist(),
                "periods": self.periods.tolist(),
            }
        )
        with open(out / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)

        it = np.repeat(self.iters, p * T * n)
        jj, tt, ii = np.indices((p, T, n))
        jcol = np.tile(jj.ravel() + 1, D)
        tcol = np.tile(tt.ravel() + 1, D)
        icol = np.tile(ii.ravel() + 1, D)
        pd.DataFrame(
            {"iter": it, "j": jcol, "t": tcol, "i": icol, "label": self.c.ravel()}
        ).to_csv(out / "draws_c.csv", index=False)
        pd.DataFrame(
            {"iter": it, "j": jcol, "t": tcol, "i": icol, "value": self.beta.ravel()}
        ).to_csv(out / "draws_beta.csv", index=False)

        frames = []
        for name, arr, labels in self._scalar_groups():
            frames.append(
                pd.DataFrame(
                    {
                        "iter": np.repeat(self.iters, len(labels)),
                        "name": np.tile(labels, D),
                        "value": arr.reshape(D, -1).ravel(),
                    }
                )
            )
        pd.concat(frames, ignore_index=True).to_csv(
            out / "draws_scalars.csv", index=False
        )

    def _scalar_groups(self):
        p, T, n = self.dims
        yield "alpha", self.alpha, [f"alpha[{j + 1}]" for j in range(p)]
        yield "M", self.M, [f"M[{j + 1}]" for j in range(p)]
        yield "sigma2", self.sigma2, [f"sigma2[{i + 1}]" for i in range(n)]
        yield "psi", self.psi, [
            f"psi[{j + 1},{t + 1}]" for j in range(p) for t in range(T)
        ]
        yield "K", self.K.astype(float), [
            f"K[{j + 1},{t + 1}]" for j in range(p) for t in range(T)
        ]

    @classmethod
    def load(cls, indir) -> "DrawStore":
        """Read a store previously written by :meth:`save`."""
        src = Path(indir)
        with open(src / "manifest.json") as fh:
            manifest = json.load(fh)
        dims = manifest["dims"]
        p, T, n = dims["p"], dims["T"], dims["n"]
        D = manifest["draw_count"]

        cdf = pd.read_csv(src / "draws_c.csv")
        cdf = cdf.sort_values(["iter", "j", "t", "i"], kind="stable")
        bdf = pd.read_csv(src / "draws_beta.csv")
        bdf = bdf.sort_values(["iter", "j", "t", "i"], kind="stable")
        if len(cdf) != D * p * T * n:
            raise ValueError(
                f"draws_c.csv holds {len(cdf)} rows, expected {D * p * T * n}"
            )
        store = cls.allocate(
            D, p, T, n,
            populations=manifest["populations"],
            ages=np.asarray(manifest["ages"]),
            periods=np.asarray(manifest["periods"]),
        )
        store.manifest = manifest
        store.iters = cdf["iter"].to_numpy()[:: p * T * n].copy()
        store.c = cdf["label"].to_numpy().reshape(D, p, T, n).astype(np.int16)
        store.beta = bdf["value"].to_numpy().reshape(D, p, T, n)
        store.K = store.c.max(axis=3)

        sdf = pd.read_csv(src / "draws_scalars.csv")
        by_name = {k: g["value"].to_numpy() for k, g in sdf.groupby("name", sort=False)}
        for j in range(p):
            store.alpha[:, j] = by_name[f"alpha[{j + 1}]"]
            store.M[:, j] = by_name[f"M[{j + 1}]"]
            for t in range(T):
                store.psi[:, j, t] = by_name[f"psi[{j + 1},{t + 1}]"]
        for i in range(n):
            store.sigma2[:, i] = by_name[f"sigma2[{i + 1}]"]
        store._row = D
        return store
