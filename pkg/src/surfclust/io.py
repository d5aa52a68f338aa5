"""File ingestion and export.

Tabular data moves through CSV: rate panels in either a precomputed
log-rate layout or a deaths/exposure layout, external indicator series, and
all summary outputs.  Manifests and latent records are JSON.
"""

from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np
import pandas as pd

from surfclust.modelcore import SurfacePanel
from surfclust.summaries import IndicatorPanel, PosteriorSummary


class IngestError(ValueError):
    """Structurally unusable input data."""


class ParseError(ValueError):
    """A cell failed to parse; carries the 1-based file row."""


RATE_COLUMNS = ("country", "year", "age", "log_rate")
COUNT_COLUMNS = ("country", "year", "age", "deaths", "exposure")


def _numeric(df: pd.DataFrame, col: str, path) -> pd.Series:
    coerced = pd.to_numeric(df[col], errors="coerce")
    bad = coerced.isna() & df[col].notna()
    if bad.any():
        row = int(np.nonzero(bad.to_numpy())[0][0])
        raise ParseError(
            f"{path}: non-numeric value {df[col].iloc[row]!r} in column "
            f"{col!r} at row {row + 2}"
        )
    return coerced


def ingest_rates(
    path,
    layout: str = "rates",
    ages=None,
    years=None,
    allow_missing: bool = True,
) -> SurfacePanel:
    """Read a long-format mortality CSV into a dense panel.

    ``layout`` is ``"rates"`` (country, year, age, log_rate) or
    ``"deaths_exposure"`` (country, year, age, deaths, exposure).  Optional
    ``ages``/``years`` pairs clip to a window; otherwise the grids span the
    data.  Cells with zero deaths or exposure are flagged missing.  With
    ``allow_missing`` off, any gap in the pivoted panel is an error.
    """
    if layout not in ("rates", "deaths_exposure"):
        raise IngestError(f"unknown layout {layout!r}")
    columns = RATE_COLUMNS if layout == "rates" else COUNT_COLUMNS
    df = pd.read_csv(path)
    missing_cols = [c for c in columns if c not in df.columns]
    if missing_cols:
        raise IngestError(f"{path}: missing columns {missing_cols} for layout {layout!r}")
    for col in columns[1:]:
        df[col] = _numeric(df, col, path)
    df["year"] = df["year"].astype(int)
    df["age"] = df["age"].astype(int)

    if ages is not None:
        df = df[(df["age"] >= int(ages[0])) & (df["age"] <= int(ages[1]))]
        age_grid = np.arange(int(ages[0]), int(ages[1]) + 1)
    else:
        age_grid = np.arange(df["age"].min(), df["age"].max() + 1)
    if years is not None:
        df = df[(df["year"] >= int(years[0])) & (df["year"] <= int(years[1]))]
        periods = np.arange(int(years[0]), int(years[1]) + 1)
    else:
        periods = np.arange(df["year"].min(), df["year"].max() + 1)

    if df.duplicated(subset=["country", "year", "age"]).any():
        dup = df[df.duplicated(subset=["country", "year", "age"], keep=False)]
        raise IngestError(
            f"{path}: duplicate (country, year, age) rows, e.g. "
            f"{tuple(dup.iloc[0][['country', 'year', 'age']])}"
        )

    populations = sorted(df["country"].astype(str).unique())
    n, X, T = len(populations), age_grid.size, periods.size
    if n == 0 or len(df) == 0:
        raise IngestError(f"{path}: no usable rows after clipping")
    pop_idx = {c: i for i, c in enumerate(populations)}
    ii = df["country"].astype(str).map(pop_idx).to_numpy()
    xx = (df["age"].to_numpy() - age_grid[0]).astype(int)
    tt = (df["year"].to_numpy() - periods[0]).astype(int)

    log_rates = np.full((n, X, T), np.nan)
    observed = np.zeros((n, X, T), dtype=bool)
    if layout == "rates":
        vals = df["log_rate"].to_numpy(dtype=float)
        ok = np.isfinite(vals)
        log_rates[ii[ok], xx[ok], tt[ok]] = vals[ok]
        observed[ii[ok], xx[ok], tt[ok]] = True
        panel = SurfacePanel(populations, age_grid, periods, np.nan_to_num(log_rates), observed)
    else:
        deaths = np.zeros((n, X, T))
        exposures = np.zeros((n, X, T))
        deaths[ii, xx, tt] = df["deaths"].to_numpy(dtype=float)
        exposures[ii, xx, tt] = df["exposure"].to_numpy(dtype=float)
        ok = (deaths > 0) & (exposures > 0)
        np.log(deaths / exposures, where=ok, out=log_rates)
        panel = SurfacePanel(
            populations, age_grid, periods, np.nan_to_num(log_rates), ok,
            deaths=deaths, exposures=exposures,
        )
    if not allow_missing and not panel.complete:
        gaps = int((~panel.observed).sum())
        raise IngestError(
            f"{path}: panel not rectangular ({gaps} missing cells) and "
            f"missing data are disabled"
        )
    return panel


def export_panel(panel: SurfacePanel, path) -> None:
    """Write a panel back to the rates layout, omitting missing cells."""
    ii, xx, tt = np.nonzero(panel.observed)
    pd.DataFrame(
        {
            "country": [panel.populations[i] for i in ii],
            "year": panel.periods[tt],
            "age": panel.ages[xx],
            "log_rate": panel.log_rates[ii, xx, tt],
        }
    ).to_csv(path, index=False)


def ingest_indicators(
    path,
    populations,
    periods,
    on_unknown: str = "warn",
) -> IndicatorPanel:
    """Read an (indicator, country, year, value) CSV into an indicator panel.

    Rows for countries absent from ``populations`` are dropped with a
    warning (or rejected with ``on_unknown="error"``); years outside the
    period window are ignored; absent (country, year) pairs stay masked.
    """
    periods = np.asarray(periods, dtype=int)
    populations = list(populations)
    try:
        df = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        df = pd.DataFrame(columns=["indicator", "country", "year", "value"])
    required = ("indicator", "country", "year", "value")
    missing_cols = [c for c in required if c not in df.columns]
    if missing_cols:
        raise IngestError(f"{path}: missing columns {missing_cols}")
    if len(df):
        df["year"] = _numeric(df, "year", path).astype(int)
        df["value"] = _numeric(df, "value", path)
    if df.duplicated(subset=["indicator", "country", "year"]).any():
        dup = df[df.duplicated(subset=["indicator", "country", "year"], keep=False)]
        raise IngestError(
            f"{path}: duplicate (indicator, country, year) rows, e.g. "
            f"{tuple(dup.iloc[0][['indicator', 'country', 'year']])}"
        )
    unknown = set(df["country"].astype(str)) - set(populations)
    if unknown:
        if on_unknown == "error":
            raise IngestError(f"{path}: unknown countries {sorted(unknown)}")
        warnings.warn(f"{path}: dropping unknown countries {sorted(unknown)}")
        df = df[~df["country"].astype(str).isin(unknown)]
    df = df[(df["year"] >= periods[0]) & (df["year"] <= periods[-1])]

    names = sorted(df["indicator"].astype(str).unique())
    Q, n, T = len(names), len(populations), periods.size
    values = np.full((Q, n, T), np.nan)
    if Q:
        q_idx = {nm: q for q, nm in enumerate(names)}
        p_idx = {c: i for i, c in enumerate(populations)}
        qq = df["indicator"].astype(str).map(q_idx).to_numpy()
        ii = df["country"].astype(str).map(p_idx).to_numpy()
        tt = (df["year"].to_numpy() - periods[0]).astype(int)
        vals = df["value"].to_numpy(dtype=float)
        values[qq, ii, tt] = vals
    observed = np.isfinite(values)
    return IndicatorPanel(names=names, values=np.nan_to_num(values), observed=observed)


# ----------------------------------------------------------------------
# summary exports


def _long_frame(arr: np.ndarray, cols: list[str], value: str) -> pd.DataFrame:
    idx = np.indices(arr.shape)
    data = {c: idx[d].ravel() + 1 for d, c in enumerate(cols)}
    data[value] = arr.ravel()
    return pd.DataFrame(data)


def write_summary(summary: PosteriorSummary, outdir) -> list[Path]:
    """Write every summary table as CSV; returns the paths written."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    p, T, n, _ = summary.cocluster.shape

    jj, tt, ii, kk = np.indices((p, T, n, n))
    upper = ii < kk
    coc = pd.DataFrame(
        {
            "j": jj[upper] + 1,
            "t": tt[upper] + 1,
            "i": ii[upper] + 1,
            "i_prime": kk[upper] + 1,
            "prob": summary.cocluster[upper],
        }
    )
    written.append(out / "coclustering.csv")
    coc.to_csv(written[-1], index=False)

    written.append(out / "partitions.csv")
    _long_frame(summary.partitions, ["j", "t", "i"], "label").to_csv(
        written[-1], index=False
    )
    written.append(out / "cluster_counts.csv")
    _long_frame(summary.cluster_counts, ["j", "t"], "mean_clusters").to_csv(
        written[-1], index=False
    )
    written.append(out / "beta_mean.csv")
    _long_frame(summary.beta_mean, ["j", "t", "i"], "value").to_csv(
        written[-1], index=False
    )
    if summary.accuracy is not None:
        written.append(out / "accuracy.csv")
        _long_frame(summary.accuracy, ["j", "t"], "accuracy").to_csv(
            written[-1], index=False
        )
    if summary.eta2 is not None:
        Q = summary.eta2.shape[0]
        jj, tt = np.indices((p, T))
        frames = []
        for q in range(Q):
            frames.append(
                pd.DataFrame(
                    {
                        "q": summary.indicator_names[q],
                        "j": jj.ravel() + 1,
                        "t": tt.ravel() + 1,
                        "eta2": summary.eta2[q].ravel(),
                    }
                )
            )
        written.append(out / "eta2.csv")
        pd.concat(frames, ignore_index=True).to_csv(written[-1], index=False)
    if summary.nvi is not None:
        written.append(out / "nvi.csv")
        _long_frame(summary.nvi, ["j", "t"], "nvi").to_csv(written[-1], index=False)

    # tidy stack of every per-(j, t) series, convenient for plotting tools
    tidy = []
    jj, tt = np.indices((p, T))
    tidy.append(
        pd.DataFrame(
            {
                "quantity": "mean_clusters",
                "j": jj.ravel() + 1,
                "t": tt.ravel() + 1,
                "i": 0,
                "value": summary.cluster_counts.ravel(),
            }
        )
    )
    jj, tt, ii = np.indices((p, T, n))
    tidy.append(
        pd.DataFrame(
            {
                "quantity": "beta_mean",
                "j": jj.ravel() + 1,
                "t": tt.ravel() + 1,
                "i": ii.ravel() + 1,
                "value": summary.beta_mean.ravel(),
            }
        )
    )
    if summary.accuracy is not None:
        jj, tt = np.indices((p, T))
        tidy.append(
            pd.DataFrame(
                {
                    "quantity": "accuracy",
                    "j": jj.ravel() + 1,
                    "t": tt.ravel() + 1,
                    "i": 0,
                    "value": summary.accuracy.ravel(),
                }
            )
        )
    written.append(out / "summary_tidy.csv")
    pd.concat(tidy, ignore_index=True).to_csv(written[-1], index=False)
    return written
