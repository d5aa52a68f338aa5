"""Command-line interface.

Subcommands: ``simulate`` (synthetic panels), ``fit`` (config-driven
pipeline: data or simulation, chains, persistence, optional summaries),
``summarize`` and ``eta2`` (reports from stored draws), ``trpm-sim`` (prior
predictive partition sequences) and ``basis`` (design-matrix dump).

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import pandas as pd

import surfclust
from surfclust import config as cfgmod
from surfclust.config import ConfigError
from surfclust.calibrate import InvalidSpan, calibrate_mu
from surfclust.datagen import (
    default_truth_scenario,
    generate_simulation,
    load_truth_csv,
    save_truth_csv,
)
from surfclust.gibbs import SamplerConfig, run_chain
from surfclust.io import IngestError, ParseError, export_panel, ingest_indicators, ingest_rates, write_summary
from surfclust.modelcore import Hyperparameters, MissingData, NumericError
from surfclust.partitions import InvalidInput, simulate_trpm
from surfclust.splinebasis import AgeOutOfSupport, InvalidKnots, basis_from_spec
from surfclust.store import DrawStore, NoDraws
from surfclust.summaries import summarize_draws

_HYPER_KEYS = (
    "a_sigma", "b_sigma", "a_delta", "b_delta", "a_omega", "b_omega",
    "a_M", "b_M", "a_alpha", "b_alpha", "gp_length_scale",
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surfclust",
        description="Local clustering of age-period log-mortality surfaces.",
    )
    parser.add_argument("--version", action="version", version=surfclust.__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic panel")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--scenario", default="default",
                     help="'default' or a truth CSV path (j,t,i,label)")
    sim.add_argument("--sigma", type=float, default=0.05)
    sim.add_argument("--min-gap", type=float, default=None,
                     help="minimum separation between cluster coefficients")

    fit = sub.add_parser("fit", help="run the configured pipeline")
    fit.add_argument("--config", required=True)
    fit.add_argument("--seed", type=int, default=None, help="override sampler.seed")
    fit.add_argument("--chains", type=int, default=None, help="override sampler.chains")
    fit.add_argument("--out", default=None, help="override output.dir")
    fit.add_argument("--dry-run", action="store_true",
                     help="validate the config and print resolved settings")

    summ = sub.add_parser("summarize", help="summarize a draw store")
    summ.add_argument("--draws", required=True, nargs="+",
                      help="one or more chain directories (draws are pooled)")
    summ.add_argument("--out", required=True)
    summ.add_argument("--truth", default=None, help="truth CSV for accuracy")
    summ.add_argument("--indicators", default=None, help="indicator CSV for eta2")
    summ.add_argument("--compare", default=None, nargs="+",
                      help="second run's chain directories, for NVI")
    plots = summ.add_mutually_exclusive_group()
    plots.add_argument("--plots", dest="plots", action="store_true", default=True)
    plots.add_argument("--no-plots", dest="plots", action="store_false")

    eta = sub.add_parser("eta2", help="indicator association table")
    eta.add_argument("--draws", required=True, nargs="+")
    eta.add_argument("--indicators", required=True)
    eta.add_argument("--out", required=True)
    eplots = eta.add_mutually_exclusive_group()
    eplots.add_argument("--plots", dest="plots", action="store_true", default=True)
    eplots.add_argument("--no-plots", dest="plots", action="store_false")

    trpm = sub.add_parser("trpm-sim", help="simulate prior partition sequences")
    trpm.add_argument("--n", type=int, required=True)
    trpm.add_argument("--periods", type=int, required=True)
    trpm.add_argument("--alpha", type=float, required=True)
    trpm.add_argument("--concentration", type=float, required=True)
    trpm.add_argument("--seed", type=int, default=0)
    trpm.add_argument("--out", required=True, help="output CSV (t,i,label)")

    bas = sub.add_parser("basis", help="dump a basis design matrix as CSV")
    bas.add_argument("--preset", default=None, choices=["sim6", "mortality20"])
    bas.add_argument("--degree", type=int, default=None)
    bas.add_argument("--knots", default=None, help="comma-separated interior knots")
    bas.add_argument("--ages", type=int, nargs=2, default=None, metavar=("LO", "HI"))
    bas.add_argument("--out", required=True)
    bas.add_argument("--plot", default=None, help="optional figure path")
    return parser


# ----------------------------------------------------------------------
# handlers


def _cmd_simulate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.scenario == "default":
        truth = default_truth_scenario()
    else:
        truth = load_truth_csv(args.scenario)
    panel, record = generate_simulation(
        truth, seed=args.seed, sigma=args.sigma, min_cluster_gap=args.min_gap
    )
    export_panel(panel, out / "panel.csv")
    save_truth_csv(record.truth, out / "truth.csv")
    record.to_json(out / "latent.json")
    print(f"wrote panel.csv, truth.csv, latent.json to {out}")
    return 0


def _resolve_fit_config(args) -> dict:
    cfg = cfgmod.load_config(args.config)
    cfgmod.apply_env_overrides(cfg)
    if args.seed is not None:
        cfg.setdefault("sampler", {})["seed"] = args.seed
    if args.chains is not None:
        cfg.setdefault("sampler", {})["chains"] = args.chains
    if args.out is not None:
        cfg.setdefault("output", {})["dir"] = args.out
    return cfg


def _panel_from_config(cfg: dict, outdir: Path):
    """Returns (panel, truth or None); simulates if no data section."""
    if cfgmod.get(cfg, "data.rates") is not None:
        panel = ingest_rates(
            cfgmod.require(cfg, "data.rates"),
            layout=cfgmod.get(cfg, "data.layout", "rates"),
            ages=cfgmod.get(cfg, "data.ages"),
            years=cfgmod.get(cfg, "data.years"),
            allow_missing=cfgmod.get(cfg, "data.allow_missing", True),
        )
        truth = None
        truth_path = cfgmod.get(cfg, "data.truth")
        if truth_path:
            truth = load_truth_csv(truth_path)
        return panel, truth
    if "simulate" not in cfg:
        raise ConfigError("missing config key: data.rates (or a simulate section)")
    sim = cfg["simulate"]
    scenario = sim.get("scenario", "default")
    truth = (
        default_truth_scenario() if scenario == "default" else load_truth_csv(scenario)
    )
    panel, record = generate_simulation(
        truth,
        seed=int(sim.get("seed", 0)),
        sigma=float(sim.get("sigma", 0.05)),
        min_cluster_gap=sim.get("min_cluster_gap"),
    )
    datadir = outdir / "data"
    datadir.mkdir(parents=True, exist_ok=True)
    export_panel(panel, datadir / "panel.csv")
    save_truth_csv(record.truth, datadir / "truth.csv")
    record.to_json(datadir / "latent.json")
    return panel, record.truth


def _hyper_from_config(cfg: dict) -> Hyperparameters:
    kwargs = {}
    for key in _HYPER_KEYS:
        val = cfgmod.get(cfg, f"hyper.{key}")
        if val is not None:
            kwargs[key] = float(val)
    return Hyperparameters(**kwargs)


def _fit_worker(payload) -> str:
    """Run one chain and persist it (used by the process pool)."""
    (panel, basis, hyper, sampler_cfg, span, degree, chain_dir, extra) = payload
    store = run_chain(
        panel, basis, hyper, sampler_cfg,
        loess_span=span, loess_degree=degree, manifest_extra=extra,
    )
    store.save(chain_dir)
    return str(chain_dir)


def _cmd_fit(args) -> int:
    cfg = _resolve_fit_config(args)
    outdir = Path(cfgmod.require(cfg, "output.dir"))
    basis = basis_from_spec(cfgmod.require(cfg, "basis"))
    iterations = int(cfgmod.require(cfg, "sampler.iterations"))
    burn_in = int(cfgmod.require(cfg, "sampler.burn_in"))
    thin = int(cfgmod.get(cfg, "sampler.thin", 1))
    seed = int(cfgmod.get(cfg, "sampler.seed", 0))
    chains = int(cfgmod.get(cfg, "sampler.chains", 1))
    n_aux = int(cfgmod.get(cfg, "sampler.n_aux", 1))
    span = float(cfgmod.get(cfg, "calibration.loess_span", 0.75))
    degree = int(cfgmod.get(cfg, "calibration.loess_degree", 2))

    if args.dry_run:
        resolved = dict(cfg)
        resolved["_digest"] = cfgmod.config_digest(cfg)
        print(json.dumps(resolved, indent=1, sort_keys=True, default=str))
        return 0

    outdir.mkdir(parents=True, exist_ok=True)
    panel, truth = _panel_from_config(cfg, outdir)
    hyper = _hyper_from_config(cfg)

    payloads = []
    chain_dirs = []
    for c in range(chains):
        chain_seed = seed if chains == 1 else [seed, c]
        sampler_cfg = SamplerConfig(
            iterations=iterations, burn_in=burn_in, thin=thin,
            seed=chain_seed, n_aux=n_aux,
        )
        chain_dir = outdir / f"chain_{c:02d}"
        extra = {"chain": c, "base_seed": seed, "config_digest": cfgmod.config_digest(cfg)}
        payloads.append((panel, basis, hyper, sampler_cfg, span, degree, chain_dir, extra))
        chain_dirs.append(chain_dir)

    if chains == 1:
        _fit_worker(payloads[0])
    else:
        with ProcessPoolExecutor(max_workers=min(chains, 4)) as pool:
            list(pool.map(_fit_worker, payloads))

    manifest = {
        "config": cfg,
        "config_digest": cfgmod.config_digest(cfg),
        "code_version": surfclust.__version__,
        "data_digest": panel.digest(),
        "chains": [d.name for d in chain_dirs],
        "seed": seed,
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True, default=str)
    print(f"fit complete: {chains} chain(s) under {outdir}")

    if cfgmod.get(cfg, "summarize.enabled", False):
        stores = [DrawStore.load(d) for d in chain_dirs]
        store = stores[0] if len(stores) == 1 else DrawStore.concat(stores)
        truth_cfg = cfgmod.get(cfg, "summarize.truth")
        if truth_cfg == "simulated":
            pass  # truth already in hand from the simulate stage
        elif truth_cfg:
            truth = load_truth_csv(truth_cfg)
        else:
            truth = None
        summary = summarize_draws(store, truth=truth)
        sumdir = outdir / "summary"
        write_summary(summary, sumdir)
        if cfgmod.get(cfg, "summarize.plots", True):
            from surfclust import report

            report.render_all(summary, sumdir)
        print(f"summary written to {sumdir}")
    return 0


def _load_stores(dirs) -> DrawStore:
    stores = [DrawStore.load(d) for d in dirs]
    return stores[0] if len(stores) == 1 else DrawStore.concat(stores)


def _cmd_summarize(args) -> int:
    store = _load_stores(args.draws)
    truth = load_truth_csv(args.truth) if args.truth else None
    indicators = None
    if args.indicators:
        indicators = ingest_indicators(
            args.indicators, store.populations, store.periods
        )
    compare = _load_stores(args.compare) if args.compare else None
    summary = summarize_draws(store, truth=truth, indicators=indicators, compare=compare)
    paths = write_summary(summary, args.out)
    if args.plots:
        from surfclust import report

        paths += report.render_all(summary, args.out)
    print(f"wrote {len(paths)} files to {args.out}")
    return 0


def _cmd_eta2(args) -> int:
    store = _load_stores(args.draws)
    indicators = ingest_indicators(args.indicators, store.populations, store.periods)
    from surfclust.summaries import eta_squared

    values = eta_squared(store.c[: store.n_draws], indicators)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    Q, p, T = values.shape
    jj, tt = np.indices((p, T))
    frames = [
        pd.DataFrame(
            {
                "q": indicators.names[q],
                "j": jj.ravel() + 1,
                "t": tt.ravel() + 1,
                "eta2": values[q].ravel(),
            }
        )
        for q in range(Q)
    ]
    table = (
        pd.concat(frames, ignore_index=True)
        if frames
        else pd.DataFrame(columns=["q", "j", "t", "eta2"])
    )
    table.to_csv(out / "eta2.csv", index=False)
    if args.plots and Q:
        from surfclust import report
        from surfclust.summaries import PosteriorSummary

        summary = PosteriorSummary(
            populations=store.populations,
            periods=store.periods,
            cocluster=np.zeros((p, T, store.dims[2], store.dims[2])),
            partitions=np.ones((p, T, store.dims[2]), dtype=int),
            cluster_counts=np.ones((p, T)),
            beta_mean=np.zeros((p, T, store.dims[2])),
            eta2=values,
            indicator_names=indicators.names,
        )
        report.plot_eta2(summary, out)
    print(f"wrote eta2 table for {Q} indicator(s) to {out}")
    return 0


def _cmd_trpm_sim(args) -> int:
    rng = np.random.default_rng(args.seed)
    seq = simulate_trpm(args.n, args.periods, args.alpha, args.concentration, rng)
    rows = []
    for t, (mem, _flags) in enumerate(seq, start=1):
        for i, lab in enumerate(mem.labels, start=1):
            rows.append((t, i, lab))
    pd.DataFrame(rows, columns=["t", "i", "label"]).to_csv(args.out, index=False)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _cmd_basis(args) -> int:
    if args.preset:
        spec = {"preset": args.preset}
        if args.ages:
            spec["ages"] = list(args.ages)
    else:
        if args.degree is None or args.ages is None:
            raise ConfigError("basis command needs --preset, or --degree with --ages")
        knots = [float(v) for v in args.knots.split(",")] if args.knots else []
        spec = {"degree": args.degree, "interior_knots": knots, "ages": list(args.ages)}
    basis = basis_from_spec(spec)
    frame = pd.DataFrame(
        basis.design, columns=[f"g{j + 1}" for j in range(basis.p)]
    )
    frame.insert(0, "age", basis.age_grid.astype(int))
    frame.to_csv(args.out, index=False)
    if args.plot:
        from surfclust import report

        report.plot_basis(basis, args.plot)
    print(f"wrote {basis.p}-function design matrix to {args.out}")
    return 0


_HANDLERS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "summarize": _cmd_summarize,
    "eta2": _cmd_eta2,
    "trpm-sim": _cmd_trpm_sim,
    "basis": _cmd_basis,
}

_CONFIG_ERRORS = (ConfigError, InvalidKnots, InvalidSpan)
_DATA_ERRORS = (
    IngestError, ParseError, MissingData, InvalidInput, AgeOutOfSupport,
    NoDraws, FileNotFoundError,
)
_NUMERIC_ERRORS = (NumericError, np.linalg.LinAlgError, FloatingPointError)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except _NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
