"""Batch command-line front end: forecast, evaluate, backtest, and the bundled report.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure. All artifact paths are relative to --out. COVCAST_SEED and
COVCAST_JOBS override the corresponding settings between the config file
and explicit flags.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import evaluation as ev
from . import portfolio as pf
from .config import ExperimentConfig, config_hash, load_config, save_config, validate_config
from .data_ingest import (
    RegimeCalendar,
    default_regimes,
    load_prices,
    load_riskfree,
    to_returns,
)
from .errors import ConfigError, CovcastError, DataError, NumericalError
from .protocol import forecast_series
from .runs import ForecastRun, load_run, run_to_csv, save_run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covcast",
        description="Covariance forecasting models, loss evaluation, and GMV backtests.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("forecast", "produce per-model covariance forecast files"),
        ("evaluate", "loss tables, omnibus/post-hoc statistics, CD diagram"),
        ("backtest", "GMV backtests, 1/N benchmark, summary table"),
        ("report", "forecast + evaluate + backtest in one pass"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--out", help="output directory (default from config)")
        p.add_argument("--prices", help="price CSV path")
        p.add_argument("--riskfree", help="risk-free CSV path")
        p.add_argument("--return-mode", choices=["raw", "excess"], dest="return_mode")
        p.add_argument("--horizon", type=int, help="forecast window in trading days")
        p.add_argument("--models", help="comma-separated model ids")
        p.add_argument("--train-end", dest="train_end", help="last training date (ISO)")
        p.add_argument("--test-start", dest="test_start", help="first test date (ISO)")
        p.add_argument("--test-end", dest="test_end", help="last test date (ISO)")
        p.add_argument("--seed", type=int, help="seed override")
        p.add_argument("--jobs", type=int, help="worker processes for per-model fan-out")
        p.add_argument("--csv", action="store_true", help="emit forecast audit CSVs instead of binary")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    overrides = {
        "prices_path": args.prices,
        "riskfree_path": args.riskfree,
        "return_mode": args.return_mode,
        "horizon": args.horizon,
        "train_end": args.train_end,
        "test_start": args.test_start,
        "test_end": args.test_end,
        "out_dir": args.out,
        "jobs": args.jobs,
        "seed": args.seed,
    }
    if args.models:
        overrides["models"] = [m.strip() for m in args.models.split(",") if m.strip()]
    env = {}
    if os.environ.get("COVCAST_SEED"):
        env["seed"] = int(os.environ["COVCAST_SEED"])
    if os.environ.get("COVCAST_JOBS"):
        env["jobs"] = int(os.environ["COVCAST_JOBS"])
    merged = dict(env)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    cfg = load_config(args.config, merged)
    validate_config(cfg)
    return cfg


def _load_panel(cfg: ExperimentConfig):
    prices = load_prices(cfg.prices_path)
    riskfree = load_riskfree(cfg.riskfree_path) if cfg.riskfree_path else None
    return to_returns(prices, riskfree=riskfree, mode=cfg.return_mode)


def _test_dates(cfg: ExperimentConfig, panel) -> list:
    start = cfg.test_start
    dates = [d for d in panel.dates if d > cfg.train_end]
    if start is not None:
        dates = [d for d in dates if d >= start]
    if cfg.test_end is not None:
        dates = [d for d in dates if d <= cfg.test_end]
    # the first usable date also needs a full trailing window for every model
    usable = []
    for d in dates:
        idx = panel.index_of(d)
        if idx + 1 >= cfg.horizon:
            usable.append(d)
    if not usable:
        raise DataError("no test dates remain after applying the window constraints")
    return usable


def _regimes(cfg: ExperimentConfig) -> RegimeCalendar:
    if cfg.regimes is None:
        return default_regimes()
    return RegimeCalendar(segments=tuple(cfg.regimes))


def _forecast_one(panel, model_id, dates, horizon, settings, train_end):
    return forecast_series(
        panel, model_id, dates, horizon, settings=settings, train_end=train_end
    )


def _forecast_models(cfg: ExperimentConfig, panel, dates) -> dict[str, ForecastRun]:
    settings = cfg.settings()
    wanted = [m for m in cfg.models if m != "equal_weight"]
    runs: dict[str, ForecastRun] = {}
    classical = [m for m in wanted if m != "cab"]
    if cfg.jobs > 1 and len(classical) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = {
                m: pool.submit(
                    _forecast_one, panel, m, dates, cfg.horizon, settings, cfg.train_end
                )
                for m in classical
            }
            for m, fut in futures.items():
                runs[m] = fut.result()
    else:
        for m in classical:
            runs[m] = _forecast_one(panel, m, dates, cfg.horizon, settings, cfg.train_end)
    if "cab" in wanted:  # the network trains in-process and owns a full worker
        runs["cab"] = _forecast_one(panel, "cab", dates, cfg.horizon, settings, cfg.train_end)
    return runs


def _provenance(cfg: ExperimentConfig) -> dict:
    return {"config_hash": config_hash(cfg), "seed": cfg.seed}


def cmd_forecast(cfg: ExperimentConfig, emit_csv: bool = False) -> dict[str, ForecastRun]:
    panel = _load_panel(cfg)
    dates = _test_dates(cfg, panel)
    runs = _forecast_models(cfg, panel, dates)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prov = _provenance(cfg)
    for model_id, run in runs.items():
        if emit_csv:
            run_to_csv(run, out / f"{model_id}.forecasts.csv", prov)
        else:
            save_run(run, out, prov)
    save_config(cfg, out / "resolved_config.yaml")
    return runs


def _load_runs(cfg: ExperimentConfig) -> dict[str, ForecastRun]:
    out = Path(cfg.out_dir)
    runs = {}
    for model_id in cfg.models:
        if model_id == "equal_weight":
            continue
        runs[model_id] = load_run(out, model_id)
    return runs


def _write_table(df, path, prov: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={prov['config_hash']} seed={prov['seed']}\n")
        df.to_csv(fh, index=False)


def cmd_evaluate(cfg: ExperimentConfig, runs: dict[str, ForecastRun] | None = None) -> None:
    if runs is None:
        runs = _load_runs(cfg)
    if len(runs) < 3:
        raise ConfigError(f"omnibus testing needs at least 3 models, got {len(runs)}")
    prov = _provenance(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    series = [ev.losses_for_run(runs[m]) for m in runs]

    table = ev.aggregate_by_regime(series, _regimes(cfg))
    table = table.assign(value=table["value"] * ev.REPORT_SCALE)
    _write_table(table, out / "losses_by_regime.csv", prov)

    stats_report = {"alpha": cfg.alpha, "models": list(runs), "metrics": {}}
    for metric in ("euclidean", "frobenius"):
        fr = ev.friedman_test(series, metric=metric)
        nem = ev.nemenyi_test(fr, alpha=cfg.alpha)
        ev.cd_diagram_svg(
            nem,
            out / f"cd_{metric}.svg",
            out / f"cd_{metric}.json",
            provenance=prov,
        )
        normality = {}
        for s in series:
            try:
                stat, p = ev.normality_screen(s.metric(metric))
                normality[s.model_id] = {"statistic": stat, "p_value": p}
            except CovcastError as exc:
                normality[s.model_id] = {"error": str(exc)}
        stats_report["metrics"][metric] = {
            "friedman_statistic": fr.statistic,
            "friedman_p_value": fr.p_value,
            "n": fr.n,
            "k": fr.k,
            "mean_ranks": {m: float(r) for m, r in zip(fr.model_ids, fr.mean_ranks)},
            "nemenyi_cd": nem.cd,
            "significant_pairs": [
                [fr.model_ids[i], fr.model_ids[j]]
                for i in range(fr.k)
                for j in range(i + 1, fr.k)
                if nem.significant[i, j]
            ],
            "normality": normality,
        }
    report_path = out / "statistics.json"
    stats_report["provenance"] = prov
    report_path.write_text(json.dumps(stats_report, indent=2, sort_keys=True) + "\n", "utf-8")


def cmd_backtest(cfg: ExperimentConfig, runs: dict[str, ForecastRun] | None = None) -> None:
    import pandas as pd

    if runs is None:
        runs = _load_runs(cfg)
    panel = _load_panel(cfg)
    prov = _provenance(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    wants_equal_weight = "equal_weight" in cfg.models or not runs
    first_run = next(iter(runs.values()), None)
    grid_dates = list(first_run.dates) if first_run is not None else None

    rows = []
    for freq in cfg.frequencies:
        ew = pf.equal_weight_ledger(panel, freq, dates=grid_dates)
        ledgers = {}
        if wants_equal_weight or "equal_weight" in cfg.models:
            ledgers["equal_weight"] = ew
        for model_id, run in runs.items():
            ledgers[model_id] = pf.run_backtest(run, panel, freq)
        for sid, ledger in ledgers.items():
            pf.ledger_to_csv(ledger, out / f"ledger_{sid}_{freq}.csv", prov)
            row = {
                "strategy": sid,
                "freq": freq,
                "variance": pf.annualized_variance(ledger),
                "turnover": pf.turnover(ledger),
            }
            if sid != "equal_weight":
                stat, p = pf.variance_f_test(ledger, ew)
                row["f_stat_vs_equal_weight"] = stat
                row["p_value_var_lt_equal_weight"] = p
            rows.append(row)
    summary = pd.DataFrame(rows)
    _write_table(summary, out / "backtest_summary.csv", prov)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args)
        if args.command == "forecast":
            cmd_forecast(cfg, emit_csv=args.csv)
        elif args.command == "evaluate":
            cmd_evaluate(cfg)
        elif args.command == "backtest":
            cmd_backtest(cfg)
        elif args.command == "report":
            runs = cmd_forecast(cfg, emit_csv=args.csv)
            cmd_evaluate(cfg, runs)
            cmd_backtest(cfg, runs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
