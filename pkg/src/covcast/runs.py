"""Forecast-run artifacts: dated forecast/target stacks with binary + JSON-index storage.

A run is stored as ``<model>.npz`` (compressed matrix stacks) next to
``<model>.json`` carrying dates, tickers, and provenance (config hash,
seed). An audit CSV with one row per (date, i, j, value) can be emitted
instead of the binary format.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

__all__ = ["ForecastRun", "save_run", "load_run", "run_to_csv"]


@dataclass(frozen=True)
class ForecastRun:
    """One model's dated series of horizon-ahead covariance forecasts and realized targets.

    ``targets[k]`` is NaN-filled when the realized window after ``dates[k]``
    extends past the end of the data.
    """

    model_id: str
    horizon: int
    tickers: tuple[str, ...]
    dates: tuple[dt.date, ...]
    forecasts: np.ndarray  # (n, N, N)
    targets: np.ndarray  # (n, N, N)

    def __post_init__(self):
        n = len(self.dates)
        k = len(self.tickers)
        if self.forecasts.shape != (n, k, k) or self.targets.shape != (n, k, k):
            raise ValueError("forecast/target stacks do not match dates and tickers")

    @property
    def n_dates(self) -> int:
        return len(self.dates)

    def evaluable(self) -> np.ndarray:
        """Boolean mask of dates whose realized target is available."""
        return ~np.isnan(self.targets).any(axis=(1, 2))


def _paths(directory, model_id: str) -> tuple[Path, Path]:
    directory = Path(directory)
    return directory / f"{model_id}.npz", directory / f"{model_id}.json"


def save_run(run: ForecastRun, directory, provenance: dict | None = None) -> Path:
    """Write the binary stacks and the JSON index; returns the index path."""
    npz_path, json_path = _paths(directory, run.model_id)
    npz_path.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(npz_path, forecasts=run.forecasts, targets=run.targets)
    index = {
        "model_id": run.model_id,
        "horizon": run.horizon,
        "tickers": list(run.tickers),
        "dates": [d.isoformat() for d in run.dates],
        "data_file": npz_path.name,
        "provenance": provenance or {},
    }
    json_path.write_text(json.dumps(index, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return json_path


def load_run(directory, model_id: str) -> ForecastRun:
    npz_path, json_path = _paths(directory, model_id)
    if not json_path.exists():
        raise DataError(f"no forecast run index at {json_path}")
    index = json.loads(json_path.read_text(encoding="utf-8"))
    data = np.load(npz_path)
    return ForecastRun(
        model_id=index["model_id"],
        horizon=int(index["horizon"]),
        tickers=tuple(index["tickers"]),
        dates=tuple(dt.date.fromisoformat(d) for d in index["dates"]),
        forecasts=data["forecasts"],
        targets=data["targets"],
    )


def run_to_csv(run: ForecastRun, path, provenance: dict | None = None) -> None:
    """Audit format: header comment with provenance, then date,kind,i,j,value rows."""
    prov = provenance or {}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# model={run.model_id} horizon={run.horizon}")
        for key in sorted(prov):
            fh.write(f" {key}={prov[key]}")
        fh.write("\n")
        fh.write("date,kind,i,j,value\n")
        n = len(run.tickers)
        for k, day in enumerate(run.dates):
            for kind, stack in (("forecast", run.forecasts), ("target", run.targets)):
                for i in range(n):
                    for j in range(n):
                        fh.write(f"{day.isoformat()},{kind},{i},{j},{stack[k, i, j]!r}\n")
