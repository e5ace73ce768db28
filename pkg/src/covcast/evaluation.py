"""Forecast loss metrics, regime aggregation, and rank-based model comparison statistics.

The Euclidean loss vectorizes the upper triangle (diagonal included, so
N(N+1)/2 entries); the Frobenius loss runs over the full matrix, counting
off-diagonals twice, hence it always dominates the Euclidean loss. Model
comparison follows the omnibus-then-post-hoc recipe: Friedman chi-square
on per-date ranks, then the Nemenyi critical distance on mean ranks.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats as sps

from .data_ingest import RegimeCalendar
from .errors import AlignmentError, ConfigError, InsufficientDataError, NumericalError
from .runs import ForecastRun

__all__ = [
    "LossSeries",
    "FriedmanResult",
    "NemenyiResult",
    "loss_euclidean",
    "loss_frobenius",
    "losses_for_run",
    "friedman_test",
    "nemenyi_cd",
    "nemenyi_test",
    "normality_screen",
    "aggregate_by_regime",
    "cd_diagram_svg",
]

REPORT_SCALE = 1e5  # losses are reported x1e5 in tables, stored unscaled

# Two-tailed studentized-range quantiles divided by sqrt(2), the usual
# post-hoc critical values for k = 2..20 at the two supported levels.
_Q_ALPHA = {
    0.05: (
        1.960, 2.344, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164,
        3.219, 3.268, 3.313, 3.354, 3.391, 3.426, 3.459, 3.489, 3.517, 3.544,
    ),
    0.10: (
        1.645, 2.052, 2.291, 2.460, 2.589, 2.693, 2.780, 2.855, 2.920,
        2.978, 3.030, 3.077, 3.120, 3.159, 3.196, 3.230, 3.261, 3.291, 3.319,
    ),
}


@dataclass(frozen=True)
class LossSeries:
    """Per-date Euclidean/Frobenius losses for one model."""

    model_id: str
    dates: tuple[dt.date, ...]
    euclidean: np.ndarray
    frobenius: np.ndarray

    def __post_init__(self):
        n = len(self.dates)
        if self.euclidean.shape != (n,) or self.frobenius.shape != (n,):
            raise ValueError("loss arrays must align with dates")
        if np.any(self.euclidean < 0.0) or np.any(self.frobenius < 0.0):
            raise ValueError("losses must be non-negative")

    def metric(self, name: str) -> np.ndarray:
        if name == "euclidean":
            return self.euclidean
        if name == "frobenius":
            return self.frobenius
        raise ConfigError(f"unknown metric {name!r}")


@dataclass(frozen=True)
class FriedmanResult:
    statistic: float
    p_value: float
    k: int
    n: int
    model_ids: tuple[str, ...]
    mean_ranks: np.ndarray


@dataclass(frozen=True)
class NemenyiResult:
    cd: float
    alpha: float
    model_ids: tuple[str, ...]
    mean_ranks: np.ndarray
    rank_differences: np.ndarray  # (k, k) absolute mean-rank differences
    significant: np.ndarray  # (k, k) boolean


def _check_pair(forecast: np.ndarray, realized: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    forecast = np.asarray(forecast, dtype=np.float64)
    realized = np.asarray(realized, dtype=np.float64)
    if forecast.shape != realized.shape:
        raise ValueError(f"shape mismatch: {forecast.shape} vs {realized.shape}")
    if forecast.ndim != 2 or forecast.shape[0] != forecast.shape[1]:
        raise ValueError(f"expected square matrices, got {forecast.shape}")
    return forecast, realized


def loss_euclidean(forecast: np.ndarray, realized: np.ndarray) -> float:
    """Euclidean distance of the vectorized upper triangles, diagonal included."""
    forecast, realized = _check_pair(forecast, realized)
    diff = forecast - realized
    iu = np.triu_indices(diff.shape[0])
    return float(np.sqrt(np.sum(diff[iu] ** 2)))


def loss_frobenius(forecast: np.ndarray, realized: np.ndarray) -> float:
    """Frobenius distance; off-diagonal disagreements count twice vs the Euclidean loss."""
    forecast, realized = _check_pair(forecast, realized)
    diff = forecast - realized
    return float(np.sqrt(np.trace(diff.T @ diff)))


def losses_for_run(run: ForecastRun) -> LossSeries:
    """Per-date losses for the dates whose realized target exists."""
    mask = run.evaluable()
    dates = tuple(d for d, keep in zip(run.dates, mask) if keep)
    eu, fr = [], []
    for k in np.flatnonzero(mask):
        eu.append(loss_euclidean(run.forecasts[k], run.targets[k]))
        fr.append(loss_frobenius(run.forecasts[k], run.targets[k]))
    return LossSeries(
        model_id=run.model_id,
        dates=dates,
        euclidean=np.array(eu),
        frobenius=np.array(fr),
    )


def _aligned_matrix(series: list[LossSeries], metric: str) -> np.ndarray:
    dates = series[0].dates
    for s in series[1:]:
        if s.dates != dates:
            raise AlignmentError(
                f"loss series for {s.model_id!r} is not date-aligned with {series[0].model_id!r}"
            )
    return np.column_stack([s.metric(metric) for s in series])


def friedman_test(series: list[LossSeries], metric: str = "frobenius") -> FriedmanResult:
    """Friedman omnibus test on per-date loss ranks (average ranks for ties).

    The chi-square statistic has k - 1 degrees of freedom; its p-value uses
    the chi-square approximation, adequate at the sample sizes used here.
    """
    if len(series) < 3:
        raise ConfigError(f"need at least 3 models for the omnibus test, got {len(series)}")
    values = _aligned_matrix(series, metric)
    n, k = values.shape
    if n < 10:
        raise InsufficientDataError(f"need at least 10 paired samples, got {n}")
    ranks = sps.rankdata(values, axis=1)
    mean_ranks = ranks.mean(axis=0)
    statistic = 12.0 * n / (k * (k + 1)) * float(np.sum((mean_ranks - (k + 1) / 2.0) ** 2))
    p_value = float(sps.chi2.sf(statistic, df=k - 1))
    return FriedmanResult(
        statistic=float(statistic),
        p_value=p_value,
        k=k,
        n=n,
        model_ids=tuple(s.model_id for s in series),
        mean_ranks=mean_ranks,
    )


def nemenyi_cd(k: int, n: int, alpha: float = 0.05) -> float:
    """Critical distance q_alpha * sqrt(k (k+1) / (6 n)) for mean-rank comparisons."""
    if alpha not in _Q_ALPHA:
        raise ConfigError(f"alpha must be one of {sorted(_Q_ALPHA)}, got {alpha}")
    table = _Q_ALPHA[alpha]
    if not 2 <= k <= len(table) + 1:
        raise ConfigError(f"k must lie in [2, {len(table) + 1}], got {k}")
    if n < 1:
        raise ConfigError(f"n must be positive, got {n}")
    return float(table[k - 2] * np.sqrt(k * (k + 1) / (6.0 * n)))


def nemenyi_test(friedman: FriedmanResult, alpha: float = 0.05) -> NemenyiResult:
    """Pairwise mean-rank comparisons against the critical distance."""
    cd = nemenyi_cd(friedman.k, friedman.n, alpha)
    diffs = np.abs(friedman.mean_ranks[:, None] - friedman.mean_ranks[None, :])
    significant = diffs > cd
    np.fill_diagonal(significant, False)
    return NemenyiResult(
        cd=cd,
        alpha=alpha,
        model_ids=friedman.model_ids,
        mean_ranks=friedman.mean_ranks,
        rank_differences=diffs,
        significant=significant,
    )


def normality_screen(values: np.ndarray) -> tuple[float, float]:
    """Moment-based (skewness/kurtosis) normality statistic and p-value."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < 20:
        raise InsufficientDataError(f"need at least 20 observations, got {values.size}")
    if np.ptp(values) == 0.0:
        raise NumericalError("normality screen is degenerate on a constant series")
    res = sps.jarque_bera(values)
    return float(res.statistic), float(res.pvalue)


def aggregate_by_regime(series: list[LossSeries], calendar: RegimeCalendar) -> pd.DataFrame:
    """Long table of mean losses per (model, regime, metric); values unscaled.

    Dates outside every named segment fall into an ``Unassigned`` regime so
    coverage gaps are visible rather than silently dropped.
    """
    rows = []
    overall_span = next(
        ((start, end) for lbl, start, end in calendar.segments if lbl == "Overall"), None
    )
    for s in series:
        labels = np.array([calendar.segment_of(d) or "Unassigned" for d in s.dates])
        for metric in ("euclidean", "frobenius"):
            vals = s.metric(metric)
            for lbl in dict.fromkeys(labels):
                mask = labels == lbl
                rows.append((s.model_id, lbl, metric, float(vals[mask].mean())))
            if overall_span is not None:
                start, end = overall_span
                mask = np.array([start <= d <= end for d in s.dates])
                if mask.any():
                    rows.append((s.model_id, "Overall", metric, float(vals[mask].mean())))
    return pd.DataFrame(rows, columns=["model", "regime", "metric", "value"])


def cd_diagram_svg(result: NemenyiResult, svg_path, json_path=None, provenance: dict | None = None) -> None:
    """Render mean ranks on an axis with the critical-distance bar and clique links.

    Also writes a JSON sidecar with the ranks and the critical distance
    when ``json_path`` is given.
    """
    order = np.argsort(result.mean_ranks)
    ranks = result.mean_ranks[order]
    names = [result.model_ids[i] for i in order]
    k = len(names)

    lo = np.floor(ranks.min() * 2) / 2
    hi = np.ceil(ranks.max() * 2) / 2
    if hi - lo < 1e-9:
        hi = lo + 1.0
    width, margin = 640.0, 60.0
    axis_w = width - 2 * margin

    def x_of(rank: float) -> float:
        return margin + (rank - lo) / (hi - lo) * axis_w

    # rows of labels alternate below the axis to avoid overlap
    label_rows = 2 + (k + 1) // 2
    height = 120.0 + 18.0 * label_rows
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'font-family="sans-serif" font-size="12">'
    ]
    prov = provenance or {}
    prov_text = " ".join(f"{key}={prov[key]}" for key in sorted(prov))
    parts.append(f"<!-- mean-rank critical-distance diagram {prov_text} -->")
    axis_y = 70.0
    parts.append(
        f'<line x1="{margin}" y1="{axis_y}" x2="{width - margin}" y2="{axis_y}" stroke="black"/>'
    )
    tick = lo
    while tick <= hi + 1e-9:
        parts.append(
            f'<line x1="{x_of(tick):.1f}" y1="{axis_y - 5}" x2="{x_of(tick):.1f}" '
            f'y2="{axis_y + 5}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{x_of(tick):.1f}" y="{axis_y - 10}" text-anchor="middle">{tick:g}</text>'
        )
        tick += 0.5

    # critical-distance ruler
    cd_x0, cd_x1 = x_of(lo), x_of(min(lo + result.cd, hi))
    parts.append(f'<line x1="{cd_x0:.1f}" y1="30" x2="{cd_x1:.1f}" y2="30" stroke="black"/>')
    parts.append(f'<line x1="{cd_x0:.1f}" y1="25" x2="{cd_x0:.1f}" y2="35" stroke="black"/>')
    parts.append(f'<line x1="{cd_x1:.1f}" y1="25" x2="{cd_x1:.1f}" y2="35" stroke="black"/>')
    parts.append(f'<text x="{(cd_x0 + cd_x1) / 2:.1f}" y="20" text-anchor="middle">CD = {result.cd:.3f}</text>')

    # model markers and labels
    for i, (name, rank) in enumerate(zip(names, ranks)):
        x = x_of(rank)
        y_label = axis_y + 25 + 18 * i
        parts.append(f'<line x1="{x:.1f}" y1="{axis_y}" x2="{x:.1f}" y2="{y_label - 10}" stroke="gray"/>')
        parts.append(f'<text x="{x:.1f}" y="{y_label}" text-anchor="middle">{name} ({rank:.3f})</text>')

    # clique bars: maximal runs of sorted models within one CD
    bar_y = axis_y + 8
    drawn = []
    for i in range(k):
        j = i
        while j + 1 < k and ranks[j + 1] - ranks[i] <= result.cd:
            j += 1
        if j > i and not any(a <= i and j <= b for a, b in drawn):
            parts.append(
                f'<line x1="{x_of(ranks[i]) - 3:.1f}" y1="{bar_y:.1f}" '
                f'x2="{x_of(ranks[j]) + 3:.1f}" y2="{bar_y:.1f}" '
                f'stroke="black" stroke-width="4"/>'
            )
            drawn.append((i, j))
            bar_y += 6
    parts.append("</svg>")
    with open(svg_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")

    if json_path is not None:
        sidecar = {
            "alpha": result.alpha,
            "cd": result.cd,
            "mean_ranks": {m: float(r) for m, r in zip(result.model_ids, result.mean_ranks)},
            "provenance": prov,
        }
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
            fh.write("\n")
