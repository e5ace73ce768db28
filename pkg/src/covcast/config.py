"""Experiment configuration: YAML file + flag overrides, validation, and hashing.

Precedence is flags over file over defaults. Validation collects every
violation before raising so a bad config is reported in one pass. The
config hash (sha256 of the canonical JSON serialization) is stamped into
every output file for provenance.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .cab import CabConfig, OnlineUpdatePolicy
from .errors import ConfigError
from .protocol import MODEL_IDS, ModelSettings

__all__ = ["ExperimentConfig", "load_config", "save_config", "config_hash", "validate_config"]

HORIZON_BOUNDS = (10, 250)
# Search-grid ceilings for the network hyperparameters; values are
# validated against these bounds but never searched.
CAB_BOUNDS = {
    "lookback": (1, 250),
    "kernel_size": (3, 7),
    "hidden": (1, 256),
    "layers": (1, 7),
    "heads": (1, 32),
    "batch_size": (1, 256),
    "learning_rate": (1e-5, 1e-3),
    "epochs": (1, 1000),
}
FREQUENCIES = ("daily", "weekly", "monthly")


@dataclass(frozen=True)
class ExperimentConfig:
    prices_path: str = "prices.csv"
    riskfree_path: str | None = None
    return_mode: str = "raw"
    horizon: int = 20
    models: tuple[str, ...] = MODEL_IDS
    train_end: dt.date = dt.date(2020, 12, 31)
    test_start: dt.date | None = None
    test_end: dt.date | None = None
    frequencies: tuple[str, ...] = FREQUENCIES
    regimes: tuple[tuple[str, dt.date, dt.date], ...] | None = None
    out_dir: str = "out"
    seed: int = 0
    jobs: int = 1
    ewma_eta: float = 0.94
    pca_variance_fraction: float = 0.95
    garch_min_obs: int = 50
    alpha: float = 0.05
    val_fraction: float = 0.2
    update_mode: str = "daily"
    update_window: int = 60
    update_epochs: int = 1
    cab: CabConfig = field(default_factory=CabConfig)

    def settings(self) -> ModelSettings:
        return ModelSettings(
            ewma_eta=self.ewma_eta,
            pca_variance_fraction=self.pca_variance_fraction,
            garch_min_obs=self.garch_min_obs,
            cab=self.cab,
            update=OnlineUpdatePolicy(
                mode=self.update_mode, window=self.update_window, epochs=self.update_epochs
            ),
            val_fraction=self.val_fraction,
        )


def validate_config(cfg: ExperimentConfig) -> None:
    """Raise ConfigError listing every violation, not just the first."""
    problems: list[str] = []
    lo, hi = HORIZON_BOUNDS
    if not lo <= cfg.horizon <= hi:
        problems.append(f"horizon {cfg.horizon} outside supported range [{lo}, {hi}]")
    known = set(MODEL_IDS) | {"equal_weight"}
    for m in cfg.models:
        if m not in known:
            problems.append(f"unknown model id {m!r}")
    if not cfg.models:
        problems.append("model list is empty")
    if cfg.return_mode not in ("raw", "excess"):
        problems.append(f"return_mode must be raw or excess, got {cfg.return_mode!r}")
    if cfg.return_mode == "excess" and not cfg.riskfree_path:
        problems.append("excess return mode requires riskfree_path")
    for f in cfg.frequencies:
        if f not in FREQUENCIES:
            problems.append(f"unknown rebalance frequency {f!r}")
    if cfg.test_start is not None and cfg.test_start <= cfg.train_end:
        problems.append("test_start must come after train_end")
    if cfg.jobs < 1:
        problems.append(f"jobs must be >= 1, got {cfg.jobs}")
    if not 0.0 <= cfg.ewma_eta <= 1.0:
        problems.append(f"ewma_eta {cfg.ewma_eta} outside [0, 1]")
    if not 0.0 < cfg.pca_variance_fraction <= 1.0:
        problems.append(f"pca_variance_fraction {cfg.pca_variance_fraction} outside (0, 1]")
    if cfg.alpha not in (0.05, 0.10):
        problems.append(f"alpha must be 0.05 or 0.10, got {cfg.alpha}")
    if not 0.0 <= cfg.val_fraction < 1.0:
        problems.append(f"val_fraction {cfg.val_fraction} outside [0, 1)")
    for name, (blo, bhi) in CAB_BOUNDS.items():
        value = getattr(cfg.cab, name)
        if not blo <= value <= bhi:
            problems.append(f"cab.{name} {value} outside grid bounds [{blo}, {bhi}]")
    if problems:
        raise ConfigError("invalid configuration: " + "; ".join(problems))


def _to_jsonable(cfg: ExperimentConfig) -> dict:
    def convert(value):
        if isinstance(value, dt.date):
            return value.isoformat()
        if isinstance(value, tuple):
            return [convert(v) for v in value]
        if dataclasses.is_dataclass(value) and not isinstance(value, type):
            return {k: convert(v) for k, v in dataclasses.asdict(value).items()}
        return value

    return {f.name: convert(getattr(cfg, f.name)) for f in dataclasses.fields(cfg)}


def config_hash(cfg: ExperimentConfig) -> str:
    canonical = json.dumps(_to_jsonable(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(_to_jsonable(cfg), sort_keys=True), encoding="utf-8")


def _parse_date(value, name: str) -> dt.date:
    if isinstance(value, dt.date):
        return value
    try:
        return dt.date.fromisoformat(str(value))
    except ValueError as exc:
        raise ConfigError(f"{name}: bad date {value!r}: {exc}") from None


def _from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "cab" in raw and raw["cab"] is not None:
        if not isinstance(raw["cab"], dict):
            raise ConfigError("cab section must be a mapping")
        raw["cab"] = CabConfig(**raw["cab"])
    for key in ("train_end", "test_start", "test_end"):
        if raw.get(key) is not None:
            raw[key] = _parse_date(raw[key], key)
    for key in ("models", "frequencies"):
        if raw.get(key) is not None:
            raw[key] = tuple(raw[key])
    if raw.get("regimes") is not None:
        raw["regimes"] = tuple(
            (str(lbl), _parse_date(s, "regimes"), _parse_date(e, "regimes"))
            for lbl, s, e in raw["regimes"]
        )
    try:
        return ExperimentConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"bad config contents: {exc}") from None


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Build a config from an optional YAML file plus override key/values."""
    raw: dict = {}
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: config must be a mapping at the top level")
        raw.update(loaded)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key.startswith("cab."):
            section = dict(raw.get("cab") or {})
            section[key.split(".", 1)[1]] = value
            raw["cab"] = section
        else:
            raw[key] = value
    return _from_dict(raw)
