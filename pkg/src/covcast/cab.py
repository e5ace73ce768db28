"""The convolutional BiLSTM attention forecaster and its rolling online-update protocol.

Pipeline per sequence: scale -> 3-d convolution -> flatten -> BiLSTM stack
-> dropout -> multi-head self-attention -> mean-pool over time -> linear
head -> reshape and symmetrize. Training minimizes the mean Frobenius
distance in scaled space on that symmetrized output. At inference the
output is unscaled, eigenvalue-clamped to PSD, and blended with the
trailing realized covariance: phi * network + (1 - phi) * trailing.
"""

from __future__ import annotations

import datetime as dt
import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .data_ingest import ReturnPanel
from .errors import ConfigError, InsufficientDataError, NumericalError
from .rolling_stats import (
    CovMatrix,
    CovSequence,
    Scaler,
    apply_scaler,
    build_sequences,
    fit_scaler,
    invert_scaler,
    realized_cov_series,
)
from .runs import ForecastRun

__all__ = [
    "CabConfig",
    "CabModel",
    "OnlineUpdatePolicy",
    "build_cab_model",
    "forward",
    "symmetrize",
    "project_psd",
    "train",
    "rolling_forecast",
    "loss_curve_to_csv",
    "save_model",
    "load_model",
]


@dataclass(frozen=True)
class CabConfig:
    """Architecture and training hyperparameters; defaults are the published choice."""

    lookback: int = 100
    kernel_size: int = 5
    hidden: int = 128
    layers: int = 7
    heads: int = 16
    dropout: float = 0.2
    phi: float = 0.8
    epochs: int = 100
    batch_size: int = 128
    learning_rate: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.lookback < 1:
            problems.append(f"lookback must be >= 1, got {self.lookback}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            problems.append(f"kernel_size must be odd and positive, got {self.kernel_size}")
        if self.hidden < 1:
            problems.append(f"hidden must be >= 1, got {self.hidden}")
        if self.layers < 1:
            problems.append(f"layers must be >= 1, got {self.layers}")
        if self.heads < 1 or (2 * self.hidden) % self.heads != 0:
            problems.append(f"heads must divide 2*hidden={2 * self.hidden}, got {self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            problems.append(f"dropout must lie in [0, 1), got {self.dropout}")
        if not 0.0 <= self.phi <= 1.0:
            problems.append(f"phi must lie in [0, 1], got {self.phi}")
        if self.epochs < 1 or self.batch_size < 1:
            problems.append("epochs and batch_size must be positive")
        if self.learning_rate <= 0.0:
            problems.append(f"learning_rate must be positive, got {self.learning_rate}")
        if problems:
            raise ConfigError("; ".join(problems))


@dataclass(frozen=True)
class OnlineUpdatePolicy:
    """Per-test-day incremental training: ``mode`` is "daily" or "none"."""

    mode: str = "daily"
    window: int = 60
    epochs: int = 1

    def __post_init__(self):
        if self.mode not in ("daily", "none"):
            raise ConfigError(f"unknown update mode {self.mode!r}")
        if self.window < 1 or self.epochs < 1:
            raise ConfigError("update window and epochs must be positive")


@dataclass
class CabModel:
    """All learnable parameters plus the frozen input scaler."""

    conv: ad.ConvKernel3d
    bilstm: list[ad.BiLstmLayerParams]
    mha: ad.MhaParams
    head_w: ad.Tensor  # (2*hidden, N*N)
    head_b: ad.Tensor  # (N*N,)
    scaler: Scaler
    config: CabConfig
    n_assets: int

    def named_parameters(self) -> dict[str, ad.Tensor]:
        names = {"conv.weights": self.conv.weights, "conv.bias": self.conv.bias}
        for idx, layer in enumerate(self.bilstm):
            for direction in ("forward", "backward"):
                cell = getattr(layer, direction)
                for gate in ("w_f", "w_i", "w_o", "w_c", "b_f", "b_i", "b_o", "b_c"):
                    names[f"bilstm.{idx}.{direction}.{gate}"] = getattr(cell, gate)
        for proj in ("w_q", "w_k", "w_v", "w_c"):
            names[f"mha.{proj}"] = getattr(self.mha, proj)
        names["head.w"] = self.head_w
        names["head.b"] = self.head_b
        return names

    def parameters(self) -> list[ad.Tensor]:
        return list(self.named_parameters().values())


def build_cab_model(n_assets: int, scaler: Scaler, config: CabConfig) -> CabModel:
    """Seeded parameter initialization for an ``n_assets`` universe."""
    if scaler.means.shape != (n_assets, n_assets):
        raise ConfigError("scaler shape does not match the asset count")
    rng = np.random.default_rng(config.seed)
    width = 2 * config.hidden
    conv = ad.init_conv_kernel(rng, config.kernel_size)
    bilstm = ad.init_bilstm_stack(rng, n_assets * n_assets, config.hidden, config.layers)
    mha = ad.init_mha(rng, width, config.heads)
    head_w = ad.uniform_init(rng, (width, n_assets * n_assets), width)
    head_b = ad.Tensor(np.zeros(n_assets * n_assets), requires_grad=True)
    return CabModel(
        conv=conv,
        bilstm=bilstm,
        mha=mha,
        head_w=head_w,
        head_b=head_b,
        scaler=scaler,
        config=config,
        n_assets=n_assets,
    )


def symmetrize(values: np.ndarray) -> np.ndarray:
    """Average a square matrix with its transpose (the nearest symmetric matrix)."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {values.shape}")
    return 0.5 * (values + values.T)


def project_psd(values: np.ndarray) -> np.ndarray:
    """Clamp negative eigenvalues to zero (nearest PSD matrix in Frobenius norm)."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise NumericalError("eigendecomposition on non-finite input")
    if np.max(np.abs(values - values.T)) > 1e-8 * max(1.0, np.abs(values).max()):
        raise ValueError("PSD projection expects a symmetric input")
    lam, vec = np.linalg.eigh(0.5 * (values + values.T))
    lam = np.maximum(lam, 0.0)
    out = (vec * lam) @ vec.T
    return 0.5 * (out + out.T)


def _forward_scaled(
    model: CabModel,
    batch: np.ndarray,
    training: bool,
    rng: np.random.Generator | None,
) -> ad.Tensor:
    """Scaled-space network output, symmetrized: (B, L+1, N, N) -> (B, N, N)."""
    b, length, n, _ = batch.shape
    x = ad.Tensor(batch)
    x = ad.conv3d(x, model.conv)
    x = ad.reshape(x, (b, length, n * n))
    h = ad.bilstm_stack(x, model.bilstm)
    h = ad.dropout(h, model.config.dropout, training, rng)
    a = ad.multi_head_attention(h, model.mha)
    pooled = ad.mean(a, axis=1)  # (B, 2*hidden)
    y = ad.matmul(pooled, model.head_w) + model.head_b
    y = ad.reshape(y, (b, n, n))
    return ad.mul(y + ad.transpose(y, (0, 2, 1)), 0.5)


def _check_sequence(model: CabModel, seq: CovSequence) -> None:
    expected = model.config.lookback + 1
    if seq.length != expected:
        raise ConfigError(f"sequence length {seq.length} does not match lookback+1={expected}")
    if seq.matrices.shape[1] != model.n_assets:
        raise ConfigError(
            f"sequence is {seq.matrices.shape[1]} assets wide, head expects {model.n_assets}"
        )


def forward(model: CabModel, seq: CovSequence) -> CovMatrix:
    """Full inference pipeline for one sequence, including PSD repair and blending.

    The scaled network output is unscaled, eigenvalue-clamped, and blended
    with the trailing realized covariance using the configured shrinkage
    weight. phi = 0 returns the trailing matrix itself; phi = 1 returns the
    PSD-projected network output.
    """
    _check_sequence(model, seq)
    pred = _forward_scaled(model, seq.matrices[None], training=False, rng=None).data[0]
    unscaled = symmetrize(invert_scaler(model.scaler, pred))
    phi = model.config.phi
    if phi == 0.0:
        values = seq.raw_last.values.copy()
    else:
        psd = project_psd(unscaled)
        values = psd if phi == 1.0 else phi * psd + (1.0 - phi) * seq.raw_last.values
    return CovMatrix(values=values, asof=seq.asof, window=seq.raw_last.window)


def _batched_loss(
    model: CabModel,
    x_batch: np.ndarray,
    t_batch: np.ndarray,
    training: bool,
    rng: np.random.Generator | None,
) -> ad.Tensor:
    """Mean Frobenius distance between symmetrized predictions and scaled targets."""
    pred = _forward_scaled(model, x_batch, training, rng)
    diff = pred - ad.Tensor(t_batch)
    per_sample = ad.sqrt(ad.tensor_sum(ad.mul(diff, diff), axis=(1, 2)))
    return ad.mean(per_sample)


def _training_pass(
    model: CabModel,
    params: list[ad.Tensor],
    x_stack: np.ndarray,
    t_stack: np.ndarray,
    order: np.ndarray,
    batch_size: int,
    state: ad.AdamState,
    rng: np.random.Generator,
    context: str,
) -> float:
    """One optimization epoch over ``order``; returns the mean training loss."""
    total = 0.0
    for lo in range(0, len(order), batch_size):
        idx = order[lo : lo + batch_size]
        loss = _batched_loss(model, x_stack[idx], t_stack[idx], training=True, rng=rng)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericalError(f"non-finite training loss at {context} (batch offset {lo})")
        ad.zero_grads(params)
        ad.backward(loss)
        ad.adam_step(params, [p.grad for p in params], state)
        total += value * len(idx)
    return total / len(order)


def train(
    model: CabModel,
    sequences: list[CovSequence],
    targets: list[CovMatrix],
    val_fraction: float = 0.0,
) -> list[dict]:
    """Fit the model on scaled sequences/targets; returns the per-epoch loss curve.

    Targets are the realized covariances over each sequence's following
    horizon window; they are standardized with the model's scaler before
    the loss. With ``val_fraction`` > 0 the chronological tail is held out
    and its forward-only loss is reported alongside the training loss.
    """
    if not sequences:
        raise InsufficientDataError("empty training set")
    if len(sequences) != len(targets):
        raise ValueError("sequences and targets must pair up")
    for seq in sequences:
        _check_sequence(model, seq)
    if not 0.0 <= val_fraction < 1.0:
        raise ConfigError(f"val_fraction must lie in [0, 1), got {val_fraction}")

    cfg = model.config
    x_all = np.stack([s.matrices for s in sequences])
    t_all = apply_scaler(model.scaler, np.stack([t.values for t in targets]))
    n_val = int(round(val_fraction * len(sequences)))
    n_fit = len(sequences) - n_val
    if n_fit < 1:
        raise InsufficientDataError("validation split leaves no training data")
    x_fit, t_fit = x_all[:n_fit], t_all[:n_fit]
    x_val, t_val = x_all[n_fit:], t_all[n_fit:]

    params = model.parameters()
    state = ad.AdamState(learning_rate=cfg.learning_rate)
    rng = np.random.default_rng((cfg.seed, 1))
    curve: list[dict] = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n_fit)
        train_loss = _training_pass(
            model, params, x_fit, t_fit, order, cfg.batch_size, state, rng,
            context=f"epoch {epoch}",
        )
        record = {"epoch": epoch, "loss": train_loss}
        if n_val:
            record["val_loss"] = _evaluation_loss(model, x_val, t_val, cfg.batch_size)
        curve.append(record)
    return curve


def _evaluation_loss(model: CabModel, x: np.ndarray, t: np.ndarray, batch_size: int) -> float:
    total = 0.0
    for lo in range(0, len(x), batch_size):
        hi = min(lo + batch_size, len(x))
        loss = _batched_loss(model, x[lo:hi], t[lo:hi], training=False, rng=None)
        total += loss.item() * (hi - lo)
    return total / len(x)


def loss_curve_to_csv(curve: list[dict], path) -> None:
    has_val = any("val_loss" in rec for rec in curve)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,loss" + (",val_loss\n" if has_val else "\n"))
        for rec in curve:
            row = f"{rec['epoch']},{rec['loss']!r}"
            if has_val:
                row += f",{rec.get('val_loss', float('nan'))!r}"
            fh.write(row + "\n")


def rolling_forecast(
    model: CabModel,
    panel: ReturnPanel,
    test_dates: list[dt.date],
    horizon: int,
    policy: OnlineUpdatePolicy | None = None,
) -> ForecastRun:
    """Walk the test dates in order: forecast first, then (optionally) update.

    The update for day t trains one pass over the most recent completed
    sequences, i.e. those whose realized target window ends at or before t,
    so no forecast ever sees information from beyond its own date. The
    scaler stays frozen at its training-period fit.
    """
    policy = policy or OnlineUpdatePolicy()
    cfg = model.config
    covs = realized_cov_series(panel, horizon)
    cov_index = {c.asof: k for k, c in enumerate(covs)}
    values = np.stack([c.values for c in covs])
    scaled = apply_scaler(model.scaler, values)
    lookback = cfg.lookback

    params = model.parameters()
    state = ad.AdamState(learning_rate=cfg.learning_rate)
    nan_matrix = np.full((model.n_assets, model.n_assets), np.nan)

    out_dates: list[dt.date] = []
    out_forecasts: list[np.ndarray] = []
    out_targets: list[np.ndarray] = []
    for t in sorted(test_dates):
        k = cov_index.get(t)
        if k is None:
            warnings.warn(f"no realized covariance ends on {t.isoformat()}; skipping", stacklevel=2)
            continue
        if k < lookback:
            raise InsufficientDataError(
                f"date {t.isoformat()} has {k} trailing matrices, lookback needs {lookback}"
            )
        seq = CovSequence(
            matrices=scaled[k - lookback : k + 1],
            scaler=model.scaler,
            asof=t,
            raw_last=covs[k],
        )
        fc = forward(model, seq)
        out_dates.append(t)
        out_forecasts.append(fc.values)
        out_targets.append(values[k + horizon] if k + horizon < len(covs) else nan_matrix)

        if policy.mode == "daily":
            avail_end = k - horizon  # newest sequence whose target is fully observed by t
            if avail_end >= lookback:
                lo = max(lookback, avail_end - policy.window + 1)
                idx = np.arange(lo, avail_end + 1)
                x_stack = np.stack([scaled[i - lookback : i + 1] for i in idx])
                t_stack = scaled[idx + horizon]
                day_rng = np.random.default_rng((cfg.seed, 2, panel.index_of(t)))
                for _ in range(policy.epochs):
                    _training_pass(
                        model, params, x_stack, t_stack, np.arange(len(idx)),
                        cfg.batch_size, state, day_rng,
                        context=f"online update {t.isoformat()}",
                    )

    return ForecastRun(
        model_id="cab",
        horizon=horizon,
        tickers=panel.tickers,
        dates=tuple(out_dates),
        forecasts=np.stack(out_forecasts),
        targets=np.stack(out_targets),
    )


def save_model(model: CabModel, path) -> None:
    """Checkpoint all parameter buffers plus the scaler and configuration."""
    arrays = {name: t.data for name, t in model.named_parameters().items()}
    arrays["scaler.means"] = model.scaler.means
    arrays["scaler.stds"] = model.scaler.stds
    meta = {
        "n_assets": model.n_assets,
        "config": {
            "lookback": model.config.lookback,
            "kernel_size": model.config.kernel_size,
            "hidden": model.config.hidden,
            "layers": model.config.layers,
            "heads": model.config.heads,
            "dropout": model.config.dropout,
            "phi": model.config.phi,
            "epochs": model.config.epochs,
            "batch_size": model.config.batch_size,
            "learning_rate": model.config.learning_rate,
            "seed": model.config.seed,
        },
    }
    ad.save_arrays(path, arrays, meta)


def load_model(path) -> CabModel:
    arrays, meta = ad.load_arrays(path)
    config = CabConfig(**meta["config"])
    scaler = Scaler(means=arrays.pop("scaler.means"), stds=arrays.pop("scaler.stds"))
    model = build_cab_model(int(meta["n_assets"]), scaler, config)
    for name, tensor in model.named_parameters().items():
        if name not in arrays:
            raise ValueError(f"checkpoint is missing parameter {name!r}")
        if arrays[name].shape != tensor.data.shape:
            raise ValueError(f"checkpoint shape mismatch for {name!r}")
        tensor.data = arrays[name]
    return model


def training_sequences(
    panel: ReturnPanel,
    horizon: int,
    lookback: int,
    train_end: dt.date,
) -> tuple[Scaler, list[CovSequence], list[CovMatrix]]:
    """Scaler plus (sequence, target) pairs wholly inside the training period.

    The scaler is fitted on every training-period realized matrix; training
    pairs require the target window to end by ``train_end`` as well, so
    sequences near the period boundary are dropped.
    """
    covs = realized_cov_series(panel, horizon)
    train_covs = [c for c in covs if c.asof <= train_end]
    if len(train_covs) < lookback + 1 + horizon:
        raise InsufficientDataError(
            f"training period supplies {len(train_covs)} matrices; "
            f"need at least {lookback + 1 + horizon}"
        )
    scaler = fit_scaler(train_covs)
    seqs = build_sequences(train_covs, lookback, scaler)
    pairs_x, pairs_t = [], []
    for k, seq in enumerate(seqs, start=lookback):  # seq k ends at train_covs[k]
        if k + horizon < len(train_covs):
            pairs_x.append(seq)
            pairs_t.append(train_covs[k + horizon])
    if not pairs_x:
        raise InsufficientDataError("no training sequence has a complete target window")
    return scaler, pairs_x, pairs_t
