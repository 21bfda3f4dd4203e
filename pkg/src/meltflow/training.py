"""Gradient-descent training loop shared by the three network models.

The training objective is mean squared error on scaled targets (the
differentiable counterpart of the reported RMSE). Early stopping
watches the validation loss with a configurable patience; the best
parameter snapshot is restored when training ends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ParameterError


@dataclass(frozen=True)
class TrainConfig:
    """Epoch budget and minibatching knobs for one fit.

    ``batch_size`` of None means full-batch gradients. ``patience`` only
    applies when a validation split is supplied.
    """

    epochs: int = 200
    patience: int = 20
    batch_size: int | None = None
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ParameterError(f"epochs must be >= 1, got {self.epochs}")
        if self.patience < 1:
            raise ParameterError(f"patience must be >= 1, got {self.patience}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")


def mse_loss(pred: ad.Tensor, target: np.ndarray) -> ad.Tensor:
    diff = pred - ad.Tensor(target.reshape(pred.shape))
    return (diff * diff).mean()


@dataclass
class FitResult:
    train_losses: list[float]
    val_rmse: list[float]
    best_epoch: int
    stopped_early: bool


def fit_regressor(
    model,
    x: np.ndarray,
    y: np.ndarray,
    *,
    optimizer: str,
    lr: float,
    config: TrainConfig,
    validation: tuple[np.ndarray, np.ndarray] | None = None,
    seed: int = 0,
) -> FitResult:
    """Train ``model`` in place; returns the loss history.

    ``model`` must expose ``parameters()``, ``forward(Tensor, training)``
    and ``predict(ndarray)``. With a validation pair, training stops once
    the validation RMSE has not improved for ``config.patience`` epochs
    and the best snapshot is restored.
    """
    from .optim import make_optimizer

    params = model.parameters()
    opt = make_optimizer(optimizer, params, lr)
    rng = np.random.default_rng(seed)

    n = x.shape[0]
    batch = n if config.batch_size is None else min(config.batch_size, n)

    best_val = math.inf
    best_epoch = -1
    best_snapshot = None
    bad_epochs = 0
    train_losses: list[float] = []
    val_rmse: list[float] = []
    stopped_early = False

    for epoch in range(config.epochs):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        epoch_loss = 0.0
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            pred = model.forward(ad.Tensor(x[idx]), training=True)
            loss = mse_loss(pred, y[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_loss += loss.item() * len(idx)
        train_losses.append(epoch_loss / n)

        if validation is not None:
            x_val, y_val = validation
            resid = model.predict(x_val) - y_val
            rmse = float(np.sqrt(np.mean(resid**2)))
            val_rmse.append(rmse)
            if rmse < best_val:
                best_val = rmse
                best_epoch = epoch
                best_snapshot = [p.data.copy() for p in params]
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs >= config.patience:
                    stopped_early = True
                    break

    if best_snapshot is not None:
        for p, saved in zip(params, best_snapshot):
            p.data = saved
    return FitResult(
        train_losses=train_losses,
        val_rmse=val_rmse,
        best_epoch=best_epoch if best_epoch >= 0 else len(train_losses) - 1,
        stopped_early=stopped_early,
    )
