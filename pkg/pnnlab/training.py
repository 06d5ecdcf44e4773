"""
Gaussian negative log-likelihood training with RMSProp.

The per-batch loss is the mean of the per-pair losses, so gradients are
scaled by 1 / batch size. Each epoch reshuffles the rows with its own
random stream; the last partial batch is kept.
"""
import logging
import math
import os
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .dataset_service import Dataset
from .errors import ConfigurationError, DomainError, ShapeError, StorageError, TrainingError
from .network import (
    Architecture,
    GaussianPrediction,
    NetworkParameters,
    backprop,
    forward_batch_cached,
    init_parameters,
)
from .numerics import Rng

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
LOSSES = ("heteroscedastic_nll", "mse")


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.001
    decay: float = 0.9
    epsilon: float = 1e-7

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 < self.decay < 1:
            raise ConfigurationError(f"decay must be in (0, 1), got {self.decay}")
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be > 0, got {self.epsilon}")


@dataclass
class OptimizerState:
    """Moving average of squared gradients, one array per parameter array"""

    s: NetworkParameters

    @classmethod
    def zeros(cls, params: NetworkParameters) -> "OptimizerState":
        return cls(params.zeros_like())


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 100
    shuffle_seed: Optional[int] = None
    loss: str = "heteroscedastic_nll"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.loss not in LOSSES:
            raise ConfigurationError(f"loss must be one of {LOSSES}, got {self.loss!r}")


def nll(pred: GaussianPrediction, y: float) -> float:
    """Gaussian negative log-likelihood of one observation"""
    if not pred.variance > 0:
        raise DomainError(f"Predicted variance must be > 0, got {pred.variance}")
    residual = y - pred.mean
    return 0.5 * math.log(2.0 * math.pi * pred.variance) + residual * residual / (2.0 * pred.variance)


def nll_grad(pred: GaussianPrediction, y: float) -> Tuple[float, float]:
    """(d/d mean, d/d variance) of nll"""
    if not pred.variance > 0:
        raise DomainError(f"Predicted variance must be > 0, got {pred.variance}")
    residual = y - pred.mean
    d_mean = -residual / pred.variance
    d_variance = (pred.variance - residual * residual) / (2.0 * pred.variance * pred.variance)
    return d_mean, d_variance


def nll_vector(means: np.ndarray, variances: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Per-pair nll over arrays"""
    residual = ys - means
    return 0.5 * (LOG_2PI + np.log(variances)) + residual ** 2 / (2.0 * variances)


def _means_of(preds) -> np.ndarray:
    return np.array([p.mean if isinstance(p, GaussianPrediction) else p for p in preds], dtype=np.float64)


def mse_loss(preds: Sequence, ys: Sequence[float]) -> float:
    """Mean squared residual of the mean head"""
    means = _means_of(preds)
    ys = np.asarray(ys, dtype=np.float64).reshape(-1)
    if means.shape[0] == 0:
        raise DomainError("mse_loss of an empty sequence")
    if means.shape != ys.shape:
        raise ShapeError(f"{means.shape[0]} predictions for {ys.shape[0]} targets")
    return float(np.mean((ys - means) ** 2))


def rmsprop_step(state: OptimizerState, params: NetworkParameters, grads: NetworkParameters,
                 cfg: OptimizerConfig) -> Tuple[OptimizerState, NetworkParameters]:
    """s <- decay s + (1 - decay) g^2;  theta <- theta - lr g / sqrt(s + eps)"""
    new_s_w, new_s_b, new_w, new_b = [], [], [], []
    for s_w, s_b, w, b, g_w, g_b in zip(state.s.weights, state.s.biases, params.weights, params.biases,
                                          grads.weights, grads.biases):
        s_w = cfg.decay * s_w + (1.0 - cfg.decay) * g_w * g_w
        s_b = cfg.decay * s_b + (1.0 - cfg.decay) * g_b * g_b
        new_s_w.append(s_w)
        new_s_b.append(s_b)
        new_w.append(w - cfg.learning_rate * g_w / np.sqrt(s_w + cfg.epsilon))
        new_b.append(b - cfg.learning_rate * g_b / np.sqrt(s_b + cfg.epsilon))
    return OptimizerState(NetworkParameters(new_s_w, new_s_b)), NetworkParameters(new_w, new_b)


def batch_loss_and_grad(params: NetworkParameters, arch: Architecture, X: np.ndarray, y: np.ndarray,
                        loss: str = "heteroscedastic_nll") -> Tuple[float, NetworkParameters]:
    """Mean per-pair loss over a batch and its gradient with respect to params"""
    means, variances, cache = forward_batch_cached(params, arch, X)
    n = y.shape[0]
    residual = y - means
    if loss == "mse":
        value = float(np.mean(residual ** 2))
        up_mean = -2.0 * residual / n
        up_variance = np.zeros(n)
    else:
        value = float(np.mean(nll_vector(means, variances, y)))
        up_mean = -residual / variances / n
        up_variance = (variances - residual ** 2) / (2.0 * variances ** 2) / n
    return value, backprop(params, cache, up_mean, up_variance)


def fit(dataset: Dataset, arch: Architecture, train_cfg: TrainConfig, opt_cfg: OptimizerConfig,
        rng: Rng, initial_params: Optional[NetworkParameters] = None) -> Tuple[NetworkParameters, List[float]]:
    """
    Trains a network by mini-batch RMSProp.

    Returns the final parameters and the mean training loss of every epoch.
    Raises TrainingError as soon as a batch loss is non-finite.
    """
    if dataset.n < 1:
        raise DomainError("Cannot train on an empty dataset")
    if dataset.dim != arch.input_dim:
        raise ShapeError(f"Dataset has {dataset.dim} inputs, architecture expects {arch.input_dim}")

    init_rng, shuffle_rng = rng.split(2)
    if train_cfg.shuffle_seed is not None:
        shuffle_rng = Rng(train_cfg.shuffle_seed)
    params = initial_params.copy() if initial_params is not None else init_parameters(arch, init_rng)
    params.check(arch)
    state = OptimizerState.zeros(params)

    X, y, n = dataset.inputs, dataset.outputs, dataset.n
    n_batches = math.ceil(n / train_cfg.batch_size)
    logger.info(f"Training depth={arch.depth} width={arch.width} on {n} pairs: "
                f"{train_cfg.epochs} epochs x {n_batches} batches, loss={train_cfg.loss}")

    history: List[float] = []
    for epoch in range(train_cfg.epochs):
        order = shuffle_rng.permutation(n)
        epoch_total = 0.0
        for step in range(n_batches):
            idx = order[step * train_cfg.batch_size:(step + 1) * train_cfg.batch_size]
            try:
                value, grads = batch_loss_and_grad(params, arch, X[idx], y[idx], train_cfg.loss)
            except DomainError as e:
                # non-finite parameters surface as a domain error in forward
                raise TrainingError(epoch=epoch, step=step, loss=float("nan")) from e
            if not math.isfinite(value):
                logger.error(f"Non-finite loss at epoch {epoch}, step {step}")
                raise TrainingError(epoch=epoch, step=step, loss=value)
            epoch_total += value * idx.shape[0]
            state, params = rmsprop_step(state, params, grads, opt_cfg)
        history.append(epoch_total / n)
        logger.debug(f"Epoch {epoch + 1}/{train_cfg.epochs}: mean loss {history[-1]:.6f}")

    logger.info(f"Training finished: first epoch loss {history[0]:.6f}, last epoch loss {history[-1]:.6f}")
    return params, history


def write_loss_history(path: str, history: Sequence[float]) -> None:
    """CSV with columns epoch, mean_train_nll"""
    try:
        frame = pd.DataFrame({"epoch": np.arange(1, len(history) + 1), "mean_train_nll": list(history)})
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    except OSError as e:
        logger.error(f"Error writing loss history: {str(e)}", exc_info=True)
        raise StorageError(f"Cannot write {path}: {str(e)}") from e
