"""
Feed-forward probabilistic network with a dual-head Gaussian output.

Hidden layers use ELU. The final layer emits two raw values per input: the
mean head is the identity, the variance head is softplus(raw) + floor.
Inputs are batched row-wise (n x D); weight matrices have shape
(fan_out, fan_in) so each layer computes W x + b.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import expit

from .dataset_service import Standardizer
from .errors import ConfigurationError, ShapeError
from .numerics import Rng, as_matrix, as_vector

logger = logging.getLogger(__name__)

SOFTPLUS_LINEAR_THRESHOLD = 30.0
DEFAULT_VARIANCE_FLOOR = 1e-6
HIDDEN_ACTIVATIONS = ("elu",)


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    depth: int
    width: int
    hidden_activation: str = "elu"
    variance_floor: float = DEFAULT_VARIANCE_FLOOR

    def __post_init__(self):
        if self.input_dim < 1:
            raise ConfigurationError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.depth < 1:
            raise ConfigurationError(f"depth must be >= 1, got {self.depth}")
        if self.width < 1:
            raise ConfigurationError(f"width must be >= 1, got {self.width}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ConfigurationError(f"Unsupported hidden activation: {self.hidden_activation}")
        if not self.variance_floor > 0:
            raise ConfigurationError(f"variance_floor must be > 0, got {self.variance_floor}")

    @property
    def layer_sizes(self) -> List[int]:
        return [self.input_dim] + [self.width] * self.depth + [2]

    def to_dict(self) -> Dict:
        return {
            "input_dim": self.input_dim,
            "depth": self.depth,
            "width": self.width,
            "hidden_activation": self.hidden_activation,
            "variance_floor": self.variance_floor,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "Architecture":
        return cls(
            input_dim=int(data["input_dim"]),
            depth=int(data["depth"]),
            width=int(data["width"]),
            hidden_activation=data.get("hidden_activation", "elu"),
            variance_floor=float(data.get("variance_floor", DEFAULT_VARIANCE_FLOOR)),
        )


def parameter_count(arch: Architecture) -> int:
    sizes = arch.layer_sizes
    return sum(fan_out * fan_in + fan_out for fan_in, fan_out in zip(sizes[:-1], sizes[1:]))


@dataclass
class NetworkParameters:
    """Weights and biases of layers 1..L+1; the last layer has 2 outputs"""

    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def check(self, arch: Architecture) -> None:
        sizes = arch.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ShapeError(f"Expected {len(sizes) - 1} layers, got {len(self.weights)}")
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            if self.weights[i].shape != (fan_out, fan_in):
                raise ShapeError(f"Layer {i + 1} weights have shape {self.weights[i].shape}, expected {(fan_out, fan_in)}")
            if self.biases[i].shape != (fan_out,):
                raise ShapeError(f"Layer {i + 1} biases have shape {self.biases[i].shape}, expected {(fan_out,)}")

    def flatten(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, arch: Architecture, theta: np.ndarray) -> "NetworkParameters":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (parameter_count(arch),):
            raise ShapeError(f"Expected {parameter_count(arch)} parameters, got {theta.shape}")
        weights, biases, offset = [], [], 0
        sizes = arch.layer_sizes
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(theta[offset:offset + fan_in * fan_out].reshape(fan_out, fan_in).copy())
            offset += fan_in * fan_out
            biases.append(theta[offset:offset + fan_out].copy())
            offset += fan_out
        return cls(weights, biases)

    def zeros_like(self) -> "NetworkParameters":
        return NetworkParameters(
            [np.zeros_like(w) for w in self.weights],
            [np.zeros_like(b) for b in self.biases],
        )

    def copy(self) -> "NetworkParameters":
        return NetworkParameters([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def arrays(self) -> List[np.ndarray]:
        """Parameter arrays in layer order (W1, b1, W2, b2, ...)"""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out


@dataclass(frozen=True)
class GaussianPrediction:
    mean: float
    variance: float


def elu(z):
    """ELU with alpha = 1: z for z > 0, exp(z) - 1 otherwise"""
    arr = np.asarray(z, dtype=np.float64)
    out = np.where(arr > 0, arr, np.expm1(np.minimum(arr, 0.0)))
    return float(out) if out.ndim == 0 else out


def _elu_grad(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, 1.0, np.exp(np.minimum(z, 0.0)))


def softplus(z):
    """log(1 + exp(z)) without overflow"""
    arr = np.asarray(z, dtype=np.float64)
    high = arr + np.log1p(np.exp(-np.maximum(arr, SOFTPLUS_LINEAR_THRESHOLD)))
    low = np.log1p(np.exp(np.minimum(arr, SOFTPLUS_LINEAR_THRESHOLD)))
    out = np.where(arr > SOFTPLUS_LINEAR_THRESHOLD, high, low)
    return float(out) if out.ndim == 0 else out


def _check_inputs(arch: Architecture, X) -> np.ndarray:
    X = as_matrix(X, "inputs")
    if X.shape[1] != arch.input_dim:
        raise ShapeError(f"Inputs have {X.shape[1]} columns, architecture expects {arch.input_dim}")
    return X


def _forward_cache(params: NetworkParameters, X: np.ndarray):
    """Returns pre-activations, activations and the raw 2-column output"""
    activations = [X]
    pre_activations = []
    a = X
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        z = a @ w.T + b
        a = elu(z)
        pre_activations.append(z)
        activations.append(a)
    raw = a @ params.weights[-1].T + params.biases[-1]
    return pre_activations, activations, raw


@dataclass
class ForwardCache:
    pre_activations: List[np.ndarray]
    activations: List[np.ndarray]
    raw: np.ndarray


def forward_batch_cached(params: NetworkParameters, arch: Architecture, X):
    """forward_batch that also keeps the intermediate values backprop needs"""
    X = _check_inputs(arch, X)
    pre_activations, activations, raw = _forward_cache(params, X)
    means = raw[:, 0].copy()
    variances = np.atleast_1d(softplus(raw[:, 1])) + arch.variance_floor
    return means, variances, ForwardCache(pre_activations, activations, raw)


def forward_batch(params: NetworkParameters, arch: Architecture, X) -> Tuple[np.ndarray, np.ndarray]:
    """Predicted means and variances for every row of X"""
    means, variances, _ = forward_batch_cached(params, arch, X)
    return means, variances


def backprop(params: NetworkParameters, cache: ForwardCache,
             upstream_mean: np.ndarray, upstream_variance: np.ndarray) -> NetworkParameters:
    delta = np.empty_like(cache.raw)
    delta[:, 0] = upstream_mean
    delta[:, 1] = upstream_variance * expit(cache.raw[:, 1])

    n_layers = len(params.weights)
    grad_w: List[Optional[np.ndarray]] = [None] * n_layers
    grad_b: List[Optional[np.ndarray]] = [None] * n_layers
    for layer in range(n_layers - 1, -1, -1):
        grad_w[layer] = delta.T @ cache.activations[layer]
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ params.weights[layer]) * _elu_grad(cache.pre_activations[layer - 1])
    return NetworkParameters(grad_w, grad_b)


def forward(params: NetworkParameters, arch: Architecture, x) -> GaussianPrediction:
    x = as_vector(x, "x")
    if x.shape[0] != arch.input_dim:
        raise ShapeError(f"Input has length {x.shape[0]}, architecture expects {arch.input_dim}")
    means, variances = forward_batch(params, arch, x[None, :])
    return GaussianPrediction(mean=float(means[0]), variance=float(variances[0]))


def backward_batch(params: NetworkParameters, arch: Architecture, X,
                   upstream_mean, upstream_variance) -> NetworkParameters:
    """
    Reverse-mode gradients of sum_i (u_mu[i] * mean_i + u_var[i] * variance_i).

    Returns arrays shaped like params, summed over the batch.
    """
    X = _check_inputs(arch, X)
    upstream_mean = np.asarray(upstream_mean, dtype=np.float64).reshape(-1)
    upstream_variance = np.asarray(upstream_variance, dtype=np.float64).reshape(-1)
    if upstream_mean.shape[0] != X.shape[0] or upstream_variance.shape[0] != X.shape[0]:
        raise ShapeError("Upstream gradients must have one entry per input row")

    _, _, cache = forward_batch_cached(params, arch, X)
    return backprop(params, cache, upstream_mean, upstream_variance)


def backward(params: NetworkParameters, arch: Architecture, x,
             upstream: Tuple[float, float]) -> NetworkParameters:
    x = as_vector(x, "x")
    if x.shape[0] != arch.input_dim:
        raise ShapeError(f"Input has length {x.shape[0]}, architecture expects {arch.input_dim}")
    d_mean, d_variance = upstream
    return backward_batch(params, arch, x[None, :], [d_mean], [d_variance])


def init_parameters(arch: Architecture, rng: Rng) -> NetworkParameters:
    """Glorot-uniform weights and zero biases"""
    weights, biases = [], []
    sizes = arch.layer_sizes
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    logger.debug(f"Initialized {parameter_count(arch)} parameters for depth={arch.depth}, width={arch.width}")
    return NetworkParameters(weights, biases)


@dataclass
class PNNModel:
    """A trained network plus the input standardization it was trained with"""

    arch: Architecture
    params: NetworkParameters
    seed: Optional[int] = None
    standardizer: Optional[Standardizer] = None

    def transform(self, X) -> np.ndarray:
        if self.standardizer is None:
            return np.asarray(X, dtype=np.float64)
        return self.standardizer.transform(X)

    def predict(self, X) -> Tuple[np.ndarray, np.ndarray]:
        return forward_batch(self.params, self.arch, self.transform(X))
