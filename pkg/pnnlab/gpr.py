"""
Gaussian process regression baseline with a squared-exponential kernel.

Zero prior mean, homoscedastic noise variance sigma^2 added to the kernel
diagonal (plus a fixed jitter). The length scale can be chosen by maximizing
the exact log marginal likelihood over a log-spaced grid within bounds.
Predictive variances are those of the latent function, without sigma^2.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist

from .dataset_service import Dataset
from .errors import ConfigurationError, FactorizationError, PNNLabError, ShapeError
from .model_selection import STATUS_INVALID, STATUS_OK, EmpiricalStats, score_predictions
from .network import GaussianPrediction
from .numerics import as_matrix, as_vector, cholesky, solve_spd
from .utils.async_utils import run_parallel

logger = logging.getLogger(__name__)

JITTER = 1e-10
TUNING_GRID_POINTS = 50
DEFAULT_BOUND_GRID = (0.01, 0.03, 0.1, 0.3, 1.0, 3.0)
DEFAULT_NOISE_GRID = (1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0)


@dataclass(frozen=True)
class GprConfig:
    length_scale: float = 1.0
    length_scale_bounds: Tuple[float, float] = (1e-3, 1e3)
    noise_variance: float = 0.1
    tune_length_scale: bool = True

    def __post_init__(self):
        lower, upper = self.length_scale_bounds
        if not self.length_scale > 0:
            raise ConfigurationError(f"length_scale must be > 0, got {self.length_scale}")
        if not 0 < lower <= upper:
            raise ConfigurationError(f"length_scale_bounds must satisfy 0 < lower <= upper, got {self.length_scale_bounds}")
        if self.tune_length_scale and not (math.isfinite(lower) and math.isfinite(upper)):
            raise ConfigurationError("length_scale_bounds must be finite when tuning")
        if not self.noise_variance >= 0:
            raise ConfigurationError(f"noise_variance must be >= 0, got {self.noise_variance}")


@dataclass
class GprModel:
    config: GprConfig
    length_scale: float
    inputs: np.ndarray
    outputs: np.ndarray
    factor: np.ndarray
    weights: np.ndarray
    log_marginal_likelihood: float


def kernel(x, x_prime, length_scale: float) -> float:
    """exp(-|x - x'|^2 / (2 l^2))"""
    x = as_vector(x, "x")
    x_prime = as_vector(x_prime, "x_prime")
    if x.shape != x_prime.shape:
        raise ShapeError(f"Kernel arguments differ in dimension: {x.shape} vs {x_prime.shape}")
    if not length_scale > 0:
        raise ConfigurationError(f"length_scale must be > 0, got {length_scale}")
    return float(np.exp(-np.sum((x - x_prime) ** 2) / (2.0 * length_scale ** 2)))


def kernel_matrix(a: np.ndarray, b: np.ndarray, length_scale: float) -> np.ndarray:
    return np.exp(-cdist(a, b, "sqeuclidean") / (2.0 * length_scale ** 2))


def _lml_from_sqdist(sq_dist: np.ndarray, y: np.ndarray, length_scale: float, noise_variance: float):
    n = y.shape[0]
    k = np.exp(-sq_dist / (2.0 * length_scale ** 2))
    k[np.diag_indices(n)] += noise_variance + JITTER
    factor = cholesky(k)
    alpha = solve_spd(factor, y)
    lml = -0.5 * float(y @ alpha) - float(np.sum(np.log(np.diag(factor)))) - 0.5 * n * math.log(2.0 * math.pi)
    return lml, factor, alpha


def log_marginal_likelihood(X, y, length_scale: float, noise_variance: float) -> float:
    """Exact Gaussian log marginal likelihood of y under the GP prior"""
    X = as_matrix(X, "X")
    y = as_vector(y, "y")
    lml, _, _ = _lml_from_sqdist(cdist(X, X, "sqeuclidean"), y, length_scale, noise_variance)
    return lml


def tune_length_scale(X, y, bounds: Tuple[float, float], noise_variance: float,
                      n_points: int = TUNING_GRID_POINTS) -> Tuple[float, float]:
    """Grid point in bounds with the highest log marginal likelihood"""
    X = as_matrix(X, "X")
    y = as_vector(y, "y")
    lower, upper = bounds
    grid = np.logspace(math.log10(lower), math.log10(upper), n_points) if upper > lower else np.array([lower])
    sq_dist = cdist(X, X, "sqeuclidean")
    best_scale, best_lml = None, -math.inf
    for scale in grid:
        try:
            lml, _, _ = _lml_from_sqdist(sq_dist, y, scale, noise_variance)
        except FactorizationError:
            logger.debug(f"Factorization failed at length scale {scale:.4g}")
            continue
        if lml > best_lml:
            best_scale, best_lml = float(scale), lml
    if best_scale is None:
        raise FactorizationError(pivot=-1, message="No length scale in bounds gives a factorizable kernel matrix; try a larger noise variance")
    logger.debug(f"Selected length scale {best_scale:.4g} (log marginal likelihood {best_lml:.4f})")
    return best_scale, best_lml


def fit(train: Dataset, config: GprConfig) -> GprModel:
    X, y = train.inputs, train.outputs
    if X.shape[0] < 1:
        raise ShapeError("GPR needs at least one training point")
    length_scale = config.length_scale
    if config.tune_length_scale:
        length_scale, _ = tune_length_scale(X, y, config.length_scale_bounds, config.noise_variance)
    try:
        lml, factor, alpha = _lml_from_sqdist(cdist(X, X, "sqeuclidean"), y, length_scale, config.noise_variance)
    except FactorizationError as e:
        logger.error(f"GPR factorization failed: {str(e)}")
        raise FactorizationError(pivot=e.pivot, message=f"{str(e)}; try a larger noise variance") from e
    logger.info(f"Fitted GPR on {X.shape[0]} points: length scale {length_scale:.4g}, noise variance {config.noise_variance:.4g}")
    return GprModel(config, length_scale, X.copy(), y.copy(), factor, alpha, lml)


def predict_batch(model: GprModel, X) -> Tuple[np.ndarray, np.ndarray]:
    """Predictive means and latent variances (clamped at 0) for every row of X"""
    X = as_matrix(X, "X")
    if X.shape[1] != model.inputs.shape[1]:
        raise ShapeError(f"Inputs have {X.shape[1]} columns, model was trained on {model.inputs.shape[1]}")
    k_star = kernel_matrix(X, model.inputs, model.length_scale)
    means = k_star @ model.weights
    v = solve_triangular(model.factor, k_star.T, lower=True, check_finite=False)
    variances = 1.0 - np.sum(v * v, axis=0)
    if np.any(variances < 0):
        logger.warning(f"Clamping {int(np.sum(variances < 0))} negative predictive variances "
                       f"(min {variances.min():.3e}) to 0")
        variances = np.maximum(variances, 0.0)
    return means, variances


def predict(model: GprModel, x_test) -> GaussianPrediction:
    x_test = as_vector(x_test, "x_test")
    means, variances = predict_batch(model, x_test[None, :])
    return GaussianPrediction(mean=float(means[0]), variance=float(variances[0]))


def score_gpr(model: GprModel, emp: EmpiricalStats) -> float:
    """Mean KL with the predictive variance floored at the jitter"""
    means, variances = predict_batch(model, emp.inputs)
    return score_predictions(means, np.maximum(variances, JITTER), emp)


@dataclass
class GprTuningResult:
    rows: List[dict]
    best_config: Optional[GprConfig]
    best_model: Optional[GprModel] = field(default=None, repr=False)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=["length_scale_bound", "noise_variance", "kl", "status", "length_scale"])


def _tune_cell(job) -> dict:
    train, emp, config = job
    bound = config.length_scale_bounds[1]
    try:
        model = fit(train, config)
        kl = score_gpr(model, emp)
        status = STATUS_OK if math.isfinite(kl) else STATUS_INVALID
        selected = model.length_scale
    except PNNLabError as e:
        logger.warning(f"GPR cell bound={bound} noise={config.noise_variance} failed: {str(e)}")
        kl, status, selected = math.nan, STATUS_INVALID, math.nan
    logger.info(f"GPR cell bound={bound:.4g} noise={config.noise_variance:.4g}: KL={kl:.6f} ({status})")
    return {"length_scale_bound": bound, "noise_variance": config.noise_variance,
            "kl": kl, "status": status, "length_scale": selected}


def tune_noise(train: Dataset, test: EmpiricalStats, bound_grid: Sequence[float] = DEFAULT_BOUND_GRID,
               noise_grid: Sequence[float] = DEFAULT_NOISE_GRID, base: GprConfig = GprConfig(),
               max_workers: int = 1) -> GprTuningResult:
    """
    Grid over (length-scale upper bound, noise variance), scored by mean KL.

    The length scale itself is tuned by marginal likelihood inside each
    cell's bounds. Failed cells are flagged and skipped.
    """
    if not bound_grid or not noise_grid:
        raise ConfigurationError("GPR tuning needs non-empty bound and noise grids")
    lower = base.length_scale_bounds[0]
    configs = []
    for bound in bound_grid:
        for noise in noise_grid:
            configs.append(replace(base, length_scale_bounds=(min(lower, bound), bound),
                                   noise_variance=noise, tune_length_scale=True,
                                   length_scale=min(base.length_scale, bound)))
    logger.info(f"GPR tuning over {len(bound_grid)} bounds x {len(noise_grid)} noise levels")
    rows = run_parallel(_tune_cell, [(train, test, c) for c in configs], max_workers=max_workers)

    ok = [(i, r) for i, r in enumerate(rows) if r["status"] == STATUS_OK]
    if not ok:
        logger.error("All GPR tuning cells failed")
        return GprTuningResult(list(rows), None, None)
    best_index = min(ok, key=lambda item: (item[1]["kl"], item[0]))[0]
    best_config = configs[best_index]
    best_model = fit(train, best_config)
    logger.info(f"Best GPR cell: bound={best_config.length_scale_bounds[1]} noise={best_config.noise_variance} "
                f"KL={rows[best_index]['kl']:.6f}")
    return GprTuningResult(list(rows), best_config, best_model)
