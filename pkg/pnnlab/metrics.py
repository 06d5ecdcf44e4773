"""
Evaluation of predicted Gaussians against replicated test data.

Mean accuracy is the R^2 between empirical and predicted group means.
Interval accuracy is the Pearson correlation between each group's empirical
range (max - min of its replicates) and the width of the predicted two-sided
90% interval.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
import pandas as pd
from scipy.stats import pearsonr

from .errors import DomainError, ShapeError
from .model_selection import EmpiricalStats, score_predictions
from .network import GaussianPrediction

logger = logging.getLogger(__name__)

Z_95 = 1.6448536269514722


def _pair(a, b, name: str) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ShapeError(f"{name}: sequences differ in length ({a.shape[0]} vs {b.shape[0]})")
    if a.shape[0] < 2:
        raise DomainError(f"{name} needs at least 2 pairs")
    return a, b


def r_squared(actual, predicted) -> float:
    """1 - SS_res / SS_tot"""
    actual, predicted = _pair(actual, predicted, "r_squared")
    ss_tot = float(np.sum((actual - actual.mean()) ** 2))
    if ss_tot == 0.0:
        raise DomainError("r_squared is undefined for constant actual values")
    ss_res = float(np.sum((actual - predicted) ** 2))
    return 1.0 - ss_res / ss_tot


def pearson(a, b) -> float:
    a, b = _pair(a, b, "pearson")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise DomainError("Pearson correlation is undefined for constant input")
    return float(np.clip(pearsonr(a, b)[0], -1.0, 1.0))


def interval_90(pred: GaussianPrediction) -> Tuple[float, float]:
    """Two-sided 90% interval mean -/+ z * sigma"""
    if not pred.variance > 0:
        raise DomainError(f"Interval needs a positive variance, got {pred.variance}")
    half = Z_95 * math.sqrt(pred.variance)
    return pred.mean - half, pred.mean + half


def interval_width(variances) -> np.ndarray:
    return 2.0 * Z_95 * np.sqrt(np.asarray(variances, dtype=np.float64))


def prediction_band(means, variances, xs) -> pd.DataFrame:
    """Rows (x, mean, low, high) for plotting a 1-D fitted curve with its 90% band"""
    means = np.asarray(means, dtype=np.float64)
    half = Z_95 * np.sqrt(np.asarray(variances, dtype=np.float64))
    return pd.DataFrame({"x": np.asarray(xs, dtype=np.float64).reshape(-1), "mean": means,
                         "low": means - half, "high": means + half})


@dataclass
class EvalReport:
    r_squared: float
    interval_correlation: float
    mean_kl: float
    n_groups: int
    n_degenerate: int
    scatter: pd.DataFrame

    def to_dict(self) -> Dict:
        return {
            "r_squared": self.r_squared,
            "interval_correlation": self.interval_correlation,
            "mean_kl": self.mean_kl,
            "n_groups": self.n_groups,
            "n_degenerate": self.n_degenerate,
        }

    def mean_scatter(self) -> pd.DataFrame:
        return self.scatter[["emp_mean", "pred_mean"]]

    def interval_scatter(self) -> pd.DataFrame:
        valid = ~self.scatter["degenerate"].to_numpy()
        return self.scatter.loc[valid, ["emp_interval", "pred_interval"]]


def _interval_correlation(emp_interval: np.ndarray, pred_interval: np.ndarray) -> float:
    # NaN when undefined; R^2 and KL are still reported
    if emp_interval.shape[0] < 2:
        logger.warning(f"Interval correlation needs 2 non-degenerate groups, got {emp_interval.shape[0]}")
        return math.nan
    if np.all(pred_interval == pred_interval[0]) or np.all(emp_interval == emp_interval[0]):
        logger.warning("Interval correlation is undefined: interval widths are constant across groups")
        return math.nan
    return pearson(emp_interval, pred_interval)


def evaluate(means, variances, emp: EmpiricalStats) -> EvalReport:
    """
    Scores predictions aligned with the rows of emp.

    Degenerate groups count toward R^2 but not toward the interval
    correlation or the KL score.
    """
    means = np.asarray(means, dtype=np.float64).reshape(-1)
    variances = np.asarray(variances, dtype=np.float64).reshape(-1)
    if emp.n_groups < 2:
        raise DomainError(f"Evaluation needs at least 2 groups, got {emp.n_groups}")
    if means.shape[0] != emp.n_groups or variances.shape[0] != emp.n_groups:
        raise ShapeError("Need one prediction per test group")

    valid = emp.valid
    pred_interval = interval_width(variances)
    r2 = r_squared(emp.emp_mean, means)
    correlation = _interval_correlation(emp.emp_range[valid], pred_interval[valid])
    mean_kl = score_predictions(means, variances, emp)

    scatter = pd.DataFrame({
        "group": emp.group_keys,
        "emp_mean": emp.emp_mean,
        "pred_mean": means,
        "emp_variance": emp.emp_variance,
        "pred_variance": variances,
        "emp_interval": emp.emp_range,
        "pred_interval": pred_interval,
        "degenerate": emp.degenerate,
    })
    logger.info(f"Evaluation over {emp.n_groups} groups: R^2={r2:.4f}, "
                f"interval correlation={correlation:.4f}, mean KL={mean_kl:.4f}")
    return EvalReport(r2, correlation, mean_kl, emp.n_groups, int(emp.degenerate.sum()), scatter)
