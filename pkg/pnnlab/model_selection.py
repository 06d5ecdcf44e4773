"""
Architecture selection by KL divergence between empirical and predicted
output distributions.

Test inputs are grouped by replicate key; each group with at least two
distinct replicate outputs gives an empirical Gaussian N(mean, var) with the
unbiased (n - 1) variance. A model is scored by the mean over those groups of
D_KL(empirical || predicted).
"""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .dataset_service import Dataset
from .errors import ConfigurationError, DomainError, PNNLabError
from .network import DEFAULT_VARIANCE_FLOOR, Architecture, NetworkParameters, forward_batch, parameter_count
from .numerics import Rng
from .training import OptimizerConfig, TrainConfig, fit
from .utils.async_utils import run_parallel

logger = logging.getLogger(__name__)

STATUS_OK = "ok"
STATUS_DIVERGED = "diverged"
STATUS_INVALID = "invalid"


@dataclass
class EmpiricalStats:
    """Per-unique-input replicate statistics, ordered by group key"""

    group_keys: np.ndarray
    inputs: np.ndarray
    emp_mean: np.ndarray
    emp_variance: np.ndarray
    emp_min: np.ndarray
    emp_max: np.ndarray
    replicate_count: np.ndarray

    @property
    def n_groups(self) -> int:
        return self.group_keys.shape[0]

    @property
    def degenerate(self) -> np.ndarray:
        """Groups excluded from KL: fewer than 2 replicates or zero spread"""
        return (self.replicate_count < 2) | ~(self.emp_variance > 0)

    @property
    def valid(self) -> np.ndarray:
        return ~self.degenerate

    @property
    def emp_range(self) -> np.ndarray:
        return self.emp_max - self.emp_min


def group_replicates(dataset: Dataset) -> EmpiricalStats:
    if dataset is None or dataset.n == 0:
        raise DomainError("Cannot group an empty dataset")
    frame = pd.DataFrame({"key": dataset.group_key, "y": dataset.outputs, "row": np.arange(dataset.n)})
    grouped = frame.groupby("key", sort=True)
    agg = grouped["y"].agg(["mean", "min", "max", "count"])
    first_rows = grouped["row"].min().to_numpy()

    # exact two-pass variance per group keeps zero-spread groups at exactly 0
    deviation = dataset.outputs - agg["mean"].reindex(dataset.group_key).to_numpy()
    sum_sq = pd.Series(deviation ** 2).groupby(dataset.group_key).sum().reindex(agg.index).to_numpy()
    counts = agg["count"].to_numpy().astype(np.int64)
    emp_min = agg["min"].to_numpy()
    emp_max = agg["max"].to_numpy()
    with np.errstate(divide="ignore", invalid="ignore"):
        variance = np.where(counts > 1, sum_sq / np.maximum(counts - 1, 1), 0.0)
    variance = np.where(emp_max == emp_min, 0.0, variance)
    emp_mean = np.clip(agg["mean"].to_numpy(), emp_min, emp_max)

    stats = EmpiricalStats(
        group_keys=agg.index.to_numpy(),
        inputs=dataset.inputs[first_rows],
        emp_mean=emp_mean,
        emp_variance=variance,
        emp_min=emp_min,
        emp_max=emp_max,
        replicate_count=counts,
    )
    n_degenerate = int(stats.degenerate.sum())
    if n_degenerate:
        logger.warning(f"{n_degenerate} of {stats.n_groups} groups are degenerate and excluded from KL")
    return stats


def kl_gaussian(emp: Tuple[float, float], pred: Tuple[float, float]):
    """D_KL(N(emp) || N(pred)) for (mean, variance) pairs; works elementwise on arrays"""
    emp_mean, emp_var = (np.asarray(v, dtype=np.float64) for v in emp)
    pred_mean, pred_var = (np.asarray(v, dtype=np.float64) for v in pred)
    if not (np.all(emp_var > 0) and np.all(pred_var > 0)):
        raise DomainError("KL divergence needs strictly positive variances")
    value = (0.5 * np.log(pred_var / emp_var)
             + (emp_var + (emp_mean - pred_mean) ** 2) / (2.0 * pred_var)
             - 0.5)
    return float(value) if value.ndim == 0 else value


def score_predictions(means: np.ndarray, variances: np.ndarray, emp: EmpiricalStats) -> float:
    """Mean KL over non-degenerate groups for predictions aligned with emp rows"""
    valid = emp.valid
    if not valid.any():
        raise DomainError("All groups are degenerate; KL score is undefined")
    means = np.asarray(means, dtype=np.float64)
    variances = np.asarray(variances, dtype=np.float64)
    per_group = kl_gaussian(
        (emp.emp_mean[valid], emp.emp_variance[valid]),
        (means[valid], variances[valid]),
    )
    return float(np.mean(per_group))


def score_model(params: NetworkParameters, arch: Architecture, emp: EmpiricalStats) -> float:
    means, variances = forward_batch(params, arch, emp.inputs)
    return score_predictions(means, variances, emp)


@dataclass(frozen=True)
class GridSpec:
    depths: Tuple[int, ...] = (1, 2, 3, 4)
    widths: Tuple[int, ...] = (2, 4, 6, 8)
    seeds_per_cell: int = 1
    variance_floor: float = DEFAULT_VARIANCE_FLOOR

    def __post_init__(self):
        if not self.depths or not self.widths:
            raise ConfigurationError("GridSpec needs at least one depth and one width")
        if any(d < 1 for d in self.depths) or any(w < 1 for w in self.widths):
            raise ConfigurationError("Grid depths and widths must be >= 1")
        if self.seeds_per_cell < 1:
            raise ConfigurationError("seeds_per_cell must be >= 1")
        if not self.variance_floor > 0:
            raise ConfigurationError(f"variance_floor must be > 0, got {self.variance_floor}")

    def cells(self) -> List[Tuple[int, int]]:
        return [(d, w) for d in self.depths for w in self.widths]


@dataclass
class GridRun:
    """One trained model: a (depth, width) cell and a seed index"""

    depth: int
    width: int
    seed: int
    kl: float
    status: str
    seconds: float
    params: Optional[NetworkParameters] = None
    history: List[float] = field(default_factory=list)


@dataclass
class GridCellSummary:
    depth: int
    width: int
    mean_kl: float
    median_kl: float
    n_params: int
    best_run: Optional[GridRun]


@dataclass
class GridResult:
    runs: List[GridRun]
    input_dim: int

    def cells(self) -> List[GridCellSummary]:
        summaries = []
        keys = []
        for run in self.runs:
            if (run.depth, run.width) not in keys:
                keys.append((run.depth, run.width))
        for depth, width in keys:
            runs = [r for r in self.runs if r.depth == depth and r.width == width]
            ok = [r for r in runs if r.status == STATUS_OK]
            kls = np.array([r.kl for r in ok])
            n_params = parameter_count(Architecture(self.input_dim, depth, width))
            summaries.append(GridCellSummary(
                depth=depth,
                width=width,
                mean_kl=float(kls.mean()) if ok else math.nan,
                median_kl=float(np.median(kls)) if ok else math.nan,
                n_params=n_params,
                best_run=min(ok, key=lambda r: r.kl) if ok else None,
            ))
        return summaries

    def _valid_cells(self) -> List[GridCellSummary]:
        valid = [c for c in self.cells() if c.best_run is not None]
        if not valid:
            raise DomainError("All grid cells are invalid")
        return valid

    def best(self) -> GridCellSummary:
        """Lowest mean KL; ties go to fewer parameters, then lower depth, then lower width"""
        return min(self._valid_cells(), key=lambda c: (c.mean_kl, c.n_params, c.depth, c.width))

    def worst(self) -> GridCellSummary:
        return max(self._valid_cells(), key=lambda c: (c.mean_kl, -c.n_params, -c.depth, -c.width))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"depth": r.depth, "width": r.width, "seed": r.seed, "kl": r.kl,
              "status": r.status, "seconds": r.seconds} for r in self.runs],
            columns=["depth", "width", "seed", "kl", "status", "seconds"],
        )


TrainFn = Callable[[Dataset, Architecture, TrainConfig, OptimizerConfig, Rng], Tuple[NetworkParameters, List[float]]]


def _run_cell(job) -> GridRun:
    (train, emp, depth, width, seed, rng, train_cfg, opt_cfg, train_fn, timings, floor) = job
    arch = Architecture(input_dim=train.dim, depth=depth, width=width, variance_floor=floor)
    started = time.perf_counter()
    try:
        params, history = train_fn(train, arch, train_cfg, opt_cfg, rng)
    except PNNLabError as e:
        logger.warning(f"Cell depth={depth} width={width} seed={seed} diverged: {str(e)}")
        return GridRun(depth, width, seed, math.nan, STATUS_DIVERGED, _elapsed(started, timings))
    try:
        kl = score_model(params, arch, emp)
        status = STATUS_OK if math.isfinite(kl) else STATUS_INVALID
    except PNNLabError as e:
        logger.warning(f"Cell depth={depth} width={width} seed={seed} could not be scored: {str(e)}")
        kl, status = math.nan, STATUS_INVALID
    logger.info(f"Cell depth={depth} width={width} seed={seed}: KL={kl:.6f} ({status})")
    return GridRun(depth, width, seed, kl, status, _elapsed(started, timings), params, history)


def _elapsed(started: float, timings: bool) -> float:
    return round(time.perf_counter() - started, 3) if timings else 0.0


def grid_search(dataset_train: Dataset, dataset_test: Dataset, spec: GridSpec, train_cfg: TrainConfig,
                opt_cfg: OptimizerConfig, rng: Rng, max_workers: int = 1, timings: bool = False,
                train_fn: TrainFn = fit) -> Tuple[GridResult, GridCellSummary]:
    """
    Trains seeds_per_cell models for every (depth, width) cell and scores them.

    Every run gets its own substream split off rng in cell order, so the
    result does not depend on the order in which workers finish. Diverged
    cells are flagged and the search continues.
    """
    emp = group_replicates(dataset_test)
    cells = spec.cells()
    streams = rng.split(len(cells) * spec.seeds_per_cell)
    jobs = []
    for c, (depth, width) in enumerate(cells):
        for s in range(spec.seeds_per_cell):
            stream = streams[c * spec.seeds_per_cell + s]
            jobs.append((dataset_train, emp, depth, width, s, stream, train_cfg, opt_cfg, train_fn, timings,
                         spec.variance_floor))

    logger.info(f"Grid search over {len(cells)} cells x {spec.seeds_per_cell} seeds")
    runs = run_parallel(_run_cell, jobs, max_workers=max_workers)
    result = GridResult(runs=list(runs), input_dim=dataset_train.dim)
    best = result.best()
    logger.info(f"Best cell: depth={best.depth} width={best.width} mean KL={best.mean_kl:.6f}")
    return result, best
