"""
Benchmark generators and CSV ingestion for replicated-input datasets.

Every dataset row carries a group key naming the unique input it replicates.
CSV files use the header `x1,...,xD,y[,group]` and 17 significant digits so
that writing and reading back is bit-exact.
"""
import logging
import math
import os
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import ConfigurationError, DatasetError, DomainError, StorageError
from .numerics import Rng, sample_standard_normal

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.17g"
GROUP_MODES = ("exact", "column")


@dataclass
class Dataset:
    inputs: np.ndarray
    outputs: np.ndarray
    group_key: np.ndarray
    provenance: str = "csv"

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.outputs = np.asarray(self.outputs, dtype=np.float64).reshape(-1)
        self.group_key = np.asarray(self.group_key, dtype=np.int64).reshape(-1)
        if self.inputs.ndim != 2 or self.inputs.shape[0] < 1 or self.inputs.shape[1] < 1:
            raise DomainError(f"Dataset inputs must be a non-empty n x D matrix, got shape {self.inputs.shape}")
        n = self.inputs.shape[0]
        if self.outputs.shape[0] != n or self.group_key.shape[0] != n:
            raise DomainError("Dataset inputs, outputs and group keys must have the same length")
        _, first, inverse = np.unique(self.group_key, return_index=True, return_inverse=True)
        if not np.array_equal(self.inputs, self.inputs[first[inverse]]):
            raise DomainError("Rows sharing a group key have different inputs")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def n_groups(self) -> int:
        return int(np.unique(self.group_key).shape[0])

    def subset(self, mask: np.ndarray) -> "Dataset":
        return Dataset(self.inputs[mask], self.outputs[mask], self.group_key[mask], self.provenance)

    def with_inputs(self, inputs: np.ndarray) -> "Dataset":
        return Dataset(inputs, self.outputs, self.group_key, self.provenance)


@dataclass(frozen=True)
class CubicSpec:
    n_unique: int = 100
    replicates: int = 10
    seed: int = 0

    x_low = -1.0
    x_high = 1.0
    noise_scale = 0.1

    def __post_init__(self):
        if self.n_unique < 1 or self.replicates < 1:
            raise ConfigurationError("CubicSpec needs n_unique >= 1 and replicates >= 1")


@dataclass(frozen=True)
class IshigamiSpec:
    a: float = 7.0
    b: float = 0.1
    n_unique: int = 300
    replicates: int = 10
    seed: int = 0

    noise_factor = 0.2

    def __post_init__(self):
        if self.n_unique < 1 or self.replicates < 1:
            raise ConfigurationError("IshigamiSpec needs n_unique >= 1 and replicates >= 1")


def _replicate(unique_inputs: np.ndarray, replicates: int) -> Tuple[np.ndarray, np.ndarray]:
    n_unique = unique_inputs.shape[0]
    inputs = np.repeat(unique_inputs, replicates, axis=0)
    keys = np.repeat(np.arange(n_unique), replicates)
    return inputs, keys


def gen_cubic(spec: CubicSpec, rng: Optional[Rng] = None) -> Dataset:
    """y = x^3 + 0.1 (2 + x) eps with x uniform on [-1, 1]"""
    rng = rng or Rng(spec.seed)
    x = rng.uniform(spec.x_low, spec.x_high, size=spec.n_unique)
    inputs, keys = _replicate(x[:, None], spec.replicates)
    eps = sample_standard_normal(rng, inputs.shape[0])
    xs = inputs[:, 0]
    outputs = xs ** 3 + spec.noise_scale * (2.0 + xs) * eps
    logger.info(f"Generated cubic dataset: {spec.n_unique} inputs x {spec.replicates} replicates")
    return Dataset(inputs, outputs, keys, provenance="cubic")


def ishigami(x, a: float = 7.0, b: float = 0.1):
    """sin(x1) + a sin^2(x2) + b x3^4 sin(x1) for a 3-vector or an n x 3 matrix"""
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape[-1] != 3:
        raise DomainError(f"Ishigami inputs must have 3 components, got shape {arr.shape}")
    x1, x2, x3 = arr[..., 0], arr[..., 1], arr[..., 2]
    value = np.sin(x1) + a * np.sin(x2) ** 2 + b * x3 ** 4 * np.sin(x1)
    return float(value) if arr.ndim == 1 else value


def gen_ishigami(spec: IshigamiSpec, rng: Optional[Rng] = None) -> Dataset:
    """y = f(x) + eps, eps ~ N(0, 0.2 |f(x)|), x uniform on [-pi, pi]^3"""
    rng = rng or Rng(spec.seed)
    x = rng.uniform(-math.pi, math.pi, size=(spec.n_unique, 3))
    inputs, keys = _replicate(x, spec.replicates)
    f = ishigami(inputs, spec.a, spec.b)
    eps = sample_standard_normal(rng, inputs.shape[0])
    # zero variance when f(x) == 0 gives y == f(x) exactly
    outputs = f + np.sqrt(spec.noise_factor * np.abs(f)) * eps
    logger.info(f"Generated Ishigami dataset: {spec.n_unique} inputs x {spec.replicates} replicates")
    return Dataset(inputs, outputs, keys, provenance="ishigami")


def gen_heteroscedastic_fixture(n_unique: int = 40, replicates: int = 50, dim: int = 7,
                                seed: int = 0) -> Tuple[Dataset, np.ndarray, np.ndarray]:
    """
    Replicated dataset with known per-input moments.

    Stands in for replicated simulator output (seven inputs, about fifty
    repetitions each). Returns the dataset plus the true mean and variance of
    every group, in group-key order.
    """
    rng = Rng(seed)
    x = rng.uniform(0.0, 1.0, size=(n_unique, dim))
    coef = np.linspace(0.5, 1.5, dim)
    true_means = 3.0 + x @ coef / dim + 0.5 * np.sin(math.pi * x[:, 0])
    true_std = 0.05 + 0.2 * x[:, min(1, dim - 1)]
    inputs, keys = _replicate(x, replicates)
    eps = sample_standard_normal(rng, inputs.shape[0])
    outputs = true_means[keys] + true_std[keys] * eps
    return Dataset(inputs, outputs, keys, provenance="csv"), true_means, true_std ** 2


def write_csv(dataset: Dataset, path: str, include_group: bool = True) -> None:
    """Writes `x1..xD,y[,group]` with 17 significant digits and LF line endings"""
    try:
        columns = {f"x{j + 1}": dataset.inputs[:, j] for j in range(dataset.dim)}
        columns["y"] = dataset.outputs
        if include_group:
            columns["group"] = dataset.group_key
        frame = pd.DataFrame(columns)
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n", encoding="utf-8")
        logger.info(f"Wrote {dataset.n} rows to {path}")
    except OSError as e:
        logger.error(f"Error writing dataset: {str(e)}", exc_info=True)
        raise StorageError(f"Cannot write {path}: {str(e)}") from e


def _parse_float_column(values: pd.Series, name: str, lines: np.ndarray) -> np.ndarray:
    parsed = np.empty(len(values), dtype=np.float64)
    for i, raw in enumerate(values):
        try:
            parsed[i] = float(raw)
        except (TypeError, ValueError):
            raise DatasetError(f"cannot parse {raw!r} in column {name!r} as a number", line=int(lines[i]))
    return parsed


def load_csv(path: str, input_columns: Optional[Sequence[str]] = None, output_column: str = "y",
             group_mode: str = "exact", group_column: str = "group") -> Dataset:
    """
    Loads a replicated-input dataset.

    group_mode="exact" groups rows whose parsed input tuples are equal;
    group_mode="column" takes group ids from `group_column`.
    """
    if group_mode not in GROUP_MODES:
        raise ConfigurationError(f"group_mode must be one of {GROUP_MODES}, got {group_mode!r}")
    if not os.path.exists(path):
        raise StorageError(f"Dataset file not found: {path}")

    logger.info(f"Loading dataset from {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False, encoding="utf-8")
    except pd.errors.EmptyDataError as e:
        raise DatasetError(f"empty file: {path}") from e
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        line = int(match.group(1)) if match else None
        raise DatasetError(f"ragged row: {str(e)}", line=line) from e

    # blank lines read as all-NaN rows; dropping them keeps each row's physical line (header is line 1)
    frame = frame.loc[~frame.isna().all(axis=1)]
    lines = frame.index.to_numpy() + 2
    if frame.empty:
        raise DatasetError(f"no data rows in {path}")
    missing_mask = frame.isna().any(axis=1).to_numpy()
    if missing_mask.any():
        raise DatasetError("ragged row: too few fields", line=int(lines[np.argmax(missing_mask)]))

    if output_column not in frame.columns:
        raise DatasetError(f"missing output column {output_column!r}")
    if input_columns is None:
        excluded = {output_column}
        if group_column in frame.columns:
            excluded.add(group_column)
        input_columns = [c for c in frame.columns if c not in excluded]
    input_columns = list(input_columns)
    if not input_columns:
        raise DatasetError("no input columns")
    for column in input_columns:
        if column not in frame.columns:
            raise DatasetError(f"missing input column {column!r}")

    inputs = np.column_stack([_parse_float_column(frame[c], c, lines) for c in input_columns])
    outputs = _parse_float_column(frame[output_column], output_column, lines)
    if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(outputs))):
        bad = ~(np.isfinite(inputs).all(axis=1) & np.isfinite(outputs))
        raise DatasetError("non-finite value", line=int(lines[np.argmax(bad)]))

    if group_mode == "column":
        if group_column not in frame.columns:
            raise DatasetError(f"missing group column {group_column!r}")
        keys, _ = pd.factorize(frame[group_column], sort=False)
    else:
        numeric = pd.DataFrame(inputs, columns=input_columns)
        keys = numeric.groupby(input_columns, sort=False).ngroup().to_numpy()

    try:
        dataset = Dataset(inputs, outputs, keys, provenance="csv")
    except DomainError as e:
        raise DatasetError(str(e)) from e
    logger.info(f"Loaded {dataset.n} rows, {dataset.n_groups} groups, {dataset.dim} inputs")
    return dataset


def split(dataset: Dataset, test_fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """
    Group-level train/test split.

    floor(n_groups * fraction) groups (at least 1, at most n_groups - 1) go to
    the test side; every replicate follows its group.
    """
    if not 0.0 < test_fraction < 1.0:
        raise DomainError(f"test_fraction must be in (0, 1), got {test_fraction}")
    groups = pd.unique(dataset.group_key)
    n_groups = len(groups)
    if n_groups < 2:
        raise DomainError(f"Need at least 2 groups to split, got {n_groups}")
    n_test = int(math.floor(n_groups * test_fraction + 1e-9))
    n_test = min(max(n_test, 1), n_groups - 1)

    order = Rng(seed).permutation(n_groups)
    test_groups = groups[order[:n_test]]
    test_mask = np.isin(dataset.group_key, test_groups)
    logger.info(f"Split {n_groups} groups into {n_groups - n_test} train / {n_test} test")
    return dataset.subset(~test_mask), dataset.subset(test_mask)


@dataclass
class Standardizer:
    """Per-column z-score transform for ingested inputs"""

    mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    scale: np.ndarray = field(default_factory=lambda: np.ones(0))

    @classmethod
    def fit(cls, inputs: np.ndarray) -> "Standardizer":
        mean = inputs.mean(axis=0)
        scale = inputs.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean, scale)

    def transform(self, inputs: np.ndarray) -> np.ndarray:
        return (np.asarray(inputs, dtype=np.float64) - self.mean) / self.scale

    def to_dict(self) -> Dict[str, List[float]]:
        return {"mean": [float(v) for v in self.mean], "scale": [float(v) for v in self.scale]}

    @classmethod
    def from_dict(cls, data: Dict) -> "Standardizer":
        return cls(np.asarray(data["mean"], dtype=np.float64), np.asarray(data["scale"], dtype=np.float64))
