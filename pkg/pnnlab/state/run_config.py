"""
Run configuration shared by every CLI command.

Config files use dotenv syntax (KEY=value, # comments) and are read with
python-dotenv. Keys are the upper-case field names of RunConfig. Values are
layered: defaults, then the config file, then environment defaults for the
output root and worker count, then explicit CLI flags.
"""
import logging
import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Callable, Dict, Optional, Tuple

from dotenv import dotenv_values

from ..dataset_service import GROUP_MODES, CubicSpec, IshigamiSpec
from ..errors import ConfigurationError, PNNLabError, StorageError
from ..gpr import DEFAULT_BOUND_GRID, DEFAULT_NOISE_GRID, GprConfig
from ..model_selection import GridSpec
from ..network import Architecture
from ..training import OptimizerConfig, TrainConfig

logger = logging.getLogger(__name__)

BENCHMARKS = ("cubic", "ishigami", "csv")
DEFAULT_OUTPUT_ROOT = "runs"

# (train inputs, test inputs) per benchmark
BENCHMARK_SIZES = {"cubic": (100, 50), "ishigami": (300, 100)}


def _parse_bool(raw: str) -> bool:
    value = str(raw).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _tuple_of(item: Callable) -> Callable:
    def parse(raw) -> Tuple:
        if isinstance(raw, (list, tuple)):
            return tuple(item(v) for v in raw)
        return tuple(item(v.strip()) for v in str(raw).split(",") if v.strip())
    return parse


def _optional(item: Callable) -> Callable:
    def parse(raw):
        if raw is None or str(raw).strip() == "":
            return None
        return item(raw)
    return parse


@dataclass
class RunConfig:
    seed: int = 0
    out: Optional[str] = None
    jobs: Optional[int] = None

    # datasets
    benchmark: str = "cubic"
    n_train: Optional[int] = None
    n_test: Optional[int] = None
    replicates: int = 10
    ishigami_a: float = 7.0
    ishigami_b: float = 0.1
    data: Optional[str] = None
    train: Optional[str] = None
    test: Optional[str] = None
    input_columns: Tuple[str, ...] = ()
    output_column: str = "y"
    group_mode: str = "exact"
    group_column: str = "group"
    test_fraction: float = 0.2
    standardize: bool = False

    # network and training
    depth: int = 4
    width: int = 6
    variance_floor: float = 1e-6
    batch_size: int = 32
    epochs: int = 100
    shuffle_seed: Optional[int] = None
    loss: str = "heteroscedastic_nll"
    learning_rate: float = 0.001
    decay: float = 0.9
    epsilon: float = 1e-7

    # grid search
    depths: Tuple[int, ...] = (1, 2, 3, 4)
    widths: Tuple[int, ...] = (2, 4, 6, 8)
    seeds_per_cell: int = 1
    timings: bool = False

    # gpr
    length_scale: float = 1.0
    length_scale_lower: float = 1e-3
    length_scale_upper: float = 1e3
    noise_variance: float = 0.1
    tune_length_scale: bool = True
    bound_grid: Tuple[float, ...] = DEFAULT_BOUND_GRID
    noise_grid: Tuple[float, ...] = DEFAULT_NOISE_GRID

    # evaluation
    checkpoint: Optional[str] = None
    band_points: int = 0

    def train_config(self) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size, epochs=self.epochs,
                           shuffle_seed=self.shuffle_seed, loss=self.loss)

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(learning_rate=self.learning_rate, decay=self.decay, epsilon=self.epsilon)

    def architecture(self, input_dim: int) -> Architecture:
        return Architecture(input_dim=input_dim, depth=self.depth, width=self.width,
                            variance_floor=self.variance_floor)

    def grid_spec(self) -> GridSpec:
        return GridSpec(depths=self.depths, widths=self.widths, seeds_per_cell=self.seeds_per_cell,
                        variance_floor=self.variance_floor)

    def gpr_config(self) -> GprConfig:
        return GprConfig(length_scale=self.length_scale,
                         length_scale_bounds=(self.length_scale_lower, self.length_scale_upper),
                         noise_variance=self.noise_variance, tune_length_scale=self.tune_length_scale)

    def dataset_sizes(self) -> Tuple[int, int]:
        default_train, default_test = BENCHMARK_SIZES.get(self.benchmark, (100, 50))
        return self.n_train or default_train, self.n_test or default_test

    def cubic_spec(self, n_unique: int) -> CubicSpec:
        return CubicSpec(n_unique=n_unique, replicates=self.replicates, seed=self.seed)

    def ishigami_spec(self, n_unique: int) -> IshigamiSpec:
        return IshigamiSpec(a=self.ishigami_a, b=self.ishigami_b, n_unique=n_unique,
                            replicates=self.replicates, seed=self.seed)

    def validate(self) -> "RunConfig":
        """Checks every field against the invariants of the module that owns it"""
        if self.benchmark not in BENCHMARKS:
            raise ConfigurationError(f"benchmark must be one of {BENCHMARKS}, got {self.benchmark!r}")
        if self.group_mode not in GROUP_MODES:
            raise ConfigurationError(f"group_mode must be one of {GROUP_MODES}, got {self.group_mode!r}")
        if not 0 < self.test_fraction < 1:
            raise ConfigurationError(f"test_fraction must be in (0, 1), got {self.test_fraction}")
        if self.jobs is not None and self.jobs < 1:
            raise ConfigurationError(f"jobs must be >= 1, got {self.jobs}")
        if self.band_points < 0:
            raise ConfigurationError(f"band_points must be >= 0, got {self.band_points}")
        if self.replicates < 1:
            raise ConfigurationError(f"replicates must be >= 1, got {self.replicates}")
        if not self.bound_grid or not self.noise_grid:
            raise ConfigurationError("bound_grid and noise_grid must not be empty")
        if any(not b > 0 for b in self.bound_grid) or any(not s >= 0 for s in self.noise_grid):
            raise ConfigurationError("bound_grid entries must be > 0 and noise_grid entries >= 0")
        n_train, n_test = self.dataset_sizes()
        if n_train < 1 or n_test < 1:
            raise ConfigurationError("n_train and n_test must be >= 1")
        self.train_config()
        self.optimizer_config()
        self.architecture(input_dim=1)
        self.grid_spec()
        self.gpr_config()
        return self

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in data.items()}


_PARSERS: Dict[str, Callable] = {
    "seed": int,
    "out": _optional(str),
    "jobs": _optional(int),
    "benchmark": str,
    "n_train": _optional(int),
    "n_test": _optional(int),
    "replicates": int,
    "ishigami_a": float,
    "ishigami_b": float,
    "data": _optional(str),
    "train": _optional(str),
    "test": _optional(str),
    "input_columns": _tuple_of(str),
    "output_column": str,
    "group_mode": str,
    "group_column": str,
    "test_fraction": float,
    "standardize": _parse_bool,
    "depth": int,
    "width": int,
    "variance_floor": float,
    "batch_size": int,
    "epochs": int,
    "shuffle_seed": _optional(int),
    "loss": str,
    "learning_rate": float,
    "decay": float,
    "epsilon": float,
    "depths": _tuple_of(int),
    "widths": _tuple_of(int),
    "seeds_per_cell": int,
    "timings": _parse_bool,
    "length_scale": float,
    "length_scale_lower": float,
    "length_scale_upper": float,
    "noise_variance": float,
    "tune_length_scale": _parse_bool,
    "bound_grid": _tuple_of(float),
    "noise_grid": _tuple_of(float),
    "checkpoint": _optional(str),
    "band_points": int,
}

assert set(_PARSERS) == {f.name for f in fields(RunConfig)}


def parse_values(values: Dict[str, Any], source: str) -> Dict[str, Any]:
    """Converts raw key/value pairs; unknown keys raise ConfigurationError naming the key"""
    parsed = {}
    for key, raw in values.items():
        name = key.strip().lower()
        if name not in _PARSERS:
            raise ConfigurationError(f"Unknown configuration key {key!r} in {source}")
        try:
            parsed[name] = _PARSERS[name](raw)
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"Invalid value for {key!r} in {source}: {raw!r} ({str(e)})") from e
    return parsed


def load_config_file(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise StorageError(f"Config file not found: {path}")
    logger.info(f"Loading config file: {path}")
    return parse_values(dotenv_values(path), path)


def build_run_config(config_file: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Defaults < config file < environment (output root, jobs) < CLI overrides"""
    try:
        config = RunConfig()
        if config_file:
            config = replace(config, **load_config_file(config_file))
        if config.jobs is None and os.getenv("PNNLAB_JOBS"):
            config = replace(config, **parse_values({"jobs": os.getenv("PNNLAB_JOBS")}, "PNNLAB_JOBS"))
        if overrides:
            config = replace(config, **parse_values(overrides, "command line"))
        return config.validate()
    except PNNLabError as e:
        logger.error(f"Invalid configuration: {str(e)}")
        raise


def output_root() -> str:
    return os.getenv("PNNLAB_OUTPUT_ROOT", DEFAULT_OUTPUT_ROOT)


def resolve_jobs(config: RunConfig) -> int:
    return config.jobs or os.cpu_count() or 1
