import logging
import os
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from ..dataset_service import Dataset, Standardizer, gen_cubic, gen_ishigami, load_csv, split, write_csv
from ..errors import ConfigurationError, DomainError, PNNLabError, StorageError
from ..gpr import JITTER, GprModel, predict_batch, tune_noise
from ..metrics import EvalReport, evaluate, prediction_band
from ..model_selection import GridCellSummary, group_replicates, grid_search
from ..network import Architecture, PNNModel
from ..numerics import Rng
from ..state.run_config import RunConfig, output_root, resolve_jobs
from ..storage_service import (collect_manifests, load_checkpoint, read_json, save_checkpoint,
                               save_gpr_checkpoint, write_frame, write_json, write_manifest, write_report)
from ..training import fit, write_loss_history

logger = logging.getLogger(__name__)

# fields that do not change any output file
_UNRECORDED_FIELDS = ("out", "jobs")


class ExperimentService:
    """Runs the generate, train, gridsearch, evaluate, gpr and report commands"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.jobs = resolve_jobs(config)
        logger.info(f"ExperimentService initialized: seed={config.seed}, jobs={self.jobs}")

    def output_dir(self, command: str) -> str:
        out = self.config.out or os.path.join(output_root(), command)
        try:
            os.makedirs(out, exist_ok=True)
        except OSError as e:
            raise StorageError(f"Cannot create output directory {out}: {str(e)}") from e
        return out

    def _recorded_config(self) -> Dict:
        data = self.config.to_dict()
        for name in _UNRECORDED_FIELDS:
            data.pop(name, None)
        return data

    def _manifest(self, out_dir: str, command: str, outputs: List[str],
                  inputs: Optional[Dict] = None, extra: Optional[Dict] = None) -> str:
        return write_manifest(out_dir, command, self._recorded_config(), inputs=inputs,
                              outputs=outputs, extra=extra)

    def _load(self, path: Optional[str], name: str) -> Dataset:
        if not path:
            raise ConfigurationError(f"--{name} is required for this command")
        return load_csv(path, input_columns=list(self.config.input_columns) or None,
                        output_column=self.config.output_column, group_mode=self.config.group_mode,
                        group_column=self.config.group_column)

    def _load_pair(self) -> Tuple[Dataset, Dataset]:
        train = self._load(self.config.train, "train")
        test = self._load(self.config.test, "test")
        if train.dim != test.dim:
            raise ConfigurationError(f"Train data has {train.dim} inputs, test data has {test.dim}")
        return train, test

    def _standardize(self, train: Dataset, test: Dataset) -> Tuple[Dataset, Dataset, Optional[Standardizer]]:
        if not self.config.standardize:
            return train, test, None
        standardizer = Standardizer.fit(train.inputs)
        logger.info("Standardizing inputs with training-set mean and scale")
        return (train.with_inputs(standardizer.transform(train.inputs)),
                test.with_inputs(standardizer.transform(test.inputs)), standardizer)

    def generate(self) -> List[str]:
        """Writes train.csv and test.csv for the configured benchmark"""
        config = self.config
        logger.info(f"Generating {config.benchmark} dataset with seed {config.seed}")
        if config.benchmark == "csv":
            if not config.data:
                raise ConfigurationError("--data is required for the csv benchmark")
            dataset = load_csv(config.data, input_columns=list(config.input_columns) or None,
                               output_column=config.output_column, group_mode=config.group_mode,
                               group_column=config.group_column)
            train, test = split(dataset, config.test_fraction, config.seed)
            inputs = {"data": config.data}
        else:
            n_train, n_test = config.dataset_sizes()
            train_rng, test_rng = Rng(config.seed).split(2)
            if config.benchmark == "cubic":
                train = gen_cubic(config.cubic_spec(n_train), train_rng)
                test = gen_cubic(config.cubic_spec(n_test), test_rng)
            else:
                train = gen_ishigami(config.ishigami_spec(n_train), train_rng)
                test = gen_ishigami(config.ishigami_spec(n_test), test_rng)
            inputs = {}

        out_dir = self.output_dir("generate")
        outputs = ["train.csv", "test.csv"]
        write_csv(train, os.path.join(out_dir, outputs[0]))
        write_csv(test, os.path.join(out_dir, outputs[1]))
        self._manifest(out_dir, "generate", outputs, inputs=inputs,
                       extra={"rows": {"train": train.n, "test": test.n},
                              "groups": {"train": train.n_groups, "test": test.n_groups}})
        return [os.path.join(out_dir, name) for name in outputs]

    def train(self) -> List[str]:
        """Trains one network and writes its checkpoint and loss history"""
        config = self.config
        train = self._load(config.train, "train")
        standardizer = None
        if config.standardize:
            standardizer = Standardizer.fit(train.inputs)
            train = train.with_inputs(standardizer.transform(train.inputs))
        arch = config.architecture(train.dim)
        try:
            params, history = fit(train, arch, config.train_config(), config.optimizer_config(), Rng(config.seed))
        except PNNLabError as e:
            logger.error(f"Training failed: {str(e)}", exc_info=True)
            raise

        out_dir = self.output_dir("train")
        outputs = ["checkpoint.json", "loss.csv"]
        save_checkpoint(os.path.join(out_dir, outputs[0]),
                        PNNModel(arch, params, seed=config.seed, standardizer=standardizer))
        write_loss_history(os.path.join(out_dir, outputs[1]), history)
        self._manifest(out_dir, "train", outputs, inputs={"train": config.train},
                       extra={"final_loss": history[-1] if history else None})
        return [os.path.join(out_dir, name) for name in outputs]

    def _cell_entry(self, cell: GridCellSummary) -> Dict:
        return {"depth": cell.depth, "width": cell.width, "mean_kl": cell.mean_kl,
                "median_kl": cell.median_kl, "n_params": cell.n_params}

    def gridsearch(self) -> List[str]:
        """Full architecture grid, scored by mean KL on the test groups"""
        config = self.config
        train, test = self._load_pair()
        train, test, standardizer = self._standardize(train, test)
        result, best = grid_search(train, test, config.grid_spec(), config.train_config(),
                                   config.optimizer_config(), Rng(config.seed), max_workers=self.jobs,
                                   timings=config.timings)
        worst = result.worst()

        out_dir = self.output_dir("gridsearch")
        outputs = ["grid.csv", "best_checkpoint.json", "worst_checkpoint.json", "best_loss.csv"]
        write_frame(os.path.join(out_dir, "grid.csv"), result.to_frame())
        for name, cell in (("best_checkpoint.json", best), ("worst_checkpoint.json", worst)):
            arch = Architecture(input_dim=train.dim, depth=cell.depth, width=cell.width,
                                variance_floor=config.variance_floor)
            save_checkpoint(os.path.join(out_dir, name),
                            PNNModel(arch, cell.best_run.params, seed=config.seed, standardizer=standardizer))
        write_loss_history(os.path.join(out_dir, "best_loss.csv"), best.best_run.history)
        self._manifest(out_dir, "gridsearch", outputs,
                       inputs={"train": config.train, "test": config.test},
                       extra={"best": self._cell_entry(best), "worst": self._cell_entry(worst),
                              "cells": [self._cell_entry(c) for c in result.cells()]})
        return [os.path.join(out_dir, name) for name in outputs]

    def _predict(self, model: Union[PNNModel, GprModel], X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        if isinstance(model, GprModel):
            means, variances = predict_batch(model, X)
            return means, np.maximum(variances, JITTER)
        return model.predict(X)

    def _write_band(self, model, test: Dataset, out_dir: str) -> Optional[str]:
        if self.config.band_points <= 0:
            return None
        if test.dim != 1:
            raise ConfigurationError(f"--band-points needs 1-D inputs, test data has {test.dim}")
        xs = np.linspace(test.inputs.min(), test.inputs.max(), self.config.band_points)
        means, variances = self._predict(model, xs[:, None])
        write_frame(os.path.join(out_dir, "band.csv"), prediction_band(means, variances, xs))
        return "band.csv"

    def _evaluate_model(self, model, test: Dataset) -> EvalReport:
        emp = group_replicates(test)
        means, variances = self._predict(model, emp.inputs)
        return evaluate(means, variances, emp)

    def evaluate(self) -> List[str]:
        """Scores a PNN or GPR checkpoint on the test data"""
        config = self.config
        if not config.checkpoint:
            raise ConfigurationError("--checkpoint is required for evaluate")
        model = load_checkpoint(config.checkpoint)
        test = self._load(config.test, "test")
        report = self._evaluate_model(model, test)

        out_dir = self.output_dir("evaluate")
        outputs = write_report(report, out_dir)
        band = self._write_band(model, test, out_dir)
        if band:
            outputs.append(band)
        self._manifest(out_dir, "evaluate", outputs,
                       inputs={"checkpoint": config.checkpoint, "test": config.test},
                       extra={"report": report.to_dict()})
        return [os.path.join(out_dir, name) for name in outputs]

    def gpr(self) -> List[str]:
        """Tunes the GPR baseline over (length-scale bound, noise) and evaluates the best cell"""
        config = self.config
        train, test = self._load_pair()
        emp = group_replicates(test)
        result = tune_noise(train, emp, config.bound_grid, config.noise_grid, base=config.gpr_config(),
                            max_workers=self.jobs)

        out_dir = self.output_dir("gpr")
        outputs = ["gpr_grid.csv"]
        write_frame(os.path.join(out_dir, "gpr_grid.csv"), result.to_frame())
        if result.best_model is None:
            raise DomainError("All GPR tuning cells failed")
        save_gpr_checkpoint(os.path.join(out_dir, "gpr_checkpoint.json"), result.best_model)
        outputs.append("gpr_checkpoint.json")
        report = self._evaluate_model(result.best_model, test)
        outputs.extend(write_report(report, out_dir))
        band = self._write_band(result.best_model, test, out_dir)
        if band:
            outputs.append(band)
        self._manifest(out_dir, "gpr", outputs, inputs={"train": config.train, "test": config.test},
                       extra={"best": {"length_scale_bound": result.best_config.length_scale_bounds[1],
                                       "noise_variance": result.best_config.noise_variance,
                                       "length_scale": result.best_model.length_scale},
                              "report": report.to_dict()})
        return [os.path.join(out_dir, name) for name in outputs]

    def report(self) -> List[str]:
        """Aggregates every manifest below the output root into summary.json"""
        root = self.config.out or output_root()
        manifests = collect_manifests(root)
        runs = []
        for manifest in manifests:
            entry = {k: manifest.get(k) for k in ("directory", "command", "outputs", "inputs")}
            for key in ("best", "worst", "report", "rows"):
                if key in manifest:
                    entry[key] = manifest[key]
            report_path = os.path.join(root, manifest["directory"], "report.json")
            if "report" not in entry and os.path.exists(report_path):
                entry["report"] = read_json(report_path)
            runs.append(entry)
        path = os.path.join(root, "summary.json")
        write_json(path, {"runs": runs, "count": len(runs)})
        logger.info(f"Summarized {len(runs)} runs into {path}")
        return [path]

    def run(self, command: str) -> List[str]:
        handlers = {
            "generate": self.generate,
            "train": self.train,
            "gridsearch": self.gridsearch,
            "evaluate": self.evaluate,
            "gpr": self.gpr,
            "report": self.report,
        }
        if command not in handlers:
            raise ConfigurationError(f"Unknown command: {command}")
        logger.info(f"Running command: {command}")
        return handlers[command]()
