import json
import logging
import math
import os
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd

from .errors import StorageError
from .gpr import GprConfig, GprModel, fit as fit_gpr
from .dataset_service import Dataset, Standardizer
from .metrics import EvalReport
from .network import Architecture, NetworkParameters, PNNModel

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
MANIFEST_NAME = "manifest.json"


def _clean(value):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to None"""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_json(path: str, data: Dict) -> None:
    """Writes sorted, indented JSON so identical data gives identical bytes"""
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(_clean(data), indent=2, sort_keys=True))
            fh.write("\n")
        logger.debug(f"Wrote {path}")
    except OSError as e:
        logger.error(f"Error writing {path}: {str(e)}", exc_info=True)
        raise StorageError(f"Cannot write {path}: {str(e)}") from e


def read_json(path: str) -> Dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as e:
        raise StorageError(f"File not found: {path}") from e
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Error reading {path}: {str(e)}", exc_info=True)
        raise StorageError(f"Cannot read {path}: {str(e)}") from e


def write_frame(path: str, frame: pd.DataFrame) -> None:
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n", encoding="utf-8")
        logger.debug(f"Wrote {len(frame)} rows to {path}")
    except OSError as e:
        logger.error(f"Error writing {path}: {str(e)}", exc_info=True)
        raise StorageError(f"Cannot write {path}: {str(e)}") from e


def save_checkpoint(path: str, model: PNNModel) -> None:
    """Versioned JSON checkpoint of a trained network"""
    logger.info(f"Saving checkpoint: {path}")
    write_json(path, {
        "version": CHECKPOINT_VERSION,
        "kind": "pnn",
        "architecture": model.arch.to_dict(),
        "weights": [w.tolist() for w in model.params.weights],
        "biases": [b.tolist() for b in model.params.biases],
        "seed": model.seed,
        "standardization": model.standardizer.to_dict() if model.standardizer is not None else None,
    })


def save_gpr_checkpoint(path: str, model: GprModel) -> None:
    """GPR checkpoint: hyperparameters plus training data; the factor is rebuilt on load"""
    logger.info(f"Saving GPR checkpoint: {path}")
    write_json(path, {
        "version": CHECKPOINT_VERSION,
        "kind": "gpr",
        "config": {
            "length_scale": model.config.length_scale,
            "length_scale_bounds": list(model.config.length_scale_bounds),
            "noise_variance": model.config.noise_variance,
            "tune_length_scale": model.config.tune_length_scale,
        },
        "length_scale": model.length_scale,
        "inputs": model.inputs.tolist(),
        "outputs": model.outputs.tolist(),
    })


def load_checkpoint(path: str) -> Union[PNNModel, GprModel]:
    data = read_json(path)
    version = data.get("version")
    if version != CHECKPOINT_VERSION:
        raise StorageError(f"Unsupported checkpoint version {version} in {path}")
    kind = data.get("kind", "pnn")
    try:
        if kind == "gpr":
            stored = data["config"]
            config = GprConfig(
                length_scale=float(data["length_scale"]),
                length_scale_bounds=tuple(stored["length_scale_bounds"]),
                noise_variance=float(stored["noise_variance"]),
                tune_length_scale=False,
            )
            inputs = np.asarray(data["inputs"], dtype=np.float64)
            train = Dataset(inputs, data["outputs"], np.arange(inputs.shape[0]), provenance="csv")
            model = fit_gpr(train, config)
            logger.info(f"Loaded GPR checkpoint from {path}")
            return model

        arch = Architecture.from_dict(data["architecture"])
        params = NetworkParameters(
            [np.asarray(w, dtype=np.float64) for w in data["weights"]],
            [np.asarray(b, dtype=np.float64) for b in data["biases"]],
        )
        params.check(arch)
        logger.info(f"Loaded checkpoint from {path}: depth={arch.depth}, width={arch.width}")
        stored = data.get("standardization")
        standardizer = Standardizer.from_dict(stored) if stored is not None else None
        return PNNModel(arch, params, seed=data.get("seed"), standardizer=standardizer)
    except (KeyError, TypeError, ValueError) as e:
        logger.error(f"Malformed checkpoint {path}: {str(e)}", exc_info=True)
        raise StorageError(f"Malformed checkpoint {path}: {str(e)}") from e


def write_manifest(out_dir: str, command: str, config: Dict, inputs: Optional[Dict] = None,
                   outputs: Optional[List[str]] = None, extra: Optional[Dict] = None) -> str:
    """manifest.json with everything needed to re-run a command"""
    manifest = {
        "command": command,
        "config": config,
        "inputs": inputs or {},
        "outputs": sorted(outputs or []),
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, MANIFEST_NAME)
    write_json(path, manifest)
    return path


def write_report(report: EvalReport, out_dir: str, prefix: str = "") -> List[str]:
    """report.json summary plus the two scatter CSVs"""
    names = [f"{prefix}report.json", f"{prefix}mean_scatter.csv", f"{prefix}interval_scatter.csv"]
    write_json(os.path.join(out_dir, names[0]), report.to_dict())
    write_frame(os.path.join(out_dir, names[1]), report.mean_scatter())
    write_frame(os.path.join(out_dir, names[2]), report.interval_scatter())
    return names


def collect_manifests(root: str) -> List[Dict]:
    """Every manifest below root, ordered by relative directory"""
    if not os.path.isdir(root):
        raise StorageError(f"Not a directory: {root}")
    found = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        if MANIFEST_NAME in filenames:
            manifest = read_json(os.path.join(dirpath, MANIFEST_NAME))
            manifest["directory"] = os.path.relpath(dirpath, root).replace(os.sep, "/")
            found.append(manifest)
    logger.info(f"Found {len(found)} manifests below {root}")
    return sorted(found, key=lambda m: m["directory"])
