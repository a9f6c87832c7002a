"""
Checkpoints
Persist learned parameter tables and the model configuration needed to rebuild
the model for evaluation or inductive inference.

Layout of a checkpoint directory:
    manifest.yaml           model settings, fusion, one entry per table
    <table>.bin             little-endian float64, row-major, shape in manifest
"""

from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import yaml

from src.core.errors import ConfigError, DimensionMismatchError
from src.core.models.networks import TWIN_TABLES, CFLGCNModel, LightGCNModel, RecommenderModel, TwinModel
from src.core.models.propagation import FusionSpec, NetworkSpec
from src.core.observability.logging import get_logger

logger = get_logger("checkpoint")

MANIFEST_FILE = "manifest.yaml"
TABLE_DTYPE = "<f8"
FORMAT_VERSION = 1


def _fusion_to_dict(fusion: FusionSpec) -> Dict[str, Any]:
    return {
        "mode": fusion.mode,
        "weights": list(fusion.weights) if fusion.weights is not None else None,
        "item_weights": list(fusion.item_weights) if fusion.item_weights is not None else None,
    }


def _spec_to_dict(spec: NetworkSpec) -> Dict[str, Any]:
    return {
        "variant": spec.variant,
        "num_prop_layers": spec.num_prop_layers,
        "normalization": spec.normalization,
        "include_layer0": spec.include_layer0,
    }


def _model_section(model: RecommenderModel) -> Dict[str, Any]:
    if isinstance(model, TwinModel):
        return {"kind": "twin", "networks": [_spec_to_dict(model.spec_a), _spec_to_dict(model.spec_b)]}
    if isinstance(model, LightGCNModel):
        return {"kind": "lightgcn", "networks": [_spec_to_dict(model.spec)]}
    if isinstance(model, CFLGCNModel):
        return {"kind": "cf_lgcn", "networks": [_spec_to_dict(model.spec)]}
    raise ConfigError(f"Cannot checkpoint model of type {type(model).__name__}")


def save_checkpoint(
    model: RecommenderModel,
    directory,
    run_id: Optional[str] = None,
    metadata: Optional[Dict[str, Any]] = None,
) -> Path:
    """
    Write the model's tables and manifest to a directory.

    Args:
        model: Trained model
        directory: Target directory (created if missing)
        run_id: Run identifier stored in the manifest and logs
        metadata: Extra YAML-serializable fields (config, metrics, ...)

    Returns:
        Path of the written manifest

    Example:
        >>> save_checkpoint(model, "runs/gowalla/checkpoint", run_id="abc-123")
        PosixPath('runs/gowalla/checkpoint/manifest.yaml')
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    tables = []
    for name, table in model.parameters.items():
        file_name = f"{name}.bin"
        np.ascontiguousarray(table, dtype=TABLE_DTYPE).tofile(directory / file_name)
        tables.append({"name": name, "file": file_name, "shape": list(table.shape), "dtype": TABLE_DTYPE})

    manifest = {
        "Checkpoint": {
            "format_version": FORMAT_VERSION,
            "run_id": run_id,
            "model": _model_section(model),
            "fusion": _fusion_to_dict(model.fusion),
            "parameters": tables,
            "metadata": metadata or {},
        }
    }
    manifest_path = directory / MANIFEST_FILE
    manifest_path.write_text(
        yaml.dump(manifest, default_flow_style=False, sort_keys=False, allow_unicode=True, indent=2),
        encoding="utf-8",
    )
    logger.info(
        "Checkpoint saved",
        run_id=run_id,
        directory=str(directory),
        tables=[t["name"] for t in tables],
        num_parameters=model.num_parameters,
    )
    return manifest_path


def read_manifest(directory) -> Dict[str, Any]:
    path = Path(directory) / MANIFEST_FILE
    with open(path, "r", encoding="utf-8") as f:
        try:
            manifest = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"Malformed checkpoint manifest {path}: {e}") from e
    if not isinstance(manifest, dict) or "Checkpoint" not in manifest:
        raise ConfigError(f"Checkpoint manifest {path} has no 'Checkpoint' section")
    version = manifest["Checkpoint"].get("format_version")
    if version != FORMAT_VERSION:
        raise ConfigError(f"Unsupported checkpoint format version {version} in {path}, expected {FORMAT_VERSION}")
    return manifest["Checkpoint"]


def load_checkpoint(directory) -> RecommenderModel:
    """
    Rebuild a model from a checkpoint directory.

    Raises:
        FileNotFoundError: if the manifest or a table file is missing
        ConfigError: on an unreadable manifest or unsupported format version
        DimensionMismatchError: if a table file does not match its recorded shape
    """
    directory = Path(directory)
    section = read_manifest(directory)

    tables = {}
    for entry in section["parameters"]:
        shape = tuple(int(s) for s in entry["shape"])
        values = np.fromfile(directory / entry["file"], dtype=entry.get("dtype", TABLE_DTYPE))
        if values.size != int(np.prod(shape)):
            raise DimensionMismatchError(f"table {entry['name']}", shape, values.size)
        tables[entry["name"]] = values.reshape(shape).astype(np.float64)

    fusion_section = section["fusion"]
    fusion = FusionSpec(fusion_section["mode"], fusion_section.get("weights"), fusion_section.get("item_weights"))
    model_section = section["model"]
    specs = [NetworkSpec(**net) for net in model_section["networks"]]
    kind = model_section["kind"]

    if kind == "twin":
        prefix = TWIN_TABLES[specs[0].variant]
        model = TwinModel(specs[0], specs[1], fusion, tables[f"{prefix}_a"], tables[f"{prefix}_b"])
    elif kind == "lightgcn":
        model = LightGCNModel(specs[0], fusion, tables["user_embedding"], tables["item_embedding"])
    elif kind == "cf_lgcn":
        name = "user_embedding" if specs[0].variant == "cf_lgcn_u" else "item_embedding"
        model = CFLGCNModel(specs[0], fusion, tables[name])
    else:
        raise ConfigError(f"Unknown model kind '{kind}' in checkpoint {directory}")

    logger.info("Checkpoint loaded", run_id=section.get("run_id"), directory=str(directory), kind=model.kind)
    return model
