"""
Configuration
Typed training and experiment settings, loaded from flat YAML files with
command-line overrides. Environment-level settings (output root, log
directory, history database) come from .env via os.getenv.
"""

import itertools
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import yaml

from src.core.errors import ConfigError


@dataclass(frozen=True)
class TrainConfig:
    """
    Optimizer and protocol hyperparameters.

    Attributes:
        learning_rate: Adam step size
        l2_lambda: λ, weight on the sum of squared parameter entries
        batch_size: Triples per gradient step
        max_epochs: Upper bound on epochs
        eval_every: Epochs between validation evaluations
        patience: Evaluations without improvement before stopping
        edge_dropout_p: Probability of dropping each edge per batch
        seed: Seed for sampling, dropout and shuffling
        negatives_per_positive: Negatives drawn for each observed interaction
        eval_k: Cutoff of the validation metric used for model selection
    """
    learning_rate: float = 1e-3
    l2_lambda: float = 1e-4
    batch_size: int = 2048
    max_epochs: int = 1000
    eval_every: int = 20
    patience: int = 10
    edge_dropout_p: float = 0.0
    seed: int = 0
    negatives_per_positive: int = 1
    eval_k: int = 20

    def __post_init__(self):
        if not 0.0 <= self.edge_dropout_p < 1.0:
            raise ConfigError(f"edge_dropout_p must be in [0, 1), got {self.edge_dropout_p}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.negatives_per_positive < 1:
            raise ConfigError(f"negatives_per_positive must be >= 1, got {self.negatives_per_positive}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.l2_lambda < 0:
            raise ConfigError(f"l2_lambda must be non-negative, got {self.l2_lambda}")


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything one CLI command needs: data, model family, protocol and outputs.
    Training fields are flat here and collected into TrainConfig by train_config().

    twin left unset resolves to True for cf_lgcn_u and False otherwise, so
    switching the variant alone never produces an invalid combination.
    """
    dataset: Optional[str] = None
    variant: str = "cf_lgcn_u"
    layers: int = 3
    layers_b: Optional[int] = None
    fusion: str = "concat"
    fusion_weights: Optional[List[float]] = None
    fusion_item_weights: Optional[List[float]] = None
    normalization: str = "symmetric"
    twin: Optional[bool] = None
    include_layer0: bool = True
    dim: int = 64
    init_std: float = 0.1
    k: List[int] = field(default_factory=lambda: [20])
    output_dir: Optional[str] = None
    val_fraction: float = 0.10
    holdout_fraction: float = 0.05
    inference_fraction: float = 0.5
    refresh_user_embeddings: bool = False
    # TrainConfig fields
    learning_rate: float = 1e-3
    l2_lambda: float = 1e-4
    batch_size: int = 2048
    max_epochs: int = 1000
    eval_every: int = 20
    patience: int = 10
    edge_dropout_p: float = 0.0
    seed: int = 0
    negatives_per_positive: int = 1
    eval_k: int = 20

    def __post_init__(self):
        if self.variant not in ("cf_lgcn_u", "cf_lgcn_e", "lightgcn", "mf"):
            raise ConfigError(f"Unknown variant '{self.variant}'")
        if self.fusion not in ("mean", "concat"):
            raise ConfigError(f"Unknown fusion '{self.fusion}'")
        if self.twin is None:
            object.__setattr__(self, "twin", self.variant == "cf_lgcn_u")
        if self.twin and self.variant not in ("cf_lgcn_u", "cf_lgcn_e"):
            raise ConfigError(f"twin requires variant cf_lgcn_u or cf_lgcn_e; set twin=false for '{self.variant}'")
        if self.layers < 0:
            raise ConfigError(f"layers must be >= 0, got {self.layers}")
        if self.dim <= 0:
            raise ConfigError(f"dim must be positive, got {self.dim}")
        ks = [self.k] if isinstance(self.k, int) else list(self.k)
        if not ks or any(int(k) < 1 for k in ks):
            raise ConfigError(f"k values must be >= 1, got {self.k}")
        object.__setattr__(self, "k", [int(k) for k in ks])
        self.train_config()

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{name: getattr(self, name) for name in names})

    @property
    def model_label(self) -> str:
        prefix = "twin_" if self.twin else ""
        return f"{prefix}{self.variant}"

    def resolved_output_dir(self) -> Path:
        if self.output_dir:
            return Path(self.output_dir)
        return Path(os.getenv("OUTPUT_ROOT", "runs"))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _known_keys() -> set:
    return {f.name for f in fields(ExperimentConfig)}


def parse_override(text: str) -> Dict[str, Any]:
    """
    Parse one 'key=value' override; the value is read as YAML so numbers,
    booleans and lists keep their types.
    """
    if "=" not in text:
        raise ConfigError(f"Override '{text}' is not of the form key=value")
    key, raw = text.split("=", 1)
    key = key.strip().replace("-", "_")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigError(f"Cannot parse value of override '{text}': {e}") from e
    return {key: value}


def build_config(values: Dict[str, Any]) -> ExperimentConfig:
    unknown = set(values) - _known_keys()
    if unknown:
        raise ConfigError(f"Unknown configuration keys: {sorted(unknown)}")
    try:
        return ExperimentConfig(**values)
    except TypeError as e:
        raise ConfigError(str(e)) from e


def load_config(path: Optional[str] = None, overrides: Iterable[str] = ()) -> ExperimentConfig:
    """
    Load a flat YAML configuration and apply key=value overrides.

    Args:
        path: YAML file with a flat mapping (optional)
        overrides: Iterable of 'key=value' strings applied in order

    Returns:
        Validated ExperimentConfig

    Raises:
        ConfigError: on malformed YAML, non-mapping content or unknown keys
        FileNotFoundError: if the path does not exist
    """
    values: Dict[str, Any] = {}
    if path:
        with open(path, "r", encoding="utf-8") as f:
            try:
                loaded = yaml.safe_load(f)
            except yaml.YAMLError as e:
                raise ConfigError(f"Malformed configuration file {path}: {e}") from e
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"Configuration file {path} must contain a flat mapping")
        values.update(loaded)
    for text in overrides:
        values.update(parse_override(text))
    return build_config(values)


def load_grid(path: str) -> List[Dict[str, Any]]:
    """
    Expand a sweep grid file (key → list of values) into its cartesian product,
    iterating keys in sorted order. Scalars are treated as one-element lists.
    """
    with open(path, "r", encoding="utf-8") as f:
        try:
            grid = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Malformed grid file {path}: {e}") from e
    if not isinstance(grid, dict):
        raise ConfigError(f"Grid file {path} must contain a mapping of key to list")
    unknown = set(grid) - _known_keys()
    if unknown:
        raise ConfigError(f"Unknown grid keys: {sorted(unknown)}")
    keys = sorted(grid)
    axes = [grid[k] if isinstance(grid[k], list) else [grid[k]] for k in keys]
    return [dict(zip(keys, combo)) for combo in itertools.product(*axes)]
