"""Experiment configuration: a YAML file, command-line overrides and the SENTI_SEED fallback."""

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml

from senti.corpus import CorpusFormat, FoldScheme
from senti.exceptions import ConfigError

MODEL_NAMES = ("NB", "ME", "LinearSVC", "LR", "SVC", "AdaBoost", "GBT", "RF", "CNN")
DEFAULT_SUBSET = ("ME", "LR", "LinearSVC", "RF")

# runtime knobs that never change results; kept out of the config hash
RUNTIME_KEYS = ("workers", "out", "plot")


@dataclass
class EmbeddingSettings:
    dense_dim: int = 300
    cnn_dim: int = 60
    window: int = 5
    negatives: int = 5
    min_count: int = 5
    epochs: int = 5
    initial_lr: float = 0.025
    min_lr: float = 0.0001
    sample: float = 1e-3
    directory: Optional[str] = None


@dataclass
class FeatureSettings:
    chi_words: int = 150
    ngram_min_df: int = 2
    review_length: int = 60


@dataclass
class MaxEntSettings:
    iterations: int = 15


@dataclass
class LRSettings:
    l2: float = 1.0
    tol: float = 1e-6
    max_iter: int = 200


@dataclass
class SVMSettings:
    C: float = 1.0
    loss: str = "hinge"
    tol: float = 1e-4
    max_iter: int = 1000


@dataclass
class AdaBoostSettings:
    rounds: int = 100


@dataclass
class GBTSettings:
    n_trees: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3


@dataclass
class RFSettings:
    n_trees: int = 100
    features_per_split: Optional[int] = None
    max_depth: Optional[int] = None


@dataclass
class CNNSettings:
    layers: Tuple[Tuple[int, int, int, int, int], ...] = (
        (40, 5, 5, 2, 1),
        (50, 5, 5, 2, 1),
        (50, 5, 5, 2, 1),
    )
    epochs: int = 20
    batch_size: int = 50
    lr: float = 0.05
    min_improvement: float = 1e-4


@dataclass
class CombinationSettings:
    vote_all: bool = True
    lr_all: bool = True
    lr_subset: bool = False
    subset: Union[str, List[str]] = field(default_factory=lambda: list(DEFAULT_SUBSET))
    max_k: int = 5
    l2: float = 1.0


@dataclass
class ExperimentConfig:
    corpus: str
    seed: int
    format: str = "tsv"
    lexicons: List[str] = field(default_factory=list)
    sizes: List[int] = field(default_factory=lambda: [40000, 80000, 120000])
    run_size: Optional[int] = None
    fold_scheme: str = "four_fold"
    repetitions: int = 5
    models: List[str] = field(default_factory=lambda: list(MODEL_NAMES))
    curve_models: List[str] = field(default_factory=lambda: ["NB", "LR"])
    workers: int = 1
    deterministic: bool = True
    out: str = "results"
    plot: bool = False
    embeddings: EmbeddingSettings = field(default_factory=EmbeddingSettings)
    features: FeatureSettings = field(default_factory=FeatureSettings)
    maxent: MaxEntSettings = field(default_factory=MaxEntSettings)
    lr: LRSettings = field(default_factory=LRSettings)
    svc: SVMSettings = field(default_factory=SVMSettings)
    linear_svc: SVMSettings = field(default_factory=lambda: SVMSettings(loss="squared_hinge"))
    adaboost: AdaBoostSettings = field(default_factory=AdaBoostSettings)
    gbt: GBTSettings = field(default_factory=GBTSettings)
    rf: RFSettings = field(default_factory=RFSettings)
    cnn: CNNSettings = field(default_factory=CNNSettings)
    combination: CombinationSettings = field(default_factory=CombinationSettings)

    @property
    def embedding_dir(self) -> Path:
        return Path(self.embeddings.directory or Path(self.out) / "embeddings")


BLOCKS = {
    "embeddings": EmbeddingSettings,
    "features": FeatureSettings,
    "maxent": MaxEntSettings,
    "lr": LRSettings,
    "svc": SVMSettings,
    "linear_svc": lambda: SVMSettings(loss="squared_hinge"),
    "adaboost": AdaBoostSettings,
    "gbt": GBTSettings,
    "rf": RFSettings,
    "cnn": CNNSettings,
    "combination": CombinationSettings,
}


def _block(name: str, values: Any):
    default = BLOCKS[name]()
    if values is None:
        return default
    if not isinstance(values, dict):
        raise ConfigError(f"Config block {name!r} must be a mapping")
    known = {f.name for f in fields(default)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"Unknown keys in config block {name!r}: {', '.join(unknown)}")
    settings = {**asdict(default), **values}
    if name == "cnn":
        settings["layers"] = tuple(tuple(int(v) for v in layer) for layer in settings["layers"])
    return type(default)(**settings)


def _check_models(names: List[str], key: str) -> List[str]:
    unknown = [name for name in names if name not in MODEL_NAMES]
    if unknown:
        raise ConfigError(
            f"Unknown model(s) in {key}: {', '.join(unknown)}; known: {', '.join(MODEL_NAMES)}"
        )
    return names


def _resolve(base: Path, value: Optional[str]) -> Optional[str]:
    if value is None:
        return None
    path = Path(value).expanduser()
    return str(path if path.is_absolute() else base / path)


def load_config(
    path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None
) -> ExperimentConfig:
    """Load an experiment config.

    Values come from the YAML file, then from non-None `overrides` (seed, workers, models, out,
    plot). Without a seed in either, the SENTI_SEED environment variable is used. Relative
    paths are resolved against the config file's directory.

    Raises:
        ConfigError: for unreadable or invalid YAML, unknown keys or model names, or no seed.
    """
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as handle:
            raw = yaml.safe_load(handle) or {}
    except OSError as exc:
        raise ConfigError(f"Cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"Config file {path} is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"Config file {path} must contain a mapping")
    base = path.parent
    for key in ("corpus", "out"):
        if raw.get(key):
            raw[key] = _resolve(base, raw[key])
    raw["lexicons"] = [_resolve(base, lexicon) for lexicon in raw.get("lexicons") or []]
    if isinstance(raw.get("embeddings"), dict) and raw["embeddings"].get("directory"):
        raw["embeddings"]["directory"] = _resolve(base, raw["embeddings"]["directory"])
    # overrides come from the command line: their paths stay relative to the working directory
    raw.update({key: value for key, value in (overrides or {}).items() if value is not None})

    if raw.get("seed") is None:
        env_seed = os.environ.get("SENTI_SEED")
        if env_seed is None:
            raise ConfigError("No seed: set `seed` in the config, pass --seed or set SENTI_SEED")
        raw["seed"] = env_seed
    try:
        raw["seed"] = int(raw["seed"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"Seed must be an integer, got {raw['seed']!r}") from exc
    if not raw.get("corpus"):
        raise ConfigError(f"Config file {path} names no corpus")

    top_level = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(raw) - top_level)
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")
    for name in BLOCKS:
        raw[name] = _block(name, raw.get(name))
    if isinstance(raw.get("models"), str):
        raw["models"] = [name.strip() for name in raw["models"].split(",") if name.strip()]

    config = ExperimentConfig(**raw)
    _validate(config)
    logging.debug(f"Loaded config {path} (hash {config_hash(config)[:12]})")
    return config


def _validate(config: ExperimentConfig) -> None:
    _check_models(config.models, "models")
    _check_models(config.curve_models, "curve_models")
    subset = config.combination.subset
    if isinstance(subset, str):
        if subset != "auto":
            raise ConfigError(f"combination.subset must be 'auto' or a model list, got {subset!r}")
    else:
        _check_models(list(subset), "combination.subset")
    try:
        CorpusFormat(config.format)
        FoldScheme(config.fold_scheme)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    for name in ("svc", "linear_svc"):
        loss = getattr(config, name).loss
        if loss not in ("hinge", "squared_hinge"):
            raise ConfigError(f"{name}.loss must be hinge or squared_hinge, got {loss!r}")
    if config.workers < 1:
        raise ConfigError(f"workers must be at least 1, got {config.workers}")
    if config.repetitions < 1:
        raise ConfigError(f"repetitions must be at least 1, got {config.repetitions}")


def config_hash(config: ExperimentConfig) -> str:
    """sha256 of the sorted-key JSON rendering, runtime knobs excluded."""
    values = {key: value for key, value in asdict(config).items() if key not in RUNTIME_KEYS}
    canonical = json.dumps(values, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
