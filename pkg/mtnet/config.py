"""
Unified configuration of preprocessing, model, training and evaluation.

The schema is a tree of dataclasses turned into an omegaconf structured config.
User files are merged on top of it, which rejects unknown keys and ill-typed values.
"""
import copy
import dataclasses
import hashlib
import logging
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Dict, List, Optional, Sequence

from omegaconf import DictConfig, OmegaConf
from omegaconf.errors import OmegaConfBaseException

from .utils.errors import ConfigurationException

PRESETS = ("nyc", "tky", "ca", "toy")


def _opt(default: Any, help: str) -> Any:
    """Dataclass field carrying a description for the reference page."""
    if isinstance(default, (list, dict)):
        return field(
            default_factory=lambda: copy.deepcopy(default), metadata={"help": help}
        )
    return field(default=default, metadata={"help": help})


@dataclass
class ColumnsConfig:
    user: str = _opt("user", "column holding the raw user key")
    poi: str = _opt("poi", "column holding the raw POI key")
    category: str = _opt("category", "column holding the POI category")
    timestamp: str = _opt("timestamp", "column holding the check-in time")
    lat: str = _opt("lat", "column holding the latitude in degrees")
    lon: str = _opt("lon", "column holding the longitude in degrees")


@dataclass
class DatasetConfig:
    name: str = _opt("custom", "dataset name, reported in statistics")
    input_path: Optional[str] = _opt(None, "raw check-in file")
    delimiter: str = _opt(",", "field separator of the raw file")
    header: bool = _opt(True, "whether the first line names the columns")
    names: Optional[List[str]] = _opt(None, "column names when the file has no header")
    columns: ColumnsConfig = field(default_factory=ColumnsConfig)
    timestamp_format: Optional[str] = _opt(
        None, "strftime format of timestamps, unix for epoch seconds, empty for ISO 8601"
    )
    timezone_offset_hours: float = _opt(
        0.0, "offset added to UTC before deriving hour of day and calendar day"
    )
    window_hours: float = _opt(24.0, "longest span after the first check-in")
    min_user_checkins: int = _opt(10, "users with fewer check-ins are removed")
    min_poi_visits: int = _opt(10, "POIs visited fewer times are removed")
    n_geo_clusters: int = _opt(60, "number of k-means geographic areas")
    kmeans_max_iters: int = _opt(300, "maximum number of Lloyd iterations")
    split_fractions: List[float] = _opt([0.8, 0.1, 0.1], "train / valid / test fractions")
    seed: int = _opt(42, "seed of the clustering initialization")


@dataclass
class ModelConfig:
    _target_: str = _opt("mtnet.models.MTNet", "model class")
    user_dim: int = _opt(128, "user embedding width d_u")
    poi_dim: int = _opt(128, "POI embedding width d_p")
    category_dim: int = _opt(32, "category embedding width d_c")
    geo_dim: int = _opt(32, "geographic cluster embedding width d_g")
    slot_dim: int = _opt(128, "width of the learned period and day node inputs")
    hidden_size: int = _opt(512, "Tree-LSTM hidden size")
    iac_layers: int = _opt(2, "attention layers per sibling-attention stack")
    iac_heads: int = _opt(2, "attention heads per layer")
    ffn_dim: int = _opt(1024, "inner width of the attention feed-forward layers")
    slots_per_day: int = _opt(4, "number of period slots P, must divide 24")
    gamma: float = _opt(1.0, "weight of the hour embedding in leaf initialization")
    eta: float = _opt(1.0, "weight of the day-level POI scores")
    delta: float = _opt(1.0, "weight of the period-level POI scores")
    leaf_fanout: Optional[int] = _opt(
        None, "leaf children per period node, dataset maximum when empty"
    )
    root: str = _opt("current_day", "root representation: current_day or super_root")
    max_days: int = _opt(2, "day children of the super root")
    dtype: str = _opt("float64", "floating point type: float64 or float32")
    embedding_std: float = _opt(0.02, "standard deviation of embedding initialization")


@dataclass
class AblationConfig:
    no_multitask: bool = _opt(False, "plain sum of task losses, no uncertainty weights")
    no_geo_head: bool = _opt(False, "drop the geographic cluster head and loss")
    no_cat_head: bool = _opt(False, "drop the category head and loss")
    no_iac: bool = _opt(False, "replace sibling attention with identity")
    no_irc: bool = _opt(False, "replace Tree-LSTM aggregation with mean pooling + linear")
    no_aux_node_preds: bool = _opt(False, "drop day and period POI predictions")


@dataclass
class TrainConfig:
    lr: float = _opt(1e-3, "initial learning rate")
    weight_decay: float = _opt(1e-4, "L2 coefficient added to the gradients")
    betas: List[float] = _opt([0.9, 0.999], "Adam moment decay rates")
    eps: float = _opt(1e-8, "Adam epsilon")
    lr_step: int = _opt(6, "epochs between learning rate decays")
    lr_gamma: float = _opt(0.9, "learning rate decay factor")
    epochs: int = _opt(50, "number of epochs")
    batch_size: int = _opt(1024, "samples per optimization step")
    dropout_embed: float = _opt(0.4, "dropout on leaf embeddings")
    dropout_param: float = _opt(0.6, "dropout inside attention feed-forward layers")
    clip_grad_norm: Optional[float] = _opt(5.0, "global gradient norm cap")
    last_step_only: bool = _opt(False, "train on last prefixes only")
    bucket_by_shape: bool = _opt(False, "group samples of similar tree shape in batches")
    shuffle: bool = _opt(True, "shuffle training samples every epoch")
    seed: int = _opt(42, "seed of initialization, shuffling and dropout")
    ablation: AblationConfig = field(default_factory=AblationConfig)
    callbacks: List[Any] = _opt(
        [
            {
                "_target_": "mtnet.utils.callbacks.CheckpointEveryNEpochs",
                "every_n_epochs": 1,
            },
            {
                "_target_": "mtnet.utils.callbacks.BestModelSelection",
                "monitor": "acc@1",
            },
        ],
        "callbacks instantiated by the trainer",
    )


@dataclass
class EvalConfig:
    split: str = _opt("test", "split to evaluate: train, valid or test")
    mode: str = _opt("all_prefixes", "all_prefixes or last_prefix")
    ks: List[int] = _opt([1, 5, 10], "cut-offs of the accuracy metrics")
    top_k: int = _opt(10, "length of recommendation lists")
    batch_size: int = _opt(1024, "samples per forward pass")
    shuffle_slots: bool = _opt(False, "permute the period slots of every prefix")


@dataclass
class AppConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


def schema() -> DictConfig:
    """Default configuration, typed and closed to unknown keys."""
    return OmegaConf.structured(AppConfig)


def _message(error: OmegaConfBaseException) -> str:
    """"""
    text = getattr(error, "msg", None) or str(error)
    return text.strip().splitlines()[0] if text.strip() else type(error).__name__


def _merge(base: DictConfig, other: Any, origin: str) -> DictConfig:
    """"""
    try:
        return OmegaConf.merge(base, other)
    except OmegaConfBaseException as e:
        key = getattr(e, "full_key", None) or None
        raise ConfigurationException(f"{_message(e)} (from {origin})", key=key) from None


def preset_path(name: str) -> str:
    """"""
    if name not in PRESETS:
        raise ConfigurationException(
            f"'{name}' is not a valid preset, please use one of the following: {PRESETS}",
            key="preset",
        )
    return str(resources.files("mtnet").joinpath("assistants", "configs", f"{name}.yaml"))


def load_config(
    path: Optional[str] = None,
    preset: Optional[str] = None,
    overrides: Optional[Sequence[str]] = None,
) -> DictConfig:
    """
    Builds the effective configuration: schema defaults, then a preset, then a user
    file, then dotted command-line overrides such as `train.epochs=3`.

    Args:
        path (Optional[str]):
            YAML file to merge
        preset (Optional[str]):
            name of a bundled preset
        overrides (Optional[Sequence[str]]):
            dotlist overrides
    Returns:
        DictConfig: validated configuration
    """
    cfg = schema()
    if preset is not None:
        cfg = _merge(cfg, OmegaConf.load(preset_path(preset)), f"preset '{preset}'")
    if path is not None:
        if not os.path.isfile(path):
            raise FileNotFoundError(f"configuration file '{path}' does not exist")
        cfg = _merge(cfg, OmegaConf.load(path), path)
    if overrides:
        try:
            dotlist = OmegaConf.from_dotlist(list(overrides))
        except OmegaConfBaseException as e:
            key = getattr(e, "full_key", None) or None
            raise ConfigurationException(_message(e), key=key) from None
        cfg = _merge(cfg, dotlist, "command line")
    sanity_checks(cfg)
    return cfg


def sanity_checks(cfg: DictConfig) -> None:
    """
    Cross-field validation the schema types cannot express.

    Args:
        cfg (DictConfig):
            configuration to check
    Raises:
        ConfigurationException: naming the offending key
    """

    def check(condition: bool, key: str, message: str) -> None:
        if not condition:
            raise ConfigurationException(message, key=key)

    data, model, train, evaluation = cfg.dataset, cfg.model, cfg.train, cfg.eval

    fractions = list(data.split_fractions)
    check(len(fractions) == 3, "dataset.split_fractions", "expected three fractions")
    check(
        all(f >= 0 for f in fractions) and abs(sum(fractions) - 1.0) < 1e-9,
        "dataset.split_fractions",
        "fractions should be non-negative and sum to 1",
    )
    check(data.window_hours > 0, "dataset.window_hours", "should be strictly positive")
    check(data.min_user_checkins >= 0, "dataset.min_user_checkins", "should be >= 0")
    check(data.min_poi_visits >= 0, "dataset.min_poi_visits", "should be >= 0")
    check(data.n_geo_clusters >= 1, "dataset.n_geo_clusters", "should be >= 1")
    check(data.kmeans_max_iters >= 1, "dataset.kmeans_max_iters", "should be >= 1")

    check(
        model.slots_per_day >= 1 and 24 % model.slots_per_day == 0,
        "model.slots_per_day",
        f"{model.slots_per_day} does not divide 24",
    )
    dims = ("user_dim", "poi_dim", "category_dim", "geo_dim", "slot_dim", "hidden_size")
    for key in dims:
        check(model[key] >= 1, f"model.{key}", "should be >= 1")
    check(model.iac_layers >= 1, "model.iac_layers", "should be >= 1")
    check(model.iac_heads >= 1, "model.iac_heads", "should be >= 1")
    width = model.user_dim + model.poi_dim + model.category_dim + model.geo_dim
    check(
        width % model.iac_heads == 0,
        "model.iac_heads",
        f"leaf width {width} is not divisible by {model.iac_heads} heads",
    )
    check(
        model.hidden_size % model.iac_heads == 0,
        "model.iac_heads",
        f"hidden size {model.hidden_size} is not divisible by {model.iac_heads} heads",
    )
    check(
        model.leaf_fanout is None or model.leaf_fanout >= 1,
        "model.leaf_fanout",
        "should be empty or >= 1",
    )
    check(
        model.root in ("current_day", "super_root"),
        "model.root",
        f"'{model.root}' should be current_day or super_root",
    )
    check(model.max_days >= 1, "model.max_days", "should be >= 1")
    check(
        model.dtype in ("float64", "float32"),
        "model.dtype",
        f"'{model.dtype}' should be float64 or float32",
    )

    check(train.lr > 0, "train.lr", "should be strictly positive")
    check(train.weight_decay >= 0, "train.weight_decay", "should be >= 0")
    check(
        len(train.betas) == 2 and all(0.0 <= b < 1.0 for b in train.betas),
        "train.betas",
        "expected two values in [0, 1)",
    )
    check(train.lr_step >= 1, "train.lr_step", "should be >= 1")
    check(0 < train.lr_gamma <= 1, "train.lr_gamma", "should be in (0, 1]")
    check(train.epochs >= 0, "train.epochs", "should be >= 0")
    check(train.batch_size >= 1, "train.batch_size", "should be >= 1")
    for key in ("dropout_embed", "dropout_param"):
        check(0.0 <= train[key] < 1.0, f"train.{key}", "should be in [0, 1)")
    check(
        train.clip_grad_norm is None or train.clip_grad_norm > 0,
        "train.clip_grad_norm",
        "should be empty or strictly positive",
    )

    check(
        evaluation.split in ("train", "valid", "test"),
        "eval.split",
        f"'{evaluation.split}' should be train, valid or test",
    )
    check(
        evaluation.mode in ("all_prefixes", "last_prefix"),
        "eval.mode",
        f"'{evaluation.mode}' should be all_prefixes or last_prefix",
    )
    check(
        len(evaluation.ks) > 0 and all(k >= 1 for k in evaluation.ks),
        "eval.ks",
        "expected a non-empty list of positive cut-offs",
    )
    check(evaluation.top_k >= 1, "eval.top_k", "should be >= 1")
    check(evaluation.batch_size >= 1, "eval.batch_size", "should be >= 1")


def config_hash(cfg: DictConfig, section: Optional[str] = None) -> str:
    """
    SHA-256 of the resolved configuration serialized as YAML with sorted keys.

    Args:
        cfg (DictConfig):
            configuration
        section (Optional[str]):
            restrict the hash to one top-level section, e.g. "dataset"
    """
    node = cfg if section is None else cfg[section]
    text = OmegaConf.to_yaml(node, resolve=True, sort_keys=True)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def to_container(cfg: DictConfig) -> Dict[str, Any]:
    """"""
    return OmegaConf.to_container(cfg, resolve=True)


def from_container(values: Dict[str, Any]) -> DictConfig:
    """Re-validates a configuration stored as plain data, e.g. in a checkpoint."""
    cfg = _merge(schema(), OmegaConf.create(values), "stored configuration")
    sanity_checks(cfg)
    return cfg


def save_config(cfg: DictConfig, path: str) -> None:
    """Writes the effective configuration; loading it back reproduces the run."""
    from .utils.utils_fct import atomic_write

    with atomic_write(path, "w") as handle:
        handle.write(OmegaConf.to_yaml(cfg, resolve=True, sort_keys=True))
    logging.info(f"Effective configuration written to '{path}'")


def reference_rows() -> List[List[str]]:
    """
    One row per configuration key: dotted path, type, default and description.
    """
    rows = []

    def visit(cls: type, prefix: str) -> None:
        for item in dataclasses.fields(cls):
            key = f"{prefix}{item.name}"
            if dataclasses.is_dataclass(item.type):
                visit(item.type, f"{key}.")
                continue
            if item.default is not dataclasses.MISSING:
                default = item.default
            elif item.default_factory is not dataclasses.MISSING:
                default = item.default_factory()
            else:
                default = None
            type_name = getattr(item.type, "__name__", None) or str(item.type)
            type_name = type_name.replace("typing.", "")
            rows.append([key, type_name, repr(default), item.metadata.get("help", "")])

    visit(AppConfig, "")
    return rows
