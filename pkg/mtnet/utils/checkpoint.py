import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
from omegaconf import DictConfig, OmegaConf

from .optimizers import OptimizerState
from .utils_fct import arrays_sha256, load_archive, save_archive

CHECKPOINT_FORMAT = "mtnet-checkpoint/1"
PARAM_PREFIX = "param/"
ADAM_PREFIX = "adam/"


@dataclass
class Checkpoint:
    """
    Content of a checkpoint file.

    Attributes:
        arrays (Dict[str, np.ndarray]): parameters under "param/", Adam moments under
            "adam/"
        metadata (Dict[str, Any]): configuration, hyper-parameters, vocabulary
            fingerprint, epoch, step and validation metrics
        path (str): file it was read from
    """

    arrays: Dict[str, np.ndarray]
    metadata: Dict[str, Any] = field(default_factory=dict)
    path: str = ""

    @property
    def hparams(self) -> Dict[str, Any]:
        """"""
        return dict(self.metadata["hparams"])

    @property
    def config(self) -> DictConfig:
        """Stored configuration, re-validated against the schema."""
        from ..config import from_container, schema

        stored = self.metadata.get("config")
        return from_container(stored) if stored else schema()

    @property
    def config_hash(self) -> str:
        """"""
        return self.metadata.get("config_hash", "")

    @property
    def vocab_fingerprint(self) -> str:
        """"""
        return self.metadata.get("vocab_fingerprint", "")

    @property
    def epoch(self) -> int:
        """"""
        return int(self.metadata.get("epoch", 0))

    @property
    def step(self) -> int:
        """"""
        return int(self.metadata.get("step", 0))

    @property
    def metrics(self) -> Dict[str, float]:
        """"""
        return dict(self.metadata.get("metrics", {}))

    @property
    def params(self) -> Dict[str, np.ndarray]:
        """"""
        return {k: v for k, v in self.arrays.items() if k.startswith(PARAM_PREFIX)}

    @property
    def optimizer_state(self) -> Optional[OptimizerState]:
        """Adam moments, None when the checkpoint was saved without them."""
        if f"{ADAM_PREFIX}step" not in self.arrays:
            return None
        return OptimizerState.from_arrays(self.arrays, prefix=ADAM_PREFIX)


def save_checkpoint(
    path: str,
    model,
    optimizer=None,
    config: Optional[DictConfig] = None,
    vocab_fingerprint: str = "",
    epoch: int = 0,
    metrics: Optional[Dict[str, float]] = None,
) -> str:
    """
    Writes a model, and optionally its optimizer state, to `path`.

    The file only depends on its content: saving the same state twice gives the
    same bytes.

    Args:
        path (str):
            destination file
        model (MTNet):
            model to store
        optimizer (Optional[Adam]):
            optimizer whose moments and step counter should be stored
        config (Optional[DictConfig]):
            effective configuration of the run
        vocab_fingerprint (str):
            fingerprint of the vocabulary the model was trained on
        epoch (int):
            number of completed epochs
        metrics (Optional[Dict[str, float]]):
            validation metrics at that epoch
    Returns:
        str: SHA-256 of the written file
    """
    from ..config import config_hash, to_container

    params = model.params.to_arrays(prefix=PARAM_PREFIX)
    arrays = dict(params)
    if optimizer is not None:
        arrays.update(optimizer.state.to_arrays(prefix=ADAM_PREFIX))

    metadata = {
        "format": CHECKPOINT_FORMAT,
        "hparams": model.hparams,
        "config": to_container(config) if config is not None else None,
        "config_hash": config_hash(config) if config is not None else "",
        "vocab_fingerprint": vocab_fingerprint,
        "epoch": int(epoch),
        "step": int(optimizer.state.step) if optimizer is not None else 0,
        "metrics": {k: float(v) for k, v in sorted((metrics or {}).items())},
        "params_sha256": arrays_sha256(params),
    }
    digest = save_archive(path, arrays, metadata)
    logging.info(f"Checkpoint saved to '{path}' (epoch {epoch}, sha256 {digest[:12]})")
    return digest


def load_checkpoint(path: str) -> Checkpoint:
    """
    Reads a checkpoint written by `save_checkpoint`.

    Raises:
        FileNotFoundError: when `path` does not exist
        ValueError: when the file is not a checkpoint
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"checkpoint '{path}' does not exist")
    arrays, metadata = load_archive(path)
    if metadata.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(
            f"'{path}' is not a checkpoint (format {metadata.get('format')!r},"
            f" expected {CHECKPOINT_FORMAT!r})"
        )
    return Checkpoint(arrays=arrays, metadata=metadata, path=path)


def describe(checkpoint: Checkpoint) -> str:
    """One YAML document summarizing a checkpoint without its arrays."""
    summary = {k: v for k, v in checkpoint.metadata.items() if k != "config"}
    summary["n_arrays"] = len(checkpoint.arrays)
    return OmegaConf.to_yaml(OmegaConf.create(summary), sort_keys=True)
