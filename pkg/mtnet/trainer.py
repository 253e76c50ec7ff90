import json
import logging
import os
import sys
import time
from collections import defaultdict
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
from omegaconf import DictConfig
from tqdm import tqdm

from .autodiff import backward
from .data.modules import MobilityDataModule, TreeBatch
from .models import MTNet
from .utils.callbacks import Callback, CheckpointRecord
from .utils.checkpoint import save_checkpoint
from .utils.errors import NonFiniteGradientError
from .utils.optimizers import Adam
from .utils.scorers import RankingScorer
from .utils.utils_fct import atomic_write

METRICS_FILE = "metrics.jsonl"
CHECKPOINT_DIR = "checkpoints"
LAST_CHECKPOINT = "last.npz"


class Trainer(object):
    """
    Optimization loop: seeded shuffling, one forward/backward per batch, Adam with a
    step learning-rate schedule, per-epoch validation and callbacks.

    Args:
        config (DictConfig):
            full configuration of the run, stored in every checkpoint
        output_dir (str):
            directory receiving `metrics.jsonl` and `checkpoints/`
        callbacks (Optional[List[Callback]]):
            hooks called around the loop
        vocab_fingerprint (str):
            fingerprint of the training vocabulary, stored in every checkpoint
        progress (bool):
            show tqdm progress bars
        profile (bool):
            log the per-primitive timings of the last batch of every epoch
    """

    def __init__(
        self,
        config: DictConfig,
        output_dir: str,
        callbacks: Optional[List[Callback]] = None,
        vocab_fingerprint: str = "",
        progress: bool = True,
        profile: bool = False,
    ):
        self.config = config
        self.output_dir = output_dir
        self.checkpoint_dir = os.path.join(output_dir, CHECKPOINT_DIR)
        self.callbacks = list(callbacks or [])
        self.vocab_fingerprint = vocab_fingerprint
        self.progress = progress and sys.stderr.isatty()
        self.profile = profile

        self.max_epochs = int(config.train.epochs)
        self.current_epoch = 0
        self.optimizer: Optional[Adam] = None
        self.scheduler = None
        self.history: List[Dict[str, Any]] = []
        self.checkpoint_records: List[CheckpointRecord] = []
        self.best_checkpoint: Optional[str] = None
        self.last_checkpoint: Optional[str] = None
        self.last_checkpoint_sha: Optional[str] = None
        self.profile_tables: List[str] = []

        seeds = np.random.SeedSequence(int(config.train.seed)).spawn(2)
        self.shuffle_rng = np.random.default_rng(seeds[0])
        self.dropout_rng = np.random.default_rng(seeds[1])

    def _call(self, hook: str, *args) -> None:
        """"""
        for callback in self.callbacks:
            getattr(callback, hook)(self, *args)

    def save_checkpoint(
        self,
        path: str,
        metrics: Optional[Dict[str, float]] = None,
        epoch: Optional[int] = None,
    ) -> str:
        """Writes the current model and optimizer state."""
        return save_checkpoint(
            path,
            self.model,
            optimizer=self.optimizer,
            config=self.config,
            vocab_fingerprint=self.vocab_fingerprint,
            epoch=self.current_epoch + 1 if epoch is None else epoch,
            metrics=metrics,
        )

    def train_epoch(
        self,
        model: MTNet,
        batches: Iterable[TreeBatch],
        n_batches: Optional[int] = None,
    ) -> Dict[str, float]:
        """
        One pass over the training batches.

        Args:
            model (MTNet):
                model to optimize
            batches (Iterable[TreeBatch]):
                shuffled training batches
            n_batches (Optional[int]):
                number of batches, for the progress bar
        Returns:
            Dict[str, float]: sample-weighted mean losses, mean gradient norm and the
            number of batches and samples
        Raises:
            NonFiniteGradientError: naming the first parameter with a NaN or Inf
                gradient
        """
        totals = defaultdict(float)
        n_samples = 0
        norms = []
        tape = None
        iterator = tqdm(
            batches,
            total=n_batches,
            desc=f"epoch {self.current_epoch + 1}/{self.max_epochs}",
            disable=not self.progress,
            leave=False,
        )
        for batch in iterator:
            self.optimizer.zero_grad()
            output = model.training_step(batch, rng=self.dropout_rng)
            tape = backward(output.full_loss)
            try:
                norms.append(self.optimizer.step())
            except NonFiniteGradientError as e:
                logging.error(
                    f"Aborting epoch {self.current_epoch + 1}: non-finite gradient for"
                    f" '{e.parameter}' (loss={output.full_loss.item()})"
                )
                raise
            for key, value in output.to_dict().items():
                totals[key] += value * len(batch)
            n_samples += len(batch)
            iterator.set_postfix(loss=f"{output.full_loss.item():.4f}")

        if self.profile and tape is not None:
            table = tape.profile_table()
            self.profile_tables.append(table)
            logging.info(f"Primitive profile of the last batch:\n{table}")

        metrics = {key: value / max(n_samples, 1) for key, value in totals.items()}
        metrics["grad_norm"] = float(np.mean(norms)) if norms else 0.0
        metrics["n_batches"] = len(norms)
        metrics["n_samples"] = n_samples
        return metrics

    def validate(
        self, model: MTNet, batches: Iterable[TreeBatch], ks=(1, 5, 10)
    ) -> Dict[str, float]:
        """Ranking metrics and mean losses over validation batches, without recording."""
        scorer = RankingScorer(ks)
        for batch in batches:
            prediction, losses = model.validation_step(batch)
            scorer.add(
                prediction.scores.data, batch.targets["poi"], losses, batch.label_slot
            )
        if scorer.n_samples == 0:
            return {}
        return scorer.to_dict()

    def fit(self, model: MTNet, datamodule: MobilityDataModule) -> List[Dict[str, Any]]:
        """
        Trains `model` for `train.epochs` epochs.

        Args:
            model (MTNet):
                freshly built model
            datamodule (MobilityDataModule):
                data module, set up by this method when needed
        Returns:
            List[Dict[str, Any]]: one metrics record per epoch, also appended to
            `metrics.jsonl`
        """
        if datamodule.train is None:
            datamodule.setup()
        self.model = model
        self.optimizer, self.scheduler = model.configure_optimizers()
        os.makedirs(self.checkpoint_dir, exist_ok=True)
        metrics_path = os.path.join(self.output_dir, METRICS_FILE)
        open(metrics_path, "w").close()

        n_train = len(datamodule.train)
        logging.info(
            f"Training {model} ({model.n_parameters} parameters) on {n_train} samples"
            f" for {self.max_epochs} epochs"
        )
        self._call("on_fit_start", model)
        start = time.perf_counter()
        for epoch in range(self.max_epochs):
            self.current_epoch = epoch
            lr = self.scheduler.set_epoch(epoch)
            self._call("on_train_epoch_start", model)

            train_metrics = self.train_epoch(
                model,
                datamodule.train_dataloader(rng=self.shuffle_rng),
                datamodule.n_batches(n_train, datamodule.train_batch_size),
            )
            valid_metrics = self.validate(
                model, datamodule.val_dataloader(), ks=self.config.eval.ks
            )
            record = {
                "epoch": epoch + 1,
                "lr": lr,
                "train": train_metrics,
                "valid": valid_metrics,
                "elapsed_seconds": round(time.perf_counter() - start, 3),
            }
            self.history.append(record)
            with open(metrics_path, "a") as handle:
                handle.write(json.dumps(record, sort_keys=True) + "\n")
            logging.info(
                f"Epoch {epoch + 1}/{self.max_epochs}: lr={lr:.3e}"
                f" loss={train_metrics.get('loss', float('nan')):.4f}"
                f" grad_norm={train_metrics['grad_norm']:.3f}"
                + "".join(f" {k}={v:.4f}" for k, v in valid_metrics.items())
            )
            self._call("on_validation_end", model, valid_metrics)

        self.current_epoch = max(self.max_epochs - 1, 0)
        self.last_checkpoint = os.path.join(self.checkpoint_dir, LAST_CHECKPOINT)
        last_metrics = self.history[-1]["valid"] if self.history else {}
        self.last_checkpoint_sha = self.save_checkpoint(
            self.last_checkpoint, last_metrics, epoch=len(self.history)
        )
        self._call("on_fit_end", model)
        return self.history

    def write_summary(self, path: Optional[str] = None) -> str:
        """Writes the epoch history and the selected checkpoints as one JSON file."""
        path = path or os.path.join(self.output_dir, "summary.json")
        summary = {
            "epochs": self.max_epochs,
            "last_checkpoint": self.last_checkpoint,
            "last_checkpoint_sha256": self.last_checkpoint_sha,
            "best_checkpoint": self.best_checkpoint,
            "history": self.history,
        }
        with atomic_write(path, "w") as handle:
            json.dump(summary, handle, indent=2, sort_keys=True)
        return path
