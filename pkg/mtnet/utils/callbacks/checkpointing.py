import logging
import os
import shutil
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

from overrides import overrides

from .base import Callback


@dataclass
class CheckpointRecord:
    """
    Attributes:
        epoch (int): number of completed epochs when the checkpoint was written
        path (str): checkpoint file
        metrics (Dict[str, float]): validation metrics at that epoch
    """

    epoch: int
    path: str
    metrics: Dict[str, float] = field(default_factory=dict)


def select_best(
    records: Sequence[CheckpointRecord], monitor: str = "acc@1"
) -> CheckpointRecord:
    """
    Checkpoint with the highest `monitor` value, the earliest epoch among ties.

    Args:
        records (Sequence[CheckpointRecord]):
            evaluated checkpoints
        monitor (str):
            validation metric to maximize
    Returns:
        CheckpointRecord: the selected checkpoint
    """
    if not records:
        raise ValueError("cannot select a checkpoint among none")
    best = None
    for record in sorted(records, key=lambda r: r.epoch):
        value = record.metrics.get(monitor, float("-inf"))
        if best is None or value > best.metrics.get(monitor, float("-inf")):
            best = record
    return best


class CheckpointEveryNEpochs(Callback):
    """
    Save a checkpoint every N epochs, named after the number of completed epochs.

    Args:
        every_n_epochs (int):
            how often to save in epochs
        prefix (str):
            prefix of the file names
        save_last (bool):
            also save after the final epoch when it is not a multiple of N
    """

    def __init__(
        self, every_n_epochs: int = 1, prefix: str = "epoch", save_last: bool = True
    ):
        if every_n_epochs < 1:
            raise ValueError(f"every_n_epochs should be >= 1, got {every_n_epochs}")
        self.every_n_epochs = every_n_epochs
        self.prefix = prefix
        self.save_last = save_last

    @overrides
    def on_validation_end(self, trainer, model, metrics: Dict[str, float]) -> None:
        """"""
        epoch = trainer.current_epoch + 1
        last = epoch == trainer.max_epochs
        if epoch % self.every_n_epochs != 0 and not (self.save_last and last):
            return
        path = os.path.join(trainer.checkpoint_dir, f"{self.prefix}-{epoch:03d}.npz")
        trainer.save_checkpoint(path, metrics=metrics)
        trainer.checkpoint_records.append(
            CheckpointRecord(epoch=epoch, path=path, metrics=dict(metrics))
        )


class BestModelSelection(Callback):
    """
    Copies the checkpoint with the best validation metric to `best.npz` once
    training ends.

    Args:
        monitor (str):
            validation metric to maximize
        filename (str):
            name of the copy inside the checkpoint directory
    """

    def __init__(self, monitor: str = "acc@1", filename: str = "best.npz"):
        self.monitor = monitor
        self.filename = filename
        self.best: Optional[CheckpointRecord] = None

    @overrides
    def on_fit_end(self, trainer, model) -> None:
        """"""
        if not trainer.checkpoint_records:
            logging.warning("No checkpoint was written, skipping model selection")
            return
        self.best = select_best(trainer.checkpoint_records, self.monitor)
        destination = os.path.join(trainer.checkpoint_dir, self.filename)
        shutil.copyfile(self.best.path, destination)
        trainer.best_checkpoint = destination
        logging.info(
            f"Best checkpoint: epoch {self.best.epoch} with {self.monitor}="
            f"{self.best.metrics.get(self.monitor, float('nan')):.4f}, copied to"
            f" '{destination}'"
        )
