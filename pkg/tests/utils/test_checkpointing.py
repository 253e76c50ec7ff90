import os

import numpy as np
import pytest

from mtnet.models.diagnostics import toy_model
from mtnet.utils.callbacks import BestModelSelection, CheckpointEveryNEpochs
from mtnet.utils.callbacks.checkpointing import CheckpointRecord, select_best
from mtnet.utils.checkpoint import describe, load_checkpoint, save_checkpoint
from mtnet.utils.optimizers import Adam
from mtnet.utils.utils_fct import file_sha256, load_archive, save_archive


def _records(values):
    return [
        CheckpointRecord(epoch=i + 1, path=f"epoch-{i + 1:03d}.npz", metrics={"acc@1": v})
        for i, v in enumerate(values)
    ]


class TestSelectBest:
    def test_single(self):
        """"""
        records = _records([0.2])
        assert select_best(records) is records[0]

    def test_ties_go_to_the_earliest_epoch(self):
        """"""
        assert select_best(_records([0.1, 0.3, 0.3, 0.2])).epoch == 2

    def test_monotone_run(self):
        """"""
        assert select_best(_records([0.1, 0.2, 0.3])).epoch == 3

    def test_order_of_records_does_not_matter(self):
        """"""
        records = _records([0.1, 0.3, 0.3, 0.2])[::-1]
        assert select_best(records).epoch == 2

    def test_empty(self):
        """"""
        with pytest.raises(ValueError):
            select_best([])


class _FakeTrainer:
    def __init__(self, directory, max_epochs):
        self.checkpoint_dir = directory
        self.max_epochs = max_epochs
        self.current_epoch = 0
        self.checkpoint_records = []
        self.best_checkpoint = None

    def save_checkpoint(self, path, metrics=None):
        with open(path, "w") as handle:
            handle.write(str(metrics))


class TestCallbacks:
    def test_every_n_epochs_and_last(self, tmp_path):
        """"""
        trainer = _FakeTrainer(str(tmp_path), max_epochs=5)
        callback = CheckpointEveryNEpochs(every_n_epochs=2)
        for epoch, value in enumerate([0.1, 0.4, 0.2, 0.4, 0.3]):
            trainer.current_epoch = epoch
            callback.on_validation_end(trainer, None, {"acc@1": value})
        assert [r.epoch for r in trainer.checkpoint_records] == [2, 4, 5]
        assert os.path.isfile(tmp_path / "epoch-004.npz")

        selection = BestModelSelection()
        selection.on_fit_end(trainer, None)
        assert selection.best.epoch == 2
        assert trainer.best_checkpoint == str(tmp_path / "best.npz")
        assert file_sha256(trainer.best_checkpoint) == file_sha256(
            str(tmp_path / "epoch-002.npz")
        )

    def test_invalid_period(self):
        """"""
        with pytest.raises(ValueError):
            CheckpointEveryNEpochs(every_n_epochs=0)


class TestArchive:
    def test_bytes_only_depend_on_content(self, tmp_path):
        """"""
        arrays = {"b": np.arange(3.0), "a": np.eye(2)}
        first = save_archive(str(tmp_path / "1.npz"), arrays, {"k": 1})
        second = save_archive(
            str(tmp_path / "2.npz"), {"a": np.eye(2), "b": np.arange(3.0)}, {"k": 1}
        )
        assert first == second == file_sha256(str(tmp_path / "1.npz"))
        loaded, metadata = load_archive(str(tmp_path / "1.npz"))
        np.testing.assert_array_equal(loaded["a"], np.eye(2))
        assert metadata == {"k": 1}
        # plain numpy can read it too
        assert set(np.load(str(tmp_path / "1.npz")).files) >= {"a", "b"}

    def test_object_arrays_are_refused(self, tmp_path):
        """"""
        with pytest.raises(TypeError):
            save_archive(str(tmp_path / "x.npz"), {"a": np.array([{}])}, {})
        assert not os.path.exists(tmp_path / "x.npz")


class TestCheckpoint:
    def test_optimizer_state_and_metadata(self, tmp_path, toy_config):
        """"""
        model = toy_model()
        for _, tensor in model.params.items():
            tensor.grad = np.ones_like(tensor.data)
        optimizer = Adam(model.params.as_dict(), lr=0.01)
        optimizer.step()
        path = str(tmp_path / "ckpt.npz")
        digest = save_checkpoint(
            path,
            model,
            optimizer=optimizer,
            config=toy_config,
            vocab_fingerprint="abc",
            epoch=3,
            metrics={"acc@1": 0.5},
        )
        checkpoint = load_checkpoint(path)
        assert digest == file_sha256(path)
        assert checkpoint.epoch == 3
        assert checkpoint.step == 1
        assert checkpoint.vocab_fingerprint == "abc"
        assert checkpoint.metrics == {"acc@1": 0.5}
        assert checkpoint.config.dataset.name == "toy"
        state = checkpoint.optimizer_state
        np.testing.assert_array_equal(
            state.exp_avg["embedding.poi"], optimizer.state.exp_avg["embedding.poi"]
        )
        assert "epoch" in describe(checkpoint)

    def test_same_state_same_bytes(self, tmp_path):
        """"""
        model = toy_model(seed=1)
        first = save_checkpoint(str(tmp_path / "a.npz"), model, epoch=1)
        second = save_checkpoint(str(tmp_path / "b.npz"), model, epoch=1)
        assert first == second

    def test_without_optimizer(self, tmp_path):
        """"""
        path = str(tmp_path / "model.npz")
        save_checkpoint(path, toy_model())
        assert load_checkpoint(path).optimizer_state is None
