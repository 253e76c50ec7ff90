import json
import os

import pytest

from mtnet.assistants import TrainAssistant
from mtnet.data.modules import MobilityDataModule
from mtnet.models import MTNet
from mtnet.utils.callbacks import BestModelSelection, CheckpointEveryNEpochs
from mtnet.utils.errors import ConfigurationException


@pytest.fixture
def toy_assistant(toy_bundle):
    return TrainAssistant("toy", bundle=toy_bundle, train_kwargs={"epochs": 2})


class TestTrainAssistant:
    def test_sanity_assistant(self, toy_assistant, toy_bundle):
        """"""
        assert toy_assistant.config.train.epochs == 2
        assert isinstance(toy_assistant.data, MobilityDataModule)
        assert isinstance(toy_assistant.model, MTNet)
        assert toy_assistant.model.hparams["n_pois"] == toy_bundle.vocab.n_pois
        assert toy_assistant.model.hparams["n_users"] == toy_bundle.vocab.n_users

    def test_leaf_fanout_is_resolved(self, toy_assistant):
        """"""
        assert toy_assistant.config.model.leaf_fanout is None
        assert toy_assistant.data.leaf_fanout >= 1
        assert toy_assistant.model.leaf_fanout == toy_assistant.data.leaf_fanout

    def test_data(self, toy_assistant):
        """"""
        data = toy_assistant.data
        assert len(data.train) > len(data.val) > 0
        batches = list(data.train_dataloader())
        assert len(batches) == data.n_batches(len(data.train), data.train_batch_size)

    def test_section_kwargs(self, toy_bundle):
        """"""
        assistant = TrainAssistant(
            "toy",
            bundle=toy_bundle,
            model_kwargs={"hidden_size": 8, "root": "super_root"},
            train_kwargs={"ablation": {"no_iac": True}},
        )
        assert assistant.model.hidden_size == 8
        assert assistant.model.root == "super_root"
        assert assistant.model.leaf_iac is None

    def test_invalid_kwargs(self, toy_bundle):
        """"""
        with pytest.raises(ConfigurationException):
            TrainAssistant("toy", bundle=toy_bundle, model_kwargs={"slots_per_day": 7})

    def test_callbacks(self, toy_assistant):
        """"""
        kinds = [type(callback) for callback in toy_assistant.callbacks]
        assert kinds == [CheckpointEveryNEpochs, BestModelSelection]

    def test_bundle_is_required(self):
        """"""
        with pytest.raises(ValueError):
            TrainAssistant("toy").bundle

    def test_bundle_path(self, toy_bundle_path, toy_bundle):
        """"""
        assistant = TrainAssistant("toy", bundle_path=toy_bundle_path)
        assert assistant.bundle.vocab == toy_bundle.vocab

    def test_fit(self, toy_assistant, tmp_path):
        """"""
        output_dir = str(tmp_path / "run")
        trainer = toy_assistant.fit(output_dir, progress=False)
        assert len(trainer.history) == 2
        with open(os.path.join(output_dir, "metrics.jsonl")) as handle:
            records = [json.loads(line) for line in handle]
        assert [r["epoch"] for r in records] == [1, 2]
        assert "acc@1" in records[0]["valid"]
        checkpoints = sorted(os.listdir(os.path.join(output_dir, "checkpoints")))
        assert checkpoints == ["best.npz", "epoch-001.npz", "epoch-002.npz", "last.npz"]
        assert os.path.isfile(os.path.join(output_dir, "config.yaml"))
        assert os.path.isfile(os.path.join(output_dir, "summary.json"))
        model = MTNet.load_from_checkpoint(trainer.best_checkpoint)
        fingerprint = toy_assistant.bundle.vocab.fingerprint()
        assert model.checkpoint.vocab_fingerprint == fingerprint
        assert model.checkpoint.config.train.epochs == 2

    def test_repr(self, toy_assistant):
        """"""
        assert str(toy_assistant) == "TrainAssistant_toy"
