import logging
import os
from typing import Any, Dict, List, Optional, Sequence

from hydra.utils import instantiate
from omegaconf import DictConfig, OmegaConf

from ..config import from_container, load_config, save_config, to_container
from ..data import DatasetBundle
from ..data.modules import MobilityDataModule
from ..utils.callbacks import Callback
from ..utils.utils_fct import deep_update


class TrainAssistant(object):
    """
    Helper object that holds and instantiates everything needed for training.

    It loads one of the bundled presets (or a given configuration) that can be
    overwritten by passing keyword arguments. It contains four sub-configurations:

    - *dataset*: how raw check-ins are parsed, filtered, split and clustered
    - *model*: parameters necessary to build the network, with its `_target_`
    - *train*: optimization, ablation switches and callbacks
    - *eval*: evaluation split, mode and cut-offs

    Args:
        name (Optional[str]):
            name of a preset: nyc, tky, ca or toy
        dataset_kwargs (Dict[str, Any]):
            keyword arguments that can be added or overwrite the 'dataset' section
        model_kwargs (Dict[str, Any]):
            keyword arguments that can be added or overwrite the 'model' section
        train_kwargs (Dict[str, Any]):
            keyword arguments that can be added or overwrite the 'train' section
        eval_kwargs (Dict[str, Any]):
            keyword arguments that can be added or overwrite the 'eval' section
        config (Optional[DictConfig]):
            complete configuration, used instead of a preset
        config_path (Optional[str]):
            YAML file merged on top of the preset
        overrides (Optional[Sequence[str]]):
            dotted overrides such as `train.epochs=3`
        bundle (Optional[DatasetBundle]):
            preprocessed dataset
        bundle_path (Optional[str]):
            path of a preprocessed dataset, loaded lazily
    """

    def __init__(
        self,
        name: Optional[str] = None,
        dataset_kwargs: Dict[str, Any] = None,
        model_kwargs: Dict[str, Any] = None,
        train_kwargs: Dict[str, Any] = None,
        eval_kwargs: Dict[str, Any] = None,
        config: Optional[DictConfig] = None,
        config_path: Optional[str] = None,
        overrides: Optional[Sequence[str]] = None,
        bundle: Optional[DatasetBundle] = None,
        bundle_path: Optional[str] = None,
    ):
        if config is None:
            config = load_config(path=config_path, preset=name, overrides=overrides)
        conf = to_container(config)
        for section, kws in zip(
            ["dataset", "model", "train", "eval"],
            [dataset_kwargs, model_kwargs, train_kwargs, eval_kwargs],
        ):
            if kws is not None:
                conf[section] = deep_update(conf[section], kws)

        self.name = name or config.dataset.name
        self.config = from_container(conf)
        self.bundle_path = bundle_path

        self._bundle = bundle
        self._model = None
        self._data = None
        self._callbacks = None

    @property
    def bundle(self) -> DatasetBundle:
        """"""
        if self._bundle is None:
            if self.bundle_path is None:
                raise ValueError("the assistant needs a bundle or a bundle path")
            self._bundle = DatasetBundle.load(self.bundle_path)
        return self._bundle

    @property
    def data(self) -> MobilityDataModule:
        """"""
        if self._data is None:
            model, train = self.config.model, self.config.train
            data = MobilityDataModule(
                bundle=self.bundle,
                slots_per_day=model.slots_per_day,
                leaf_fanout=model.leaf_fanout,
                max_days=model.max_days,
                train_batch_size=train.batch_size,
                eval_batch_size=self.config.eval.batch_size,
                last_step_only=train.last_step_only,
                eval_mode=self.config.eval.mode,
                bucket_by_shape=train.bucket_by_shape,
                shuffle=train.shuffle,
            )
            data.prepare_data()
            data.setup()
            self.data = data
        return self._data

    @data.setter
    def data(self, value: MobilityDataModule) -> None:
        """"""
        self._data = value

    @property
    def model(self) -> Any:
        """"""
        if self._model is None:
            model_conf = OmegaConf.create(to_container(self.config.model))
            model_conf.leaf_fanout = self.data.leaf_fanout
            self.model = instantiate(
                model_conf,
                training_config=self.config.train,
                _recursive_=False,
                **self.bundle.vocab.sizes(),
            )
        return self._model

    @model.setter
    def model(self, value: Any) -> None:
        """"""
        self._model = value

    @property
    def callbacks(self) -> List[Callback]:
        """"""
        if self._callbacks is None:
            self.callbacks = [
                instantiate(callback) for callback in self.config.train.callbacks
            ]
        return self._callbacks

    @callbacks.setter
    def callbacks(self, value: List[Callback]) -> None:
        """"""
        self._callbacks = value

    def trainer(self, output_dir: str, progress: bool = True, profile: bool = False):
        """
        Builds a `Trainer` writing into `output_dir`, together with the effective
        configuration of the run.
        """
        from ..trainer import Trainer

        os.makedirs(output_dir, exist_ok=True)
        save_config(self.config, os.path.join(output_dir, "config.yaml"))
        return Trainer(
            self.config,
            output_dir,
            callbacks=self.callbacks,
            vocab_fingerprint=self.bundle.vocab.fingerprint(),
            progress=progress,
            profile=profile,
        )

    def fit(self, output_dir: str, progress: bool = True, profile: bool = False):
        """Trains the model and returns the trainer holding its history."""
        trainer = self.trainer(output_dir, progress=progress, profile=profile)
        trainer.fit(self.model, self.data)
        trainer.write_summary()
        logging.info(f"Training outputs written to '{output_dir}'")
        return trainer

    def __repr__(self):
        return f"<TrainAssistant(name={self.name})>"

    def __str__(self):
        return f"TrainAssistant_{self.name}"
