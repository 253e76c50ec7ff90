from typing import Dict


class Callback(object):
    """
    Hooks called by `mtnet.trainer.Trainer` around the optimization loop.
    Every hook receives the trainer and the model; the default implementation does
    nothing.
    """

    def on_fit_start(self, trainer, model) -> None:
        """"""

    def on_train_epoch_start(self, trainer, model) -> None:
        """"""

    def on_validation_end(self, trainer, model, metrics: Dict[str, float]) -> None:
        """
        Called once per epoch after validation.

        Args:
            metrics (Dict[str, float]):
                training and validation metrics of the epoch
        """

    def on_fit_end(self, trainer, model) -> None:
        """"""
