import logging
from typing import Optional

from ..bundle import DatasetBundle


class BaseDataModule(object):
    """
    Data module over a preprocessed dataset bundle.

    Attributes:
        bundle_path (Optional[str]): path of the bundle to load in `prepare_data`
        bundle (DatasetBundle): the loaded bundle
    """

    def __init__(
        self, bundle: Optional[DatasetBundle] = None, bundle_path: Optional[str] = None
    ):
        if bundle is None and bundle_path is None:
            raise ValueError("either a bundle or a bundle path is needed")
        self.bundle = bundle
        self.bundle_path = bundle_path

    def prepare_data(self) -> None:
        """Loads the bundle from `bundle_path` unless one was given."""
        if self.bundle is not None:
            return
        self.bundle = DatasetBundle.load(self.bundle_path)
        logging.info(
            f"DatasetBundle '{self.bundle_path}' successfully loaded:"
            f" {self.bundle.vocab}"
        )

    def setup(self, stage: Optional[str] = None) -> None:
        """"""
        raise NotImplementedError()
