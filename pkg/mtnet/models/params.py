import logging
from collections import OrderedDict
from typing import Dict, Iterator, Mapping, Optional, Tuple

import numpy as np
from tabulate import tabulate

from ..autodiff import Tensor

INIT_SCHEMES = ("uniform", "zeros", "ones", "normal")


class ModelParams(object):
    """
    Registry of every learnable tensor, addressable by a unique dotted name.

    Matrices are drawn from uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases start at
    zero and embeddings are drawn from normal(0, `embedding_std`). All draws come from
    the generator given at construction, in registration order.

    Args:
        rng (np.random.Generator):
            generator used for initialization
        dtype (np.dtype):
            floating point type of every parameter
        embedding_std (float):
            standard deviation of embedding tables
    """

    def __init__(
        self,
        rng: Optional[np.random.Generator] = None,
        dtype: np.dtype = np.float64,
        embedding_std: float = 0.02,
    ):
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.dtype = np.dtype(dtype)
        self.embedding_std = embedding_std
        self._tensors: "OrderedDict[str, Tensor]" = OrderedDict()

    def add(self, name: str, shape: Tuple[int, ...], init: str = "uniform") -> Tensor:
        """
        Registers a new parameter.

        Args:
            name (str):
                unique name, e.g. "period_irc.W_i"
            shape (Tuple[int, ...]):
                shape of the parameter
            init (str):
                one of "uniform" (fan-in scaled), "zeros", "ones" or "normal"
        Returns:
            Tensor: the registered parameter
        """
        if name in self._tensors:
            raise ValueError(f"parameter '{name}' is already registered")
        if init == "uniform":
            bound = 1.0 / np.sqrt(shape[0])
            values = self.rng.uniform(-bound, bound, size=shape)
        elif init == "zeros":
            values = np.zeros(shape)
        elif init == "ones":
            values = np.ones(shape)
        elif init == "normal":
            values = self.rng.normal(0.0, self.embedding_std, size=shape)
        else:
            raise ValueError(f"unknown init '{init}', expected one of {INIT_SCHEMES}")
        tensor = Tensor(values, requires_grad=True, name=name, dtype=self.dtype)
        self._tensors[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._tensors[name]
        except KeyError:
            raise KeyError(f"no parameter named '{name}'") from None

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        """"""
        return self._tensors.items()

    def as_dict(self) -> Dict[str, Tensor]:
        """"""
        return dict(self._tensors)

    @property
    def n_parameters(self) -> int:
        """Total number of scalars."""
        return int(sum(tensor.size for tensor in self._tensors.values()))

    def zero_grad(self) -> None:
        """"""
        for tensor in self._tensors.values():
            tensor.zero_grad()

    def to_arrays(self, prefix: str = "param/") -> Dict[str, np.ndarray]:
        """"""
        return {f"{prefix}{name}": t.data.copy() for name, t in self._tensors.items()}

    def load_arrays(
        self, arrays: Mapping[str, np.ndarray], prefix: str = "param/"
    ) -> None:
        """
        Copies stored values into the registered parameters.

        Raises:
            KeyError: when a registered parameter is missing from `arrays`
            ValueError: when a stored shape differs from the registered one
        """
        for name, tensor in self._tensors.items():
            key = f"{prefix}{name}"
            if key not in arrays:
                raise KeyError(f"parameter '{name}' is missing from the checkpoint")
            value = np.asarray(arrays[key])
            if value.shape != tensor.shape:
                raise ValueError(
                    f"parameter '{name}' has shape {value.shape} in the checkpoint,"
                    f" expected {tensor.shape}"
                )
            tensor.data[...] = value
        unexpected = [
            key[len(prefix) :]
            for key in arrays
            if key.startswith(prefix) and key[len(prefix) :] not in self._tensors
        ]
        if unexpected:
            logging.warning(f"Ignoring unexpected checkpoint parameters: {unexpected}")

    def summary(self) -> str:
        """Table of parameter names, shapes and sizes."""
        rows = [[name, tuple(t.shape), t.size] for name, t in self._tensors.items()]
        rows.append(["total", "", self.n_parameters])
        return tabulate(rows, headers=["parameter", "shape", "size"])
