from ...autodiff import Tensor
from ...autodiff import functional as F
from ..params import ModelParams


class PredictionHead(object):
    """
    Dense layer mapping a node representation to logits over one vocabulary.

    Args:
        params (ModelParams):
            registry receiving the parameters
        name (str):
            prefix of the parameter names, e.g. "head.day"
        in_dim (int):
            width of the node representation
        out_dim (int):
            size of the vocabulary
    """

    def __init__(self, params: ModelParams, name: str, in_dim: int, out_dim: int):
        self.name = name
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.W = params.add(f"{name}.W", (in_dim, out_dim))
        self.b = params.add(f"{name}.b", (out_dim,), init="zeros")

    def __call__(self, x: Tensor) -> Tensor:
        """"""
        if x.shape[-1] != self.in_dim:
            raise ValueError(
                f"{self.name}: expected inputs of width {self.in_dim}, got {x.shape}"
            )
        return F.add(F.matmul(x, self.W), self.b)
