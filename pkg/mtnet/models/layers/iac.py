import math
from typing import List, Optional, Tuple

import numpy as np

from ...autodiff import Tensor
from ...autodiff import functional as F
from ..params import ModelParams


class SiblingAttention(object):
    """
    Intra-hierarchy communication: a stack of multi-head self-attention layers run
    over the children of one parent.

    Every layer computes, for each head, scaled dot-product attention with its own
    query, key and value projections (D x D/H) and scale sqrt(D/H), concatenates the
    heads, adds the input back and normalizes, then applies a two-layer relu
    feed-forward block with its own residual connection and layer normalization.
    There is no positional encoding, so the stack is equivariant to permutations of
    the group members.

    Args:
        params (ModelParams):
            registry receiving the parameters
        name (str):
            prefix of the parameter names
        width (int):
            width D of the member vectors
        n_layers (int):
            number of attention layers
        n_heads (int):
            number of heads per layer, must divide `width`
        ffn_dim (int):
            inner width of the feed-forward block
        dropout (float):
            dropout probability inside the feed-forward block
    """

    def __init__(
        self,
        params: ModelParams,
        name: str,
        width: int,
        n_layers: int = 2,
        n_heads: int = 2,
        ffn_dim: int = 1024,
        dropout: float = 0.0,
    ):
        if width % n_heads != 0:
            raise ValueError(f"width {width} is not divisible by {n_heads} heads")
        self.name = name
        self.width = width
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.head_dim = width // n_heads
        self.ffn_dim = ffn_dim
        self.dropout = dropout

        self.layers = []
        for layer in range(n_layers):
            prefix = f"{name}.layer{layer}"
            heads = [
                {
                    proj: params.add(f"{prefix}.head{h}.W_{proj}", (width, self.head_dim))
                    for proj in ("Q", "K", "V")
                }
                for h in range(n_heads)
            ]
            self.layers.append(
                {
                    "heads": heads,
                    "ln1_gain": params.add(f"{prefix}.ln1.gain", (width,), init="ones"),
                    "ln1_bias": params.add(f"{prefix}.ln1.bias", (width,), init="zeros"),
                    "W1": params.add(f"{prefix}.ffn.W1", (width, ffn_dim)),
                    "b1": params.add(f"{prefix}.ffn.b1", (ffn_dim,), init="zeros"),
                    "W2": params.add(f"{prefix}.ffn.W2", (ffn_dim, width)),
                    "b2": params.add(f"{prefix}.ffn.b2", (width,), init="zeros"),
                    "ln2_gain": params.add(f"{prefix}.ln2.gain", (width,), init="ones"),
                    "ln2_bias": params.add(f"{prefix}.ln2.bias", (width,), init="zeros"),
                }
            )

    def __call__(
        self,
        x: Tensor,
        mask: Optional[np.ndarray] = None,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
        return_attention: bool = False,
    ) -> Tuple[Tensor, List[np.ndarray]]:
        """
        Args:
            x (Tensor):
                group members of shape (G, M, D)
            mask (Optional[np.ndarray]):
                boolean array of shape (G, M), True on padded positions
            training (bool):
                enables dropout
            rng (Optional[np.random.Generator]):
                generator for dropout masks
            return_attention (bool):
                whether to collect attention weights
        Returns:
            Tuple[Tensor, List[np.ndarray]]: transformed members of shape (G, M, D),
            padded rows set to zero, and the attention weights of every layer with
            shape (G, H, M, M) when requested
        """
        if x.ndim != 3 or x.shape[-1] != self.width:
            raise ValueError(
                f"{self.name}: expected input (G, M, {self.width}), got {x.shape}"
            )
        groups, members, _ = x.shape
        if mask is None:
            mask = np.zeros((groups, members), dtype=bool)
        mask = np.asarray(mask)
        if mask.shape != (groups, members):
            raise ValueError(
                f"{self.name}: mask shape {mask.shape} != {(groups, members)}"
            )
        empty = mask.all(axis=1)
        if empty.any():
            raise ValueError(
                f"{self.name}: group {int(np.argmax(empty))} has every member masked"
            )

        valid = (~mask).astype(x.dtype)
        key_mask = mask[:, None, :]
        query_valid = valid[:, :, None]
        scale = 1.0 / math.sqrt(self.head_dim)

        attention = []
        hidden = x
        for layer in self.layers:
            outputs, weights = [], []
            for head in layer["heads"]:
                q = F.matmul(hidden, head["Q"])
                k = F.matmul(hidden, head["K"])
                v = F.matmul(hidden, head["V"])
                scores = F.scale(F.matmul(q, k, transpose_b=True), scale)
                alpha = F.mul(F.softmax(F.masked_fill(scores, key_mask)), query_valid)
                outputs.append(F.matmul(alpha, v))
                if return_attention:
                    weights.append(alpha.numpy())
            z = outputs[0] if len(outputs) == 1 else F.concat(outputs)
            hidden = F.layer_norm(F.add(hidden, z), layer["ln1_gain"], layer["ln1_bias"])

            inner = F.relu(F.add(F.matmul(hidden, layer["W1"]), layer["b1"]))
            inner = F.dropout(inner, self.dropout, rng, training)
            ffn = F.add(F.matmul(inner, layer["W2"]), layer["b2"])
            hidden = F.layer_norm(
                F.add(hidden, ffn), layer["ln2_gain"], layer["ln2_bias"]
            )
            if return_attention:
                attention.append(np.stack(weights, axis=1))

        return F.mul(hidden, query_valid), attention
