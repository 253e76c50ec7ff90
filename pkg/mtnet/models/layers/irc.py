from typing import Optional, Tuple

import numpy as np

from ...autodiff import Tensor
from ...autodiff import functional as F
from ..params import ModelParams


class NaryTreeLSTM(object):
    """
    Inter-hierarchy communication: an N-ary Tree-LSTM cell aggregating up to
    `fanout` ordered children into their parent.

    Every child position has its own matrices. They are stored stacked, so that the
    contribution of all children to a gate is a single product between the flattened
    children (G, N * C) and a (N * C, H) matrix. Forget gates exist per child and see
    every child, hence `U_f` is (N * C, N * H).

        i   = sigmoid(W_i x + sum_l U_i[l] h_l + b_i)
        f_k = sigmoid(W_f x + sum_l U_f[k, l] h_l + b_f)
        o   = sigmoid(W_o x + sum_l U_o[l] h_l + b_o)
        u   = tanh(W_u x + sum_l U_u[l] h_l + b_u)
        c   = i * u + sum_l f_l * c_l
        h   = o * tanh(c)

    Args:
        params (ModelParams):
            registry receiving the parameters
        name (str):
            prefix of the parameter names
        input_dim (int):
            width of the parent input x
        child_dim (int):
            width C of the child hidden states
        hidden_size (int):
            width H of the produced states
        fanout (int):
            number N of child positions
        with_cells (bool):
            whether children carry memory cells; without them the forget gates
            have nothing to act on and are not created
    """

    def __init__(
        self,
        params: ModelParams,
        name: str,
        input_dim: int,
        child_dim: int,
        hidden_size: int,
        fanout: int,
        with_cells: bool = True,
    ):
        if fanout < 1:
            raise ValueError(f"{name}: fanout should be >= 1, got {fanout}")
        self.name = name
        self.input_dim = input_dim
        self.child_dim = child_dim
        self.hidden_size = hidden_size
        self.fanout = fanout
        self.with_cells = with_cells

        gates = ("i", "f", "o", "u") if with_cells else ("i", "o", "u")
        self.W, self.U, self.b = {}, {}, {}
        for gate in gates:
            self.W[gate] = params.add(f"{name}.W_{gate}", (input_dim, hidden_size))
            width = fanout * hidden_size if gate == "f" else hidden_size
            self.U[gate] = params.add(f"{name}.U_{gate}", (fanout * child_dim, width))
            self.b[gate] = params.add(f"{name}.b_{gate}", (hidden_size,), init="zeros")

    def _gate(self, gate: str, x: Tensor, children: Tensor) -> Tensor:
        """"""
        return F.add(
            F.add(F.matmul(x, self.W[gate]), F.matmul(children, self.U[gate])),
            self.b[gate],
        )

    def __call__(
        self, x: Tensor, child_h: Tensor, child_c: Optional[Tensor] = None
    ) -> Tuple[Tensor, Tensor]:
        """
        Args:
            x (Tensor):
                parent inputs of shape (G, input_dim)
            child_h (Tensor):
                child hidden states of shape (G, n, child_dim) with n <= fanout,
                absent children as zero rows
            child_c (Optional[Tensor]):
                child cells of shape (G, n, hidden_size)
        Returns:
            Tuple[Tensor, Tensor]: hidden states and cells, both (G, hidden_size)
        """
        groups, n_children = child_h.shape[0], child_h.shape[1]
        if n_children > self.fanout:
            raise ValueError(
                f"{self.name}: {n_children} children exceed the fanout {self.fanout}"
            )
        if n_children < self.fanout:
            pad = np.zeros((groups, self.fanout - n_children, child_h.shape[2]))
            child_h = _pad_children(child_h, pad)
            if child_c is not None:
                cell_pad = np.zeros((groups, pad.shape[1], self.hidden_size))
                child_c = _pad_children(child_c, cell_pad)

        flat = F.reshape(child_h, (groups, self.fanout * self.child_dim))
        i = F.sigmoid(self._gate("i", x, flat))
        o = F.sigmoid(self._gate("o", x, flat))
        u = F.tanh(self._gate("u", x, flat))
        c = F.mul(i, u)

        if self.with_cells and child_c is not None:
            forget = F.add(
                F.add(
                    F.reshape(F.matmul(x, self.W["f"]), (groups, 1, self.hidden_size)),
                    F.reshape(
                        F.matmul(flat, self.U["f"]),
                        (groups, self.fanout, self.hidden_size),
                    ),
                ),
                self.b["f"],
            )
            c = F.add(c, F.sum(F.mul(F.sigmoid(forget), child_c), axis=1))

        h = F.mul(o, F.tanh(c))
        return h, c


def _pad_children(children: Tensor, pad: np.ndarray) -> Tensor:
    """Appends zero children along axis 1 through a gather on the flattened rows."""
    groups, n_children, width = children.shape
    fanout = n_children + pad.shape[1]
    flat = F.reshape(children, (groups * n_children, width))
    index = np.full((groups, fanout), -1, dtype=np.int64)
    index[:, :n_children] = np.arange(groups * n_children).reshape(groups, n_children)
    return F.gather(flat, index)


class MeanPoolLinear(object):
    """
    Replacement of the Tree-LSTM used by the `no_irc` ablation: the mean of the
    present children followed by an affine map. Cells are zero.

    Args:
        params (ModelParams):
            registry receiving the parameters
        name (str):
            prefix of the parameter names
        child_dim (int):
            width of the children
        hidden_size (int):
            output width
    """

    def __init__(self, params: ModelParams, name: str, child_dim: int, hidden_size: int):
        self.name = name
        self.hidden_size = hidden_size
        self.W = params.add(f"{name}.W", (child_dim, hidden_size))
        self.b = params.add(f"{name}.b", (hidden_size,), init="zeros")

    def __call__(
        self, x: Tensor, child_h: Tensor, child_c: Optional[Tensor] = None, present=None
    ) -> Tuple[Tensor, Tensor]:
        """
        Args:
            x (Tensor):
                parent inputs, unused
            child_h (Tensor):
                children of shape (G, N, C), absent ones as zero rows
            child_c (Optional[Tensor]):
                unused
            present (np.ndarray):
                boolean array (G, N), True for present children
        Returns:
            Tuple[Tensor, Tensor]: hidden states (G, H) and zero cells
        """
        groups = child_h.shape[0]
        if present is None:
            present = np.ones(child_h.shape[:2], dtype=bool)
        counts = np.maximum(np.asarray(present).sum(axis=1, keepdims=True), 1)
        pooled = F.mul(F.sum(child_h, axis=1), 1.0 / counts)
        h = F.add(F.matmul(pooled, self.W), self.b)
        return h, F.as_tensor(np.zeros((groups, self.hidden_size)), like=h)
