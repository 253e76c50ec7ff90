import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence

import numpy as np

from ...autodiff import Tensor
from ..errors import NonFiniteGradientError


@dataclass
class OptimizerState:
    """
    Adam moments of every parameter, keyed by parameter name.

    Attributes:
        step (int): number of updates applied so far
        exp_avg (Dict[str, np.ndarray]): first moment estimates
        exp_avg_sq (Dict[str, np.ndarray]): second moment estimates
    """

    step: int = 0
    exp_avg: Dict[str, np.ndarray] = field(default_factory=dict)
    exp_avg_sq: Dict[str, np.ndarray] = field(default_factory=dict)

    def to_arrays(self, prefix: str = "adam/") -> Dict[str, np.ndarray]:
        """"""
        arrays = {f"{prefix}step": np.asarray(self.step, dtype=np.int64)}
        for name in self.exp_avg:
            arrays[f"{prefix}exp_avg/{name}"] = self.exp_avg[name]
            arrays[f"{prefix}exp_avg_sq/{name}"] = self.exp_avg_sq[name]
        return arrays

    @classmethod
    def from_arrays(
        cls, arrays: Mapping[str, np.ndarray], prefix: str = "adam/"
    ) -> "OptimizerState":
        """"""
        state = cls(step=int(arrays.get(f"{prefix}step", 0)))
        for key, value in arrays.items():
            if key.startswith(f"{prefix}exp_avg/"):
                state.exp_avg[key[len(f"{prefix}exp_avg/") :]] = np.array(value)
            elif key.startswith(f"{prefix}exp_avg_sq/"):
                state.exp_avg_sq[key[len(f"{prefix}exp_avg_sq/") :]] = np.array(value)
        return state


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
    lr_t: float,
    betas: Sequence[float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 1e-4,
) -> OptimizerState:
    """
    One bias-corrected Adam update, in place.

    Weight decay is classic L2 coupling: `weight_decay * theta` is added to the
    gradient before the moments are updated.

    Args:
        params (Mapping[str, Tensor]):
            parameters to update
        grads (Mapping[str, np.ndarray]):
            gradient of every parameter to update; parameters without gradient are
            left untouched
        state (OptimizerState):
            moments, updated in place
        lr_t (float):
            learning rate of this step
        betas (Sequence[float]):
            decay rates of the first and second moments
        eps (float):
            added to the denominator
        weight_decay (float):
            L2 coefficient
    Returns:
        OptimizerState: the updated state
    """
    beta1, beta2 = betas
    for name, grad in grads.items():
        if not np.isfinite(grad).all():
            raise NonFiniteGradientError(name)

    state.step += 1
    bias_correction1 = 1.0 - beta1**state.step
    bias_correction2 = 1.0 - beta2**state.step

    # sorted so that the update order never depends on dict construction
    for name in sorted(grads):
        param = params[name]
        grad = grads[name]
        if weight_decay != 0.0:
            grad = grad + weight_decay * param.data

        if name not in state.exp_avg:
            state.exp_avg[name] = np.zeros_like(param.data)
            state.exp_avg_sq[name] = np.zeros_like(param.data)
        exp_avg, exp_avg_sq = state.exp_avg[name], state.exp_avg_sq[name]

        exp_avg *= beta1
        exp_avg += (1.0 - beta1) * grad
        exp_avg_sq *= beta2
        exp_avg_sq += (1.0 - beta2) * grad * grad

        denom = np.sqrt(exp_avg_sq / bias_correction2) + eps
        param.data -= lr_t * (exp_avg / bias_correction1) / denom
    return state


def global_grad_norm(grads: Mapping[str, np.ndarray]) -> float:
    """L2 norm of every gradient concatenated."""
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


class Adam(object):
    """
    Adam over named tensors, with optional global gradient-norm clipping.

    Args:
        params (Mapping[str, Tensor]):
            parameters to optimize, keyed by name
        lr (float):
            initial learning rate
        betas (Sequence[float]):
            Adam's b1 and b2. Default: (0.9, 0.999)
        eps (float):
            Adam's epsilon. Default: 1e-8
        weight_decay (float):
            L2 coefficient. Default: 1e-4
        max_grad_norm (Optional[float]):
            maximum global norm of the gradients, None means no clipping. Default: 5.0
    """

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float,
        betas: Sequence[float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 1e-4,
        max_grad_norm: Optional[float] = 5.0,
    ):
        if lr < 0.0:
            raise ValueError(f"Invalid learning rate: {lr} - should be >= 0.0")
        if not all(0.0 <= b < 1.0 for b in betas):
            raise ValueError(f"Invalid betas: {tuple(betas)} - should be in [0.0, 1.0[")
        if not eps >= 0.0:
            raise ValueError(f"Invalid epsilon value: {eps} - should be >= 0.0")
        if max_grad_norm is not None and max_grad_norm <= 0.0:
            raise ValueError(f"Invalid max_grad_norm: {max_grad_norm} - should be > 0.0")

        self.params = dict(params)
        self.lr = lr
        self.betas = tuple(betas)
        self.eps = eps
        self.weight_decay = weight_decay
        self.max_grad_norm = max_grad_norm
        self.state = OptimizerState()

    def zero_grad(self) -> None:
        """"""
        for param in self.params.values():
            param.zero_grad()

    def step(self, lr: Optional[float] = None) -> float:
        """
        Clips the gradients and applies one update.

        Arguments:
            lr (Optional[float]):
                learning rate of this step, defaults to the initial one
        Returns:
            float: global gradient norm before clipping
        """
        grads = {
            name: param.grad
            for name, param in self.params.items()
            if param.grad is not None
        }
        for name, grad in grads.items():
            if not np.isfinite(grad).all():
                raise NonFiniteGradientError(name)

        norm = global_grad_norm(grads)
        if self.max_grad_norm is not None and norm > self.max_grad_norm:
            factor = self.max_grad_norm / (norm + 1e-12)
            grads = {name: grad * factor for name, grad in grads.items()}

        adam_step(
            self.params,
            grads,
            self.state,
            lr_t=self.lr if lr is None else lr,
            betas=self.betas,
            eps=self.eps,
            weight_decay=self.weight_decay,
        )
        return norm
