import contextvars
import time
from collections import Counter, defaultdict
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from tabulate import tabulate

from ..utils.errors import ShapeError

ArrayLike = Union[np.ndarray, float, int, Sequence]

_GRAD_ENABLED = contextvars.ContextVar("grad_enabled", default=True)


@contextmanager
def no_grad() -> Iterator[None]:
    """
    Context manager disabling tape recording, used for evaluation and finite
    differences.
    """
    token = _GRAD_ENABLED.set(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.reset(token)


def is_grad_enabled() -> bool:
    """"""
    return _GRAD_ENABLED.get()


@dataclass(eq=False)
class Record:
    """
    One recorded primitive application.

    Args:
        op (str):
            name of the primitive
        inputs (Tuple[Tensor, ...]):
            operands of the primitive
        output (Tensor):
            produced tensor
        backward (Callable):
            maps the output gradient to one gradient (or None) per input
        forward_time (float):
            wall time spent in the forward computation, in seconds
    """

    op: str
    inputs: Tuple["Tensor", ...]
    output: "Tensor"
    backward: Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]
    forward_time: float = 0.0


class Tensor:
    """
    Dense array with an optional gradient buffer.

    Tensors created by primitives keep a reference to the `Record` that produced
    them; tensors created by the user are leaves. Only leaves receive a `grad`
    buffer when `backward` runs.

    Args:
        data (ArrayLike):
            values, converted to a floating point numpy array
        requires_grad (bool):
            whether gradients should flow into this tensor
        name (Optional[str]):
            optional name, used in diagnostics
        dtype (Optional[np.dtype]):
            floating point type, defaults to the dtype of `data` when it is already
            floating point and to float64 otherwise
    """

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: Optional[str] = None,
        dtype: Optional[np.dtype] = None,
        copy: bool = True,
    ):
        array = np.asarray(data)
        if dtype is None:
            dtype = array.dtype if np.issubdtype(array.dtype, np.floating) else np.float64
        self.data: np.ndarray = (
            np.array(array, dtype=dtype) if copy else np.asarray(array, dtype=dtype)
        )
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._record: Optional[Record] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        """"""
        return self.data.shape

    @property
    def ndim(self) -> int:
        """"""
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        """"""
        return self.data.dtype

    @property
    def size(self) -> int:
        """"""
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        """"""
        return self._record is None

    def numpy(self) -> np.ndarray:
        """Returns a copy of the underlying values."""
        return self.data.copy()

    def item(self) -> float:
        """"""
        if self.data.size != 1:
            raise ShapeError("item", self.shape, ())
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        """"""
        self.grad = None

    def detach(self) -> "Tensor":
        """Returns a leaf sharing no history with this tensor."""
        return Tensor(self.data, requires_grad=False, name=self.name)

    def backward(self) -> "Tape":
        """Runs reverse-mode differentiation from this scalar tensor."""
        return backward(self)

    def __add__(self, other):
        from . import functional as F

        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import functional as F

        return F.sub(self, other)

    def __rsub__(self, other):
        from . import functional as F

        return F.sub(F.as_tensor(other, like=self), self)

    def __mul__(self, other):
        from . import functional as F

        if isinstance(other, (int, float)):
            return F.scale(self, float(other))
        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import functional as F

        if not isinstance(other, (int, float)):
            raise TypeError("only division by a python scalar is supported")
        return F.scale(self, 1.0 / float(other))

    def __neg__(self):
        from . import functional as F

        return F.scale(self, -1.0)

    def __matmul__(self, other):
        from . import functional as F

        return F.matmul(self, other)

    def __repr__(self):
        name = f", name={self.name!r}" if self.name else ""
        return (
            f"Tensor(shape={self.shape}, dtype={self.dtype},"
            f" requires_grad={self.requires_grad}{name})"
        )


class Tape:
    """
    Ordered list of recorded primitive applications leading to a tensor.

    The order is topological: every record appears after the records producing its
    inputs. `backward` visits each record exactly once, in reverse order.

    Args:
        records (List[Record]):
            records in topological order
    """

    def __init__(self, records: List[Record]):
        self.records = records
        self.backward_times: Dict[str, float] = defaultdict(float)

    @classmethod
    def from_tensor(cls, output: Tensor) -> "Tape":
        """
        Builds the tape of everything `output` depends on with an iterative
        post-order traversal.

        Args:
            output (Tensor):
                tensor whose history should be collected
        Returns:
            Tape: tape in topological order
        """
        records: List[Record] = []
        if output._record is None:
            return cls(records)

        visited = set()
        stack: List[Tuple[Record, bool]] = [(output._record, False)]
        while stack:
            record, expanded = stack.pop()
            if expanded:
                records.append(record)
                continue
            if id(record) in visited:
                continue
            visited.add(id(record))
            stack.append((record, True))
            for tensor in reversed(record.inputs):
                if tensor._record is not None and id(tensor._record) not in visited:
                    stack.append((tensor._record, False))
        return cls(records)

    def __len__(self) -> int:
        return len(self.records)

    def op_counts(self) -> Counter:
        """Number of applications of each primitive."""
        return Counter(record.op for record in self.records)

    def backward(self, loss: Tensor) -> None:
        """
        Propagates gradients from `loss` to every leaf tensor requiring them.
        Gradients accumulate (+=) into existing leaf buffers.

        Args:
            loss (Tensor):
                scalar tensor at the end of the tape
        """
        if loss.data.size != 1:
            raise ShapeError("backward", loss.shape, ())

        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        if loss.is_leaf and loss.requires_grad:
            _accumulate(loss, grads[id(loss)])

        for record in reversed(self.records):
            grad_out = grads.pop(id(record.output), None)
            if grad_out is None:
                continue
            start = time.perf_counter()
            input_grads = record.backward(grad_out)
            self.backward_times[record.op] += time.perf_counter() - start

            for tensor, grad in zip(record.inputs, input_grads):
                if grad is None or not tensor.requires_grad:
                    continue
                if tensor.is_leaf:
                    _accumulate(tensor, grad)
                elif id(tensor) in grads:
                    grads[id(tensor)] = grads[id(tensor)] + grad
                else:
                    grads[id(tensor)] = grad

    def profile_table(self) -> str:
        """Per-primitive counts and timings rendered as a table."""
        forward_times: Dict[str, float] = defaultdict(float)
        for record in self.records:
            forward_times[record.op] += record.forward_time
        rows = [
            [op, count, forward_times[op] * 1e3, self.backward_times.get(op, 0.0) * 1e3]
            for op, count in sorted(self.op_counts().items())
        ]
        return tabulate(
            rows,
            headers=["primitive", "count", "forward ms", "backward ms"],
            floatfmt=".2f",
        )


def _accumulate(tensor: Tensor, grad: np.ndarray) -> None:
    """"""
    if grad.shape != tensor.shape:
        raise ShapeError("accumulate", grad.shape, tensor.shape)
    if tensor.grad is None:
        tensor.grad = np.array(grad, dtype=tensor.dtype)
    else:
        tensor.grad += grad


def backward(loss: Tensor, tape: Optional[Tape] = None) -> Tape:
    """
    Populates `grad` on every leaf tensor `loss` depends on.

    Args:
        loss (Tensor):
            scalar loss
        tape (Optional[Tape]):
            pre-built tape, built from `loss` when omitted
    Returns:
        Tape: the tape that was replayed
    """
    if loss.data.size != 1:
        raise ShapeError("backward", loss.shape, ())
    tape = tape if tape is not None else Tape.from_tensor(loss)
    tape.backward(loss)
    return tape
