import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from tabulate import tabulate

from .tensor import Tensor, backward, no_grad


@dataclass
class CoordinateCheck:
    tensor: str
    index: int
    analytic: float
    numeric: float
    relative_error: float


@dataclass
class GradCheckReport:
    """
    Outcome of a finite-difference comparison.

    Attributes:
        passed (bool): whether every sampled coordinate is within tolerance
        max_relative_error (float): worst relative error seen
        tolerance (float): tolerance used
        checks (List[CoordinateCheck]): one entry per sampled coordinate
        profile (str): per-primitive timings of one forward and backward pass, if asked
    """

    passed: bool
    max_relative_error: float
    tolerance: float
    checks: List[CoordinateCheck] = field(default_factory=list)
    profile: str = ""

    def get_table(self, limit: int = 20) -> str:
        """Worst coordinates first, rendered as a table."""
        rows = sorted(self.checks, key=lambda c: -c.relative_error)[:limit]
        return tabulate(
            [[c.tensor, c.index, c.analytic, c.numeric, c.relative_error] for c in rows],
            headers=["tensor", "index", "analytic", "numeric", "rel. error"],
            floatfmt=".3e",
        )


def relative_error(analytic: float, numeric: float, floor: float = 1e-3) -> float:
    """
    |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
    near-zero gradients from turning rounding noise into large ratios.
    """
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-5,
    tol: float = 1e-4,
    n_samples: int = 20,
    rng: Optional[np.random.Generator] = None,
    names: Optional[Sequence[str]] = None,
    floor: float = 1e-3,
) -> GradCheckReport:
    """
    Compares reverse-mode gradients against central finite differences
    (f(x + h) - f(x - h)) / 2h on a random sample of coordinates of every input.

    Args:
        fn (Callable[..., Tensor]):
            deterministic function mapping `inputs` to a scalar tensor
        inputs (Sequence[Tensor]):
            tensors to differentiate, perturbed in place and restored
        h (float):
            finite-difference step
        tol (float):
            maximum accepted relative error
        n_samples (int):
            number of coordinates sampled per input
        rng (Optional[np.random.Generator]):
            generator used to sample coordinates
        names (Optional[Sequence[str]]):
            labels for the report, defaults to tensor names
        floor (float):
            minimum denominator of the relative error
    Returns:
        GradCheckReport: per-coordinate comparison
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    names = list(names) if names is not None else [
        t.name or f"input_{i}" for i, t in enumerate(inputs)
    ]

    for tensor in inputs:
        tensor.requires_grad = True
        tensor.zero_grad()
    loss = fn(*inputs)
    backward(loss)
    analytic = [
        t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs
    ]

    checks: List[CoordinateCheck] = []
    with no_grad():
        for tensor, name, grad in zip(inputs, names, analytic):
            count = min(n_samples, tensor.size)
            coordinates = rng.choice(tensor.size, size=count, replace=False)
            flat = tensor.data.reshape(-1)
            for index in coordinates:
                original = flat[index]
                flat[index] = original + h
                plus = fn(*inputs).item()
                flat[index] = original - h
                minus = fn(*inputs).item()
                flat[index] = original
                numeric = (plus - minus) / (2.0 * h)
                value = float(grad.reshape(-1)[index])
                checks.append(
                    CoordinateCheck(
                        tensor=name,
                        index=int(index),
                        analytic=value,
                        numeric=numeric,
                        relative_error=relative_error(value, numeric, floor),
                    )
                )

    worst = max((c.relative_error for c in checks), default=0.0)
    report = GradCheckReport(passed=worst < tol, max_relative_error=worst, tolerance=tol)
    report.checks = checks
    logging.info(
        f"Gradient check over {len(checks)} coordinates: max relative error"
        f" {worst:.3e} (tol {tol:.1e})"
    )
    return report
