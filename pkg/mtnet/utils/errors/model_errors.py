from typing import Sequence


class ShapeError(ValueError):
    """
    Raised by an autodiff primitive receiving incompatible operands.

    Args:
        primitive (str):
            name of the primitive
        left (Sequence[int]):
            shape of the first operand
        right (Sequence[int]):
            shape of the second operand
    """

    def __init__(self, primitive: str, left: Sequence[int], right: Sequence[int]):
        self.primitive = primitive
        self.left = tuple(left)
        self.right = tuple(right)
        super().__init__(
            f"{primitive}: incompatible shapes {self.left} and {self.right}"
        )


class IdOutOfRangeError(IndexError):
    """Raised when an id does not fit the vocabulary it indexes."""

    def __init__(self, name: str, value: int, size: int):
        self.name = name
        self.value = value
        self.size = size
        super().__init__(f"{name} id {value} out of range [0, {size})")


class TreeConstructionError(ValueError):
    """Raised when a Mobility Tree cannot be built from a prefix."""


class NonFiniteGradientError(FloatingPointError):
    """
    Raised when a gradient contains NaN or Inf, aborting the current epoch.

    Args:
        parameter (str):
            name of the parameter holding the non-finite gradient
    """

    def __init__(self, parameter: str):
        self.parameter = parameter
        super().__init__(f"non-finite gradient for parameter '{parameter}'")
