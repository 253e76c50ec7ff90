from . import functional
from .grad_check import GradCheckReport, grad_check
from .tensor import Record, Tape, Tensor, backward, is_grad_enabled, no_grad
