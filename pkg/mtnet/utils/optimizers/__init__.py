from .adam import Adam, OptimizerState, adam_step, global_grad_norm
