from .step_lr import StepLRScheduler, lr_at
