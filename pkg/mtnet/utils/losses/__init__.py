from .multitask import TASKS, MultitaskLoss, uncertainty_weighted
