def lr_at(epoch: int, lr0: float = 1e-3, step: int = 6, gamma: float = 0.9) -> float:
    """
    Step decay: `lr0 * gamma ** floor(epoch / step)`.

    Args:
        epoch (int):
            zero-based epoch index
        lr0 (float):
            initial learning rate
        step (int):
            number of epochs between two decays
        gamma (float):
            decay factor
    Returns:
        float: learning rate of `epoch`
    """
    if epoch < 0:
        raise ValueError(f"epoch should be >= 0, got {epoch}")
    return lr0 * gamma ** (epoch // step)


class StepLRScheduler:
    """
    Scheduler decaying the learning rate of an optimizer every `step` epochs.

    Args:
        optimizer:
            object exposing a writable `lr` attribute
        step (int):
            number of epochs between two decays
        gamma (float):
            decay factor
    """

    def __init__(self, optimizer, step: int = 6, gamma: float = 0.9):
        self.optimizer = optimizer
        self.base_lr = optimizer.lr
        self.step_size = step
        self.gamma = gamma
        self.epoch = 0

    def get_lr(self) -> float:
        """"""
        return lr_at(self.epoch, self.base_lr, self.step_size, self.gamma)

    def set_epoch(self, epoch: int) -> float:
        """
        Moves the schedule to `epoch` and updates the optimizer.

        Returns:
            float: learning rate now in use
        """
        self.epoch = epoch
        self.optimizer.lr = self.get_lr()
        return self.optimizer.lr

    def step(self) -> float:
        """Advances by one epoch."""
        return self.set_epoch(self.epoch + 1)
