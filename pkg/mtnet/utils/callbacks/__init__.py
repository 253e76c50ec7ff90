from .base import Callback
from .checkpointing import (
    BestModelSelection,
    CheckpointEveryNEpochs,
    CheckpointRecord,
    select_best,
)
