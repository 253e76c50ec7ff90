__version__ = "0.1.0"

from .assistants import TrainAssistant
from .data import DatasetBundle, build_mobility_tree
from .models import MTNet
