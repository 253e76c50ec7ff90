from .config_errors import ConfigurationException, VocabularyMismatchError
from .model_errors import (
    IdOutOfRangeError,
    NonFiniteGradientError,
    ShapeError,
    TreeConstructionError,
)
