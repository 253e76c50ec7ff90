from .mtnet import MTNet
from .params import ModelParams
