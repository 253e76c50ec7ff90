from .heads import PredictionHead
from .iac import SiblingAttention
from .irc import MeanPoolLinear, NaryTreeLSTM
