from .base import BaseDataModule
from .mobility_module import MobilityDataModule, TreeBatch, collate
