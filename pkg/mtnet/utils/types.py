from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..autodiff import Tensor


@dataclass(frozen=True)
class CheckIn:
    user_id: int
    poi_id: int
    category_id: int
    lat: float
    lon: float
    timestamp: int
    geo_cluster_id: int = -1


@dataclass
class Trajectory:
    """
    Chronological check-ins of one user inside a single time window.

    When the trajectory is a supervised sample, `checkins` is the observed prefix and
    `label` the check-in that followed it.
    """

    user_id: int
    checkins: List[CheckIn]
    label: Optional[CheckIn] = None

    @property
    def start_time(self) -> int:
        """"""
        return self.checkins[0].timestamp

    @property
    def end_time(self) -> int:
        """"""
        return self.checkins[-1].timestamp

    def __len__(self) -> int:
        return len(self.checkins)


@dataclass
class DatasetSplit:
    train: List[Trajectory]
    valid: List[Trajectory]
    test: List[Trajectory]

    def __getitem__(self, item: str) -> List[Trajectory]:
        """"""
        if item not in ("train", "valid", "test"):
            raise KeyError(f"unknown split '{item}', expected train, valid or test")
        return getattr(self, item)

    def sizes(self) -> Tuple[int, int, int]:
        """"""
        return len(self.train), len(self.valid), len(self.test)


@dataclass
class MultitaskLossOutput:
    """Combined objective together with its components, all scalar tensors."""

    full_loss: Tensor
    poi_loss: Tensor
    geo_loss: Optional[Tensor] = None
    cat_loss: Optional[Tensor] = None
    poi_components: Dict[str, Tensor] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, float]:
        """Python floats of every defined component."""
        values = {"loss": self.full_loss.item(), "loss_poi": self.poi_loss.item()}
        if self.geo_loss is not None:
            values["loss_geo"] = self.geo_loss.item()
        if self.cat_loss is not None:
            values["loss_cat"] = self.cat_loss.item()
        for name, value in self.poi_components.items():
            values[f"loss_poi_{name}"] = value.item()
        return values


@dataclass
class RankedPrediction:
    """
    Per-sample scores over every vocabulary.

    Attributes:
        scores (Tensor): fused POI scores, shape (B, |L|)
        day_logits (Optional[Tensor]): POI logits of the root day node
        period_logits (Optional[Tensor]): POI logits of the current period node
        checkin_logits (Tensor): POI logits of the last check-in leaf
        geo_logits (Optional[Tensor]): geographic cluster logits, shape (B, |G|)
        cat_logits (Optional[Tensor]): category logits, shape (B, |C|)
    """

    scores: Tensor
    checkin_logits: Tensor
    day_logits: Optional[Tensor] = None
    period_logits: Optional[Tensor] = None
    geo_logits: Optional[Tensor] = None
    cat_logits: Optional[Tensor] = None

    def top_k(self, k: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        Highest scoring POIs per sample, ties broken by ascending POI id.

        Returns:
            Tuple[np.ndarray, np.ndarray]: ids and scores, both of shape (B, k)
        """
        scores = self.scores.data
        k = min(k, scores.shape[1])
        order = np.lexsort(
            (np.broadcast_to(np.arange(scores.shape[1]), scores.shape), -scores), axis=1
        )[:, :k]
        return order, np.take_along_axis(scores, order, axis=1)


@dataclass
class NodeStates:
    """
    Intermediate representations of one forward pass, flattened over the batch.

    Attributes:
        leaf_inputs (Tensor): e_s of every leaf, shape (n_leaves, D)
        leaf_outputs (Tensor): post-attention leaf vectors, shape (n_leaves, D)
        period_hidden (Tensor): post-IRC period states, shape (n_periods, H)
        period_cell (Tensor): post-IRC period cells, shape (n_periods, H)
        period_outputs (Tensor): post-attention period vectors, shape (n_periods, H)
        day_hidden (Tensor): day hidden states, shape (n_days, H)
        day_cell (Tensor): day cells, shape (n_days, H)
        root (Tensor): e^(k) per sample, shape (B, H)
        attention (Dict[str, List[np.ndarray]]): attention weights per stack and layer
    """

    leaf_inputs: Tensor
    leaf_outputs: Tensor
    period_hidden: Tensor
    period_cell: Tensor
    period_outputs: Tensor
    day_hidden: Tensor
    day_cell: Tensor
    root: Tensor
    attention: Dict[str, List[np.ndarray]] = field(default_factory=dict)

    def is_finite(self) -> bool:
        """"""
        return all(
            np.isfinite(tensor.data).all()
            for tensor in (
                self.leaf_inputs,
                self.leaf_outputs,
                self.period_hidden,
                self.period_cell,
                self.period_outputs,
                self.day_hidden,
                self.day_cell,
                self.root,
            )
        )
