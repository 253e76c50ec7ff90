from typing import Dict, Mapping, Optional

import numpy as np

from ...autodiff import Tensor
from ...autodiff import functional as F
from ..types import MultitaskLossOutput, RankedPrediction

TASKS = ("poi", "geo", "cat")


def uncertainty_weighted(
    losses: Mapping[str, Tensor], log_sigmas: Mapping[str, Tensor]
) -> Tensor:
    """
    Combines task losses with learned homoscedastic uncertainties:
    sum over tasks of exp(-2 log_sigma) / 2 * loss + log_sigma.

    Args:
        losses (Mapping[str, Tensor]):
            scalar loss of every task
        log_sigmas (Mapping[str, Tensor]):
            log standard deviation of every task, shape (1,)
    Returns:
        Tensor: scalar objective
    """
    total = None
    for task, loss in losses.items():
        log_sigma = log_sigmas[task]
        precision = F.exp(F.scale(log_sigma, -2.0))
        term = F.add(F.scale(F.mul(precision, loss), 0.5), log_sigma)
        total = term if total is None else F.add(total, term)
    return F.sum(total)


class MultitaskLoss(object):
    """
    Multitask objective of the mobility tree network.

    The POI task sums the cross-entropies of the POI heads of the current day,
    current period and last check-in; geographic cluster and category tasks are
    computed on the root representation. Tasks are combined with learned
    uncertainties unless `no_multitask` is set, in which case they are simply added.

    Args:
        no_multitask (bool):
            plain sum of the task losses
        no_geo_head (bool):
            no geographic cluster task
        no_cat_head (bool):
            no category task
        no_aux_node_preds (bool):
            the POI task only uses the last check-in head
    """

    def __init__(
        self,
        no_multitask: bool = False,
        no_geo_head: bool = False,
        no_cat_head: bool = False,
        no_aux_node_preds: bool = False,
    ):
        self.no_multitask = no_multitask
        self.no_geo_head = no_geo_head
        self.no_cat_head = no_cat_head
        self.no_aux_node_preds = no_aux_node_preds

    @property
    def tasks(self):
        """Tasks contributing to the objective."""
        tasks = ["poi"]
        if not self.no_geo_head:
            tasks.append("geo")
        if not self.no_cat_head:
            tasks.append("cat")
        return tuple(tasks)

    def __call__(
        self,
        prediction: RankedPrediction,
        targets: Mapping[str, np.ndarray],
        log_sigmas: Optional[Mapping[str, Tensor]] = None,
    ) -> MultitaskLossOutput:
        """
        Args:
            prediction (RankedPrediction):
                output of the model forward pass
            targets (Mapping[str, np.ndarray]):
                "poi", "geo" and "cat" ids of the next check-in, shape (B,)
            log_sigmas (Optional[Mapping[str, Tensor]]):
                uncertainty parameters, required unless `no_multitask`
        Returns:
            MultitaskLossOutput: objective and its components
        """
        poi = targets["poi"]
        components: Dict[str, Tensor] = {
            "checkin": F.cross_entropy(prediction.checkin_logits, poi)
        }
        if not self.no_aux_node_preds:
            components["period"] = F.cross_entropy(prediction.period_logits, poi)
            components["day"] = F.cross_entropy(prediction.day_logits, poi)

        poi_loss = None
        for name in ("day", "period", "checkin"):
            if name in components:
                value = components[name]
                poi_loss = value if poi_loss is None else F.add(poi_loss, value)

        losses = {"poi": poi_loss}
        geo_loss = cat_loss = None
        if not self.no_geo_head:
            geo_loss = F.cross_entropy(prediction.geo_logits, targets["geo"])
            losses["geo"] = geo_loss
        if not self.no_cat_head:
            cat_loss = F.cross_entropy(prediction.cat_logits, targets["cat"])
            losses["cat"] = cat_loss

        if self.no_multitask:
            full_loss = None
            for loss in losses.values():
                full_loss = loss if full_loss is None else F.add(full_loss, loss)
        else:
            if log_sigmas is None:
                raise ValueError("uncertainty weighting needs the log-sigma parameters")
            full_loss = uncertainty_weighted(losses, log_sigmas)

        return MultitaskLossOutput(
            full_loss=full_loss,
            poi_loss=poi_loss,
            geo_loss=geo_loss,
            cat_loss=cat_loss,
            poi_components=components if len(components) > 1 else {},
        )
