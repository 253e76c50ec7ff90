"""
Small fixed trees and the full-model finite-difference check built on them.
"""
from typing import Optional

import numpy as np
from omegaconf import OmegaConf

from ..autodiff import GradCheckReport, backward, grad_check
from ..config import TrainConfig
from ..data.mobility_tree import SECONDS_PER_DAY, SECONDS_PER_HOUR
from ..data.modules import TreeBatch, collate
from ..utils.types import CheckIn, Trajectory
from .mtnet import MTNet

# 2012-04-02 00:00 UTC, a Monday
TOY_DAY = 15432 * SECONDS_PER_DAY
# (poi, category, geo, hour after TOY_DAY): 14:00 and 19:00, 21:00 on Monday,
# 01:00 and 07:00 on Tuesday, the last one being the label
TOY_VISITS = [(0, 0, 0, 14), (1, 1, 0, 19), (2, 2, 1, 21), (3, 0, 1, 25), (4, 1, 0, 31)]
TOY_LABEL = (5, 2, 1, 32)


def _checkin(poi: int, category: int, geo: int, hours: int, user: int = 0) -> CheckIn:
    """"""
    return CheckIn(
        user_id=user,
        poi_id=poi,
        category_id=category,
        lat=40.7 + 0.01 * poi,
        lon=-74.0 + 0.01 * poi,
        timestamp=TOY_DAY + hours * SECONDS_PER_HOUR,
        geo_cluster_id=geo,
    )


def toy_prefix(n_checkins: int = 5) -> Trajectory:
    """
    The last `n_checkins` of five check-ins (two days when more than two), labelled
    with a sixth check-in.
    """
    visits = TOY_VISITS[-n_checkins:]
    return Trajectory(
        user_id=0,
        checkins=[_checkin(*visit) for visit in visits],
        label=_checkin(*TOY_LABEL),
    )


def toy_batch(n_checkins: int = 5, slots_per_day: int = 4) -> TreeBatch:
    """"""
    return collate([toy_prefix(n_checkins)], slots_per_day=slots_per_day, leaf_fanout=2)


def toy_model(
    seed: int = 0, root: str = "current_day", dtype: str = "float64", **ablation
) -> MTNet:
    """Tiny model sized for the toy tree, dropout disabled."""
    training_config = OmegaConf.structured(TrainConfig)
    training_config.seed = seed
    training_config.dropout_embed = 0.0
    training_config.dropout_param = 0.0
    for flag, value in ablation.items():
        training_config.ablation[flag] = value
    return MTNet(
        training_config=training_config,
        n_users=1,
        n_pois=6,
        n_categories=3,
        n_geo_clusters=2,
        user_dim=2,
        poi_dim=2,
        category_dim=2,
        geo_dim=2,
        slot_dim=3,
        hidden_size=4,
        iac_layers=1,
        iac_heads=2,
        ffn_dim=4,
        slots_per_day=4,
        leaf_fanout=2,
        root=root,
        dtype=dtype,
        embedding_std=0.5,
    )


def model_grad_check(
    model: MTNet,
    batch: TreeBatch,
    h: float = 1e-5,
    tol: float = 1e-4,
    n_samples: int = 10,
    seed: int = 0,
    profile: bool = False,
) -> GradCheckReport:
    """
    Compares reverse-mode gradients of the multitask objective with central finite
    differences on sampled coordinates of every parameter. The forward pass runs in
    eval mode so that it is deterministic.
    """

    def objective(*_):
        prediction, _ = model.forward(batch, training=False)
        return model.loss(prediction, batch).full_loss

    names = list(model.params)
    tensors = [model.params[name] for name in names]
    report = grad_check(
        objective,
        tensors,
        h=h,
        tol=tol,
        n_samples=n_samples,
        rng=np.random.default_rng(seed),
        names=names,
    )
    if profile:
        report.profile = backward(objective()).profile_table()
    model.params.zero_grad()
    return report


def run_toy_grad_check(
    seed: int = 0,
    root: str = "current_day",
    h: float = 1e-5,
    tol: float = 1e-4,
    n_samples: int = 10,
    profile: bool = False,
    n_checkins: Optional[int] = None,
) -> GradCheckReport:
    """Full-model check on the two-day, five check-in toy tree."""
    batch = toy_batch(n_checkins or len(TOY_VISITS))
    return model_grad_check(
        toy_model(seed=seed, root=root), batch, h, tol, n_samples, seed, profile
    )
