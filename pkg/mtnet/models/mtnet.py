import logging
from typing import Any, Dict, Optional, Tuple

import numpy as np
from omegaconf import DictConfig, OmegaConf

from ..autodiff import Tensor, no_grad
from ..autodiff import functional as F
from ..data.modules.mobility_module import TreeBatch
from ..utils.errors import ConfigurationException
from ..utils.losses import MultitaskLoss
from ..utils.optimizers import Adam
from ..utils.schedulers import StepLRScheduler
from ..utils.types import MultitaskLossOutput, NodeStates, RankedPrediction
from .layers import MeanPoolLinear, NaryTreeLSTM, PredictionHead, SiblingAttention
from .params import ModelParams

HOURS_PER_DAY = 24
DAYS_PER_WEEK = 7


def _grid_positions(index: np.ndarray, n_items: int) -> np.ndarray:
    """
    Inverse of a padded (G, M) index matrix: the flat position g * M + m of every
    item it references.
    """
    rows, cols = np.nonzero(index >= 0)
    positions = np.full(n_items, -1, dtype=np.int64)
    positions[index[rows, cols]] = rows * index.shape[1] + cols
    return positions


class MTNet(object):
    """
    Mobility Tree Network for next POI recommendation.

    Leaves are initialized from user, POI, category and geographic cluster
    embeddings plus a weighted hour embedding. Four steps of node interaction follow:
    sibling attention over the leaves of every period, Tree-LSTM aggregation of the
    leaves into their period, sibling attention over the periods of every day and
    Tree-LSTM aggregation of the periods, placed at their slot, into their day.
    POI heads on the current day, the current period and the last check-in are fused
    into the recommendation scores; geographic cluster and category heads on the
    root feed the multitask objective.

    Args:
        training_config (DictConfig):
            `train` section of the configuration, ablation flags included
        n_users (int), n_pois (int), n_categories (int), n_geo_clusters (int):
            vocabulary sizes
        user_dim (int), poi_dim (int), category_dim (int), geo_dim (int):
            embedding widths, their sum is the leaf width D
        slot_dim (int):
            width of the learned period, day and root inputs
        hidden_size (int):
            Tree-LSTM hidden size H
        iac_layers (int):
            attention layers per sibling-attention stack
        iac_heads (int):
            attention heads per layer
        ffn_dim (int):
            inner width of the attention feed-forward blocks
        slots_per_day (int):
            number P of period slots, also the fan-out of day nodes
        gamma (float):
            weight of the hour embedding
        eta (float):
            weight of the day POI scores
        delta (float):
            weight of the period POI scores
        leaf_fanout (int):
            fan-out of period nodes
        root (str):
            "current_day" or "super_root"
        max_days (int):
            fan-out of the super root
        dtype (str):
            "float64" or "float32"
        embedding_std (float):
            standard deviation of embedding initialization
    """

    def __init__(
        self,
        training_config: Optional[DictConfig] = None,
        n_users: int = 1,
        n_pois: int = 1,
        n_categories: int = 1,
        n_geo_clusters: int = 1,
        user_dim: int = 128,
        poi_dim: int = 128,
        category_dim: int = 32,
        geo_dim: int = 32,
        slot_dim: int = 128,
        hidden_size: int = 512,
        iac_layers: int = 2,
        iac_heads: int = 2,
        ffn_dim: int = 1024,
        slots_per_day: int = 4,
        gamma: float = 1.0,
        eta: float = 1.0,
        delta: float = 1.0,
        leaf_fanout: Optional[int] = None,
        root: str = "current_day",
        max_days: int = 2,
        dtype: str = "float64",
        embedding_std: float = 0.02,
        **kwargs,
    ):
        if training_config is None:
            from ..config import TrainConfig

            training_config = OmegaConf.structured(TrainConfig)
        if leaf_fanout is None or leaf_fanout < 1:
            raise ConfigurationException(
                "the leaf fan-out should be resolved before building the model",
                key="model.leaf_fanout",
            )
        if root not in ("current_day", "super_root"):
            raise ConfigurationException(f"unknown root mode '{root}'", key="model.root")

        self.config = training_config
        ablation = training_config.ablation
        self.no_iac = bool(ablation.no_iac)
        self.no_irc = bool(ablation.no_irc)
        self.no_aux_node_preds = bool(ablation.no_aux_node_preds)
        self.no_geo_head = bool(ablation.no_geo_head)
        self.no_cat_head = bool(ablation.no_cat_head)
        self.no_multitask = bool(ablation.no_multitask)

        self.hparams: Dict[str, Any] = dict(
            n_users=int(n_users),
            n_pois=int(n_pois),
            n_categories=int(n_categories),
            n_geo_clusters=int(n_geo_clusters),
            user_dim=int(user_dim),
            poi_dim=int(poi_dim),
            category_dim=int(category_dim),
            geo_dim=int(geo_dim),
            slot_dim=int(slot_dim),
            hidden_size=int(hidden_size),
            iac_layers=int(iac_layers),
            iac_heads=int(iac_heads),
            ffn_dim=int(ffn_dim),
            slots_per_day=int(slots_per_day),
            gamma=float(gamma),
            eta=float(eta),
            delta=float(delta),
            leaf_fanout=int(leaf_fanout),
            root=str(root),
            max_days=int(max_days),
            dtype=str(dtype),
            embedding_std=float(embedding_std),
        )
        self.width = user_dim + poi_dim + category_dim + geo_dim
        self.hidden_size = hidden_size
        self.slots_per_day = slots_per_day
        self.leaf_fanout = leaf_fanout
        self.root = root
        self.max_days = max_days
        self.gamma = gamma
        self.eta = 0.0 if self.no_aux_node_preds else eta
        self.delta = 0.0 if self.no_aux_node_preds else delta
        self.dropout_embed = float(training_config.dropout_embed)
        self.dropout_param = float(training_config.dropout_param)

        self.params = ModelParams(
            rng=np.random.default_rng(training_config.seed),
            dtype=np.dtype(dtype),
            embedding_std=embedding_std,
        )
        self._build(
            n_users, n_pois, n_categories, n_geo_clusters, iac_layers, iac_heads, ffn_dim
        )
        self.objective = MultitaskLoss(
            no_multitask=self.no_multitask,
            no_geo_head=self.no_geo_head,
            no_cat_head=self.no_cat_head,
            no_aux_node_preds=self.no_aux_node_preds,
        )
        logging.info(
            f"MTNet built with {len(self.params)} tensors"
            f" and {self.params.n_parameters} parameters"
        )

    def _build(
        self,
        n_users: int,
        n_pois: int,
        n_categories: int,
        n_geo_clusters: int,
        iac_layers: int,
        iac_heads: int,
        ffn_dim: int,
    ) -> None:
        """Registers every parameter, in a fixed order."""
        p, hp, H = self.params, self.hparams, self.hidden_size
        self.E_user = p.add("embedding.user", (n_users, hp["user_dim"]), init="normal")
        self.E_poi = p.add("embedding.poi", (n_pois, hp["poi_dim"]), init="normal")
        self.E_cat = p.add(
            "embedding.category", (n_categories, hp["category_dim"]), init="normal"
        )
        self.E_geo = p.add(
            "embedding.geo", (n_geo_clusters, hp["geo_dim"]), init="normal"
        )
        self.E_hour = p.add("embedding.hour", (HOURS_PER_DAY, self.width), init="normal")
        slot_dim = hp["slot_dim"]
        self.E_period_slot = p.add(
            "embedding.period_slot", (self.slots_per_day, slot_dim), init="normal"
        )
        self.E_dow = p.add(
            "embedding.day_of_week", (DAYS_PER_WEEK, slot_dim), init="normal"
        )

        self.leaf_iac = self.period_iac = None
        if not self.no_iac:
            self.leaf_iac = SiblingAttention(
                p,
                "leaf_iac",
                self.width,
                iac_layers,
                iac_heads,
                ffn_dim,
                self.dropout_param,
            )
            self.period_iac = SiblingAttention(
                p, "period_iac", H, iac_layers, iac_heads, ffn_dim, self.dropout_param
            )

        if self.no_irc:
            self.period_irc = MeanPoolLinear(p, "period_pool", self.width, H)
            self.day_irc = MeanPoolLinear(p, "day_pool", H, H)
        else:
            self.period_irc = NaryTreeLSTM(
                p,
                "period_irc",
                slot_dim,
                self.width,
                H,
                self.leaf_fanout,
                with_cells=False,
            )
            self.day_irc = NaryTreeLSTM(p, "day_irc", slot_dim, H, H, self.slots_per_day)

        self.root_irc = None
        if self.root == "super_root":
            self.E_root = p.add("embedding.root", (1, slot_dim), init="normal")
            if self.no_irc:
                self.root_irc = MeanPoolLinear(p, "root_pool", H, H)
            else:
                self.root_irc = NaryTreeLSTM(p, "root_irc", slot_dim, H, H, self.max_days)

        self.heads: Dict[str, PredictionHead] = {}
        if not self.no_aux_node_preds:
            self.heads["day"] = PredictionHead(p, "head.day", H, n_pois)
            self.heads["period"] = PredictionHead(p, "head.period", H, n_pois)
        self.heads["checkin"] = PredictionHead(p, "head.checkin", self.width, n_pois)
        if not self.no_geo_head:
            self.heads["geo"] = PredictionHead(p, "head.geo", H, n_geo_clusters)
        if not self.no_cat_head:
            self.heads["cat"] = PredictionHead(p, "head.category", H, n_categories)

        self.log_sigmas: Optional[Dict[str, Tensor]] = None
        if not self.no_multitask:
            tasks = ["poi"]
            tasks += [] if self.no_geo_head else ["geo"]
            tasks += [] if self.no_cat_head else ["cat"]
            self.log_sigmas = {
                task: p.add(f"loss.log_sigma_{task}", (1,), init="zeros")
                for task in tasks
            }

    @property
    def n_parameters(self) -> int:
        """"""
        return self.params.n_parameters

    def init_checkin_node(
        self,
        user: np.ndarray,
        poi: np.ndarray,
        category: np.ndarray,
        geo: np.ndarray,
        hour: np.ndarray,
    ) -> Tensor:
        """
        Leaf vectors e_s = [e_u ; e_l ; e_c ; e_g] + gamma * e_t(hour).

        Returns:
            Tensor: shape (n, D)
        """
        concatenated = F.concat(
            [
                F.gather(self.E_user, user),
                F.gather(self.E_poi, poi),
                F.gather(self.E_cat, category),
                F.gather(self.E_geo, geo),
            ]
        )
        if self.gamma == 0.0:
            return concatenated
        return F.add(concatenated, F.scale(F.gather(self.E_hour, hour), self.gamma))

    @staticmethod
    def _aggregate(
        cell, x: Tensor, child_h: Tensor, child_c: Optional[Tensor], present: np.ndarray
    ) -> Tuple[Tensor, Tensor]:
        """"""
        if isinstance(cell, MeanPoolLinear):
            return cell(x, child_h, present=present)
        return cell(x, child_h, child_c)

    def four_step(
        self,
        batch: TreeBatch,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
        return_attention: bool = False,
    ) -> NodeStates:
        """
        Node information interaction over a batch of trees.

        Args:
            batch (TreeBatch):
                collated trees
            training (bool):
                enables dropout
            rng (Optional[np.random.Generator]):
                generator of the dropout masks
            return_attention (bool):
                whether to keep the attention weights
        Returns:
            NodeStates: every intermediate representation, with the root e^(k)
        """
        attention = {}
        e_s = self.init_checkin_node(
            batch.leaf_user,
            batch.leaf_poi,
            batch.leaf_cat,
            batch.leaf_geo,
            batch.leaf_hour,
        )
        e_s = F.dropout(e_s, self.dropout_embed, rng, training)

        # Step 1: attention among the leaves of every period
        leaf_mask = batch.period_leaves < 0
        leaves = F.gather(e_s, batch.period_leaves)
        if self.leaf_iac is not None:
            leaves, attention["leaf"] = self.leaf_iac(
                leaves, leaf_mask, training, rng, return_attention
            )
        n_periods, n_members = batch.period_leaves.shape
        leaf_outputs = F.gather(
            F.reshape(leaves, (n_periods * n_members, self.width)),
            _grid_positions(batch.period_leaves, batch.n_leaves),
        )

        # Step 2: leaves into their period
        period_h, period_c = self._aggregate(
            self.period_irc,
            F.gather(self.E_period_slot, batch.period_slot),
            leaves,
            None,
            ~leaf_mask,
        )

        # Step 3: attention among the periods of every day
        day_mask = batch.day_periods < 0
        periods = F.gather(period_h, batch.day_periods)
        if self.period_iac is not None:
            periods, attention["period"] = self.period_iac(
                periods, day_mask, training, rng, return_attention
            )
        n_days, n_members = batch.day_periods.shape
        period_outputs = F.gather(
            F.reshape(periods, (n_days * n_members, self.hidden_size)),
            _grid_positions(batch.day_periods, batch.n_periods),
        )

        # Step 4: periods, placed at their slot, into their day
        day_h, day_c = self._aggregate(
            self.day_irc,
            F.gather(self.E_dow, batch.day_dow),
            F.gather(period_outputs, batch.day_slots),
            F.gather(period_c, batch.day_slots),
            batch.day_slots >= 0,
        )

        if self.root_irc is not None:
            root, _ = self._aggregate(
                self.root_irc,
                F.gather(self.E_root, np.zeros(len(batch), dtype=np.int64)),
                F.gather(day_h, batch.sample_days),
                F.gather(day_c, batch.sample_days),
                batch.sample_days >= 0,
            )
        else:
            root = F.gather(day_h, batch.current_day)

        return NodeStates(
            leaf_inputs=e_s,
            leaf_outputs=leaf_outputs,
            period_hidden=period_h,
            period_cell=period_c,
            period_outputs=period_outputs,
            day_hidden=day_h,
            day_cell=day_c,
            root=root,
            attention=attention,
        )

    def recommend_scores(
        self,
        checkin_logits: Tensor,
        day_logits: Optional[Tensor] = None,
        period_logits: Optional[Tensor] = None,
    ) -> Tensor:
        """
        Fused scores eta * day + delta * period + check-in. Without auxiliary node
        predictions the check-in logits are returned as they are.
        """
        if self.no_aux_node_preds or day_logits is None or period_logits is None:
            return checkin_logits
        return F.add(
            F.add(F.scale(day_logits, self.eta), F.scale(period_logits, self.delta)),
            checkin_logits,
        )

    def forward(
        self,
        batch: TreeBatch,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
        return_attention: bool = False,
    ) -> Tuple[RankedPrediction, NodeStates]:
        """
        Args:
            batch (TreeBatch):
                collated trees
            training (bool):
                enables dropout
            rng (Optional[np.random.Generator]):
                generator of the dropout masks, required when training with dropout
            return_attention (bool):
                whether to keep the attention weights
        Returns:
            Tuple[RankedPrediction, NodeStates]: scores and node representations
        """
        states = self.four_step(batch, training, rng, return_attention)
        last_checkin = F.gather(states.leaf_outputs, batch.last_leaf)
        checkin_logits = self.heads["checkin"](last_checkin)
        day_logits = period_logits = geo_logits = cat_logits = None
        if "day" in self.heads:
            # the current day node, also under a super root
            day_logits = self.heads["day"](F.gather(states.day_hidden, batch.current_day))
            period_logits = self.heads["period"](
                F.gather(states.period_outputs, batch.current_period)
            )
        if "geo" in self.heads:
            geo_logits = self.heads["geo"](states.root)
        if "cat" in self.heads:
            cat_logits = self.heads["cat"](states.root)

        prediction = RankedPrediction(
            scores=self.recommend_scores(checkin_logits, day_logits, period_logits),
            checkin_logits=checkin_logits,
            day_logits=day_logits,
            period_logits=period_logits,
            geo_logits=geo_logits,
            cat_logits=cat_logits,
        )
        return prediction, states

    __call__ = forward

    def loss(self, prediction: RankedPrediction, batch: TreeBatch) -> MultitaskLossOutput:
        """"""
        return self.objective(prediction, batch.targets, self.log_sigmas)

    def training_step(
        self, batch: TreeBatch, rng: Optional[np.random.Generator] = None
    ) -> MultitaskLossOutput:
        """Forward pass in train mode followed by the objective, recorded on the tape."""
        prediction, _ = self.forward(batch, training=True, rng=rng)
        return self.loss(prediction, batch)

    def validation_step(
        self, batch: TreeBatch
    ) -> Tuple[RankedPrediction, Dict[str, float]]:
        """
        Forward pass in eval mode without recording.

        Returns:
            Tuple[RankedPrediction, Dict[str, float]]: scores and loss components
        """
        with no_grad():
            prediction, _ = self.forward(batch, training=False)
            losses = {}
            if batch.targets["poi"].size:
                losses = self.loss(prediction, batch).to_dict()
        return prediction, losses

    def configure_optimizers(self) -> Tuple[Adam, StepLRScheduler]:
        """
        Method to define the optimizer and learning rate scheduler

        Returns:
            Tuple[Adam, StepLRScheduler]: Adam with L2 weight decay and its step decay
        """
        optimizer = Adam(
            self.params.as_dict(),
            lr=self.config.lr,
            betas=tuple(self.config.betas),
            eps=self.config.eps,
            weight_decay=self.config.weight_decay,
            max_grad_norm=self.config.clip_grad_norm,
        )
        scheduler = StepLRScheduler(
            optimizer, step=self.config.lr_step, gamma=self.config.lr_gamma
        )
        return optimizer, scheduler

    def save_checkpoint(self, path: str, **kwargs) -> str:
        """See `mtnet.utils.checkpoint.save_checkpoint`."""
        from ..utils.checkpoint import save_checkpoint

        return save_checkpoint(path, self, **kwargs)

    @classmethod
    def load_from_checkpoint(cls, path: str) -> "MTNet":
        """Rebuilds a model from a checkpoint, metadata attached as `checkpoint`."""
        from ..utils.checkpoint import load_checkpoint

        checkpoint = load_checkpoint(path)
        model = cls(training_config=checkpoint.config.train, **checkpoint.hparams)
        model.params.load_arrays(checkpoint.arrays)
        model.checkpoint = checkpoint
        logging.info(f"Model loaded from '{path}' (epoch {checkpoint.epoch})")
        return model

    def __repr__(self):
        return (
            f"<MTNet(width={self.width}, hidden_size={self.hidden_size},"
            f" slots_per_day={self.slots_per_day}, root={self.root})>"
        )
