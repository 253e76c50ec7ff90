from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from tabulate import tabulate


def ranks(scores: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """
    1-based rank of every target among all candidates.

    A candidate outranks the target when its score is strictly higher, or equal with a
    smaller id, so ranks are unique and deterministic.

    Args:
        scores (np.ndarray):
            scores of shape (B, |L|)
        targets (np.ndarray):
            true ids of shape (B,)
    Returns:
        np.ndarray: ranks of shape (B,)
    """
    scores = np.asarray(scores)
    targets = np.asarray(targets, dtype=np.int64)
    if scores.ndim != 2 or targets.shape != (scores.shape[0],):
        raise ValueError(
            f"expected scores (B, L) and targets (B,),"
            f" got {scores.shape} and {targets.shape}"
        )
    rows = np.arange(scores.shape[0])
    target_scores = scores[rows, targets][:, None]
    ids = np.arange(scores.shape[1])[None, :]
    higher = scores > target_scores
    tied_before = (scores == target_scores) & (ids < targets[:, None])
    return 1 + higher.sum(axis=1) + tied_before.sum(axis=1)


def acc_at_k(scores: np.ndarray, targets: np.ndarray, k: int) -> float:
    """Fraction of samples whose target ranks within the top `k`."""
    sample_ranks = ranks(scores, targets)
    if sample_ranks.size == 0:
        return 0.0
    return float(np.mean(sample_ranks <= k))


def mrr(scores: np.ndarray, targets: np.ndarray) -> float:
    """Mean reciprocal rank of the targets."""
    sample_ranks = ranks(scores, targets)
    if sample_ranks.size == 0:
        return 0.0
    return float(np.mean(1.0 / sample_ranks))


@dataclass
class EvalReport:
    """
    Ranking metrics over one split.

    Attributes:
        acc (Dict[int, float]): Acc@K for every cut-off K
        mrr (float): mean reciprocal rank
        n_samples (int): number of scored samples
        per_slot (Dict[int, Dict[str, float]]): metrics per period slot of the label
        loss (Optional[float]): mean objective when it was computed
        split (str): evaluated split
        mode (str): all_prefixes or last_prefix
        config_hash (str): hash of the configuration of the evaluated model
    """

    acc: Dict[int, float]
    mrr: float
    n_samples: int
    per_slot: Dict[int, Dict[str, float]] = field(default_factory=dict)
    loss: Optional[float] = None
    split: str = ""
    mode: str = ""
    config_hash: str = ""

    def to_dict(self) -> Dict[str, float]:
        """Flat metrics, e.g. {"acc@1": 0.2, ..., "mrr": 0.3}."""
        metrics = {f"acc@{k}": v for k, v in sorted(self.acc.items())}
        metrics["mrr"] = self.mrr
        if self.loss is not None:
            metrics["loss"] = self.loss
        return metrics

    def to_json(self) -> Dict:
        """"""
        return {
            "split": self.split,
            "mode": self.mode,
            "config_hash": self.config_hash,
            "n_samples": self.n_samples,
            "metrics": self.to_dict(),
            "per_slot": {
                str(slot): values for slot, values in sorted(self.per_slot.items())
            },
        }

    def get_table(self) -> str:
        """
        Method to format all the metrics into a pretty table.

        Returns:
            str: prettyfied table summarizing all the metrics
        """
        metrics = self.to_dict()
        table = tabulate(
            [[key, f"{value:.4f}"] for key, value in metrics.items()]
            + [["samples", self.n_samples]],
            headers=["metrics", self.split or "value"],
            tablefmt="fancy_grid",
        )
        if not self.per_slot:
            return table
        keys = [f"acc@{k}" for k in sorted(self.acc)] + ["mrr", "samples"]
        rows = [
            [slot] + [values[key] for key in keys]
            for slot, values in sorted(self.per_slot.items())
        ]
        return table + "\n" + tabulate(rows, headers=["slot"] + keys, floatfmt=".4f")


class RankingScorer(object):
    """
    Helper class accumulating ranks over batches to compute Acc@K and MRR.

    Args:
        ks (Sequence[int]):
            accuracy cut-offs
    """

    def __init__(self, ks: Sequence[int] = (1, 5, 10)):
        self.ks = sorted(set(int(k) for k in ks))
        self.reset()

    def reset(self) -> None:
        """"""
        self.ranks: List[np.ndarray] = []
        self.slots: List[np.ndarray] = []
        self.losses = defaultdict(list)

    def add(
        self,
        scores: np.ndarray,
        targets: np.ndarray,
        losses: Optional[Dict[str, float]] = None,
        slots: Optional[np.ndarray] = None,
    ) -> None:
        """
        Updates the scorer with one batch.

        Args:
            scores (np.ndarray):
                fused scores of shape (B, |L|)
            targets (np.ndarray):
                true POI ids of shape (B,)
            losses (Optional[Dict[str, float]]):
                batch losses to average
            slots (Optional[np.ndarray]):
                period slot of every label, for the per-slot breakdown
        """
        self.ranks.append(ranks(scores, targets))
        if slots is not None:
            self.slots.append(np.asarray(slots, dtype=np.int64))
        for key, value in (losses or {}).items():
            self.losses[key].append(value)

    @property
    def all_ranks(self) -> np.ndarray:
        """"""
        if not self.ranks:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(self.ranks)

    @property
    def n_samples(self) -> int:
        """"""
        return int(self.all_ranks.size)

    def acc(self, k: int) -> float:
        """"""
        sample_ranks = self.all_ranks
        return float(np.mean(sample_ranks <= k)) if sample_ranks.size else 0.0

    @property
    def mrr(self) -> float:
        """"""
        sample_ranks = self.all_ranks
        return float(np.mean(1.0 / sample_ranks)) if sample_ranks.size else 0.0

    def per_slot(self) -> Dict[int, Dict[str, float]]:
        """Metrics grouped by the period slot of the label."""
        if not self.slots:
            return {}
        sample_ranks = self.all_ranks
        slots = np.concatenate(self.slots)
        breakdown = {}
        for slot in np.unique(slots):
            selected = sample_ranks[slots == slot]
            values = {f"acc@{k}": float(np.mean(selected <= k)) for k in self.ks}
            values["mrr"] = float(np.mean(1.0 / selected))
            values["samples"] = int(selected.size)
            breakdown[int(slot)] = values
        return breakdown

    def to_dict(self) -> Dict[str, float]:
        """
        Returns all the accessible metrics within a dict where the key is the metric name
        and the value is the metric.

        Returns:
            Dict[str, float]: dict of metrics
        """
        metrics = {f"acc@{k}": self.acc(k) for k in self.ks}
        metrics["mrr"] = self.mrr
        for key, values in self.losses.items():
            metrics[key] = float(np.mean(values))
        return metrics

    def report(
        self, split: str = "", mode: str = "", config_hash: str = ""
    ) -> EvalReport:
        """Freezes the accumulated ranks into an `EvalReport`."""
        loss = self.losses.get("loss")
        return EvalReport(
            acc={k: self.acc(k) for k in self.ks},
            mrr=self.mrr,
            n_samples=self.n_samples,
            per_slot=self.per_slot(),
            loss=float(np.mean(loss)) if loss else None,
            split=split,
            mode=mode,
            config_hash=config_hash,
        )

    def get_table(self) -> str:
        """"""
        return self.report().get_table()
