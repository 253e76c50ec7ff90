import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np
from overrides import overrides

from ...utils.types import Trajectory
from ..bundle import DatasetBundle
from ..ingest import make_supervised_samples
from ..mobility_tree import build_mobility_tree, period_index, tree_stats
from .base import BaseDataModule


@dataclass
class TreeBatch:
    """
    Mobility Trees of several samples flattened into index arrays.

    Leaves, periods and days of all trees are numbered consecutively. Every index
    array uses -1 for padding, which the gather primitive turns into zero rows.

    Attributes:
        leaf_user, leaf_poi, leaf_cat, leaf_geo, leaf_hour (np.ndarray): leaf
            features, shape (n_leaves,)
        period_leaves (np.ndarray): leaves of every period, shape (n_periods, M)
        period_slot (np.ndarray): slot index of every period, shape (n_periods,)
        day_periods (np.ndarray): periods of every day in time order, shape
            (n_days, Pmax)
        day_slots (np.ndarray): period of every day at every slot position, shape
            (n_days, P)
        day_dow (np.ndarray): day of week of every day, shape (n_days,)
        sample_days (np.ndarray): last `max_days` days of every sample, right
            aligned, shape (B, max_days)
        current_day, current_period, last_leaf (np.ndarray): node positions on the
            current path of every sample, shape (B,)
        targets (Dict[str, np.ndarray]): "poi", "geo" and "cat" ids of the labels
        label_slot (np.ndarray): period slot of every label, shape (B,)
        samples (List[Trajectory]): the collated samples
        n_truncated (int): leaves dropped by the leaf fan-out cap
    """

    leaf_user: np.ndarray
    leaf_poi: np.ndarray
    leaf_cat: np.ndarray
    leaf_geo: np.ndarray
    leaf_hour: np.ndarray
    period_leaves: np.ndarray
    period_slot: np.ndarray
    day_periods: np.ndarray
    day_slots: np.ndarray
    day_dow: np.ndarray
    sample_days: np.ndarray
    current_day: np.ndarray
    current_period: np.ndarray
    last_leaf: np.ndarray
    targets: Dict[str, np.ndarray]
    label_slot: np.ndarray
    samples: List[Trajectory] = field(default_factory=list)
    n_truncated: int = 0

    def __len__(self) -> int:
        return int(self.current_day.shape[0])

    @property
    def n_leaves(self) -> int:
        """"""
        return int(self.leaf_poi.shape[0])

    @property
    def n_periods(self) -> int:
        """"""
        return int(self.period_slot.shape[0])

    @property
    def n_days(self) -> int:
        """"""
        return int(self.day_dow.shape[0])


def _ints(values) -> np.ndarray:
    """"""
    return np.asarray(values, dtype=np.int64)


def _padded(rows: Sequence[Sequence[int]], width: int) -> np.ndarray:
    """"""
    out = np.full((len(rows), width), -1, dtype=np.int64)
    for i, row in enumerate(rows):
        out[i, : len(row)] = row
    return out


def collate(
    samples: Sequence[Trajectory],
    slots_per_day: int,
    leaf_fanout: Optional[int] = None,
    max_days: int = 2,
    tz_offset_hours: float = 0.0,
) -> TreeBatch:
    """
    Builds the Mobility Tree of every sample and merges them into a `TreeBatch`.

    Periods holding more than `leaf_fanout` leaves keep their newest `leaf_fanout`
    leaves; a warning reports how many were dropped.

    Args:
        samples (Sequence[Trajectory]):
            prefixes, with labels when targets are needed
        slots_per_day (int):
            number P of period slots
        leaf_fanout (Optional[int]):
            maximum number of leaves per period, no cap when None
        max_days (int):
            number of day positions kept for the super root
        tz_offset_hours (float):
            offset of the local time to UTC
    Returns:
        TreeBatch: flattened batch
    """
    if not samples:
        raise ValueError("cannot collate an empty list of samples")
    leaves = {"user": [], "poi": [], "cat": [], "geo": [], "hour": []}
    period_leaves, period_slot = [], []
    day_periods, day_slots, day_dow = [], [], []
    sample_days, current = [], {"day": [], "period": [], "leaf": []}
    targets = {"poi": [], "geo": [], "cat": []}
    label_slot = []
    n_truncated = 0

    for sample in samples:
        tree = build_mobility_tree(sample, slots_per_day, tz_offset_hours)
        first_day = len(day_dow)
        for day in tree.days:
            periods_of_day = []
            slots = [-1] * slots_per_day
            for period in day.periods:
                kept = period.leaves
                if leaf_fanout is not None and len(kept) > leaf_fanout:
                    n_truncated += len(kept) - leaf_fanout
                    kept = kept[-leaf_fanout:]
                first_leaf = len(leaves["poi"])
                for leaf in kept:
                    leaves["user"].append(leaf.checkin.user_id)
                    leaves["poi"].append(leaf.checkin.poi_id)
                    leaves["cat"].append(leaf.checkin.category_id)
                    leaves["geo"].append(leaf.checkin.geo_cluster_id)
                    leaves["hour"].append(leaf.hour)
                period_id = len(period_slot)
                period_leaves.append(list(range(first_leaf, first_leaf + len(kept))))
                period_slot.append(period.slot_index)
                slots[period.slot_index] = period_id
                periods_of_day.append(period_id)
            day_periods.append(periods_of_day)
            day_slots.append(slots)
            day_dow.append(day.day_of_week)

        days = list(range(first_day, len(day_dow)))[-max_days:]
        sample_days.append([-1] * (max_days - len(days)) + days)
        current["day"].append(len(day_dow) - 1)
        current["period"].append(len(period_slot) - 1)
        current["leaf"].append(len(leaves["poi"]) - 1)

        label = sample.label
        if label is not None:
            targets["poi"].append(label.poi_id)
            targets["geo"].append(label.geo_cluster_id)
            targets["cat"].append(label.category_id)
            label_slot.append(
                period_index(label.timestamp, slots_per_day, tz_offset_hours)
            )

    if n_truncated:
        logging.warning(
            f"{n_truncated} leaves exceeding the leaf fan-out {leaf_fanout} were dropped"
        )
    if targets["poi"] and len(targets["poi"]) != len(samples):
        raise ValueError("either every sample or none should carry a label")

    return TreeBatch(
        leaf_user=_ints(leaves["user"]),
        leaf_poi=_ints(leaves["poi"]),
        leaf_cat=_ints(leaves["cat"]),
        leaf_geo=_ints(leaves["geo"]),
        leaf_hour=_ints(leaves["hour"]),
        period_leaves=_padded(period_leaves, max(len(p) for p in period_leaves)),
        period_slot=_ints(period_slot),
        day_periods=_padded(day_periods, max(len(d) for d in day_periods)),
        day_slots=_ints(day_slots).reshape(len(day_slots), slots_per_day),
        day_dow=_ints(day_dow),
        sample_days=_ints(sample_days).reshape(len(samples), max_days),
        current_day=_ints(current["day"]),
        current_period=_ints(current["period"]),
        last_leaf=_ints(current["leaf"]),
        targets={key: _ints(values) for key, values in targets.items()},
        label_slot=_ints(label_slot),
        samples=list(samples),
        n_truncated=n_truncated,
    )


def max_leaves_per_period(
    trajectories: Sequence[Trajectory], slots_per_day: int, tz_offset_hours: float = 0.0
) -> int:
    """Largest period of any tree built from the trajectories."""
    largest = 1
    for trajectory in trajectories:
        tree = build_mobility_tree(trajectory, slots_per_day, tz_offset_hours)
        largest = max(largest, tree_stats(tree).max_leaves_per_period)
    return largest


def shape_key(sample: Trajectory, slots_per_day: int, tz_offset_hours: float) -> tuple:
    """(leaf-count bucket, day count) of the tree of a sample."""
    stats = tree_stats(build_mobility_tree(sample, slots_per_day, tz_offset_hours))
    return (int(np.ceil(np.log2(stats.leaves + 1))), stats.days)


class MobilityDataModule(BaseDataModule):
    """
    DataModule turning the trajectories of a bundle into batches of Mobility Trees.

    Args:
        bundle (Optional[DatasetBundle]):
            preprocessed dataset
        bundle_path (Optional[str]):
            path of the bundle, loaded in `prepare_data`
        slots_per_day (int):
            number P of period slots
        leaf_fanout (Optional[int]):
            leaf cap per period, the largest period of the dataset when None
        max_days (int):
            number of day positions of the super root
        train_batch_size (int):
            samples per training batch
        eval_batch_size (int):
            samples per evaluation batch
        last_step_only (bool):
            train on the last prefix of every trajectory only
        eval_mode (str):
            "all_prefixes" or "last_prefix" for the valid and test splits
        bucket_by_shape (bool):
            group training samples of similar tree shape into the same batches
        shuffle (bool):
            shuffle training samples every epoch
    """

    def __init__(
        self,
        bundle: Optional[DatasetBundle] = None,
        bundle_path: Optional[str] = None,
        slots_per_day: int = 4,
        leaf_fanout: Optional[int] = None,
        max_days: int = 2,
        train_batch_size: int = 1024,
        eval_batch_size: int = 1024,
        last_step_only: bool = False,
        eval_mode: str = "all_prefixes",
        bucket_by_shape: bool = False,
        shuffle: bool = True,
        **kwargs,
    ):
        super().__init__(bundle=bundle, bundle_path=bundle_path)
        self.slots_per_day = slots_per_day
        self.leaf_fanout = leaf_fanout
        self.max_days = max_days
        self.train_batch_size = train_batch_size
        self.eval_batch_size = eval_batch_size
        self.last_step_only = last_step_only
        self.eval_mode = eval_mode
        self.bucket_by_shape = bucket_by_shape
        self.shuffle = shuffle

        self.train = None
        self.val = None
        self.test = None

    @property
    def tz_offset_hours(self) -> float:
        """"""
        return self.bundle.timezone_offset_hours if self.bundle is not None else 0.0

    def samples(self, split: str, mode: Optional[str] = None) -> List[Trajectory]:
        """Supervised samples of one split, in the split's default mode when None."""
        if mode is None:
            if split == "train":
                mode = "last_prefix" if self.last_step_only else "all_prefixes"
            else:
                mode = self.eval_mode
        return make_supervised_samples(
            self.bundle.split[split], last_step_only=mode == "last_prefix"
        )

    @overrides
    def setup(self, stage: Optional[str] = None) -> None:
        """"""
        if self.bundle is None:
            self.prepare_data()
        self.train = self.samples("train")
        self.val = self.samples("valid")
        self.test = self.samples("test")
        if self.leaf_fanout is None:
            self.leaf_fanout = max_leaves_per_period(
                self.bundle.trajectories(), self.slots_per_day, self.tz_offset_hours
            )
            logging.info(f"Leaf fan-out set to the dataset maximum: {self.leaf_fanout}")
        logging.info(
            f"Samples (train, valid, test):"
            f" {len(self.train)}, {len(self.val)}, {len(self.test)}"
        )

    def collate(self, samples: Sequence[Trajectory]) -> TreeBatch:
        """"""
        return collate(
            samples,
            slots_per_day=self.slots_per_day,
            leaf_fanout=self.leaf_fanout,
            max_days=self.max_days,
            tz_offset_hours=self.tz_offset_hours,
        )

    def batches(
        self,
        samples: Sequence[Trajectory],
        batch_size: int,
        rng: Optional[np.random.Generator] = None,
        bucket_by_shape: bool = False,
    ) -> Iterator[TreeBatch]:
        """
        Yields collated batches of at most `batch_size` samples, the last one possibly
        smaller. Samples are permuted with `rng` when given.
        """
        order = np.arange(len(samples))
        if rng is not None:
            order = rng.permutation(len(samples))
        if bucket_by_shape:
            keys = {
                int(i): shape_key(samples[i], self.slots_per_day, self.tz_offset_hours)
                for i in order
            }
            order = np.array(sorted(order.tolist(), key=keys.__getitem__), dtype=np.int64)
        chunks = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
        if bucket_by_shape and rng is not None:
            chunks = [chunks[i] for i in rng.permutation(len(chunks))]
        for chunk in chunks:
            yield self.collate([samples[i] for i in chunk])

    def n_batches(self, n_samples: int, batch_size: int) -> int:
        """"""
        return -(-n_samples // batch_size)

    def train_dataloader(
        self, rng: Optional[np.random.Generator] = None
    ) -> Iterator[TreeBatch]:
        """
        Returns:
            Iterator[TreeBatch]: training batches, shuffled when `shuffle` is set
        """
        return self.batches(
            self.train,
            self.train_batch_size,
            rng=rng if self.shuffle else None,
            bucket_by_shape=self.bucket_by_shape,
        )

    def val_dataloader(self) -> Iterator[TreeBatch]:
        """
        Returns:
            Iterator[TreeBatch]: validation batches
        """
        return self.batches(self.val, self.eval_batch_size)

    def test_dataloader(self) -> Iterator[TreeBatch]:
        """
        Returns:
            Iterator[TreeBatch]: test batches
        """
        return self.batches(self.test, self.eval_batch_size)
