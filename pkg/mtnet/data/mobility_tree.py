"""
Mobility Trees: the check-ins of a trajectory prefix grouped into day nodes, period
nodes (one of P equal intervals of the day) and raw check-in leaves.
"""
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from ..utils.errors import ConfigurationException, TreeConstructionError
from ..utils.types import CheckIn, Trajectory

SECONDS_PER_HOUR = 3600
SECONDS_PER_DAY = 24 * SECONDS_PER_HOUR
WEEKDAYS = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")


def _local_seconds(timestamp: int, tz_offset_hours: float = 0.0) -> int:
    """"""
    return int(timestamp) + int(round(tz_offset_hours * SECONDS_PER_HOUR))


def hour_of_day(timestamp: int, tz_offset_hours: float = 0.0) -> int:
    """Hour in [0, 24) of a UTC epoch timestamp shifted by the dataset offset."""
    return (_local_seconds(timestamp, tz_offset_hours) // SECONDS_PER_HOUR) % 24


def day_key(timestamp: int, tz_offset_hours: float = 0.0) -> int:
    """Number of local calendar days since 1970-01-01."""
    return _local_seconds(timestamp, tz_offset_hours) // SECONDS_PER_DAY


def day_of_week(key: int) -> int:
    """Monday is 0. 1970-01-01 was a Thursday."""
    return (int(key) + 3) % 7


def check_slots_per_day(slots_per_day: int) -> None:
    """"""
    if slots_per_day < 1 or 24 % slots_per_day != 0:
        raise ConfigurationException(
            f"{slots_per_day} does not divide 24", key="model.slots_per_day"
        )


def period_index(timestamp: int, slots_per_day: int, tz_offset_hours: float = 0.0) -> int:
    """
    Period slot of a timestamp: floor(hour_of_day / (24 / P)).

    Args:
        timestamp (int):
            UTC epoch seconds
        slots_per_day (int):
            number P of periods in a day, must divide 24
        tz_offset_hours (float):
            offset of the local time to UTC
    Returns:
        int: slot in [0, P)
    """
    check_slots_per_day(slots_per_day)
    return hour_of_day(timestamp, tz_offset_hours) // (24 // slots_per_day)


def slot_label(slot: int, slots_per_day: int) -> str:
    """E.g. "12:00~18:00" for slot 2 of 4."""
    width = 24 // slots_per_day
    return f"{slot * width:02d}:00~{(slot + 1) * width:02d}:00"


@dataclass
class LeafNode:
    checkin: CheckIn
    hour: int
    embedding: Optional[np.ndarray] = None


@dataclass
class PeriodNode:
    slot_index: int
    leaves: List[LeafNode] = field(default_factory=list)
    state: Optional[Tuple[np.ndarray, np.ndarray]] = None


@dataclass
class DayNode:
    day_key: int
    day_of_week: int
    periods: List[PeriodNode] = field(default_factory=list)
    state: Optional[Tuple[np.ndarray, np.ndarray]] = None


@dataclass
class MobilityTree:
    """
    Day nodes over period nodes over check-in leaves.

    Attributes:
        days (List[DayNode]): day nodes ordered by day key
        slots_per_day (int): number P of period slots
        source (Trajectory): prefix the tree was built from
        current_path (Tuple[int, int, int]): (day, period, leaf) positions of the last
            check-in
    """

    days: List[DayNode]
    slots_per_day: int
    source: Trajectory
    current_path: Tuple[int, int, int]

    @property
    def periods(self) -> List[PeriodNode]:
        """"""
        return [period for day in self.days for period in day.periods]

    @property
    def leaves(self) -> List[LeafNode]:
        """Leaves in (day, period, time) order."""
        return [leaf for period in self.periods for leaf in period.leaves]

    def checkins(self) -> List[CheckIn]:
        """"""
        return [leaf.checkin for leaf in self.leaves]

    @property
    def current_day(self) -> DayNode:
        """"""
        return self.days[self.current_path[0]]

    @property
    def current_period(self) -> PeriodNode:
        """"""
        return self.current_day.periods[self.current_path[1]]

    @property
    def last_leaf(self) -> LeafNode:
        """"""
        return self.current_period.leaves[self.current_path[2]]


class TreeStats(NamedTuple):
    days: int
    periods: int
    leaves: int
    max_leaves_per_period: int


def build_mobility_tree(
    prefix: Union[Trajectory, Sequence[CheckIn]],
    slots_per_day: int,
    tz_offset_hours: float = 0.0,
) -> MobilityTree:
    """
    Groups the check-ins of a prefix by (calendar day, period slot).

    Args:
        prefix (Union[Trajectory, Sequence[CheckIn]]):
            chronological check-ins
        slots_per_day (int):
            number P of period slots, must divide 24
        tz_offset_hours (float):
            offset of the local time to UTC, used for days and hours
    Returns:
        MobilityTree: the tree, with `current_path` pointing at the last check-in
    Raises:
        TreeConstructionError: on an empty or unordered prefix
    """
    check_slots_per_day(slots_per_day)
    if isinstance(prefix, Trajectory):
        source = prefix
        checkins = list(prefix.checkins)
    else:
        checkins = list(prefix)
        user_id = checkins[0].user_id if checkins else -1
        source = Trajectory(user_id=user_id, checkins=checkins)
    if not checkins:
        raise TreeConstructionError("cannot build a Mobility Tree from an empty prefix")

    width = 24 // slots_per_day
    days: List[DayNode] = []
    previous = None
    for checkin in checkins:
        key = day_key(checkin.timestamp, tz_offset_hours)
        hour = hour_of_day(checkin.timestamp, tz_offset_hours)
        slot = hour // width
        if previous is not None and checkin.timestamp < previous:
            raise TreeConstructionError(
                f"check-ins are not chronological at timestamp {checkin.timestamp}"
            )
        if not days or days[-1].day_key != key:
            days.append(DayNode(day_key=key, day_of_week=day_of_week(key)))
        day = days[-1]
        if not day.periods or day.periods[-1].slot_index != slot:
            day.periods.append(PeriodNode(slot_index=slot))
        day.periods[-1].leaves.append(LeafNode(checkin=checkin, hour=hour))
        previous = checkin.timestamp

    last_day = days[-1]
    current_path = (
        len(days) - 1,
        len(last_day.periods) - 1,
        len(last_day.periods[-1].leaves) - 1,
    )
    return MobilityTree(
        days=days, slots_per_day=slots_per_day, source=source, current_path=current_path
    )


def tree_stats(tree: MobilityTree) -> TreeStats:
    """"""
    periods = tree.periods
    return TreeStats(
        days=len(tree.days),
        periods=len(periods),
        leaves=sum(len(period.leaves) for period in periods),
        max_leaves_per_period=max(len(period.leaves) for period in periods),
    )


def render_tree(tree: MobilityTree, vocab=None) -> str:
    """
    Indented text rendering of a tree, the current path marked with '*'.

    Args:
        tree (MobilityTree):
            tree to render
        vocab (Optional[Vocab]):
            when given, raw keys are printed instead of ids
    Returns:
        str: one line per node
    """
    lines = [f"user {_key(vocab, 'users', tree.source.user_id)}"]
    day_pos, period_pos, _ = tree.current_path
    for d, day in enumerate(tree.days):
        mark = "*" if d == day_pos else " "
        lines.append(f"{mark} day {day.day_key} ({WEEKDAYS[day.day_of_week]})")
        for p, period in enumerate(day.periods):
            mark = "*" if (d, p) == (day_pos, period_pos) else " "
            label = slot_label(period.slot_index, tree.slots_per_day)
            lines.append(f"  {mark} period {period.slot_index} [{label}]")
            for s, leaf in enumerate(period.leaves):
                mark = "*" if (d, p, s) == tree.current_path else " "
                c = leaf.checkin
                lines.append(
                    f"    {mark} {leaf.hour:02d}h poi={_key(vocab, 'pois', c.poi_id)}"
                    f" cat={_key(vocab, 'categories', c.category_id)}"
                    f" geo={c.geo_cluster_id}"
                )
    return "\n".join(lines)


def _key(vocab, table: str, index: int):
    """"""
    if vocab is None:
        return index
    return getattr(vocab, table).key_of(index)
