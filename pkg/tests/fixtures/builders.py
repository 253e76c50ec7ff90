from typing import List, Optional, Sequence, Tuple

import numpy as np

from mtnet.data.mobility_tree import SECONDS_PER_DAY, SECONDS_PER_HOUR
from mtnet.utils.types import CheckIn, Trajectory

# 2012-08-01 00:00 UTC, a Wednesday
AUG_1 = 15553 * SECONDS_PER_DAY


def checkin(
    poi: int = 0,
    hours: float = 0.0,
    user: int = 0,
    category: int = 0,
    geo: int = 0,
    base: int = AUG_1,
) -> CheckIn:
    """"""
    return CheckIn(
        user_id=user,
        poi_id=poi,
        category_id=category,
        lat=40.7,
        lon=-74.0,
        timestamp=base + int(hours * SECONDS_PER_HOUR),
        geo_cluster_id=geo,
    )


def trajectory(
    hours: Sequence[float],
    pois: Optional[Sequence[int]] = None,
    user: int = 0,
    label: Optional[Tuple[int, float]] = None,
) -> Trajectory:
    """Check-ins at `hours` after Aug 1 midnight, optionally labelled (poi, hours)."""
    pois = list(pois) if pois is not None else list(range(len(hours)))
    return Trajectory(
        user_id=user,
        checkins=[checkin(p, h, user=user) for p, h in zip(pois, hours)],
        label=checkin(label[0], label[1], user=user) if label is not None else None,
    )


def two_day_trajectory() -> Trajectory:
    """
    Eight check-ins over Aug 1 and Aug 2: three periods of 4 on the first day, two on
    the second.
    """
    return trajectory([8, 9.5, 13, 15, 19, 28, 31.5, 33])


def random_prefix(
    rng: np.random.Generator, n_pois: int = 20, max_len: int = 12, span_hours: int = 48
) -> List[CheckIn]:
    """Chronological check-ins at random times over `span_hours`."""
    n = int(rng.integers(1, max_len + 1))
    seconds = np.sort(rng.integers(0, span_hours * SECONDS_PER_HOUR, size=n))
    return [
        CheckIn(
            user_id=0,
            poi_id=int(rng.integers(n_pois)),
            category_id=0,
            lat=0.0,
            lon=0.0,
            timestamp=AUG_1 + int(s),
            geo_cluster_id=0,
        )
        for s in seconds
    ]
