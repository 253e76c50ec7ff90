"""
Synthetic check-in logs with planted habits: every user visits one fixed POI in every
slot of the day, so the next POI is determined by the user and the time slot. Slots can
be skipped at random and preceded by visits to random POIs, in which case only the
slot of the last check-in tells which habit comes next.
"""
import logging
import os

import numpy as np
import pandas as pd

from .mobility_tree import SECONDS_PER_DAY, SECONDS_PER_HOUR

# 2012-04-02, a Monday
BASE_DAY = 15432
COLUMNS = ["user", "poi", "category", "timestamp", "lat", "lon"]


def planted_habits(
    n_users: int, n_slots: int, n_pois: int, rng: np.random.Generator
) -> np.ndarray:
    """
    POI visited by every user in every slot, shape (n_users, n_slots). POIs repeat
    across slots, so the POI of a check-in alone does not reveal its slot.
    """
    return rng.integers(0, n_pois, size=(n_users, n_slots))


def synthesize_checkins(
    n_users: int = 20,
    trajectories_per_user: int = 5,
    slot_hours: int = 6,
    n_pois: int = 10,
    n_categories: int = 3,
    seed: int = 0,
    skip_prob: float = 0.0,
    noise_visits: int = 0,
) -> pd.DataFrame:
    """
    Generates one trajectory per user and day. A trajectory visits the slots of width
    `slot_hours` in order, at a random hour and minute inside the slot.

    Args:
        n_users (int):
            number of users
        trajectories_per_user (int):
            number of days per user; day t of every user is the same calendar day
        slot_hours (int):
            width of the planted slots, must divide 24
        n_pois (int):
            number of POIs
        n_categories (int):
            number of POI categories
        seed (int):
            seed of the generator
        skip_prob (float):
            probability that a user skips a slot on a given day; at least one slot
            is kept per day
        noise_visits (int):
            check-ins at uniformly drawn POIs made inside a slot before its habit
    Returns:
        pd.DataFrame: raw records with columns user, poi, category, timestamp (epoch
        seconds), lat, lon
    """
    if slot_hours < 1 or 24 % slot_hours != 0:
        raise ValueError(f"slot_hours should divide 24, got {slot_hours}")
    if not 0.0 <= skip_prob < 1.0:
        raise ValueError(f"skip_prob should be in [0, 1), got {skip_prob}")
    if noise_visits < 0:
        raise ValueError(f"noise_visits should be >= 0, got {noise_visits}")
    rng = np.random.default_rng(seed)
    n_slots = 24 // slot_hours
    habits = planted_habits(n_users, n_slots, n_pois, rng)

    centers = np.array([[40.70, -74.00], [40.80, -73.90], [40.60, -73.80]])
    poi_center = np.arange(n_pois) % len(centers)
    poi_coordinates = centers[poi_center] + rng.normal(0.0, 0.005, size=(n_pois, 2))
    poi_category = np.arange(n_pois) % n_categories

    def record(user: int, poi: int, timestamp: int) -> dict:
        return {
            "user": f"u{user:03d}",
            "poi": f"p{poi:03d}",
            "category": f"c{poi_category[poi]}",
            "timestamp": timestamp,
            "lat": round(float(poi_coordinates[poi, 0]), 6),
            "lon": round(float(poi_coordinates[poi, 1]), 6),
        }

    rows = []
    slot_minutes = slot_hours * 60
    for day in range(trajectories_per_user):
        start = (BASE_DAY + day) * SECONDS_PER_DAY
        for user in range(n_users):
            slots = np.arange(n_slots)
            if skip_prob > 0.0:
                kept = rng.random(n_slots) >= skip_prob
                if not kept.any():
                    kept[rng.integers(n_slots)] = True
                slots = slots[kept]
            for slot in slots:
                poi = int(habits[user, slot])
                if noise_visits == 0:
                    hour = slot * slot_hours + int(rng.integers(slot_hours))
                    minute = int(rng.integers(60))
                    timestamp = start + hour * SECONDS_PER_HOUR + minute * 60
                    rows.append(record(user, poi, timestamp))
                    continue
                offsets = np.sort(
                    rng.choice(slot_minutes, size=noise_visits + 1, replace=False)
                )
                slot_start = start + int(slot) * slot_hours * SECONDS_PER_HOUR
                for offset in offsets[:-1]:
                    noise = int(rng.integers(n_pois))
                    rows.append(record(user, noise, slot_start + int(offset) * 60))
                rows.append(record(user, poi, slot_start + int(offsets[-1]) * 60))
    return pd.DataFrame(rows, columns=COLUMNS)


def write_synthetic(path: str, **kwargs) -> pd.DataFrame:
    """Writes `synthesize_checkins(**kwargs)` as a CSV file with a header."""
    frame = synthesize_checkins(**kwargs)
    if os.path.dirname(path):
        os.makedirs(os.path.dirname(path), exist_ok=True)
    frame.to_csv(path, index=False)
    logging.info(f"Synthetic check-ins ({len(frame)} rows) written to '{path}'")
    return frame
