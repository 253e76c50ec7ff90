"""
Check-in log ingestion: parsing, frequency filtering, vocabularies, geographic
clustering, trajectory windows and the chronological split.
"""
import io
import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import IO, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from omegaconf import DictConfig

from ..utils.errors import ConfigurationException
from ..utils.types import CheckIn, DatasetSplit, Trajectory
from ..utils.vocabulary import Vocab, Vocabulary
from .kmeans import kmeans_geo
from .mobility_tree import SECONDS_PER_HOUR

FIELDS = ("user", "poi", "category", "timestamp", "lat", "lon")
UNIX_FORMAT = "unix"


@dataclass
class ParseResult:
    """
    Attributes:
        records (pd.DataFrame): one row per valid check-in with columns user, poi,
            category (raw keys), timestamp (UTC epoch seconds), lat and lon
        n_malformed (int): number of skipped rows
    """

    records: pd.DataFrame
    n_malformed: int = 0

    def __len__(self) -> int:
        return len(self.records)


def _empty_records() -> pd.DataFrame:
    """"""
    return pd.DataFrame(
        {
            "user": pd.Series([], dtype=object),
            "poi": pd.Series([], dtype=object),
            "category": pd.Series([], dtype=object),
            "timestamp": pd.Series([], dtype=np.int64),
            "lat": pd.Series([], dtype=np.float64),
            "lon": pd.Series([], dtype=np.float64),
        }
    )


def _to_epoch_seconds(values: pd.Series, timestamp_format: Optional[str]) -> pd.Series:
    """Parses timestamps into float epoch seconds, NaN where parsing fails."""
    if timestamp_format == UNIX_FORMAT:
        return pd.to_numeric(values, errors="coerce")
    parsed = pd.to_datetime(
        values, utc=True, errors="coerce", format=timestamp_format or None
    )
    seconds = (parsed - pd.Timestamp(0, tz="UTC")) / pd.Timedelta(seconds=1)
    return seconds.astype(np.float64)


def parse_checkins(
    source: Union[str, IO[str]], dataset_config: DictConfig
) -> ParseResult:
    """
    Reads a delimiter-separated check-in log.

    Rows with a wrong number of fields, an empty identifier, an unparseable timestamp
    or coordinates outside [-90, 90] x [-180, 180] are skipped and counted.

    Args:
        source (Union[str, IO[str]]):
            path or text stream
        dataset_config (DictConfig):
            `dataset` section: delimiter, header, names, columns and timestamp format
    Returns:
        ParseResult: decoded records and number of malformed rows
    """
    if isinstance(source, str):
        try:
            with open(source, "r", encoding="utf-8", errors="replace") as handle:
                text = handle.read()
        except OSError as e:
            raise OSError(f"cannot read check-in file '{source}': {e.strerror}") from e
    else:
        text = source.read()
    if not text.strip():
        return ParseResult(records=_empty_records(), n_malformed=0)

    bad_lines = []

    def _on_bad_line(line: List[str]) -> None:
        bad_lines.append(line)
        return None

    names = list(dataset_config.names) if dataset_config.names is not None else None
    frame = pd.read_csv(
        io.StringIO(text),
        sep=dataset_config.delimiter,
        header=0 if dataset_config.header else None,
        names=names,
        dtype=str,
        keep_default_na=False,
        skipinitialspace=True,
        engine="python",
        on_bad_lines=_on_bad_line,
    )

    columns = {name: dataset_config.columns[name] for name in FIELDS}
    for name, column in columns.items():
        if column not in frame.columns:
            raise ConfigurationException(
                f"column '{column}' not found, available: {list(frame.columns)}",
                key=f"dataset.columns.{name}",
            )

    records = pd.DataFrame(
        {name: frame[column].astype(str).str.strip() for name, column in columns.items()}
    )
    timestamp = _to_epoch_seconds(records["timestamp"], dataset_config.timestamp_format)
    lat = pd.to_numeric(records["lat"], errors="coerce")
    lon = pd.to_numeric(records["lon"], errors="coerce")
    valid = (
        timestamp.notna()
        & lat.between(-90.0, 90.0)
        & lon.between(-180.0, 180.0)
        & (records["user"] != "")
        & (records["poi"] != "")
    )

    n_malformed = len(bad_lines) + int((~valid).sum())
    if n_malformed:
        logging.warning(f"Skipped {n_malformed} malformed check-in rows")

    records = records.loc[valid, ["user", "poi", "category"]].copy()
    records["timestamp"] = np.floor(timestamp[valid].to_numpy()).astype(np.int64)
    records["lat"] = lat[valid].to_numpy(dtype=np.float64)
    records["lon"] = lon[valid].to_numpy(dtype=np.float64)
    records = records.reset_index(drop=True)
    logging.info(f"Parsed {len(records)} check-ins")
    return ParseResult(records=records, n_malformed=n_malformed)


def filter_records(
    records: pd.DataFrame, min_user_checkins: int = 10, min_poi_visits: int = 10
) -> pd.DataFrame:
    """
    Removes the records of users with fewer than `min_user_checkins` records, then
    the records of POIs visited fewer than `min_poi_visits` times by the remaining
    users. Each pass runs once, in this order.

    Args:
        records (pd.DataFrame):
            parsed records
        min_user_checkins (int):
            user threshold, inclusive
        min_poi_visits (int):
            POI threshold, inclusive
    Returns:
        pd.DataFrame: kept records, original order preserved
    """
    user_counts = records.groupby("user")["user"].transform("size")
    kept = records[user_counts >= min_user_checkins]
    poi_counts = kept.groupby("poi")["poi"].transform("size")
    kept = kept[poi_counts >= min_poi_visits].reset_index(drop=True)
    logging.info(
        f"Filtering kept {len(kept)}/{len(records)} check-ins"
        f" ({kept['user'].nunique()} users, {kept['poi'].nunique()} POIs)"
    )
    return kept


def build_vocab(
    records: pd.DataFrame, n_geo_clusters: int = 60, max_iters: int = 300, seed: int = 42
) -> Vocab:
    """
    Builds sorted vocabularies and the POI attribute table, then clusters POI
    coordinates into `n_geo_clusters` geographic areas.

    A POI takes the category and coordinates of its earliest record.
    """
    users = Vocabulary.from_values(records["user"], name="users")
    pois = Vocabulary.from_values(records["poi"], name="pois")
    categories = Vocabulary.from_values(records["category"], name="categories")

    first = (
        records.assign(poi_id=pois.encode(records["poi"]))
        .sort_values(["poi_id", "timestamp"], kind="stable")
        .drop_duplicates("poi_id")
    )
    poi_category = categories.encode(first["category"])
    poi_coordinates = first[["lat", "lon"]].to_numpy(dtype=np.float64)

    clusters = kmeans_geo(
        poi_coordinates, k=n_geo_clusters, max_iters=max_iters, seed=seed
    )
    return Vocab(
        users=users,
        pois=pois,
        categories=categories,
        poi_category=poi_category,
        poi_geo_cluster=clusters.labels,
        poi_coordinates=poi_coordinates,
        geo_centroids=clusters.centroids,
    )


def encode_records(records: pd.DataFrame, vocab: Vocab) -> List[CheckIn]:
    """
    Maps raw records to id-based check-ins. Category and geographic cluster come
    from the POI attribute table.
    """
    user_ids = vocab.users.encode(records["user"])
    poi_ids = vocab.pois.encode(records["poi"])
    return [
        CheckIn(
            user_id=int(user),
            poi_id=int(poi),
            category_id=int(vocab.poi_category[poi]),
            lat=float(lat),
            lon=float(lon),
            timestamp=int(ts),
            geo_cluster_id=int(vocab.poi_geo_cluster[poi]),
        )
        for user, poi, lat, lon, ts in zip(
            user_ids,
            poi_ids,
            records["lat"].to_numpy(),
            records["lon"].to_numpy(),
            records["timestamp"].to_numpy(),
        )
    ]


def split_trajectories(
    checkins: Iterable[CheckIn], window_hours: float = 24.0
) -> List[Trajectory]:
    """
    Cuts the chronological check-ins of every user into trajectories. A new
    trajectory starts whenever a check-in is more than `window_hours` after the first
    check-in of the current one. Trajectories shorter than 2 are discarded.

    Returns:
        List[Trajectory]: trajectories ordered by user id, then time
    """
    window = window_hours * SECONDS_PER_HOUR
    by_user: Dict[int, List[CheckIn]] = defaultdict(list)
    for checkin in checkins:
        by_user[checkin.user_id].append(checkin)

    trajectories: List[Trajectory] = []
    n_discarded = 0
    for user_id in sorted(by_user):
        current: List[CheckIn] = []
        for checkin in sorted(by_user[user_id], key=lambda c: c.timestamp):
            if current and checkin.timestamp - current[0].timestamp > window:
                if len(current) >= 2:
                    trajectories.append(Trajectory(user_id=user_id, checkins=current))
                else:
                    n_discarded += 1
                current = []
            current.append(checkin)
        if len(current) >= 2:
            trajectories.append(Trajectory(user_id=user_id, checkins=current))
        elif current:
            n_discarded += 1

    logging.info(
        f"Built {len(trajectories)} trajectories, discarded {n_discarded} of length 1"
    )
    return trajectories


def split_boundaries(n: int, fractions: Sequence[float]) -> List[int]:
    """Cut indices floor(cumulative fraction x n)."""
    cumulative = np.cumsum(np.asarray(fractions, dtype=np.float64))
    return [int(np.floor(c * n + 1e-9)) for c in cumulative[:-1]]


def chronological_split(
    trajectories: Sequence[Trajectory], fractions: Sequence[float] = (0.8, 0.1, 0.1)
) -> DatasetSplit:
    """
    Sorts trajectories by end time (stable) and cuts them into train, valid and test.

    Raises:
        ConfigurationException: with fewer than 3 trajectories
    """
    if len(trajectories) < 3:
        raise ConfigurationException(
            f"at least 3 trajectories are needed for a split, got {len(trajectories)}",
            key="dataset.input_path",
        )
    ordered = sorted(trajectories, key=lambda t: t.end_time)
    first, second = split_boundaries(len(ordered), fractions)
    split = DatasetSplit(
        train=ordered[:first], valid=ordered[first:second], test=ordered[second:]
    )
    logging.info(f"Split sizes (train, valid, test): {split.sizes()}")
    return split


def make_supervised_samples(
    trajectories: Iterable[Trajectory], last_step_only: bool = False
) -> List[Trajectory]:
    """
    Expands every trajectory of length k into the samples (s_1..s_j, s_{j+1}) for j
    in [1, k - 1], or only j = k - 1 when `last_step_only`.
    """
    samples = []
    for trajectory in trajectories:
        checkins = trajectory.checkins
        first = len(checkins) - 1 if last_step_only else 1
        for j in range(first, len(checkins)):
            samples.append(
                Trajectory(
                    user_id=trajectory.user_id, checkins=checkins[:j], label=checkins[j]
                )
            )
    return samples


def preprocess(dataset_config: DictConfig, source: Union[str, IO[str], None] = None):
    """
    Full preprocessing pipeline: parse, filter, vocabularies and clusters, encode,
    trajectories, split.

    Args:
        dataset_config (DictConfig):
            `dataset` section of the configuration
        source (Union[str, IO[str], None]):
            input overriding `dataset_config.input_path`
    Returns:
        Tuple[Vocab, DatasetSplit, int]: vocabularies, split and malformed row count
    """
    source = source if source is not None else dataset_config.input_path
    if source is None:
        raise ConfigurationException("no input file given", key="dataset.input_path")

    parsed = parse_checkins(source, dataset_config)
    records = filter_records(
        parsed.records, dataset_config.min_user_checkins, dataset_config.min_poi_visits
    )
    if records.empty:
        raise ConfigurationException(
            "no check-in survives the frequency filters", key="dataset.min_user_checkins"
        )
    vocab = build_vocab(
        records,
        n_geo_clusters=dataset_config.n_geo_clusters,
        max_iters=dataset_config.kmeans_max_iters,
        seed=dataset_config.seed,
    )
    checkins = encode_records(records, vocab)
    trajectories = split_trajectories(checkins, dataset_config.window_hours)
    split = chronological_split(trajectories, list(dataset_config.split_fractions))
    return vocab, split, parsed.n_malformed
