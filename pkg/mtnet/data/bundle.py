import logging
import os
from dataclasses import dataclass, field
from typing import IO, Any, Dict, List, Sequence, Union

import numpy as np
from omegaconf import DictConfig
from tabulate import tabulate

from ..utils.types import CheckIn, DatasetSplit, Trajectory
from ..utils.utils_fct import load_archive, save_archive
from ..utils.vocabulary import Vocab

BUNDLE_FORMAT = "mtnet-bundle/1"
SPLITS = ("train", "valid", "test")
_COLUMNS = ("user", "poi", "cat", "geo", "lat", "lon", "ts")


def _pack(trajectories: Sequence[Trajectory], prefix: str) -> Dict[str, np.ndarray]:
    """Flattens trajectories into column arrays plus trajectory offsets."""
    checkins = [c for t in trajectories for c in t.checkins]
    lengths = [len(t) for t in trajectories]
    return {
        f"{prefix}offsets": np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64),
        f"{prefix}user": np.array([c.user_id for c in checkins], dtype=np.int64),
        f"{prefix}poi": np.array([c.poi_id for c in checkins], dtype=np.int64),
        f"{prefix}cat": np.array([c.category_id for c in checkins], dtype=np.int64),
        f"{prefix}geo": np.array([c.geo_cluster_id for c in checkins], dtype=np.int64),
        f"{prefix}lat": np.array([c.lat for c in checkins], dtype=np.float64),
        f"{prefix}lon": np.array([c.lon for c in checkins], dtype=np.float64),
        f"{prefix}ts": np.array([c.timestamp for c in checkins], dtype=np.int64),
    }


def _unpack(arrays: Dict[str, np.ndarray], prefix: str) -> List[Trajectory]:
    """"""
    columns = {name: arrays[f"{prefix}{name}"].tolist() for name in _COLUMNS}
    checkins = [
        CheckIn(
            user_id=user,
            poi_id=poi,
            category_id=cat,
            lat=lat,
            lon=lon,
            timestamp=ts,
            geo_cluster_id=geo,
        )
        for user, poi, cat, geo, lat, lon, ts in zip(*(columns[n] for n in _COLUMNS))
    ]
    offsets = arrays[f"{prefix}offsets"].tolist()
    return [
        Trajectory(user_id=checkins[start].user_id, checkins=checkins[start:end])
        for start, end in zip(offsets[:-1], offsets[1:])
    ]


@dataclass
class DatasetBundle:
    """
    Output of preprocessing: vocabularies, chronological split and the configuration
    that produced them.

    Attributes:
        vocab (Vocab): vocabularies and POI attributes
        split (DatasetSplit): train, valid and test trajectories
        dataset_config (Dict[str, Any]): `dataset` section used for preprocessing
        config_hash (str): hash of that section
        n_malformed (int): rows skipped while parsing
    """

    vocab: Vocab
    split: DatasetSplit
    dataset_config: Dict[str, Any] = field(default_factory=dict)
    config_hash: str = ""
    n_malformed: int = 0

    @property
    def name(self) -> str:
        """"""
        return self.dataset_config.get("name", "custom")

    @property
    def timezone_offset_hours(self) -> float:
        """"""
        return float(self.dataset_config.get("timezone_offset_hours", 0.0))

    def trajectories(self) -> List[Trajectory]:
        """"""
        return self.split.train + self.split.valid + self.split.test

    def save(self, path: str) -> str:
        """
        Writes the bundle as a deterministic archive.

        Returns:
            str: SHA-256 of the file
        """
        arrays = self.vocab.to_arrays()
        for name in SPLITS:
            arrays.update(_pack(self.split[name], prefix=f"split/{name}/"))
        metadata = {
            "format": BUNDLE_FORMAT,
            "dataset_config": self.dataset_config,
            "config_hash": self.config_hash,
            "vocab_fingerprint": self.vocab.fingerprint(),
            "n_malformed": self.n_malformed,
        }
        if os.path.dirname(path):
            os.makedirs(os.path.dirname(path), exist_ok=True)
        digest = save_archive(path, arrays, metadata)
        logging.info(f"Dataset bundle saved to '{path}' (sha256={digest[:12]})")
        return digest

    @classmethod
    def load(cls, path: str) -> "DatasetBundle":
        """"""
        if not os.path.isfile(path):
            raise FileNotFoundError(f"dataset bundle '{path}' does not exist")
        arrays, metadata = load_archive(path)
        if metadata.get("format") != BUNDLE_FORMAT:
            raise ValueError(f"'{path}' is not a dataset bundle")
        split = DatasetSplit(
            **{name: _unpack(arrays, prefix=f"split/{name}/") for name in SPLITS}
        )
        return cls(
            vocab=Vocab.from_arrays(arrays),
            split=split,
            dataset_config=metadata["dataset_config"],
            config_hash=metadata["config_hash"],
            n_malformed=metadata.get("n_malformed", 0),
        )

    @classmethod
    def from_config(cls, cfg: DictConfig, source: Union[str, IO[str], None] = None):
        """
        Runs preprocessing on the `dataset` section of `cfg`.

        Args:
            cfg (DictConfig):
                full configuration
            source (Union[str, IO[str], None]):
                input overriding `dataset.input_path`
        Returns:
            DatasetBundle: the preprocessed dataset
        """
        from ..config import config_hash, to_container
        from .ingest import preprocess

        vocab, split, n_malformed = preprocess(cfg.dataset, source=source)
        bundle = cls(
            vocab=vocab,
            split=split,
            dataset_config=to_container(cfg.dataset),
            config_hash=config_hash(cfg, "dataset"),
            n_malformed=n_malformed,
        )
        logging.info(f"Preprocessed dataset '{bundle.name}': {vocab}")
        return bundle

    def statistics(self) -> Dict[str, Any]:
        """
        Dataset statistics: vocabulary sizes, check-ins, trajectories and average
        trajectory length per split.
        """
        trajectories = self.trajectories()
        stats = {
            "dataset": self.name,
            "users": self.vocab.n_users,
            "pois": self.vocab.n_pois,
            "categories": self.vocab.n_categories,
            "geo_clusters": self.vocab.n_geo_clusters,
            "checkins": sum(len(t) for t in trajectories),
            "trajectories": len(trajectories),
        }
        for name in SPLITS:
            part = self.split[name]
            stats[f"{name}_trajectories"] = len(part)
            stats[f"{name}_avg_length"] = (
                float(np.mean([len(t) for t in part])) if part else 0.0
            )
        return stats

    def get_table(self) -> str:
        """"""
        rows = [
            [key, f"{value:.2f}" if isinstance(value, float) else value]
            for key, value in self.statistics().items()
        ]
        return tabulate(rows, headers=["statistic", "value"], tablefmt="fancy_grid")
