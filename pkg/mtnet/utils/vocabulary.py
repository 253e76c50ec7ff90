import hashlib
import logging
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd

from .errors import IdOutOfRangeError


class Vocabulary(object):
    """
    Bijection between raw keys and contiguous integer ids.

    Args:
        keys (Sequence[str]):
            raw keys, their position is their id
        name (str):
            vocabulary name, used in error messages
    """

    def __init__(self, keys: Sequence[str], name: str = "vocabulary"):
        self.name = name
        self.keys: List[str] = [str(key) for key in keys]
        self._index: Dict[str, int] = {key: i for i, key in enumerate(self.keys)}
        if len(self._index) != len(self.keys):
            raise ValueError(f"'{name}' keys are not unique")

    @classmethod
    def from_values(cls, values: pd.Series, name: str) -> "Vocabulary":
        """
        Builds a vocabulary over the distinct values of a column, ids assigned in
        sorted key order so that the result does not depend on row order.
        """
        _, uniques = pd.factorize(values.astype(str), sort=True)
        vocabulary = cls(list(uniques), name=name)
        logging.info(f"Vocabulary '{name}' successfully built, size: {len(vocabulary)}")
        return vocabulary

    def encode(self, values: pd.Series) -> np.ndarray:
        """Maps raw keys to ids; unknown keys raise a `KeyError`."""
        ids = values.astype(str).map(self._index)
        if ids.isna().any():
            missing = values[ids.isna()].iloc[0]
            raise KeyError(f"'{missing}' is not in vocabulary '{self.name}'")
        return ids.to_numpy(dtype=np.int64)

    def id_of(self, key: str) -> int:
        """"""
        try:
            return self._index[str(key)]
        except KeyError:
            raise KeyError(f"'{key}' is not in vocabulary '{self.name}'") from None

    def key_of(self, index: int) -> str:
        """"""
        if not 0 <= index < len(self.keys):
            raise IdOutOfRangeError(self.name, index, len(self.keys))
        return self.keys[index]

    def __len__(self) -> int:
        return len(self.keys)

    def __contains__(self, key) -> bool:
        return str(key) in self._index

    def __getitem__(self, item):
        """"""
        return self.id_of(item)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.keys == other.keys


class Vocab(object):
    """
    Every vocabulary of a dataset together with the POI attribute table.

    Args:
        users (Vocabulary):
            user keys
        pois (Vocabulary):
            POI keys
        categories (Vocabulary):
            category keys
        poi_category (np.ndarray):
            category id of every POI, shape (|L|,)
        poi_geo_cluster (np.ndarray):
            geographic cluster id of every POI, shape (|L|,)
        poi_coordinates (np.ndarray):
            (lat, lon) of every POI, shape (|L|, 2)
        geo_centroids (np.ndarray):
            cluster centroids, shape (|G|, 2)
    """

    def __init__(
        self,
        users: Vocabulary,
        pois: Vocabulary,
        categories: Vocabulary,
        poi_category: np.ndarray,
        poi_geo_cluster: np.ndarray,
        poi_coordinates: np.ndarray,
        geo_centroids: np.ndarray,
    ):
        self.users = users
        self.pois = pois
        self.categories = categories
        self.poi_category = np.asarray(poi_category, dtype=np.int64)
        self.poi_geo_cluster = np.asarray(poi_geo_cluster, dtype=np.int64)
        self.poi_coordinates = np.asarray(poi_coordinates, dtype=np.float64)
        self.geo_centroids = np.asarray(geo_centroids, dtype=np.float64)
        self._sanity_checks()

    def _sanity_checks(self) -> None:
        """"""
        n_pois = len(self.pois)
        for name, table in [
            ("poi_category", self.poi_category),
            ("poi_geo_cluster", self.poi_geo_cluster),
            ("poi_coordinates", self.poi_coordinates),
        ]:
            if table.shape[0] != n_pois:
                raise ValueError(
                    f"'{name}' has {table.shape[0]} rows but there are {n_pois} POIs"
                )
        for name, table, size in [
            ("category", self.poi_category, self.n_categories),
            ("geo_cluster", self.poi_geo_cluster, self.n_geo_clusters),
        ]:
            if n_pois and (table.min() < 0 or table.max() >= size):
                bad = int(table.max() if table.max() >= size else table.min())
                raise IdOutOfRangeError(name, bad, size)

    @property
    def n_users(self) -> int:
        """"""
        return len(self.users)

    @property
    def n_pois(self) -> int:
        """"""
        return len(self.pois)

    @property
    def n_categories(self) -> int:
        """"""
        return len(self.categories)

    @property
    def n_geo_clusters(self) -> int:
        """"""
        return int(self.geo_centroids.shape[0])

    def sizes(self) -> Dict[str, int]:
        """Vocabulary sizes, in the form the model expects them."""
        return {
            "n_users": self.n_users,
            "n_pois": self.n_pois,
            "n_categories": self.n_categories,
            "n_geo_clusters": self.n_geo_clusters,
        }

    def fingerprint(self) -> str:
        """
        SHA-256 over every key and attribute; two bundles sharing a fingerprint index
        POIs, users and categories identically.
        """
        digest = hashlib.sha256()
        for vocabulary in (self.users, self.pois, self.categories):
            digest.update(vocabulary.name.encode())
            digest.update("\x1f".join(vocabulary.keys).encode())
        for array in (
            self.poi_category,
            self.poi_geo_cluster,
            self.poi_coordinates,
            self.geo_centroids,
        ):
            digest.update(np.ascontiguousarray(array).tobytes())
        return digest.hexdigest()

    def to_arrays(self, prefix: str = "vocab/") -> Dict[str, np.ndarray]:
        """Flattens the vocabularies into named arrays for archiving."""
        return {
            f"{prefix}users": np.asarray(self.users.keys, dtype=np.str_),
            f"{prefix}pois": np.asarray(self.pois.keys, dtype=np.str_),
            f"{prefix}categories": np.asarray(self.categories.keys, dtype=np.str_),
            f"{prefix}poi_category": self.poi_category,
            f"{prefix}poi_geo_cluster": self.poi_geo_cluster,
            f"{prefix}poi_coordinates": self.poi_coordinates,
            f"{prefix}geo_centroids": self.geo_centroids,
        }

    @classmethod
    def from_arrays(
        cls, arrays: Dict[str, np.ndarray], prefix: str = "vocab/"
    ) -> "Vocab":
        """Inverse of `to_arrays`."""
        return cls(
            users=Vocabulary(arrays[f"{prefix}users"].tolist(), name="users"),
            pois=Vocabulary(arrays[f"{prefix}pois"].tolist(), name="pois"),
            categories=Vocabulary(
                arrays[f"{prefix}categories"].tolist(), name="categories"
            ),
            poi_category=arrays[f"{prefix}poi_category"],
            poi_geo_cluster=arrays[f"{prefix}poi_geo_cluster"],
            poi_coordinates=arrays[f"{prefix}poi_coordinates"],
            geo_centroids=arrays[f"{prefix}geo_centroids"],
        )

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.fingerprint() == other.fingerprint()

    def __repr__(self):
        return (
            f"<Vocab(users={self.n_users}, pois={self.n_pois},"
            f" categories={self.n_categories}, geo_clusters={self.n_geo_clusters})>"
        )

