import collections.abc
import contextlib
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
import zipfile
from typing import Any, Dict, Iterator, Mapping, Tuple

import numpy as np

METADATA_MEMBER = "__metadata__.json"
# Fixed member timestamp so identical content gives identical archives.
_ZIP_DATE_TIME = (1980, 1, 1, 0, 0, 0)


def setup_logging(level: str = "INFO") -> None:
    """
    Configures the root logger to print on stdout.

    Args:
        level (str):
            name of the logging level, e.g. "INFO" or "DEBUG"
    """
    numeric = logging.getLevelName(str(level).upper())
    if not isinstance(numeric, int):
        raise ValueError(f"unknown logging level '{level}'")
    logging.basicConfig(
        stream=sys.stdout,
        level=numeric,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def deep_update(d, u):
    """"""
    if isinstance(u, list):
        if d is None:
            return u
        d.extend(u)
        return d

    for k, v in u.items():
        if isinstance(v, collections.abc.Mapping):
            d[k] = deep_update(d.get(k, {}), v)
        else:
            d[k] = v
    return d


@contextlib.contextmanager
def atomic_write(path: str, mode: str = "wb") -> Iterator[io.IOBase]:
    """
    Opens a temporary file next to `path` and renames it onto `path` once the block
    exits without error, so readers never observe a partial file.

    Args:
        path (str):
            final destination
        mode (str):
            "wb" or "w"
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, mode) as handle:
            yield handle
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_path, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.remove(tmp_path)
        raise


def save_archive(
    path: str, arrays: Mapping[str, np.ndarray], metadata: Dict[str, Any]
) -> str:
    """
    Writes named arrays and a JSON metadata document into a `.npz` archive.

    Members are written in sorted order with fixed timestamps and no compression, so
    the bytes only depend on the content. The archive is readable by `np.load`.

    Args:
        path (str):
            destination file
        arrays (Mapping[str, np.ndarray]):
            arrays to store, keyed by member name
        metadata (Dict[str, Any]):
            JSON serializable metadata
    Returns:
        str: SHA-256 of the written file
    """
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, mode="w", compression=zipfile.ZIP_STORED) as archive:
        for name in sorted(arrays):
            member = io.BytesIO()
            array = np.asarray(arrays[name])
            if array.dtype == object:
                raise TypeError(f"array '{name}' has dtype object and cannot be archived")
            np.lib.format.write_array(
                member, np.ascontiguousarray(array), allow_pickle=False
            )
            info = zipfile.ZipInfo(f"{name}.npy", date_time=_ZIP_DATE_TIME)
            info.external_attr = 0o644 << 16
            archive.writestr(info, member.getvalue())
        info = zipfile.ZipInfo(METADATA_MEMBER, date_time=_ZIP_DATE_TIME)
        info.external_attr = 0o644 << 16
        archive.writestr(info, json.dumps(metadata, sort_keys=True, indent=2))

    content = buffer.getvalue()
    with atomic_write(path, "wb") as handle:
        handle.write(content)
    return hashlib.sha256(content).hexdigest()


def load_archive(path: str) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """
    Reads an archive written by `save_archive`.

    Returns:
        Tuple[Dict[str, np.ndarray], Dict[str, Any]]: arrays and metadata
    """
    with zipfile.ZipFile(path, mode="r") as archive:
        names = archive.namelist()
        if METADATA_MEMBER not in names:
            raise ValueError(f"'{path}' is not an mtnet archive (no metadata member)")
        metadata = json.loads(archive.read(METADATA_MEMBER).decode("utf-8"))
        arrays = {}
        for name in names:
            if name == METADATA_MEMBER:
                continue
            with archive.open(name) as member:
                array = np.lib.format.read_array(
                    io.BytesIO(member.read()), allow_pickle=False
                )
            arrays[name[: -len(".npy")]] = array
    return arrays, metadata


def file_sha256(path: str) -> str:
    """"""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def arrays_sha256(arrays: Mapping[str, np.ndarray]) -> str:
    """Content hash of named arrays, independent of insertion order."""
    digest = hashlib.sha256()
    for name in sorted(arrays):
        array = np.ascontiguousarray(arrays[name])
        digest.update(name.encode())
        digest.update(str(array.dtype).encode())
        digest.update(str(array.shape).encode())
        digest.update(array.tobytes())
    return digest.hexdigest()
