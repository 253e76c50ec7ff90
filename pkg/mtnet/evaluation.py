import logging
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from .autodiff import no_grad
from .data import DatasetBundle
from .data.mobility_tree import SECONDS_PER_HOUR, hour_of_day, period_index
from .data.modules import MobilityDataModule, TreeBatch
from .models import MTNet
from .utils.errors import ConfigurationException, VocabularyMismatchError
from .utils.scorers import EvalReport, RankingScorer
from .utils.types import Trajectory
from .utils.utils_fct import save_archive


def check_vocabulary(model: MTNet, bundle: DatasetBundle) -> None:
    """
    Raises:
        VocabularyMismatchError: when the checkpoint of `model` was trained on another
            vocabulary than the one of `bundle`
    """
    checkpoint = getattr(model, "checkpoint", None)
    expected = checkpoint.vocab_fingerprint if checkpoint is not None else ""
    actual = bundle.vocab.fingerprint()
    if expected and expected != actual:
        raise VocabularyMismatchError(expected, actual)
    sizes = bundle.vocab.sizes()
    for key, size in sizes.items():
        if model.hparams[key] != size:
            raise VocabularyMismatchError(
                expected or f"{key}={model.hparams[key]}", f"{actual} ({key}={size})"
            )


def permute_slots(
    sample: Trajectory,
    slots_per_day: int,
    rng: np.random.Generator,
    tz_offset_hours: float = 0.0,
) -> Trajectory:
    """
    Moves every check-in of a prefix to another period slot of the same day, following
    one random permutation of the slots. The position inside the slot, the calendar day
    and the label are kept; check-ins are re-sorted chronologically.
    """
    width = 24 // slots_per_day
    permutation = rng.permutation(slots_per_day)
    moved = []
    for checkin in sample.checkins:
        slot = period_index(checkin.timestamp, slots_per_day, tz_offset_hours)
        hour = hour_of_day(checkin.timestamp, tz_offset_hours)
        new_hour = int(permutation[slot]) * width + (hour - slot * width)
        shift = (new_hour - hour) * SECONDS_PER_HOUR
        moved.append(replace(checkin, timestamp=checkin.timestamp + shift))
    moved.sort(key=lambda c: c.timestamp)
    return Trajectory(user_id=sample.user_id, checkins=moved, label=sample.label)


def shuffle_slots(
    samples: Sequence[Trajectory],
    slots_per_day: int,
    seed: int = 42,
    tz_offset_hours: float = 0.0,
) -> List[Trajectory]:
    """`permute_slots` applied to every sample with one seeded generator."""
    rng = np.random.default_rng(seed)
    return [permute_slots(s, slots_per_day, rng, tz_offset_hours) for s in samples]


def _score_batch(model: MTNet, batch: TreeBatch) -> Tuple[np.ndarray, Dict[str, float]]:
    """"""
    prediction, losses = model.validation_step(batch)
    return prediction.scores.data, losses


def score_batches(
    model: MTNet,
    batches: Sequence[TreeBatch],
    ks: Sequence[int] = (1, 5, 10),
    threads: int = 1,
) -> RankingScorer:
    """
    Scores every batch against its labels, `threads` batches at a time.

    Batches are read-only inputs and results are gathered in batch order, so the
    scorer does not depend on the number of threads.
    """
    outputs = Parallel(n_jobs=max(int(threads), 1), backend="threading")(
        delayed(_score_batch)(model, batch) for batch in batches
    )
    scorer = RankingScorer(ks)
    for batch, (scores, losses) in zip(batches, outputs):
        scorer.add(scores, batch.targets["poi"], losses, batch.label_slot)
    return scorer


def data_module_for(
    model: MTNet,
    bundle: DatasetBundle,
    batch_size: int = 1024,
    mode: str = "all_prefixes",
) -> MobilityDataModule:
    """Data module shaped like the trees `model` was trained on."""
    data = MobilityDataModule(
        bundle=bundle,
        slots_per_day=model.slots_per_day,
        leaf_fanout=model.leaf_fanout,
        max_days=model.max_days,
        eval_batch_size=batch_size,
        eval_mode=mode,
    )
    return data


def evaluate(
    model: MTNet,
    bundle: DatasetBundle,
    split: str = "test",
    mode: str = "all_prefixes",
    ks: Sequence[int] = (1, 5, 10),
    batch_size: int = 1024,
    shuffle: bool = False,
    threads: int = 1,
    seed: int = 42,
) -> EvalReport:
    """
    Ranks the full POI vocabulary for every sample of a split, dropout disabled.

    Args:
        model (MTNet):
            model to evaluate, left unchanged
        bundle (DatasetBundle):
            dataset holding the split
        split (str):
            "train", "valid" or "test"
        mode (str):
            "all_prefixes" or "last_prefix"
        ks (Sequence[int]):
            accuracy cut-offs
        batch_size (int):
            samples per forward pass
        shuffle (bool):
            permute the period slots of every prefix before scoring
        threads (int):
            batches scored concurrently
        seed (int):
            seed of the slot permutations
    Returns:
        EvalReport: Acc@K, MRR and the per-slot breakdown
    Raises:
        VocabularyMismatchError: when model and bundle disagree on the vocabulary
        ConfigurationException: when the split has no sample
    """
    check_vocabulary(model, bundle)
    data = data_module_for(model, bundle, batch_size=batch_size, mode=mode)
    samples = data.samples(split, mode=mode)
    if not samples:
        raise ConfigurationException(f"split '{split}' has no sample", key="eval.split")
    if shuffle:
        samples = shuffle_slots(samples, model.slots_per_day, seed, data.tz_offset_hours)

    batches = list(data.batches(samples, batch_size))
    scorer = score_batches(model, batches, ks, threads)
    checkpoint = getattr(model, "checkpoint", None)
    report = scorer.report(
        split=split,
        mode=mode if not shuffle else f"{mode}+shuffled_slots",
        config_hash=checkpoint.config_hash if checkpoint is not None else "",
    )
    logging.info(
        f"Evaluated {report.n_samples} samples of '{split}' ({report.mode}):"
        + "".join(f" {k}={v:.4f}" for k, v in report.to_dict().items())
    )
    return report


def history_until(
    bundle: DatasetBundle, user: int, at: int, window_hours: float
) -> List:
    """Check-ins of `user` in the `window_hours` before `at`, `at` included."""
    start = at - int(window_hours * SECONDS_PER_HOUR)
    checkins = [
        checkin
        for trajectory in bundle.trajectories()
        if trajectory.user_id == user
        for checkin in trajectory.checkins
        if start < checkin.timestamp <= at
    ]
    return sorted(checkins, key=lambda c: c.timestamp)


def recommend(
    model: MTNet,
    bundle: DatasetBundle,
    user: str,
    at: int,
    top_k: int = 10,
) -> List[Tuple[str, float]]:
    """
    Top-k POIs for a user at a given time, from the check-ins of the preceding window.

    Args:
        model (MTNet):
            trained model
        bundle (DatasetBundle):
            dataset the model was trained on
        user (str):
            raw user key
        at (int):
            UTC epoch seconds of the request
        top_k (int):
            length of the list
    Returns:
        List[Tuple[str, float]]: raw POI keys with their fused scores, best first
    """
    check_vocabulary(model, bundle)
    if user not in bundle.vocab.users:
        raise ConfigurationException(f"unknown user '{user}'", key="user")
    window_hours = float(bundle.dataset_config.get("window_hours", 24.0))
    history = history_until(bundle, bundle.vocab.users.id_of(user), at, window_hours)
    if not history:
        raise ConfigurationException(
            f"user '{user}' has no check-in in the {window_hours:g} hours before {at}",
            key="at",
        )
    data = data_module_for(model, bundle)
    batch = data.collate([Trajectory(user_id=history[0].user_id, checkins=history)])
    with no_grad():
        prediction, _ = model.forward(batch)
    ids, scores = prediction.top_k(top_k)
    return [
        (bundle.vocab.pois.key_of(int(poi)), float(score))
        for poi, score in zip(ids[0], scores[0])
    ]


def in_hour_window(hour: int, window: Optional[Tuple[int, int]]) -> bool:
    """Whether `hour` lies in [start, end), windows may wrap around midnight."""
    if window is None:
        return True
    start, end = window
    if start <= end:
        return start <= hour < end
    return hour >= start or hour < end


def dump_embeddings(
    model: MTNet,
    bundle: DatasetBundle,
    path: str,
    split: str = "test",
    mode: str = "last_prefix",
    hour_window: Optional[Tuple[int, int]] = None,
    batch_size: int = 1024,
) -> int:
    """
    Exports trajectory representations for external visualization.

    The archive holds, for every kept sample, the root representation, the current
    period and last check-in vectors, the user id, the label POI and the hour of the
    last check-in, together with the learned user and POI embedding tables.

    Args:
        hour_window (Optional[Tuple[int, int]]):
            keep samples whose last check-in hour lies in [start, end)
    Returns:
        int: number of exported samples
    """
    check_vocabulary(model, bundle)
    data = data_module_for(model, bundle, batch_size=batch_size, mode=mode)
    tz = data.tz_offset_hours
    samples = [
        s
        for s in data.samples(split, mode=mode)
        if in_hour_window(hour_of_day(s.end_time, tz), hour_window)
    ]
    columns = {"root": [], "period": [], "checkin": []}
    for batch in data.batches(samples, batch_size):
        with no_grad():
            _, states = model.forward(batch)
        columns["root"].append(states.root.data)
        columns["period"].append(states.period_outputs.data[batch.current_period])
        columns["checkin"].append(states.leaf_outputs.data[batch.last_leaf])

    width = {"root": model.hidden_size, "period": model.hidden_size}
    width["checkin"] = model.width
    arrays = {
        name: np.concatenate(parts) if parts else np.zeros((0, width[name]))
        for name, parts in columns.items()
    }
    arrays["user_id"] = np.asarray([s.user_id for s in samples], dtype=np.int64)
    arrays["label_poi"] = np.asarray([s.label.poi_id for s in samples], dtype=np.int64)
    arrays["last_hour"] = np.asarray(
        [hour_of_day(s.end_time, tz) for s in samples], dtype=np.int64
    )
    arrays["embedding_user"] = model.E_user.data
    arrays["embedding_poi"] = model.E_poi.data
    metadata = {
        "split": split,
        "mode": mode,
        "hour_window": list(hour_window) if hour_window is not None else None,
        "n_samples": len(samples),
        "users": list(bundle.vocab.users.keys),
    }
    save_archive(path, arrays, metadata)
    logging.info(f"{len(samples)} representations written to '{path}'")
    return len(samples)

