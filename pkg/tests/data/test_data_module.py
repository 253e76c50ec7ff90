import numpy as np
import pytest

from mtnet.data import DatasetBundle, MobilityDataModule, collate
from mtnet.data.ingest import FIELDS
from mtnet.data.synthetic import planted_habits, synthesize_checkins
from tests.fixtures.builders import two_day_trajectory, trajectory


@pytest.fixture
def data(toy_bundle):
    module = MobilityDataModule(bundle=toy_bundle, slots_per_day=4, train_batch_size=16)
    module.setup()
    return module


class TestCollate:
    def test_layout(self):
        """"""
        sample = two_day_trajectory()
        sample.label = sample.checkins[-1]
        batch = collate([sample], slots_per_day=4)
        assert (batch.n_leaves, batch.n_periods, batch.n_days) == (8, 5, 2)
        np.testing.assert_array_equal(batch.period_slot, [1, 2, 3, 0, 1])
        np.testing.assert_array_equal(batch.period_leaves[:, 0], [0, 2, 4, 5, 6])
        np.testing.assert_array_equal(batch.day_periods, [[0, 1, 2], [3, 4, -1]])
        np.testing.assert_array_equal(batch.day_slots, [[-1, 0, 1, 2], [3, 4, -1, -1]])
        np.testing.assert_array_equal(batch.sample_days, [[0, 1]])
        assert (batch.current_day[0], batch.current_period[0], batch.last_leaf[0]) == (
            1,
            4,
            7,
        )
        assert batch.targets["poi"][0] == 7

    def test_samples_are_numbered_consecutively(self):
        """"""
        a = trajectory([1, 2], label=(5, 3))
        b = trajectory([30], label=(6, 31))
        batch = collate([a, b], slots_per_day=4, max_days=2)
        np.testing.assert_array_equal(batch.sample_days, [[-1, 0], [-1, 1]])
        np.testing.assert_array_equal(batch.last_leaf, [1, 2])
        np.testing.assert_array_equal(batch.targets["poi"], [5, 6])
        np.testing.assert_array_equal(batch.label_slot, [0, 1])

    def test_leaf_fanout_keeps_newest(self):
        """"""
        batch = collate([trajectory([12, 13, 14, 15])], slots_per_day=4, leaf_fanout=2)
        assert batch.n_truncated == 2
        np.testing.assert_array_equal(batch.leaf_poi, [2, 3])

    def test_empty(self):
        """"""
        with pytest.raises(ValueError):
            collate([], slots_per_day=4)


class TestMobilityDataModule:
    def test_setup(self, data, toy_bundle):
        """"""
        n_train = sum(len(t) - 1 for t in toy_bundle.split.train)
        assert len(data.train) == n_train
        assert data.leaf_fanout >= 1

    def test_batches_cover_every_sample(self, data):
        """"""
        batches = list(data.train_dataloader(rng=np.random.default_rng(0)))
        assert len(batches) == data.n_batches(len(data.train), 16)
        assert sum(len(b) for b in batches) == len(data.train)
        assert all(len(b) <= 16 for b in batches)

    def test_shuffle_depends_on_seed(self, data):
        """"""
        def order(seed):
            batches = data.train_dataloader(np.random.default_rng(seed))
            return [b.targets["poi"].tolist() for b in batches]

        assert order(1) == order(1)
        assert sorted(sum(order(1), [])) == sorted(sum(order(2), []))

    def test_bucket_by_shape(self, data):
        """"""
        batches = list(data.batches(data.train, 8, np.random.default_rng(0), True))
        assert sum(len(b) for b in batches) == len(data.train)

    def test_last_prefix_mode(self, data, toy_bundle):
        """"""
        assert len(data.samples("test", mode="last_prefix")) == len(toy_bundle.split.test)


class TestSynthetic:
    def test_rows(self):
        """"""
        frame = synthesize_checkins(n_users=3, trajectories_per_user=2, slot_hours=6)
        assert len(frame) == 3 * 2 * 4
        assert list(frame.columns) == list(FIELDS)

    def test_habits_are_seeded(self):
        """"""
        a = planted_habits(4, 6, 10, np.random.default_rng(0))
        b = planted_habits(4, 6, 10, np.random.default_rng(0))
        np.testing.assert_array_equal(a, b)
        assert a.shape == (4, 6)

    def test_slot_width_must_divide_24(self):
        """"""
        with pytest.raises(ValueError):
            synthesize_checkins(slot_hours=5)

    def test_noise_visits_precede_the_habit(self):
        """"""
        frame = synthesize_checkins(
            n_users=4, trajectories_per_user=3, slot_hours=6, noise_visits=1, seed=2
        )
        assert len(frame) == 4 * 3 * 4 * 2
        habits = planted_habits(4, 4, 10, np.random.default_rng(2))
        for (user, day_slot), group in frame.groupby(
            [frame["user"], frame["timestamp"] // (6 * 3600)]
        ):
            group = group.sort_values("timestamp")
            assert len(group) == 2
            slot = int(day_slot) % 4
            assert group["poi"].iloc[-1] == f"p{habits[int(user[1:]), slot]:03d}"

    def test_skipped_slots_keep_one_per_day(self):
        """"""
        frame = synthesize_checkins(
            n_users=10, trajectories_per_user=6, skip_prob=0.9, seed=3
        )
        per_trajectory = frame.groupby(
            [frame["user"], frame["timestamp"] // 86400]
        ).size()
        assert len(per_trajectory) == 10 * 6
        assert per_trajectory.min() >= 1
        assert len(frame) < 10 * 6 * 4

    @pytest.mark.parametrize("kwargs", [{"skip_prob": 1.0}, {"noise_visits": -1}])
    def test_invalid_options(self, kwargs):
        """"""
        with pytest.raises(ValueError):
            synthesize_checkins(**kwargs)


class TestDatasetBundle:
    def test_statistics(self, toy_bundle):
        """"""
        stats = toy_bundle.statistics()
        assert stats["users"] == 20
        # length-1 leftovers of the 24h windows are discarded
        assert 300 < stats["checkins"] <= 20 * 5 * 4
        assert stats["geo_clusters"] == 3
        parts = [stats[f"{name}_trajectories"] for name in ("train", "valid", "test")]
        assert sum(parts) == stats["trajectories"]
        assert "statistic" in toy_bundle.get_table()

    def test_save_is_deterministic(self, toy_bundle, tmp_path):
        """"""
        digest = toy_bundle.save(str(tmp_path / "a.npz"))
        assert toy_bundle.save(str(tmp_path / "b.npz")) == digest
        assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()

    def test_load(self, toy_bundle, toy_bundle_path):
        """"""
        loaded = DatasetBundle.load(toy_bundle_path)
        assert loaded.vocab == toy_bundle.vocab
        assert loaded.split.sizes() == toy_bundle.split.sizes()
        assert loaded.split.test[0] == toy_bundle.split.test[0]
        assert loaded.config_hash == toy_bundle.config_hash
        assert loaded.timezone_offset_hours == 0.0

    def test_load_missing(self, tmp_path):
        """"""
        with pytest.raises(FileNotFoundError):
            DatasetBundle.load(str(tmp_path / "missing.npz"))

    def test_poi_attributes(self, toy_bundle):
        """"""
        vocab = toy_bundle.vocab
        for trajectory in toy_bundle.trajectories():
            for c in trajectory.checkins:
                assert c.category_id == vocab.poi_category[c.poi_id]
                assert c.geo_cluster_id == vocab.poi_geo_cluster[c.poi_id]
