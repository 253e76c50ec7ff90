import io

import numpy as np
import pandas as pd
import pytest

from mtnet.config import schema
from mtnet.data import (
    chronological_split,
    filter_records,
    kmeans_geo,
    make_supervised_samples,
    parse_checkins,
    split_trajectories,
)
from mtnet.data.ingest import FIELDS, split_boundaries
from mtnet.utils.errors import ConfigurationException
from tests.fixtures.builders import checkin, trajectory


@pytest.fixture
def csv_config():
    cfg = schema().dataset
    cfg.header = False
    cfg.names = ["user", "poi", "category", "timestamp", "lat", "lon"]
    return cfg


def _records(rows):
    return pd.DataFrame(rows, columns=list(FIELDS))


class TestParseCheckins:
    def test_single_row(self, csv_config):
        """"""
        source = io.StringIO("u12, p7, Cafe, 2012-04-12T10:05:00Z, 35.68, 139.77\n")
        result = parse_checkins(source, csv_config)
        assert len(result) == 1
        row = result.records.iloc[0]
        assert (row.user, row.poi, row.category) == ("u12", "p7", "Cafe")
        assert row.timestamp == int(pd.Timestamp("2012-04-12T10:05:00Z").timestamp())
        assert (row.lat, row.lon) == (35.68, 139.77)
        assert result.n_malformed == 0

    def test_empty_stream(self, csv_config):
        """"""
        result = parse_checkins(io.StringIO(""), csv_config)
        assert len(result) == 0
        assert result.n_malformed == 0

    def test_malformed_row_is_counted(self, csv_config):
        """"""
        text = (
            "u1,p1,Cafe,2012-04-12T10:05:00Z,35.6,139.7\n"
            "u1,p2,Bar,not a time,35.6,139.7\n"
            "u2,p1,Cafe,2012-04-12T11:05:00Z,35.6,139.7\n"
            "u2,p3,Park,2012-04-12T12:05:00Z,35.6,139.7\n"
        )
        result = parse_checkins(io.StringIO(text), csv_config)
        assert len(result) == 3
        assert result.n_malformed == 1

    def test_out_of_range_coordinates(self, csv_config):
        """"""
        text = "u1,p1,Cafe,2012-04-12T10:05:00Z,95.0,139.7\n"
        assert parse_checkins(io.StringIO(text), csv_config).n_malformed == 1

    def test_foursquare_format(self, csv_config):
        """"""
        csv_config.delimiter = "\t"
        csv_config.names = [
            "user", "poi", "category_id", "category", "lat", "lon", "offset", "timestamp"
        ]
        csv_config.timestamp_format = "%a %b %d %H:%M:%S %z %Y"
        text = "470\t49bbd6\t4bf58d\tBar\t40.71\t-74.0\t-240\t"
        text += "Tue Apr 03 18:00:09 +0000 2012\n"
        result = parse_checkins(io.StringIO(text), csv_config)
        assert result.records.iloc[0].timestamp == 1333476009

    def test_unknown_column(self, csv_config):
        """"""
        csv_config.columns.poi = "venue"
        with pytest.raises(ConfigurationException) as e:
            parse_checkins(io.StringIO("u,p,c,0,0,0\n"), csv_config)
        assert e.value.key == "dataset.columns.poi"

    def test_unreadable_file(self, csv_config, tmp_path):
        """"""
        with pytest.raises(OSError):
            parse_checkins(str(tmp_path / "missing.csv"), csv_config)


class TestFilterRecords:
    def test_thresholds(self):
        """"""
        rows = [("a", "x", "c", t, 0.0, 0.0) for t in range(8)]
        rows += [("a", "y", "c", 10 + t, 0.0, 0.0) for t in range(2)]
        rows += [("b", "x", "c", 20 + t, 0.0, 0.0) for t in range(10)]
        rows += [("c", "x", "c", 40 + t, 0.0, 0.0) for t in range(9)]
        kept = filter_records(_records(rows), min_user_checkins=10, min_poi_visits=10)
        # c is below the user threshold; y is then dropped, leaving a with 8 records
        assert sorted(kept["user"].unique()) == ["a", "b"]
        assert (kept["user"] == "a").sum() == 8
        assert set(kept["poi"]) == {"x"}

    def test_boundary_is_inclusive(self):
        """"""
        rows = [(f"u{t % 2}", "x", "c", t, 0.0, 0.0) for t in range(10)]
        kept = filter_records(_records(rows), min_user_checkins=5, min_poi_visits=10)
        assert len(kept) == 10

    def test_may_be_empty(self):
        """"""
        rows = [("a", "x", "c", 0, 0.0, 0.0)]
        assert filter_records(_records(rows), 10, 10).empty


class TestSplitTrajectories:
    def test_one_window(self):
        """"""
        trajectories = split_trajectories([checkin(0, h) for h in (0, 1, 2)])
        assert [len(t) for t in trajectories] == [3]

    def test_single_checkin_window_is_discarded(self):
        """"""
        trajectories = split_trajectories([checkin(0, h) for h in (0, 25, 26)])
        assert len(trajectories) == 1
        assert [c.timestamp for c in trajectories[0].checkins] == [
            checkin(0, 25).timestamp,
            checkin(0, 26).timestamp,
        ]

    def test_window_is_anchored_at_first_checkin(self):
        """"""
        trajectories = split_trajectories([checkin(0, h) for h in (0, 20, 23, 30, 40)])
        assert [len(t) for t in trajectories] == [3, 2]

    def test_users_are_separated(self):
        """"""
        checkins = [checkin(0, h, user=u) for u in (1, 0) for h in (0, 1)]
        trajectories = split_trajectories(checkins)
        assert [t.user_id for t in trajectories] == [0, 1]

    def test_checkins_are_sorted(self):
        """"""
        trajectories = split_trajectories([checkin(0, h) for h in (2, 0, 1)])
        times = [c.timestamp for c in trajectories[0].checkins]
        assert times == sorted(times)


class TestChronologicalSplit:
    def test_fractions(self):
        """"""
        trajectories = [trajectory([i, i + 0.5]) for i in range(10)]
        assert chronological_split(trajectories).sizes() == (8, 1, 1)

    def test_boundaries_at_scale(self):
        """"""
        assert split_boundaries(14160, [0.8, 0.1, 0.1]) == [11328, 12744]

    def test_order_is_by_end_time_and_stable(self):
        """"""
        trajectories = [trajectory([0, 5], user=u) for u in range(10)]
        split = chronological_split(trajectories)
        assert [t.user_id for t in split.train] == list(range(8))
        assert [t.user_id for t in split.test] == [9]

    def test_test_split_is_latest(self):
        """"""
        trajectories = [trajectory([i, i + 1]) for i in (9, 3, 7, 1, 5)]
        split = chronological_split(trajectories, [0.6, 0.2, 0.2])
        assert split.test[0].end_time == max(t.end_time for t in trajectories)

    def test_too_few_trajectories(self):
        """"""
        with pytest.raises(ConfigurationException):
            chronological_split([trajectory([0, 1]), trajectory([2, 3])])


class TestKMeans:
    def test_single_cluster_is_the_mean(self):
        """"""
        points = np.random.default_rng(0).normal(size=(30, 2))
        result = kmeans_geo(points, k=1)
        np.testing.assert_allclose(result.centroids[0], points.mean(axis=0))
        assert (result.labels == 0).all()

    def test_separated_blobs(self):
        """"""
        rng = np.random.default_rng(1)
        centers = ([40.7, -74.0], [35.6, 139.7])
        blobs = [rng.normal(c, 0.01, size=(25, 2)) for c in centers]
        result = kmeans_geo(np.concatenate(blobs), k=2, seed=3)
        assert len(set(result.labels[:25])) == 1
        assert len(set(result.labels[25:])) == 1
        assert result.labels[0] != result.labels[-1]
        assert result.converged

    @pytest.mark.parametrize("max_iters", [1, 2, 300])
    def test_labels_match_returned_centroids(self, max_iters):
        """"""
        points = np.random.default_rng(2).uniform(size=(200, 2))
        result = kmeans_geo(points, k=8, max_iters=max_iters)
        distances = ((points[:, None, :] - result.centroids[None]) ** 2).sum(axis=2)
        np.testing.assert_array_equal(result.labels, distances.argmin(axis=1))
        assert result.inertia == pytest.approx(distances.min(axis=1).sum())
        assert result.n_iter <= max_iters

    def test_max_iters_must_be_positive(self):
        """"""
        points = np.random.default_rng(5).uniform(size=(20, 2))
        with pytest.raises(ConfigurationException) as e:
            kmeans_geo(points, k=2, max_iters=0)
        assert e.value.key == "dataset.kmeans_max_iters"

    def test_k_larger_than_distinct_points(self):
        """"""
        with pytest.raises(ConfigurationException) as e:
            kmeans_geo(np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]]), k=3)
        assert e.value.key == "dataset.n_geo_clusters"

    def test_deterministic(self):
        """"""
        points = np.random.default_rng(4).uniform(size=(100, 2))
        a, b = kmeans_geo(points, k=5, seed=7), kmeans_geo(points, k=5, seed=7)
        np.testing.assert_array_equal(a.labels, b.labels)


class TestSupervisedSamples:
    def test_counts(self):
        """"""
        trajectories = [trajectory(range(n)) for n in (2, 3, 4)]
        assert len(make_supervised_samples(trajectories[:1])) == 1
        assert len(make_supervised_samples([trajectory(range(5))])) == 4
        assert len(make_supervised_samples(trajectories)) == 6

    def test_prefixes_and_labels(self):
        """"""
        samples = make_supervised_samples([trajectory(range(3), pois=[7, 8, 9])])
        assert [[c.poi_id for c in s.checkins] for s in samples] == [[7], [7, 8]]
        assert [s.label.poi_id for s in samples] == [8, 9]

    def test_last_step_only(self):
        """"""
        samples = make_supervised_samples([trajectory(range(4))], last_step_only=True)
        assert len(samples) == 1
        assert len(samples[0]) == 3
