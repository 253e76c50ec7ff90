import numpy as np
import pytest

from mtnet.utils.scorers import RankingScorer
from mtnet.utils.scorers.ranking_scorer import acc_at_k, mrr, ranks


def brute_force_rank(scores, target):
    """Position of the target in the list sorted by decreasing score, then id."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    for position, candidate in enumerate(order):
        if candidate == target:
            return position + 1


@pytest.fixture
def fixtures():
    rng = np.random.default_rng(0)
    cases = []
    for _ in range(1000):
        batch, n_pois = rng.integers(1, 8), rng.integers(2, 30)
        if rng.random() < 0.5:
            # small integer scores produce ties
            scores = rng.integers(0, 4, size=(batch, n_pois)).astype(float)
        else:
            scores = rng.normal(size=(batch, n_pois))
        cases.append((scores, rng.integers(0, n_pois, size=batch)))
    return cases


class TestRanks:
    def test_matches_brute_force(self, fixtures):
        """"""
        for scores, targets in fixtures:
            expected = [brute_force_rank(list(s), t) for s, t in zip(scores, targets)]
            np.testing.assert_array_equal(ranks(scores, targets), expected)

    def test_metrics_match_brute_force(self, fixtures):
        """"""
        for scores, targets in fixtures:
            oracle = np.array(
                [brute_force_rank(list(s), t) for s, t in zip(scores, targets)]
            )
            for k in (1, 5, 10):
                assert acc_at_k(scores, targets, k) == np.mean(oracle <= k)
            assert mrr(scores, targets) == pytest.approx(
                np.mean(1.0 / oracle), abs=1e-12
            )

    def test_ties_favor_smaller_ids(self):
        """"""
        scores = np.zeros((1, 5))
        np.testing.assert_array_equal(ranks(scores, np.array([0])), [1])
        np.testing.assert_array_equal(ranks(scores, np.array([4])), [5])

    def test_single_candidate(self):
        """"""
        assert mrr(np.array([[0.3]]), np.array([0])) == 1.0

    def test_shape_mismatch(self):
        """"""
        with pytest.raises(ValueError):
            ranks(np.zeros((2, 3)), np.array([0]))

    def test_examples(self):
        """"""
        scores = np.array([[0.1, 0.9, 0.5], [0.8, 0.1, 0.3]])
        targets = np.array([2, 0])
        assert acc_at_k(scores, targets, 1) == 0.5
        assert acc_at_k(scores, targets, 2) == 1.0
        assert mrr(scores, targets) == pytest.approx(0.75)


class TestRankingScorer:
    def test_accumulates_batches(self, fixtures):
        """"""
        scorer = RankingScorer(ks=(10, 1, 5, 5))
        assert scorer.ks == [1, 5, 10]
        for scores, targets in fixtures[:50]:
            scorer.add(scores, targets, losses={"loss": 1.0})
        all_ranks = np.concatenate([ranks(s, t) for s, t in fixtures[:50]])
        report = scorer.report(split="test", mode="all_prefixes")
        assert report.n_samples == all_ranks.size
        assert report.acc[5] == np.mean(all_ranks <= 5)
        assert report.acc[1] <= report.acc[5] <= report.acc[10] <= 1.0
        assert 0.0 < report.mrr <= 1.0
        assert report.loss == 1.0

    def test_per_slot(self):
        """"""
        scorer = RankingScorer(ks=(1,))
        scores = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        scorer.add(scores, np.array([0, 1, 1]), slots=np.array([0, 0, 3]))
        breakdown = scorer.per_slot()
        assert breakdown[0] == {"acc@1": 0.5, "mrr": 0.75, "samples": 2}
        assert breakdown[3]["acc@1"] == 1.0

    def test_empty(self):
        """"""
        scorer = RankingScorer()
        assert scorer.n_samples == 0
        assert scorer.to_dict()["acc@1"] == 0.0

    def test_report_json_and_table(self):
        """"""
        scorer = RankingScorer(ks=(1, 5))
        scorer.add(np.eye(3), np.array([0, 1, 2]), slots=np.array([1, 1, 2]))
        report = scorer.report(split="valid")
        payload = report.to_json()
        assert payload["metrics"]["acc@1"] == 1.0
        assert set(payload["per_slot"]) == {"1", "2"}
        assert "acc@5" in report.get_table()
