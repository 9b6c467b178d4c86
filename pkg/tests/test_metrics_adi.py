import numpy as np
import pytest

from dialect_bench.corpus import nadi_registry
from dialect_bench.metrics_adi import (
    LreCostParams,
    ScoreError,
    TrialScores,
    accuracy,
    confusion,
    cost_from_decisions,
    lre_cost,
    normalize_confusion,
    read_scores,
    scores_from_confusion,
    write_scores,
)

from nadi_fixtures import NADI_DEV_CONFUSION

NADI_CODES = nadi_registry().codes


def trials_from_rows(rows, labels, registry=("AAA", "BBB", "CCC")):
    rows = np.asarray(rows, dtype=np.float64)
    return TrialScores(
        [f"u{i}" for i in range(len(rows))],
        np.log(rows),
        np.asarray(labels),
        tuple(registry[: rows.shape[1]]),
    )


class TestTrialScores:
    def test_unnormalized_rows_rejected(self):
        with pytest.raises(ScoreError, match="sum"):
            TrialScores(["u0"], np.log([[0.5, 0.4]]), np.array([0]), ("AAA", "BBB"))

    def test_label_out_of_range_rejected(self):
        with pytest.raises(ScoreError, match="label"):
            trials_from_rows([[0.5, 0.5]], [2], ("AAA", "BBB"))

    def test_empty_rejected(self):
        with pytest.raises(ScoreError, match="empty"):
            TrialScores([], np.zeros((0, 2)), np.zeros(0, int), ("AAA", "BBB"))


class TestConfusion:
    def test_all_correct_is_diagonal(self):
        ts = trials_from_rows(
            [[0.9, 0.05, 0.05], [0.1, 0.8, 0.1], [0.2, 0.2, 0.6]], [0, 1, 2]
        )
        assert np.array_equal(confusion(ts), np.eye(3, dtype=int))

    def test_uniform_row_ties_break_to_class_zero(self):
        third = 1.0 / 3.0
        ts = trials_from_rows([[third, third, third]], [2])
        cm = confusion(ts)
        assert cm[2, 0] == 1

    def test_published_matrix_row_sums_total_12700(self):
        cm = np.array(NADI_DEV_CONFUSION)
        assert cm.sum() == 12700
        assert cm[4].sum() == 1592  # MOR row

    def test_confusion_from_synthesized_scores_reproduces_counts(self):
        cm = np.array(NADI_DEV_CONFUSION)
        ts = scores_from_confusion(cm, NADI_CODES)
        assert np.array_equal(confusion(ts), cm)


class TestAccuracy:
    def test_identity_counts(self):
        assert accuracy(np.diag([5, 3, 2])) == 100.0

    def test_published_matrix_gives_9808(self):
        acc = accuracy(np.array(NADI_DEV_CONFUSION))
        assert round(acc, 2) == 98.08
        assert acc == pytest.approx(100.0 * 12456 / 12700)

    def test_empty_matrix_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            accuracy(np.zeros((3, 3), dtype=int))

    def test_matches_trial_level_accuracy(self):
        rng = np.random.default_rng(0)
        raw = rng.dirichlet(np.ones(4), size=200)
        labels = rng.integers(0, 4, size=200)
        ts = trials_from_rows(raw, labels, ("AAA", "BBB", "CCC", "DDD"))
        direct = 100.0 * np.mean(ts.predictions() == labels)
        assert accuracy(confusion(ts)) == pytest.approx(direct)


class TestNormalize:
    def test_identity_both_axes(self):
        cm = np.diag([4, 2, 9])
        for axis in ("row", "column"):
            norm = normalize_confusion(cm, axis)
            assert np.allclose(np.diag(norm), 100.0)

    def test_row_normalized_hand_case(self):
        norm = normalize_confusion(np.array([[1, 1], [0, 2]]), "row")
        assert np.allclose(norm, [[50.0, 50.0], [0.0, 100.0]])

    def test_published_morocco_to_algeria_rate(self):
        # 30 of the 1592 Moroccan trials predicted as Algerian
        norm = normalize_confusion(np.array(NADI_DEV_CONFUSION), "row")
        assert round(norm[4, 0], 2) == 1.88

    def test_algerian_precision_vs_recall_disagree(self):
        # the column view (precision) reads "96%" while the row view (recall)
        # reads 98.3%; both are correct readings of the same matrix
        cm = np.array(NADI_DEV_CONFUSION)
        col = normalize_confusion(cm, "column")
        row = normalize_confusion(cm, "row")
        assert round(col[0, 0]) == 96
        assert round(row[0, 0], 1) == 98.3

    def test_zero_axis_errors_name_the_class(self):
        cm = np.array([[2, 0], [3, 0]])
        with pytest.raises(ValueError, match="BBB"):
            normalize_confusion(cm, "column", registry=("AAA", "BBB"))

    def test_bad_axis(self):
        with pytest.raises(ValueError, match="axis"):
            normalize_confusion(np.eye(2), "diag")


class TestLreCost:
    def test_perfect_scores_cost_zero_both_rules(self):
        eps = 1e-9
        rows = [[1.0 - eps, eps / 2, eps / 2],
                [eps / 2, 1.0 - eps, eps / 2],
                [eps / 2, eps / 2, 1.0 - eps]]
        ts = trials_from_rows(rows, [0, 1, 2])
        assert lre_cost(ts, LreCostParams(decision_rule="argmax")) == 0.0
        assert lre_cost(ts, LreCostParams(decision_rule="threshold")) == 0.0

    def test_all_accept_limit_is_one_minus_prior(self):
        # accept-everything decisions: P_miss = 0 and every P_fa = 1, so
        # C(P_t) = 1 - P_t and the mean over priors {0.5, 0.1} is 0.7
        labels = np.array([0, 1, 2, 0, 1, 2])
        accept = np.ones((6, 3), dtype=bool)
        per_prior = [cost_from_decisions(labels, accept, p) for p in (0.5, 0.1)]
        assert per_prior == [pytest.approx(0.5), pytest.approx(0.9)]
        assert np.mean(per_prior) == pytest.approx(0.7)

    def test_uniform_two_class_posteriors_accept_all_at_even_prior(self):
        # log-odds 0 meets the log((1-0.5)/0.5) = 0 threshold for both classes
        ts = trials_from_rows([[0.5, 0.5], [0.5, 0.5]], [0, 1], ("AAA", "BBB"))
        params = LreCostParams(p_targets=(0.5,), decision_rule="threshold")
        assert lre_cost(ts, params) == pytest.approx(0.5)

    def test_two_class_hand_case(self):
        # one error on class 0: P_miss(0) = 1 and P_fa(1, 0) = 1
        ts = trials_from_rows([[0.1, 0.9], [0.1, 0.9]], [0, 1], ("AAA", "BBB"))
        cost = lre_cost(ts, LreCostParams(p_targets=(0.5,), decision_rule="argmax"))
        assert cost == pytest.approx(0.5)

    def test_zero_trial_class_rejected(self):
        ts = trials_from_rows([[0.9, 0.1]], [0], ("AAA", "BBB"))
        with pytest.raises(ValueError, match="zero trials"):
            lre_cost(ts)

    def test_monotone_transform_invariance_under_argmax(self):
        rng = np.random.default_rng(1)
        raw = rng.dirichlet(np.ones(4), size=100)
        labels = rng.integers(0, 4, size=100)
        ts = trials_from_rows(raw, labels, ("AAA", "BBB", "CCC", "DDD"))
        powered = raw**1.7
        powered /= powered.sum(axis=1, keepdims=True)
        ts2 = trials_from_rows(powered, labels, ("AAA", "BBB", "CCC", "DDD"))
        params = LreCostParams(decision_rule="argmax")
        assert lre_cost(ts, params) == pytest.approx(lre_cost(ts2, params))

    def test_permutation_invariance(self):
        rng = np.random.default_rng(2)
        raw = rng.dirichlet(np.ones(3), size=60)
        labels = rng.integers(0, 3, size=60)
        ts = trials_from_rows(raw, labels)
        perm = np.array([2, 0, 1])
        inv = np.argsort(perm)
        ts_p = trials_from_rows(raw[:, perm], inv[labels], ("CCC", "AAA", "BBB"))
        assert lre_cost(ts_p) == pytest.approx(lre_cost(ts))
        assert accuracy(confusion(ts_p)) == pytest.approx(accuracy(confusion(ts)))

    def test_cost_non_negative(self):
        rng = np.random.default_rng(3)
        for trial in range(10):
            raw = rng.dirichlet(np.ones(3), size=30)
            labels = rng.integers(0, 3, size=30)
            ts = trials_from_rows(raw, labels)
            for rule in ("argmax", "threshold"):
                assert lre_cost(ts, LreCostParams(decision_rule=rule)) >= 0.0

    def test_bad_priors_rejected(self):
        with pytest.raises(ValueError, match="priors"):
            LreCostParams(p_targets=(0.0, 0.5))


class TestScoreFile:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        raw = rng.dirichlet(np.ones(3), size=10)
        ts = trials_from_rows(raw, rng.integers(0, 3, size=10))
        path = tmp_path / "scores.tsv"
        write_scores(ts, path)
        back = read_scores(path)
        assert back.utt_ids == ts.utt_ids
        assert back.registry == ts.registry
        assert np.array_equal(back.labels, ts.labels)
        assert np.allclose(back.log_posteriors, ts.log_posteriors, rtol=0, atol=0)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "scores.tsv"
        path.write_text("utter\tlabel\tAAA\tBBB\n", encoding="utf-8")
        with pytest.raises(ScoreError, match="header"):
            read_scores(path)

    def test_unknown_label_rejected(self, tmp_path):
        path = tmp_path / "scores.tsv"
        path.write_text(
            "utt_id\tlabel\tAAA\tBBB\nu0\tZZZ\t-0.693\t-0.693\n", encoding="utf-8"
        )
        with pytest.raises(ScoreError, match="ZZZ"):
            read_scores(path)

    def test_empty_body_rejected(self, tmp_path):
        path = tmp_path / "scores.tsv"
        path.write_text("utt_id\tlabel\tAAA\tBBB\n", encoding="utf-8")
        with pytest.raises(ScoreError, match="no trials"):
            read_scores(path)
