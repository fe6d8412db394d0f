import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from cadence_forge.errors import ValidationError
from cadence_forge.stats import (FoldScores, betainc_reg, cohens_d, confusion_and_perclass, confusion_matrix,
                                 corrected_paired_ttest, most_confused_submatrix, paired_ttest_from_summary,
                                 t_cdf, t_ppf, t_sf_two_sided, top1_accuracy)

fold_vectors = st.lists(st.floats(-50, 50, allow_nan=False), min_size=3, max_size=10)


class TestStudentT:
    @pytest.mark.parametrize("t,df", [(0.0, 4), (1.3, 1), (-2.1, 4), (3.93, 4), (10.0, 30), (0.5, 200)])
    def test_cdf_matches_scipy(self, t, df):
        assert t_cdf(t, df) == pytest.approx(sps.t.cdf(t, df), abs=1e-10)

    @pytest.mark.parametrize("a,b,x", [(0.5, 0.5, 0.3), (2.0, 3.0, 0.9), (10.0, 0.5, 0.2)])
    def test_betainc_matches_scipy(self, a, b, x):
        from scipy.special import betainc
        assert betainc_reg(a, b, x) == pytest.approx(betainc(a, b, x), abs=1e-12)

    def test_critical_value(self):
        assert t_ppf(0.975, 4) == pytest.approx(2.776, abs=1e-3)
        assert t_ppf(0.975, 4) == pytest.approx(sps.t.ppf(0.975, 4), abs=1e-8)

    def test_tails(self):
        assert t_sf_two_sided(math.inf, 3) == 0.0
        assert t_sf_two_sided(0.0, 3) == pytest.approx(1.0)
        with pytest.raises(ValidationError):
            t_sf_two_sided(1.0, 0)


class TestCorrectedTTest:
    def test_summary_values(self):
        r = paired_ttest_from_summary(3.3, 0.560, 5, 0.25)
        assert r.df == 4
        assert 0.835 <= r.corrected_se <= 0.845
        assert 3.89 <= r.t <= 3.94
        assert 0.015 <= r.p <= 0.019
        d = r.mean_diff / r.sd_diff
        assert 2.62 <= d <= 2.65

    @given(st.integers(0, 10_000), st.integers(3, 10))
    def test_rho_zero_is_classical(self, seed, k):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(80, 3, k), rng.normal(78, 3, k)
        r = corrected_paired_ttest(FoldScores(a, b, rho=0.0))
        ref = sps.ttest_rel(a, b)
        assert r.t == pytest.approx(ref.statistic, abs=1e-10)
        assert r.p == pytest.approx(ref.pvalue, abs=1e-10)

    @given(fold_vectors, st.floats(0.0, 1.0))
    def test_correction_ratio(self, a, rho):
        a = np.array(a)
        b = a[::-1] * 0.5 + 1.0
        if np.std(a - b) < 1e-6:
            return
        plain = corrected_paired_ttest(FoldScores(a, b, rho=0.0))
        corr = corrected_paired_ttest(FoldScores(a, b, rho=rho))
        assert plain.t / corr.t == pytest.approx(math.sqrt(1 + len(a) * rho), rel=1e-9)
        assert corr.p >= plain.p - 1e-12

    @given(fold_vectors)
    def test_antisymmetry(self, a):
        a = np.array(a)
        b = np.roll(a, 1) + 0.3
        if np.std(a - b) < 1e-6:
            return
        ab = corrected_paired_ttest(FoldScores(a, b))
        ba = corrected_paired_ttest(FoldScores(b, a))
        assert ab.t == pytest.approx(-ba.t, abs=1e-9) and ab.p == pytest.approx(ba.p, abs=1e-12)

    def test_from_fold_differences(self):
        z = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
        z = z / z.std(ddof=1)
        diffs = 3.3 + 1.2522 * z
        scores = FoldScores(diffs, np.zeros(5), rho=0.25)
        r = corrected_paired_ttest(scores)
        assert r.corrected_se == pytest.approx(0.840, abs=0.005)
        assert r.t == pytest.approx(3.93, abs=0.04)
        assert r.df == 4
        assert r.corrected_se / (1.2522 / math.sqrt(5)) == pytest.approx(1.5, rel=1e-12)
        assert cohens_d(scores) == pytest.approx(2.635, abs=0.01)

    def test_textbook_paired_example(self):
        # independent arithmetic: mean 1, sd sqrt(2.5), t = 1 / (sd / sqrt(5))
        a = np.array([12.0, 15.0, 11.0, 14.0, 13.0])
        b = np.array([11.0, 13.0, 12.0, 14.0, 10.0])
        r = corrected_paired_ttest(FoldScores(a, b, rho=0.0))
        assert r.t == pytest.approx(1.0 / (math.sqrt(2.5) / math.sqrt(5)), rel=1e-12)

    def test_symmetric_diffs_have_zero_effect(self):
        assert cohens_d(FoldScores(np.array([1.0, -1.0, 2.0, -2.0]), np.zeros(4))) == 0.0

    def test_default_rho(self):
        s = FoldScores(np.arange(5.0), np.zeros(5))
        assert s.test_train_ratio == pytest.approx(0.25)

    def test_degenerate(self):
        r = corrected_paired_ttest(FoldScores(np.ones(4), np.ones(4)))
        assert (r.t, r.p) == (0.0, 1.0)
        with pytest.warns(RuntimeWarning):
            r = corrected_paired_ttest(FoldScores(np.ones(4) + 1, np.ones(4)))
        assert r.t == math.inf
        with pytest.warns(RuntimeWarning):
            assert cohens_d(FoldScores(np.zeros(3), np.ones(3))) == -math.inf

    def test_validation(self):
        with pytest.raises(ValidationError):
            FoldScores(np.ones(3), np.ones(4))
        with pytest.raises(ValidationError):
            FoldScores(np.ones(1), np.ones(1))
        with pytest.raises(ValidationError):
            FoldScores(np.ones(3), np.ones(3), rho=-1.0)
        with pytest.raises(ValidationError):
            paired_ttest_from_summary(1.0, 0.5, 1)

    def test_cohens_d(self):
        s = FoldScores(np.array([3.0, 5.0, 4.0]), np.zeros(3))
        assert cohens_d(s) == pytest.approx(4.0)


class TestConfusion:
    def test_small_example(self):
        rep = confusion_and_perclass([0, 0, 1, 1], [0, 1, 1, 1], 2)
        np.testing.assert_array_equal(rep.matrix, [[1, 0], [1, 2]])
        np.testing.assert_allclose(rep.per_class_acc, [1.0, 2 / 3])
        assert rep.top1 == pytest.approx(0.75)

    def test_perfect_predictions(self):
        rep = confusion_and_perclass([0, 1, 2, 2], [0, 1, 2, 2], 3)
        np.testing.assert_array_equal(rep.matrix, np.diag([1, 1, 2]))
        np.testing.assert_array_equal(rep.per_class_acc, [1.0, 1.0, 1.0])

    def test_empty_class_is_nan(self):
        rep = confusion_and_perclass([0, 1], [0, 1], 3)
        assert np.isnan(rep.per_class_acc[2])
        assert rep.macro_acc == pytest.approx(1.0)

    @given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=60))
    def test_counts_and_trace(self, pairs):
        p, t = zip(*pairs)
        m = confusion_matrix(p, t, 5)
        assert m.sum() == len(pairs)
        assert np.trace(m) / len(pairs) == pytest.approx(top1_accuracy(p, t))
        np.testing.assert_array_equal(m.sum(axis=1), np.bincount(t, minlength=5))

    def test_label_validation(self):
        with pytest.raises(ValidationError):
            confusion_matrix([0, 3], [0, 1], 3)
        with pytest.raises(ValidationError):
            confusion_matrix([0, 1], [0], 3)
        with pytest.raises(ValidationError):
            top1_accuracy([], [])

    def test_most_confused_hand_built(self):
        m = np.diag([10] * 6)
        m[4, 1] = 7
        m[2, 5] = 5
        m[0, 3] = 5
        classes, sub = most_confused_submatrix(m, 4)
        assert classes == [4, 1, 0, 3]
        assert sub[0, 1] == 7 and sub[2, 3] == 5
        classes, _ = most_confused_submatrix(m, 6)
        assert classes == [4, 1, 0, 3, 2, 5]

    def test_most_confused_diagonal_only(self):
        with pytest.warns(RuntimeWarning):
            classes, _ = most_confused_submatrix(np.diag([3, 3, 3, 3]), 2)
        assert classes == [0, 1]

    def test_most_confused_dominant_cell(self):
        m = np.ones((5, 5), dtype=int)
        m[3, 1] = 40
        assert most_confused_submatrix(m, 3)[0][:2] == [3, 1]

    def test_most_confused_fills_by_index(self):
        m = np.diag([5, 5, 5, 5])
        m[3, 2] = 1
        with pytest.warns(RuntimeWarning):
            classes, sub = most_confused_submatrix(m, 3)
        assert classes == [3, 2, 0]
        assert sub.shape == (3, 3)

    def test_most_confused_size_check(self):
        with pytest.raises(ValidationError):
            most_confused_submatrix(np.eye(3), 4)
