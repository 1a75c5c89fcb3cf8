import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from kerdock_radar.src.core.config import ExperimentConfig
from kerdock_radar.src.core.errors import HypothesisError, KerdockRadarError
from kerdock_radar.src.core.harness import (
    allowed_violations,
    benchmark_forward,
    bernstein_mc,
    campaign_summary,
    coherence_failure_probability,
    default_thresholds,
    lemma_hypotheses,
    operator_norm_failure_probability,
    pd_at_pfa,
    recovery_failure_probability,
    roc,
    roc_trial_rows,
    run_sweep,
    run_trials,
    verify_coherence_bound,
    verify_column_norms,
    verify_normalized_coherence,
    verify_operator_norm_bound,
)
from kerdock_radar.src.core.models import TrialRecord
from kerdock_radar.src.core.waveforms import external_waveforms, kerdock_family


def _record(trial, magnitudes, support, success=True, n_cells=None):
    if n_cells is None:
        n_cells = 0 if magnitudes is None else len(magnitudes)
    return TrialRecord(
        trial=trial,
        seed=trial,
        success=success,
        sparsity=len(support),
        n_cells=n_cells,
        true_support=list(support),
        magnitudes=None if magnitudes is None else np.asarray(magnitudes, dtype=float),
    )


class TestRoc:
    def test_synthetic_curve(self):
        record = _record(0, [0.9, 0.5, 0.1, 0.0, 0.0], [0, 1])
        curve = roc([record], thresholds=np.array([0.05, 1.0, 0.3, 0.6]))
        np.testing.assert_allclose(curve.thresholds, [1.0, 0.6, 0.3, 0.05])
        np.testing.assert_allclose(curve.pd, [0.0, 0.5, 1.0, 1.0])
        np.testing.assert_allclose(curve.pfa, [0.0, 0.0, 0.0, 1 / 3])
        assert curve.auc == pytest.approx(1.0)
        assert pd_at_pfa(curve, 1e-2) == 1.0

    def test_threshold_equal_to_magnitude_is_not_a_detection(self):
        curve = roc([_record(0, [0.5, 0.2], [0])], thresholds=np.array([0.5]))
        assert curve.pd[0] == 0.0

    def test_extreme_thresholds(self):
        curve = roc([_record(0, [0.9, 0.5, 0.1, 0.2], [0, 1])], thresholds=np.array([10.0, 0.0]))
        np.testing.assert_allclose(curve.pd, [0.0, 1.0])
        np.testing.assert_allclose(curve.pfa, [0.0, 1.0])

    def test_curves_are_monotone(self, rng):
        records = [_record(t, rng.random(40), rng.choice(40, 4, replace=False)) for t in range(5)]
        curve = roc(records)
        assert np.all(np.diff(curve.pd) >= 0)
        assert np.all(np.diff(curve.pfa) >= 0)
        assert curve.n_trials == 5

    def test_averages_over_trials(self):
        records = [_record(0, [1.0, 0.0], [0]), _record(1, [0.0, 1.0], [0])]
        curve = roc(records, thresholds=np.array([0.5]))
        assert curve.pd[0] == pytest.approx(0.5)
        assert curve.pfa[0] == pytest.approx(0.5)

    def test_default_thresholds(self):
        thresholds = default_thresholds([_record(0, [4.0, 0.5], [0]), _record(1, [2.0, 0.0], [1])])
        assert thresholds.size == 200
        assert thresholds[0] == pytest.approx(4.0)
        assert thresholds[-1] == pytest.approx(4e-6)
        assert np.all(np.diff(thresholds) < 0)

    def test_failed_trials_are_skipped(self):
        records = [_record(0, [1.0, 0.0], [0]), _record(1, None, [0], success=False)]
        assert roc(records, thresholds=np.array([0.5])).n_trials == 1

    def test_nothing_usable(self):
        with pytest.raises(KerdockRadarError, match="No successful"):
            roc([_record(0, None, [0], success=False)])

    def test_failed_record_without_magnitudes(self):
        record = _record(2, None, [0, 3], success=False, n_cells=8)
        assert (record.n_cells, record.magnitudes) == (8, None)
        assert _record(3, None, [1], success=False).n_cells == 0

    def test_trial_rows(self):
        rows = roc_trial_rows([_record(3, [0.9, 0.1], [0])], np.array([0.5, 0.05]))
        assert [row[0] for row in rows] == [3, 3]
        assert float(rows[1][3]) == 1.0


class TestHypotheses:
    def test_desk_scale_fails(self):
        hypotheses = lemma_hypotheses(6, 6, 37, 37)
        assert set(hypotheses) == {"antenna_count_condition", "sample_count_condition"}
        assert not any(hypotheses.values())

    def test_incoherent_waveforms_add_aperture_condition(self):
        hypotheses = lemma_hypotheses(2, 4, 13, 13, gamma=1.0)
        assert "aperture_condition" in hypotheses


class TestFailureProbabilities:
    def test_operator_norm(self):
        assert operator_norm_failure_probability(37, 6) == pytest.approx(8 / (37**2 * 6))

    def test_recovery_includes_coherence_terms(self):
        coherence = coherence_failure_probability(13, 13, 4, 2)
        assert recovery_failure_probability(13, 13, 4, 2) == pytest.approx(16 / (13**2 * 4) + coherence)
        assert coherence > 4 / (13 * 13)

    def test_allowed_violations(self):
        assert allowed_violations(50, None) == 0
        assert allowed_violations(1000, 0.1) == int(stats.binom.ppf(0.95, 1000, 0.1))
        assert allowed_violations(10, 5.0) == 10
        assert allowed_violations(10, -1.0) == 0


class TestCampaignSummary:
    def test_rates_and_claimed_probability(self, reduced_config):
        records = [
            replace(_record(0, [1.0, 0.0], [0]), support_exact=True, relative_error=0.1, error_bound=0.2),
            replace(_record(1, [1.0, 0.0], [0]), support_exact=True, relative_error=0.3, error_bound=0.2),
            _record(2, [0.0, 1.0], [0]),
            _record(3, None, [0], success=False),
        ]
        summary = campaign_summary(reduced_config, records)
        assert (summary["trials"], summary["successful_trials"]) == (4, 3)
        assert summary["exact_support_rate"] == pytest.approx(2 / 3)
        assert summary["within_error_bound_rate"] == pytest.approx(0.5)
        assert summary["claimed_failure_probability"] == pytest.approx(recovery_failure_probability(13, 13, 4, 2))
        assert summary["claimed_success_rate"] == pytest.approx(1 - recovery_failure_probability(13, 13, 4, 2))
        assert summary["hypotheses_met"] is False

    def test_claimed_probability_is_capped(self, small_config):
        tiny = replace(small_config, p=3, n_rx=1, n_tx=1, sparsity=1)
        summary = campaign_summary(tiny, [])
        assert summary["claimed_failure_probability"] == 1.0
        assert summary["exact_support_rate"] == 0.0


class TestGeometryChecks:
    @pytest.mark.parametrize(
        "check", [verify_operator_norm_bound, verify_coherence_bound, verify_normalized_coherence, verify_column_norms]
    )
    def test_hypotheses_enforced(self, small_config, check):
        with pytest.raises(HypothesisError, match="force"):
            check(small_config, trials=2)

    def test_operator_norm(self, small_config):
        report = verify_operator_norm_bound(small_config, trials=3, force=True)
        assert report.bound_value == 2 * 5 * 9 * 4
        assert report.violations == 0
        assert report.forced
        assert report.passed

    def test_coherence(self, small_config):
        report = verify_coherence_bound(small_config, trials=3, force=True)
        assert "16 N_R log" in report.bound_expression
        assert report.bound_value == pytest.approx(16 * 3 * math.log(150))
        assert report.violations == 0
        assert 0 < report.details["max_normalized_coherence"] <= 1 + 1e-12
        assert report.details["gamma"] is None

    def test_normalized_coherence(self, small_config):
        report = verify_normalized_coherence(small_config, trials=2, force=True)
        assert report.bound_value == pytest.approx(48 * math.log(150) / 2)
        assert report.violations == 0

    def test_column_norms(self, small_config):
        report = verify_column_norms(small_config, trials=3, force=True)
        assert report.details["lower_bound"] == pytest.approx(2.0)
        assert report.bound_value == pytest.approx(10.0)
        assert report.violations == 0

    def test_duplicated_waveforms_are_coherent(self, reduced_config):
        u = kerdock_family(13).vector(1, 0)
        duplicated = external_waveforms(np.column_stack([u, u]))
        report = verify_coherence_bound(reduced_config, trials=2, force=True, waveforms=duplicated)
        assert report.details["max_normalized_coherence"] == pytest.approx(1.0, abs=1e-9)
        assert report.details["gamma"] == pytest.approx(math.sqrt(13), rel=1e-9)
        assert "gamma" in report.bound_expression

    def test_reports_save(self, small_config, tmp_path):
        report = verify_column_norms(small_config, trials=2, force=True)
        assert report.save_to_file(str(tmp_path)).endswith("column_norms_report.json")


class TestBernstein:
    def test_four_inequalities_hold(self):
        reports = bernstein_mc(16, 16, trials=10_000, seed=4)
        assert [r.bound_name for r in reports] == [
            "bernstein_ab_bounded",
            "bernstein_aa_bounded",
            "bernstein_ab_unit_diagonal",
            "bernstein_aa_unit_diagonal",
        ]
        for report in reports:
            assert report.claimed_failure_probability == pytest.approx(0.1)
            assert report.violation_rate <= 0.1
            assert report.passed

    def test_zero_t_is_vacuous(self):
        (ab, aa) = bernstein_mc(8, 64, "bounded", t=0.0, trials=500)
        assert ab.claimed_failure_probability >= 1.0
        assert ab.passed and aa.passed

    def test_identity_matrix(self):
        reports = bernstein_mc(8, 64, "identity", trials=1000)
        assert [r.bound_name for r in reports] == ["bernstein_ab_unit_diagonal", "bernstein_aa_unit_diagonal"]
        assert reports[1].empirical_max == pytest.approx(0.0, abs=1e-9)

    def test_custom_matrix(self):
        reports = bernstein_mc(4, 16, np.eye(4) * 0.25, trials=200)
        assert reports[0].details["matrix_model"] == "custom"
        assert reports[0].bound_name == "bernstein_ab_bounded"

    def test_rejects_bad_matrix(self):
        with pytest.raises(ValueError, match="4 x 4"):
            bernstein_mc(4, 16, np.eye(3))
        with pytest.raises(ValueError, match="Unknown matrix model"):
            bernstein_mc(4, 16, "toeplitz")


class TestBenchmark:
    def test_small_benchmark(self, small_config):
        report = benchmark_forward(small_config, repeats=2)
        assert report.sample_counts == [5, 11, 23]
        assert len(report.scaling_seconds) == 3
        assert report.dense_seconds is not None
        assert set(report.to_dict()) >= {"speedup", "normalized_slope", "passed"}


class TestSweep:
    def test_grid_of_points(self, small_config):
        cfg = replace(small_config, trials=2)
        points = run_sweep(cfg, [1, 2], [None, 20.0], n_jobs=1)
        assert [(p.sparsity, p.snr_db) for p in points] == [(1, None), (1, 20.0), (2, None), (2, 20.0)]
        for point in points:
            assert len(point.records) == 2
            assert 0.0 <= point.exact_recovery_rate <= 1.0


def _full_scale(**overrides):
    values = dict(n_tx=6, n_rx=6, p=37, n_doppler=37, trials=50, seed=2024, jobs=None)
    values.update(overrides)
    return ExperimentConfig(**values)


@pytest.mark.slow
class TestFullScale:
    def test_column_norm_band(self):
        report = verify_column_norms(_full_scale(), trials=50, force=True)
        assert report.trials - report.violations >= 45

    def test_coherence_bound_reduced(self, reduced_config):
        report = verify_coherence_bound(reduced_config, trials=50, force=True)
        assert report.trials - report.violations >= 45

    def test_operator_norm_reduced(self, reduced_config):
        report = verify_operator_norm_bound(reduced_config, trials=50, force=True)
        assert report.trials - report.violations >= 45

    def test_recovery(self):
        cfg = _full_scale(sparsity=10, snr_db=20.0, amplitude_model="floor_multiple", amplitude_multiple=1.5)
        records = run_trials(cfg)
        assert all(r.success for r in records)
        exact = [r for r in records if r.support_exact]
        assert len(exact) >= 45
        assert all(r.within_error_bound for r in exact)

    def test_mimo_beats_simo(self):
        simo = ExperimentConfig(n_tx=1, n_rx=8, p=11, n_doppler=11, sparsity=5, snr_db=15.0, trials=50, seed=7)
        mimo = ExperimentConfig(n_tx=2, n_rx=8, p=17, n_doppler=17, sparsity=5, snr_db=15.0, trials=50, seed=7)
        pd_simo = roc(run_trials(simo)).pd_at_pfa(1e-2)
        pd_mimo = roc(run_trials(mimo)).pd_at_pfa(1e-2)
        assert pd_mimo > pd_simo

    def test_forward_benchmark(self):
        report = benchmark_forward(_full_scale(), repeats=5)
        assert report.speedup >= 5.0
        assert report.normalized_slope <= 1.3

    def test_exact_recovery_improves_with_snr(self):
        cfg = ExperimentConfig(n_tx=2, n_rx=8, p=17, n_doppler=17, sparsity=5, trials=50, seed=7)
        low, high = run_sweep(cfg, [5], [15.0, 25.0])
        assert high.exact_recovery_rate >= low.exact_recovery_rate

    def test_detection_degrades_with_sparsity(self):
        cfg = ExperimentConfig(n_tx=2, n_rx=8, p=17, n_doppler=17, snr_db=15.0, trials=50, seed=7)
        points = run_sweep(cfg, [5, 10, 20], [15.0])
        pd = [point.curve.pd_at_pfa(1e-2) for point in points]
        assert pd[0] >= pd[1] >= pd[2]
