import json
from dataclasses import replace

import numpy as np
import pytest

from kerdock_radar.src.core.errors import DimensionError
from kerdock_radar.src.core.harness import run_trials
from kerdock_radar.src.core.io import write_waveforms_csv
from kerdock_radar.src.core.pipeline import SimulationPipeline, build_waveforms, create_pipeline
from kerdock_radar.src.core.scene_grid import normalized_amplitude_floor
from kerdock_radar.src.core.waveforms import kerdock_family, kerdock_waveforms


class TestBuildWaveforms:
    def test_named_families(self, small_config):
        assert build_waveforms(small_config).family_tag == "kerdock"
        assert build_waveforms(replace(small_config, family="alltop")).family_tag == "alltop"

    def test_external_file(self, small_config, tmp_path):
        path = write_waveforms_csv(kerdock_waveforms(kerdock_family(5), 2), str(tmp_path / "w.csv"))
        cfg = replace(small_config, family="external", waveform_file=path)
        assert build_waveforms(cfg).columns.shape == (5, 2)

    def test_external_file_of_wrong_size(self, small_config, tmp_path):
        path = write_waveforms_csv(kerdock_waveforms(kerdock_family(7), 2), str(tmp_path / "w.csv"))
        with pytest.raises(DimensionError, match="p=7"):
            build_waveforms(replace(small_config, family="external", waveform_file=path))


class TestSimulationPipeline:
    def test_record_fields(self, small_config):
        record = create_pipeline(small_config).run_trial(0)
        assert record.success, record.errors
        assert record.n_cells == 150
        assert len(record.true_support) == 1
        assert record.magnitudes.shape == (150,)
        assert record.sigma > 0
        assert 0 < record.error_bound < np.inf
        assert record.processing_time >= 0

    def test_trials_are_reproducible(self, small_config):
        first = SimulationPipeline(small_config).run_trial(2)
        second = SimulationPipeline(small_config).run_trial(2)
        assert first.to_row() == second.to_row()
        np.testing.assert_array_equal(first.magnitudes, second.magnitudes)

    def test_trials_use_distinct_seeds(self, small_config):
        pipeline = SimulationPipeline(small_config)
        assert len({pipeline.trial_seed(t) for t in range(5)}) == 5

    def test_waveform_mismatch_becomes_error_record(self, small_config):
        waveforms = kerdock_waveforms(kerdock_family(5), n_tx=3)
        record = SimulationPipeline(small_config, waveforms=waveforms).run_trial(0)
        assert not record.success
        assert "transmit antennas" in record.errors[0]
        assert record.magnitudes is None

    def test_noiseless_trial(self, small_config):
        cfg = replace(small_config, snr_db=None)
        artifacts = SimulationPipeline(cfg).simulate_trial(0)
        assert artifacts.measurement.sigma == 0.0
        np.testing.assert_array_equal(artifacts.measurement.y, artifacts.operator.forward(artifacts.scene.to_vector()))
        assert artifacts.recovery.lam > 0

    def test_lambda_override(self, small_config):
        artifacts = SimulationPipeline(replace(small_config, lam=0.25)).simulate_trial(0)
        assert artifacts.recovery.lam == 0.25

    def test_detection_floor_gates_weak_cells(self, small_config):
        cfg = replace(small_config, sparsity=2, snr_db=10.0)
        gated = SimulationPipeline(cfg).simulate_trial(0)
        ungated = SimulationPipeline(replace(cfg, detection_floor_ratio=0.0)).simulate_trial(0)
        np.testing.assert_array_equal(gated.recovery.x_lasso, ungated.recovery.x_lasso)
        assert set(gated.recovery.support.tolist()) <= set(ungated.recovery.support.tolist())
        gate = 0.5 * normalized_amplitude_floor(gated.measurement.sigma, gated.operator.grid)
        support = gated.recovery.support
        norms = gated.operator.column_norms()
        assert np.all(np.abs(gated.recovery.x_lasso[support]) * norms[support] > gate)

    def test_floor_multiple_scales_the_scene(self, small_config):
        cfg = replace(small_config, amplitude_model="floor_multiple", amplitude_multiple=1.5, snr_db=20.0)
        artifacts = SimulationPipeline(cfg).simulate_trial(0)
        assert artifacts.amplitude_floor > 0
        np.testing.assert_allclose(np.abs(artifacts.scene.amplitudes), 1.5 * artifacts.amplitude_floor)
        assert artifacts.measurement.output_snr_db > 20.0

    def test_dense_oracle_cross_check(self, small_config):
        pipeline = SimulationPipeline(small_config, dense_oracle=True)
        assert pipeline.run_trial(0).success

    def test_progress_reaches_completion(self, small_config):
        updates = []
        records = SimulationPipeline(small_config).process_campaign(
            progress_callback=lambda value, message: updates.append(value)
        )
        assert [r.trial for r in records] == [0, 1, 2]
        assert updates[0] == 0.0
        assert updates[-1] == 100.0

    def test_artifacts_save(self, small_config, tmp_path):
        artifacts = SimulationPipeline(small_config).simulate_trial(0)
        artifacts.save(str(tmp_path))
        for name in ("geometry.json", "scene.json", "measurement.csv", "measurement.json", "recovery_result.json"):
            assert (tmp_path / name).exists()
        meta = json.loads((tmp_path / "measurement.json").read_text())
        assert meta["requested_snr_db"] == 30.0


class TestRunTrials:
    def test_serial_and_parallel_agree(self, small_config):
        serial = run_trials(small_config, n_jobs=1)
        parallel = run_trials(small_config, n_jobs=2)
        assert [r.to_row() for r in serial] == [r.to_row() for r in parallel]

    def test_records_sorted_by_trial(self, small_config):
        records = run_trials(replace(small_config, trials=4), n_jobs=2)
        assert [r.trial for r in records] == [0, 1, 2, 3]
