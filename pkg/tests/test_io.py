import csv
from dataclasses import replace

import numpy as np
import pytest

from kerdock_radar.src.core.errors import DimensionError, WaveformError
from kerdock_radar.src.core.io import (
    read_records,
    read_waveforms_csv,
    write_measurement_csv,
    write_records,
    write_waveforms_csv,
)
from kerdock_radar.src.core.models import Measurement, TrialRecord
from kerdock_radar.src.core.waveforms import alltop_waveforms, kerdock_family, kerdock_waveforms


def _record(trial, magnitudes=None, success=True):
    return TrialRecord(
        trial=trial,
        seed=100 + trial,
        success=success,
        sparsity=2,
        n_cells=6,
        true_support=[1, 4],
        detected_support=[1, 4] if success else [],
        support_exact=success,
        relative_error=0.01,
        error_bound=0.5,
        sigma=0.1,
        lam=0.3,
        magnitudes=magnitudes,
        errors=[] if success else ["Support of size 9 exceeds the 8 measurements"],
    )


class TestWaveformFiles:
    def test_kerdock_file_keeps_tag(self, tmp_path):
        waveforms = kerdock_waveforms(kerdock_family(7), n_tx=3)
        path = write_waveforms_csv(waveforms, str(tmp_path / "waveforms.csv"))
        loaded = read_waveforms_csv(path)
        assert loaded.family_tag == "kerdock"
        np.testing.assert_allclose(loaded.columns, waveforms.columns, atol=1e-12)

    def test_header_row(self, tmp_path):
        path = write_waveforms_csv(alltop_waveforms(5, 2), str(tmp_path / "w.csv"))
        first = open(path).readline().strip()
        assert first == "p,5,n_tx,2,family_tag,alltop"

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("length,5\na,b\n1,0\n")
        with pytest.raises(WaveformError, match="malformed header"):
            read_waveforms_csv(str(path))

    def test_shape_disagrees_with_header(self, tmp_path):
        path = tmp_path / "short.csv"
        path.write_text("p,3,n_tx,1,family_tag,external\ns0_real,s0_imag\n1,0\n0,1\n")
        with pytest.raises(DimensionError):
            read_waveforms_csv(str(path))

    def test_too_short(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("p,3,n_tx,1\n")
        with pytest.raises(WaveformError, match="too short"):
            read_waveforms_csv(str(path))


class TestMeasurementFiles:
    def test_values_survive(self, tmp_path, rng):
        y = rng.standard_normal(9) + 1j * rng.standard_normal(9)
        measurement = Measurement(y=y, sigma=0.2, snr_db=10.0, clean_energy=1.0)
        path = write_measurement_csv(measurement, str(tmp_path / "measurement.csv"))
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        assert [int(r["index"]) for r in rows] == list(range(9))
        values = np.array([float(r["real"]) + 1j * float(r["imag"]) for r in rows])
        np.testing.assert_array_equal(values, y)


class TestRecordFiles:
    def test_records_and_detections(self, tmp_path):
        magnitudes = np.array([0.0, 0.9, 0.0, 0.0, 0.7, 0.01])
        records = [_record(1, magnitudes.copy()), _record(0, magnitudes * 2)]
        paths = write_records(records, str(tmp_path))
        loaded = read_records(paths["records"])
        assert [r.trial for r in loaded] == [0, 1]
        assert loaded[1].true_support == [1, 4]
        assert loaded[1].within_error_bound
        np.testing.assert_allclose(loaded[1].magnitudes, magnitudes)
        np.testing.assert_allclose(loaded[0].magnitudes, magnitudes * 2)

    def test_failed_trial_keeps_its_error(self, tmp_path):
        paths = write_records([_record(0, success=False)], str(tmp_path))
        loaded = read_records(paths["records"])[0]
        assert not loaded.success
        assert loaded.errors == ["Support of size 9 exceeds the 8 measurements"]
        assert loaded.magnitudes is None

    def test_missing_detections_file(self, tmp_path):
        paths = write_records([_record(0, np.ones(6))], str(tmp_path))
        (tmp_path / "detections.csv").unlink()
        assert read_records(paths["records"])[0].magnitudes is None

    def test_debias_stall_is_kept_apart_from_rank_deficiency(self, tmp_path):
        record = replace(_record(0, np.ones(6)), debias_converged=False)
        paths = write_records([record], str(tmp_path))
        loaded = read_records(paths["records"])[0]
        assert not loaded.debias_converged
        assert not loaded.rank_deficient
