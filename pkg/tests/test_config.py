import json

import pytest

from kerdock_radar.src.core.config import (
    ExperimentConfig,
    TrialConfig,
    create_default_config,
    create_env_template,
    load_config,
)
from kerdock_radar.src.core.errors import ConfigError


class TestValidation:
    def test_defaults_are_valid(self):
        config = ExperimentConfig()
        assert config.validate()
        assert config.doppler_bins == 37
        assert config.n_cells == 37 * 37 * 36

    def test_non_prime_p(self):
        with pytest.raises(ConfigError, match="odd prime"):
            TrialConfig(p=4).validate()

    def test_collects_every_error(self):
        config = ExperimentConfig(n_tx=0, n_rx=0, p=9, trials=0, jobs=0)
        with pytest.raises(ConfigError) as excinfo:
            config.validate()
        message = str(excinfo.value)
        for expected in ("odd prime", "n_tx", "n_rx", "trials", "jobs"):
            assert expected in message

    def test_kerdock_needs_n_tx_below_p(self):
        with pytest.raises(ConfigError, match="n_tx < p"):
            TrialConfig(p=5, n_tx=5).validate()

    def test_sparsity_limited_by_grid(self):
        with pytest.raises(ConfigError, match="sparsity"):
            TrialConfig(p=5, n_tx=1, n_rx=1, sparsity=26).validate()

    def test_doppler_bins_at_most_p(self):
        with pytest.raises(ConfigError, match="n_doppler"):
            TrialConfig(p=5, n_tx=2, n_rx=2, sparsity=1, n_doppler=6).validate()

    def test_external_family_needs_file(self):
        with pytest.raises(ConfigError, match="waveform_file"):
            TrialConfig(family="external").validate()

    def test_lasso_config_carries_overrides(self):
        lasso = TrialConfig(max_iters=77, support_threshold=0.01).lasso_config(2.0)
        assert lasso.lam == 2.0
        assert lasso.max_iters == 77
        assert lasso.support_threshold == 0.01
        assert lasso.detection_floor == 0.0
        assert TrialConfig().lasso_config(2.0, detection_floor=1.5).detection_floor == 1.5

    @pytest.mark.parametrize("ratio", [-0.1, 1.5])
    def test_detection_floor_ratio_range(self, ratio):
        with pytest.raises(ConfigError, match="detection_floor_ratio"):
            TrialConfig(detection_floor_ratio=ratio).validate()


class TestFromDict:
    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="Unknown"):
            ExperimentConfig.from_dict({"n_tx": 2, "n_rx": 2, "p": 5, "colour": "red"})

    def test_missing_required_key_is_named(self):
        with pytest.raises(ConfigError, match=r"key\(s\): p"):
            ExperimentConfig.from_dict({"n_tx": 2, "n_rx": 2})

    @pytest.mark.parametrize("value", ["inf", "Inf", None, float("inf")])
    def test_noiseless_spellings(self, value):
        config = ExperimentConfig.from_dict({"n_tx": 2, "n_rx": 2, "p": 5, "sparsity": 1, "snr_db": value})
        assert config.snr_db is None


class TestFiles:
    def test_round_trip(self, tmp_path):
        config = ExperimentConfig(n_tx=2, n_rx=3, p=7, sparsity=4, snr_db=15.0, seed=9, output_dir="out")
        path = tmp_path / "config.json"
        config.save_to_file(str(path))
        assert ExperimentConfig.from_file(str(path)) == config

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            ExperimentConfig.from_file(str(tmp_path / "absent.json"))

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            ExperimentConfig.from_file(str(path))

    def test_non_object(self, tmp_path):
        path = tmp_path / "list.json"
        path.write_text(json.dumps([1, 2]))
        with pytest.raises(ConfigError, match="JSON object"):
            load_config(str(path))

    def test_create_default_config(self, tmp_path):
        path = tmp_path / "nested" / "default.json"
        config = create_default_config(str(path))
        assert json.loads(path.read_text())["p"] == config.p

    def test_env_template(self, tmp_path):
        path = create_env_template(str(tmp_path / ".env.example"))
        text = open(path).read()
        assert "KERDOCK_P=37" in text
        assert "KERDOCK_OUTPUT_ROOT" in text


class TestFromEnv:
    def test_reads_environment(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        monkeypatch.setenv("KERDOCK_N_TX", "2")
        monkeypatch.setenv("KERDOCK_N_RX", "3")
        monkeypatch.setenv("KERDOCK_P", "11")
        monkeypatch.setenv("KERDOCK_SPARSITY", "4")
        monkeypatch.setenv("KERDOCK_SNR_DB", "inf")
        monkeypatch.setenv("KERDOCK_JOBS", "2")
        monkeypatch.setenv("KERDOCK_OUTPUT_ROOT", str(tmp_path / "runs"))
        config = load_config()
        assert (config.n_tx, config.n_rx, config.p, config.sparsity) == (2, 3, 11, 4)
        assert config.snr_db is None
        assert config.jobs == 2
        assert config.output_dir == str(tmp_path / "runs")

    def test_invalid_environment_fails(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        monkeypatch.setenv("KERDOCK_P", "15")
        with pytest.raises(ConfigError, match="odd prime"):
            ExperimentConfig.from_env()
