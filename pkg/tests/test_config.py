import pytest

from lmdm.config import RunConfig, parse_config


class TestRunConfig:
    def test_defaults_validate(self):
        cfg = RunConfig()
        cfg.validate()
        assert cfg.k == 1 and cfg.tau == 2.0 and cfg.T == 1000
        assert cfg.schedule_kind == "linear"
        assert cfg.reg_mode == "ES"
        assert cfg.var_noise_source == "normal"
        assert cfg.var_noise_scale == "squared"

    @pytest.mark.parametrize("field,value", [
        ("k", 0), ("T", 1), ("tau", 0.0), ("schedule_kind", "cosine"),
        ("sigma_mode", "learned"), ("reg_mode", "L2"),
        ("var_noise_source", "cauchy"), ("var_noise_scale", "cubic"),
        ("batch_size", 0),
    ])
    def test_validation_rejects(self, field, value):
        cfg = RunConfig()
        setattr(cfg, field, value)
        with pytest.raises(ValueError):
            cfg.validate()

    def test_to_dict_round_trips(self):
        cfg = RunConfig(k=2, tau=1.5, T=200, gamma_weighting=True,
                        reg_mode="KL", seed=9)
        back = parse_config(cfg.to_dict())
        assert back == cfg


class TestParseConfig:
    def test_file_and_overrides(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\nk=2\ntau = 1.5\n\nT=100\n")
        cfg = parse_config({"T": "50"}, path=path)
        assert cfg.k == 2 and cfg.tau == 1.5
        assert cfg.T == 50  # explicit override wins over the file

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown config key"):
            parse_config({"dropout": "0.5"})

    def test_bool_casting(self):
        assert parse_config({"gamma_weighting": "true"}).gamma_weighting
        assert parse_config({"gamma_weighting": "1"}).gamma_weighting
        assert not parse_config({"gamma_weighting": "false"}).gamma_weighting
        assert not parse_config({"gamma_weighting": "0"}).gamma_weighting

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("just a line\n")
        with pytest.raises(ValueError, match="key=value"):
            parse_config(path=path)

    def test_invalid_value_fails_validation(self):
        with pytest.raises(ValueError):
            parse_config({"schedule_kind": "quadratic"})
