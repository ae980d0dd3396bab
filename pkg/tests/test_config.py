import json

import numpy as np
import pytest

from collapse_lab.config import (
    DEFAULT_W_GRID,
    THREADS_ENV,
    ConfigError,
    ExperimentConfig,
    config_hash,
    load_config,
    parse_grid,
    validate_config,
)
from collapse_lab.spectra import (
    AR1,
    Equicorrelated,
    ExplicitMatrix,
    ExplicitVector,
    Isotropic,
    NormalizedBernoulli,
    RandomEffects,
    Spiked,
    SpikedAligned,
)


class TestParseGrid:
    def test_linear_inclusive(self):
        g = parse_grid("0.1:0.5:5")
        assert np.allclose(g, [0.1, 0.2, 0.3, 0.4, 0.5])

    def test_log(self):
        g = parse_grid("log:0.01:100:5")
        assert np.allclose(g, [0.01, 0.1, 1.0, 10.0, 100.0])

    def test_single_number_string(self):
        assert np.array_equal(parse_grid("0.7"), [0.7])

    def test_single_number_value(self):
        assert np.array_equal(parse_grid(0.7), [0.7])

    def test_count_one_returns_lo(self):
        assert np.array_equal(parse_grid("2:5:1"), [2.0])

    def test_default_w_grid(self):
        g = parse_grid(DEFAULT_W_GRID)
        assert g.size == 101
        assert g[0] == pytest.approx(0.05)
        assert g[-1] == pytest.approx(0.95)

    @pytest.mark.parametrize(
        "bad",
        ["1:2", "1:2:3:4", "log:0:1:5", "log:-1:1:5", "5:1:3", "1:2:0", "a:b:c"],
    )
    def test_rejects_malformed(self, bad):
        with pytest.raises(ConfigError) as exc:
            parse_grid(bad, "lam")
        assert exc.value.field == "lam"


class TestDefaults:
    def test_default_values(self):
        cfg = ExperimentConfig()
        assert cfg.mode == "theory"
        assert cfg.gamma == 2.0
        assert cfg.t == 5
        assert cfg.n == 200
        assert cfg.reps == 100
        assert cfg.seed == 1
        assert cfg.lam is None
        assert cfg.w is None

    def test_p_rounds(self):
        assert ExperimentConfig(gamma=2.0, n=200).p == 400
        assert ExperimentConfig(gamma=1.5, n=33).p == 50  # round(49.5) banker's

    def test_defaults_validate(self):
        validate_config(ExperimentConfig())


class TestModelConstruction:
    def test_covariance_models(self):
        assert ExperimentConfig(cov="isotropic", cov_alpha=2.0).covariance_model() == Isotropic(2.0)
        assert ExperimentConfig(cov="ar1", cov_rho=0.3).covariance_model() == AR1(0.3)
        assert ExperimentConfig(cov="spiked", cov_s=4.0).covariance_model() == Spiked(4.0)
        assert ExperimentConfig(cov="equicorr", cov_rho=0.3).covariance_model() == Equicorrelated(0.3)

    def test_signal_models(self):
        assert ExperimentConfig(signal="bern", signal_q=0.2).signal_model() == NormalizedBernoulli(0.2)
        assert ExperimentConfig(signal="random-effects", bstar=2.0).signal_model() == RandomEffects(2.0)
        assert ExperimentConfig(signal="spiked-aligned", signal_theta=0.7).signal_model() == SpikedAligned(0.7)

    def test_cov_file(self, tmp_path):
        mat = tmp_path / "sigma.csv"
        mat.write_text("1.0,0.2\n0.2,1.0\n", encoding="utf-8")
        model = ExperimentConfig(cov="file", cov_file=str(mat)).covariance_model()
        assert isinstance(model, ExplicitMatrix)
        assert np.allclose(model.matrix, [[1.0, 0.2], [0.2, 1.0]])

    def test_cov_file_missing_path(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(cov="file").covariance_model()

    def test_signal_file(self, tmp_path):
        vec = tmp_path / "beta.csv"
        vec.write_text("1.0,0.0,2.0\n", encoding="utf-8")
        model = ExperimentConfig(signal="file", signal_file=str(vec)).signal_model()
        assert isinstance(model, ExplicitVector)
        assert np.array_equal(model.vector, [1.0, 0.0, 2.0])


class TestLoadConfig:
    def test_empty_gives_defaults(self):
        cfg = load_config()
        assert cfg == ExperimentConfig()

    def test_file_layer(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"gamma": 3.0, "t": 7}), encoding="utf-8")
        cfg = load_config(str(path))
        assert cfg.gamma == 3.0
        assert cfg.t == 7
        assert cfg.explicit == {"gamma", "t"}

    def test_overrides_beat_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"gamma": 3.0, "n": 100}), encoding="utf-8")
        cfg = load_config(str(path), {"gamma": 4.0})
        assert cfg.gamma == 4.0
        assert cfg.n == 100

    def test_none_overrides_skipped(self):
        cfg = load_config(None, {"gamma": None, "t": 9})
        assert cfg.gamma == 2.0
        assert cfg.t == 9

    def test_lambda_alias(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"lambda": "0.1:1:3"}), encoding="utf-8")
        cfg = load_config(str(path))
        assert np.allclose(cfg.lam, [0.1, 0.55, 1.0])
        assert cfg.grid_sources["lam"] == "0.1:1:3"

    def test_w_grid_parse(self):
        cfg = load_config(None, {"w": "0.3:0.9:4"})
        assert np.allclose(cfg.w, [0.3, 0.5, 0.7, 0.9])

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as exc:
            load_config(None, {"gama": 2.0})
        assert exc.value.field == "gama"

    def test_internal_fields_rejected(self):
        with pytest.raises(ConfigError):
            load_config(None, {"explicit": ["gamma"]})

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_config("/nonexistent/run.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError, match="JSON"):
            load_config(str(path))

    def test_non_object_json(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text("[1, 2]", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_bad_int(self):
        with pytest.raises(ConfigError) as exc:
            load_config(None, {"t": "soon"})
        assert exc.value.field == "t"

    def test_env_threads(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "4")
        assert load_config().threads == 4

    def test_flag_beats_env_threads(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "4")
        assert load_config(None, {"threads": 2}).threads == 2

    def test_bad_env_threads(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "many")
        with pytest.raises(ConfigError):
            load_config()


class TestValidation:
    @pytest.mark.parametrize(
        "kwargs, field_name",
        [
            ({"mode": "train"}, "mode"),
            ({"cov": "toeplitz"}, "cov"),
            ({"signal": "sparse"}, "signal"),
            ({"entry_dist": "uniform"}, "entry_dist"),
            ({"noise_dist": "uniform"}, "noise_dist"),
            ({"gamma": 1.0}, "gamma"),
            ({"sigma2": 0.0}, "sigma2"),
            ({"bstar": -1.0}, "bstar"),
            ({"n": 1}, "n"),
            ({"t": -1}, "t"),
            ({"seed": -1}, "seed"),
            ({"threads": 0}, "threads"),
            ({"mode": "simulate", "reps": 1}, "reps"),
        ],
    )
    def test_field_errors(self, kwargs, field_name):
        cfg = ExperimentConfig(**kwargs)
        with pytest.raises(ConfigError) as exc:
            validate_config(cfg)
        assert exc.value.field == field_name

    def test_lambda_grid_positive(self):
        with pytest.raises(ConfigError):
            load_config(None, {"lambda": "-1"})

    def test_w_grid_range(self):
        with pytest.raises(ConfigError):
            load_config(None, {"w": "1.5"})

    def test_interpolator_needs_overparametrization(self):
        with pytest.raises(ConfigError) as exc:
            validate_config(ExperimentConfig(gamma=1.001, n=100))
        assert exc.value.field == "gamma"

    def test_ridge_mode_allows_underparametrized(self):
        validate_config(
            ExperimentConfig(gamma=1.001, n=100, lam=np.array([1.0]))
        )


class TestConfigHash:
    def test_invariant_to_out_and_threads(self):
        a = ExperimentConfig(out="a", threads=1)
        b = ExperimentConfig(out="b", threads=8)
        assert config_hash(a) == config_hash(b)

    def test_sensitive_to_gamma(self):
        a = ExperimentConfig(gamma=2.0)
        b = ExperimentConfig(gamma=2.5)
        assert config_hash(a) != config_hash(b)

    def test_sensitive_to_grids(self):
        a = ExperimentConfig(lam=np.array([0.1, 1.0]))
        b = ExperimentConfig(lam=np.array([0.1, 2.0]))
        assert config_hash(a) != config_hash(b)

    def test_stable_across_calls(self):
        cfg = ExperimentConfig(w=np.linspace(0.1, 0.9, 9))
        assert config_hash(cfg) == config_hash(cfg)
