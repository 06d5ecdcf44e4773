"""Tests for config files, value parsing and the settings precedence."""

import pytest

from pnnlab.errors import ConfigurationError, StorageError
from pnnlab.gpr import DEFAULT_BOUND_GRID
from pnnlab.state.run_config import (
    RunConfig,
    build_run_config,
    load_config_file,
    output_root,
    parse_values,
    resolve_jobs,
)


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.env"
    path.write_text(
        "# small grid\n"
        "SEED=7\n"
        "DEPTHS=1,2\n"
        "WIDTHS=3\n"
        "EPOCHS=5\n"
        "STANDARDIZE=true\n"
        "BOUND_GRID=0.5, 1.0\n"
    )
    return str(path)


class TestDefaults:

    def test_values(self):
        config = build_run_config()
        assert config.seed == 0
        assert (config.depth, config.width) == (4, 6)
        assert config.depths == (1, 2, 3, 4)
        assert config.widths == (2, 4, 6, 8)
        assert config.batch_size == 32
        assert config.learning_rate == 0.001
        assert config.decay == 0.9
        assert config.epsilon == 1e-7
        assert config.variance_floor == 1e-6
        assert config.bound_grid == DEFAULT_BOUND_GRID

    def test_benchmark_sizes(self):
        assert RunConfig().dataset_sizes() == (100, 50)
        assert RunConfig(benchmark="ishigami").dataset_sizes() == (300, 100)
        assert RunConfig(benchmark="ishigami", n_test=7).dataset_sizes() == (300, 7)

    def test_sub_configs(self):
        config = RunConfig(depth=2, width=3, learning_rate=0.01, length_scale_upper=5.0)
        assert config.architecture(input_dim=3).layer_sizes == [3, 3, 3, 2]
        assert config.optimizer_config().learning_rate == 0.01
        assert config.gpr_config().length_scale_bounds == (1e-3, 5.0)

    def test_to_dict_lists(self):
        data = RunConfig().to_dict()
        assert data["depths"] == [1, 2, 3, 4]
        assert data["input_columns"] == []


class TestConfigFile:

    def test_load(self, config_file):
        values = load_config_file(config_file)
        assert values == {
            "seed": 7,
            "depths": (1, 2),
            "widths": (3,),
            "epochs": 5,
            "standardize": True,
            "bound_grid": (0.5, 1.0),
        }

    def test_unknown_key_is_named(self, tmp_path):
        path = tmp_path / "typo.env"
        path.write_text("SEED=1\nDEPHT=3\n")
        with pytest.raises(ConfigurationError, match="DEPHT"):
            load_config_file(str(path))

    def test_invalid_value(self, tmp_path):
        path = tmp_path / "bad.env"
        path.write_text("EPOCHS=many\n")
        with pytest.raises(ConfigurationError, match="EPOCHS"):
            load_config_file(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(StorageError):
            load_config_file(str(tmp_path / "absent.env"))


class TestPrecedence:

    def test_file_over_defaults(self, config_file):
        config = build_run_config(config_file)
        assert config.seed == 7
        assert config.depths == (1, 2)
        assert config.width == 6

    def test_flags_over_file(self, config_file):
        config = build_run_config(config_file, {"seed": "9", "widths": "2,4"})
        assert config.seed == 9
        assert config.widths == (2, 4)
        assert config.epochs == 5

    def test_jobs_environment(self, monkeypatch):
        monkeypatch.setenv("PNNLAB_JOBS", "3")
        assert build_run_config().jobs == 3
        assert build_run_config(overrides={"jobs": "2"}).jobs == 2

    def test_jobs_from_file_beats_environment(self, tmp_path, monkeypatch):
        path = tmp_path / "jobs.env"
        path.write_text("JOBS=4\n")
        monkeypatch.setenv("PNNLAB_JOBS", "3")
        assert build_run_config(str(path)).jobs == 4

    def test_resolve_jobs(self):
        assert resolve_jobs(RunConfig(jobs=5)) == 5
        assert resolve_jobs(RunConfig()) >= 1

    def test_output_root(self, monkeypatch):
        assert output_root() == "runs"
        monkeypatch.setenv("PNNLAB_OUTPUT_ROOT", "elsewhere")
        assert output_root() == "elsewhere"


class TestValidation:

    @pytest.mark.parametrize("overrides", [
        {"benchmark": "sphere"},
        {"group_mode": "fuzzy"},
        {"test_fraction": "1.5"},
        {"jobs": "0"},
        {"band_points": "-1"},
        {"replicates": "0"},
        {"depths": ""},
        {"widths": "0,2"},
        {"epochs": "0"},
        {"loss": "hinge"},
        {"decay": "1.0"},
        {"noise_grid": "-0.1"},
        {"length_scale_lower": "10", "length_scale_upper": "1"},
        {"standardize": "maybe"},
    ])
    def test_rejected(self, overrides):
        with pytest.raises(ConfigurationError):
            build_run_config(overrides=overrides)

    def test_optional_values(self):
        parsed = parse_values({"shuffle_seed": "", "n_train": "12", "input_columns": "a, b"}, "test")
        assert parsed == {"shuffle_seed": None, "n_train": 12, "input_columns": ("a", "b")}
