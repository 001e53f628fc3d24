import pytest

from app.config import ConfigError, Settings, load_config, parse_config, render_config
from app.schemas import RunConfig


def test_empty_text_gives_defaults():
    config = parse_config("")
    assert config == RunConfig()
    assert config.grid.points == 64
    assert config.kernel.gamma == 1.0
    assert config.plan is None


def test_dotted_keys_comments_and_lists():
    config = parse_config(
        """
        # coarse 3D run
        grid.dimension = 3
        grid.points = 16   # per axis
        kernel.angular = "truncated"
        kernel.theta_b = 1.2
        initial.kind = disk
        initial.center = [0.5, 0, -0.5]
        snapshot_times = [0.5, 1.0]
        plan.mu = auto
        plan.depth = 2
        """
    )
    assert config.grid.dimension == 3
    assert config.grid.points == 16
    assert config.kernel.angular == "truncated"
    assert config.initial.center == [0.5, 0.0, -0.5]
    assert config.snapshot_times == [0.5, 1.0]
    assert config.plan.mu == "auto"
    assert config.plan.depth == 2


def test_default_center_follows_dimension():
    config = parse_config("grid.dimension = 3\ngrid.points = 8")
    assert config.initial.center == [0.0, 0.0, 0.0]


def test_hash_inside_quotes_is_kept():
    config = parse_config('output_dir = "runs/#7"')
    assert config.output_dir == "runs/#7"


def test_duplicate_key_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_config("dt = 0.1\n\ndt = 0.2\n")
    assert info.value.line == 3
    assert "duplicate" in str(info.value)
    assert str(info.value).startswith("line 3:")


def test_malformed_line_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_config("dt = 0.1\njust words\n")
    assert info.value.line == 2


def test_value_and_section_conflict():
    with pytest.raises(ConfigError):
        parse_config("grid = 3\ngrid.points = 8")


def test_unknown_key_is_rejected_with_line():
    with pytest.raises(ConfigError) as info:
        parse_config("dt = 0.1\ngrid.pointz = 8\n")
    assert info.value.line == 2
    assert "grid.pointz" in str(info.value)


def test_out_of_range_value_names_the_parameter():
    with pytest.raises(ConfigError) as info:
        parse_config("kernel.gamma = 3\n")
    assert info.value.line == 1
    assert "gamma in [0, 2)" in str(info.value)


@pytest.mark.parametrize(
    "text",
    [
        "grid.points = 12",
        "grid.dimension = 4",
        "kernel.gamma = 0",
        "kernel.angular = \"truncated\"",
        "initial.kind = snapshot",
        "plan.mu = 1.5",
        "plan.window_start = 3\nplan.window_end = 2",
        "initial.center = [1, 2, 3]",
        "dt = -1",
    ],
)
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_validation_flag_allows_constant_kernel():
    config = parse_config("kernel.gamma = 0\nkernel.validation = true")
    assert config.kernel.gamma == 0.0


def test_render_round_trip():
    config = parse_config(
        "\n".join(
            [
                "grid.points = 32",
                "kernel.kinetic = capped",
                "kernel.gamma = 0.5",
                "initial.kind = double_bump",
                "initial.separation = 2.5",
                "plan.tau = 1.0",
                "plan.window_start = 1.0",
                "plan.mu = 0.25",
                "snapshot_times = [0.1, 0.2]",
                'output_dir = "out dir"',
                "seed = 7",
            ]
        )
    )
    text = render_config(config)
    assert "plan.mu = 0.25" in text
    assert parse_config(text) == config


def test_render_omits_missing_plan():
    text = render_config(RunConfig())
    assert "plan." not in text
    assert parse_config(text) == RunConfig()


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.conf")


def test_load_config_reads_file(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("grid.points = 16\n", encoding="utf-8")
    assert load_config(path).grid.points == 16


def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv("BOLTZLAB_THREADS", "4")
    monkeypatch.setenv("BOLTZLAB_RECORD_RUNS", "true")
    settings = Settings()
    assert settings.threads == 4
    assert settings.record_runs is True
