import pytest

from core.config import load_config, preset_path, read_config_file
from core.errors import ConfigError


@pytest.mark.parametrize("preset", ["en", "es", "fr", "jp"])
def test_presets_exist_and_validate(preset):
    assert preset_path(preset).exists()
    config = load_config(preset)
    assert config.preset == preset
    assert config.language == preset


def test_cnn_presets_use_default_hyperparameters():
    config = load_config("en")
    assert config.architecture == "cnn"
    assert (config.max_epochs, config.batch_size, config.learning_rate, config.keep_prob) == (100, 64, 0.05, 0.5)
    assert (config.filters, config.region_sizes, config.embedding_dim) == (128, (3, 4, 5), 300)
    assert config.embeddings == "pretrained"
    assert load_config("fr").architecture == "cnn"


def test_spanish_preset_uses_cnn_gru():
    config = load_config("es")
    assert config.architecture == "cnn_gru"
    assert (config.max_epochs, config.gru_hidden, config.embeddings) == (200, 300, "random")


def test_japanese_preset_tokenizes_characters():
    assert load_config("jp").tokenizer == "char"


def test_no_preset_gives_defaults():
    config = load_config()
    assert config.preset == "custom"
    assert config.architecture == "cnn"


def test_layering_preset_then_file_then_overrides(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("batch_size: 16\nlearning_rate: 0.1\nregion_sizes: \"2,3\"\n", encoding="utf-8")
    config = load_config("es", path, {"learning_rate": 0.2, "seed": None, "max_epochs": "7"})
    assert config.architecture == "cnn_gru"
    assert config.batch_size == 16
    assert config.learning_rate == 0.2
    assert config.max_epochs == 7
    assert config.seed == 0
    assert config.region_sizes == (2, 3)


def test_empty_config_file(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("", encoding="utf-8")
    assert read_config_file(path) == {}


@pytest.mark.parametrize("content, message", [
    ("dropout: 0.5\n", "unknown config key"),
    ("batch_size: abc\n", "batch_size"),
    ("batch_size: 2.5\n", "batch_size"),
    ("learning_rate: 0\n", "learning_rate"),
    ("keep_prob: 1.5\n", "keep_prob"),
    ("record_runs: maybe\n", "record_runs"),
    ("- a\n- b\n", "mapping"),
    ("batch_size: [1\n", "invalid YAML"),
])
def test_invalid_config_files(tmp_path, content, message):
    path = tmp_path / "bad.yaml"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(ConfigError, match=message):
        load_config(path=path)


def test_unknown_preset_and_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="preset"):
        load_config("de")
    with pytest.raises(ConfigError, match="not found"):
        load_config(path=tmp_path / "nope.yaml")
