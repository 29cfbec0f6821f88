import pytest

from sata_lab.config import ConfigFileError, dump_config, load_train_config, load_world_config, parse_config
from sata_lab.core import ConfigError
from sata_lab.losses import LossHyper
from sata_lab.trainer import SwaConfig, TrainConfig
from sata_lab.world import DomainSpec, WorldConfig


def test_round_trip_defaults():
    assert parse_config(dump_config(WorldConfig()), "world") == WorldConfig()
    assert parse_config(dump_config(TrainConfig()), "train") == TrainConfig()


def test_round_trip_custom(tmp_path):
    w = WorldConfig(seed=9, bias_strength=0.5, domains=(DomainSpec("only", "uniform", (0, 1), (15,)),))
    t = TrainConfig(epochs=2, hyper=LossHyper(lambda_scene=0.5, lambda_action=0.0), swa=SwaConfig(enabled=False))
    (tmp_path / "w.yaml").write_text(dump_config(w))
    (tmp_path / "t.yaml").write_text(dump_config(t))
    assert load_world_config(tmp_path / "w.yaml") == w
    assert load_train_config(tmp_path / "t.yaml") == t


def test_partial_file_uses_defaults():
    cfg = parse_config("schema_version: 1\nkind: train\nepochs: 5\nhyper: {lambda_scene: 0.5}\n", "train")
    assert cfg.epochs == 5 and cfg.hyper.lambda_scene == 0.5 and cfg.hyper.lambda_action == 0.2


@pytest.mark.parametrize("text", [
    "kind: world\n",
    "schema_version: 2\nkind: world\n",
    "schema_version: 1\nkind: train\n",
    "- 1\n- 2\n",
    "schema_version: 1\nkind: world\nbias: [\n",
])
def test_schema_errors(text):
    with pytest.raises(ConfigFileError):
        parse_config(text, "world")


def test_unknown_keys_are_errors():
    with pytest.raises(ConfigError) as exc:
        parse_config("schema_version: 1\nkind: world\nlatent_dims: 3\n", "world")
    assert "latent_dims" in str(exc.value)
    with pytest.raises(ConfigError):
        parse_config("schema_version: 1\nkind: train\nswa: {enabled: true, every: 3}\n", "train")
    with pytest.raises(ConfigError):
        parse_config("schema_version: 1\nkind: world\ndomains: [{name: a, closed: [0], colour: red}]\n", "world")


def test_invalid_value_names_field():
    with pytest.raises(ConfigError) as exc:
        parse_config("schema_version: 1\nkind: world\nbias_strength: 1.5\n", "world")
    assert exc.value.field == "bias_strength"
    with pytest.raises(ConfigError):
        parse_config("schema_version: 1\nkind: train\nhyper: {tau: 0}\n", "train")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigFileError):
        load_world_config(tmp_path / "nope.yaml")
