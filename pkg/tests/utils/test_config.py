import pytest

from mtnet.config import (
    PRESETS,
    config_hash,
    from_container,
    load_config,
    reference_rows,
    save_config,
    schema,
    to_container,
)
from mtnet.utils.errors import ConfigurationException


class TestLoadConfig:
    @pytest.mark.parametrize("preset", PRESETS)
    def test_presets(self, preset):
        """"""
        cfg = load_config(preset=preset)
        assert cfg.dataset.name == preset
        assert cfg.model._target_ == "mtnet.models.MTNet"

    def test_defaults(self):
        """"""
        cfg = load_config()
        assert cfg.model.slots_per_day == 4
        assert cfg.train.lr == 1e-3
        assert cfg.train.lr_step == 6
        assert cfg.train.lr_gamma == 0.9
        assert list(cfg.eval.ks) == [1, 5, 10]

    def test_overrides(self):
        """"""
        cfg = load_config(
            preset="toy", overrides=["train.epochs=3", "model.root=super_root"]
        )
        assert cfg.train.epochs == 3
        assert cfg.model.root == "super_root"

    def test_user_file(self, tmp_path):
        """"""
        path = tmp_path / "run.yaml"
        path.write_text("train:\n  batch_size: 7\n")
        cfg = load_config(path=str(path), preset="toy", overrides=["train.batch_size=9"])
        assert cfg.train.batch_size == 9
        assert load_config(path=str(path)).train.batch_size == 7

    def test_missing_file(self, tmp_path):
        """"""
        with pytest.raises(FileNotFoundError):
            load_config(path=str(tmp_path / "missing.yaml"))

    def test_unknown_key(self):
        """"""
        with pytest.raises(ConfigurationException) as error:
            load_config(overrides=["train.learning_rate=0.1"])
        assert "learning_rate" in str(error.value)

    def test_unknown_preset(self):
        """"""
        with pytest.raises(ConfigurationException) as error:
            load_config(preset="paris")
        assert error.value.key == "preset"

    def test_wrong_type(self):
        """"""
        with pytest.raises(ConfigurationException):
            load_config(overrides=["train.epochs=many"])

    @pytest.mark.parametrize(
        "override,key",
        [
            ("model.slots_per_day=5", "model.slots_per_day"),
            ("dataset.split_fractions=[0.5,0.2,0.2]", "dataset.split_fractions"),
            ("model.iac_heads=3", "model.iac_heads"),
            ("model.root=week", "model.root"),
            ("eval.mode=first_prefix", "eval.mode"),
            ("train.dropout_embed=1.0", "train.dropout_embed"),
            ("train.lr=0", "train.lr"),
        ],
    )
    def test_sanity_checks(self, override, key):
        """"""
        with pytest.raises(ConfigurationException) as error:
            load_config(overrides=[override])
        assert error.value.key == key


class TestSerialization:
    def test_round_trip(self, tmp_path):
        """"""
        cfg = load_config(preset="toy", overrides=["train.epochs=3"])
        path = str(tmp_path / "config.yaml")
        save_config(cfg, path)
        reloaded = load_config(path=path)
        assert config_hash(reloaded) == config_hash(cfg)
        assert from_container(to_container(cfg)) == cfg

    def test_hash_depends_on_values(self):
        """"""
        base = load_config(preset="toy")
        changed = load_config(preset="toy", overrides=["train.seed=1"])
        assert config_hash(base) != config_hash(changed)
        assert config_hash(base, "dataset") == config_hash(changed, "dataset")

    def test_schema_is_closed(self):
        """"""
        cfg = schema()
        with pytest.raises(Exception):
            cfg.model.unknown_width = 3


class TestReference:
    def test_every_leaf_key_is_described(self):
        """"""
        rows = reference_rows()
        keys = [row[0] for row in rows]
        assert "model.slots_per_day" in keys
        assert "train.ablation.no_iac" in keys
        assert "dataset.columns.user" in keys
        assert all(row[3] for row in rows)
        assert len(keys) == len(set(keys))
