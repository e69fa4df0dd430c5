import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmovseg.config import RunConfig, ValidationError, ViTConfig, config_from_dict, load_config


def test_defaults_validate():
    cfg = RunConfig().validate()
    assert cfg.dense.tap_indices() == [1, 2, 3]


def test_round_trip_through_dict():
    cfg = RunConfig().validate()
    assert config_from_dict(cfg.to_dict()) == cfg


def test_shipped_configs_load():
    from pathlib import Path
    for path in sorted(Path(__file__).parents[1].joinpath("configs").glob("*.json")):
        load_config(path)


def test_unknown_key_named():
    with pytest.raises(ValidationError, match="dense.bogus"):
        config_from_dict({"dense": {"bogus": 1}})


@pytest.mark.parametrize("override,match", [
    ("temperature=0", "temperature"),
    ("stage2_lr=-1", "stage2_lr"),
    ("cmu_loss=huber", "cmu_loss"),
    ("cmu_target=nothing", "cmu_target"),
    ("fusion=late", "fusion"),
    ("image_size=[30,32]", "divisible"),
    ("cloud.profile=thin", None),
    ("prompt_template=nothing", "placeholder"),
    ("unified_dim=0", "unified_dim"),
])
def test_override_validation(override, match):
    if match is None:
        assert load_config(None, [override]).cloud.profile == "thin"
        return
    with pytest.raises(ValidationError, match=match):
        load_config(None, [override])


def test_thin_alpha_bound():
    with pytest.raises(ValidationError, match="thin"):
        load_config(None, ["cloud.profile=thin", "cloud.alpha_max=0.5"])


def test_infonce_needs_two_samples():
    with pytest.raises(ValidationError, match="batch_size"):
        load_config(None, ["batch_size=1"])
    assert load_config(None, ["batch_size=1", "cmu_loss=mse"]).batch_size == 1


def test_malformed_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ValidationError, match="malformed"):
        load_config(p)
    with pytest.raises(ValidationError, match="not found"):
        load_config(tmp_path / "missing.json")


def test_override_string_value():
    assert load_config(None, ["prompt_template=a {} scene"]).prompt_template == "a {} scene"


def test_model_hash_ignores_optimiser_fields():
    a = RunConfig().validate()
    b = load_config(None, ["stage2_lr=0.01", "seed=7", "cloud.profile=thick"])
    c = load_config(None, ["decoder_dim=8"])
    assert a.model_hash() == b.model_hash() != c.model_hash()


def test_file_then_overrides(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 3, "batch_size": 4}))
    cfg = load_config(p, ["seed=5"])
    assert (cfg.seed, cfg.batch_size) == (5, 4)


@given(st.integers(3, 40))
def test_taps_end_at_depth_and_increase(depth):
    taps = ViTConfig(depth=depth).tap_indices()
    assert taps[-1] == depth and taps == sorted(set(taps))
