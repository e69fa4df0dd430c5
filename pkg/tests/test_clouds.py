import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import tiny_samples
from mmovseg.config import CloudParams, ValidationError
from mmovseg.clouds import cloud_alpha, composite, synthesize_clouds, value_noise


def test_thin_mean_alpha_in_band():
    a = cloud_alpha((64, 64), CloudParams(profile="thin", seed=0))
    assert 0.02 < a.mean() < 0.40 and a.max() <= 0.35 + 1e-12


def test_thick_reaches_high_opacity():
    a = cloud_alpha((64, 64), CloudParams(profile="thick", seed=0))
    assert a.max() >= 0.7


def test_none_is_identity():
    s = tiny_samples(1)[0]
    assert synthesize_clouds(s, CloudParams()) is s
    assert not cloud_alpha((8, 8), CloudParams()).any()


def test_deterministic_in_seed_and_key():
    p = CloudParams(profile="varied", seed=3)
    assert np.array_equal(cloud_alpha((32, 32), p, 1), cloud_alpha((32, 32), p, 1))
    assert not np.array_equal(cloud_alpha((32, 32), p, 1), cloud_alpha((32, 32), p, 2))


def test_composite_oracle():
    rgb = np.full((1, 2, 3), 0.2)
    alpha = np.array([[0.0, 0.5]])
    out = composite(rgb, alpha, (1.0, 1.0, 1.0))
    assert np.allclose(out[0, 0], 0.2) and np.allclose(out[0, 1], 0.6)


def test_noise_range():
    n = value_noise((40, 24), 4, 8.0, np.random.default_rng(0))
    assert n.min() >= 0 and n.max() <= 1 and n.std() > 0.01


def test_profile_bounds_validated():
    with pytest.raises(ValidationError):
        CloudParams(profile="thick", alpha_max=0.5).validate()
    with pytest.raises(ValidationError):
        CloudParams(profile="fog").validate()


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["thin", "thick", "varied"]), st.integers(0, 2**31 - 1), st.integers(0, 1000))
def test_sar_and_label_untouched(profile, seed, key):
    s = tiny_samples(1, seed=seed % 1000)[0]
    out = synthesize_clouds(s, CloudParams(profile=profile, seed=seed), key=key)
    assert np.array_equal(out.sar, s.sar) and np.array_equal(out.label, s.label)
    assert out.rgb.min() >= 0 and out.rgb.max() <= 1
