import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import tiny_samples
from mmovseg.augment import Transform, apply_paired_augmentation, apply_transform, sample_transform
from mmovseg.config import AugmentParams


def test_rot90_oracle():
    s = tiny_samples(1)[0]
    out = apply_transform(s, Transform(angle=90.0))
    # counter-clockwise as displayed is np.rot90 with k=1
    assert np.array_equal(out.label, np.rot90(s.label))
    assert np.allclose(out.rgb, np.rot90(s.rgb), atol=1e-12)
    assert np.allclose(out.sar, np.rot90(s.sar), atol=1e-12)


def test_flip_oracles():
    s = tiny_samples(1)[0]
    h = apply_transform(s, Transform(hflip=True))
    v = apply_transform(s, Transform(vflip=True))
    assert np.array_equal(h.label, s.label[:, ::-1]) and np.array_equal(h.sar, s.sar[:, ::-1])
    assert np.array_equal(v.rgb, s.rgb[::-1])


def test_translation_fills_ignore():
    s = tiny_samples(1)[0]
    out = apply_transform(s, Transform(translate=(0.0, 3.0)))
    assert np.array_equal(out.label[:, 3:], s.label[:, :-3])
    assert (out.label[:, :3] == 255).all()


def test_disabled_is_identity():
    s = tiny_samples(1)[0]
    assert apply_paired_augmentation(s, AugmentParams(hflip=True)) is s


def test_draw_is_keyed():
    p = AugmentParams(enabled=True, hflip=True, vflip=True, translate=4, rotation=30, scale=(0.8, 1.2))
    assert sample_transform(p, (0, 3)) == sample_transform(p, (0, 3))
    assert len({sample_transform(p, (0, k)) for k in range(10)}) > 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(0, 8), st.floats(0, 180), st.floats(0.5, 1.0), st.floats(1.0, 1.5))
def test_labels_never_gain_classes(seed, t, rot, lo, hi):
    s = tiny_samples(1, seed=seed % 100)[0]
    p = AugmentParams(enabled=True, hflip=True, vflip=True, translate=t, rotation=rot, scale=(lo, hi), seed=seed)
    out = apply_paired_augmentation(s, p, key=(1, 2))
    assert set(np.unique(out.label)) <= set(np.unique(s.label)) | {255}
    assert out.rgb.shape == s.rgb.shape and out.sar.shape == s.sar.shape
