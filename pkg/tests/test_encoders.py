import numpy as np
import pytest
import torch

from mmovseg.config import RunConfig, TextConfig, ValidationError, ViTConfig
from mmovseg.encoders import (
    PAD,
    DenseEncoder,
    GlobalEncoder,
    TextEncoder,
    copy_to_single_channel,
    load_external_embeddings,
    sar_config,
    tokenize,
    write_external_embeddings,
)
from mmovseg.model import MMOVSeg
from mmovseg.vocab import resolve_vocabulary


class TestViTConfig:
    def test_taps_for_depth_12_match_4_8_12(self):
        assert ViTConfig(depth=12, heads=2).tap_indices() == [4, 8, 12]

    def test_taps_for_depth_3(self):
        assert ViTConfig(depth=3).tap_indices() == [1, 2, 3]

    def test_too_shallow(self):
        with pytest.raises(ValidationError):
            ViTConfig(depth=2).validate()

    def test_indivisible_image(self):
        with pytest.raises(ValidationError):
            ViTConfig(patch_size=8).validate((30, 32))


class TestDenseEncoder:
    def test_pyramid_shapes(self):
        enc = DenseEncoder(ViTConfig(), (32, 32))
        pyr = enc(torch.rand(2, 3, 32, 32))
        assert len(pyr.taps) == 3 and all(t.shape == (2, 32, 4, 4) for t in pyr)

    def test_same_weights_same_output(self):
        torch.manual_seed(0)
        enc = DenseEncoder(ViTConfig(), (32, 32))
        x = torch.rand(1, 3, 32, 32)
        assert all(torch.equal(a, b) for a, b in zip(enc(x), enc(x)))

    def test_wrong_channels(self):
        enc = DenseEncoder(ViTConfig(), (32, 32))
        with pytest.raises(ValidationError):
            enc(torch.rand(1, 1, 32, 32))

    def test_rgb_copy_equals_grey_rgb(self):
        torch.manual_seed(0)
        rgb_enc = DenseEncoder(ViTConfig(), (32, 32)).double()
        sar_enc = DenseEncoder(sar_config(ViTConfig()), (32, 32)).double()
        copy_to_single_channel(sar_enc, rgb_enc)
        sar = torch.rand(1, 1, 32, 32, dtype=torch.float64)
        # the SAR normalisation offset is shared by all three channels, so a grey
        # RGB image with the same intensity must give the same tokens
        a, b = sar_enc(sar), rgb_enc(sar.expand(1, 3, 32, 32))
        assert all(torch.allclose(x, y, atol=1e-10) for x, y in zip(a, b))


class TestGlobalEncoder:
    def test_unit_embedding(self):
        enc = GlobalEncoder(ViTConfig(), (32, 32), 16)
        z = enc(torch.rand(3, 3, 32, 32))
        assert z.shape == (3, 16)
        assert torch.allclose(z.norm(dim=1), torch.ones(3), atol=1e-6)


class TestText:
    def test_tokenize(self):
        ids = tokenize("ab", 6)
        assert ids[:4] == [256, 97, 98, 257] and ids[4:] == [PAD, PAD]

    def test_tokenize_too_long(self):
        with pytest.raises(ValidationError):
            tokenize("x" * 10, 8)

    def test_rows_unit_and_distinct(self):
        torch.manual_seed(0)
        enc = TextEncoder(TextConfig(), 32)
        vocab = resolve_vocabulary(RunConfig())
        z = enc(vocab.prompts())
        assert torch.allclose(z.norm(dim=1), torch.ones(len(vocab)), atol=1e-6)
        assert all(not torch.allclose(z[i], z[j]) for i in range(len(vocab)) for j in range(i))

    def test_row_independent_of_other_prompts(self):
        torch.manual_seed(0)
        enc = TextEncoder(TextConfig(), 32)
        both = enc(["a photo of Forest", "a photo of Water"])
        assert torch.equal(both[1], enc(["a photo of Water"])[0])


class TestExternalEmbeddings:
    def test_round_trip_and_order(self, tmp_path, rng):
        names = ["A", "B", "C"]
        m = rng.normal(size=(3, 4))
        write_external_embeddings(tmp_path / "e.csv", names, m)
        got = load_external_embeddings(tmp_path / "e.csv", ["C", "A"], dim=4).numpy()
        expect = m[[2, 0]] / np.linalg.norm(m[[2, 0]], axis=1, keepdims=True)
        assert np.allclose(got, expect, atol=1e-15)

    def test_missing_class_named(self, tmp_path, rng):
        write_external_embeddings(tmp_path / "e.csv", ["A"], rng.normal(size=(1, 4)))
        with pytest.raises(ValidationError, match="Water"):
            load_external_embeddings(tmp_path / "e.csv", ["A", "Water"])

    def test_dim_mismatch(self, tmp_path, rng):
        write_external_embeddings(tmp_path / "e.csv", ["A"], rng.normal(size=(1, 4)))
        with pytest.raises(ValidationError, match="dim"):
            load_external_embeddings(tmp_path / "e.csv", ["A"], dim=8)

    def test_model_uses_external_rows(self, tmp_path, rng):
        cfg = RunConfig()
        model = MMOVSeg(cfg)
        vocab = resolve_vocabulary(cfg)
        write_external_embeddings(tmp_path / "e.csv", vocab.names, rng.normal(size=(len(vocab), 32)))
        table = load_external_embeddings(tmp_path / "e.csv", vocab.names, dim=32)
        model.external_text = dict(zip(vocab.names, table))
        assert torch.allclose(model.text_embeddings(vocab).double(), table, atol=1e-6)
