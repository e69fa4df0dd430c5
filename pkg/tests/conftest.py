import dataclasses

import numpy as np
import pytest
import torch

from mmovseg.config import RunConfig, TextConfig, ViTConfig
from mmovseg.data import PairedSample
from mmovseg.toy import ToySceneSpec, make_toy_sample

torch.set_num_threads(1)

ACCEPTANCE_LINES: list[str] = []


def tiny_config(**overrides) -> RunConfig:
    """16x16 tiles, 4x4 token grid, width 8: fast enough for finite differences."""
    vit = ViTConfig(patch_size=4, embed_dim=8, depth=3, heads=2)
    cfg = RunConfig(
        image_size=(16, 16), dense=vit, global_encoder=vit,
        text=TextConfig(embed_dim=8, depth=1, heads=2, max_len=32),
        unified_dim=8, decoder_dim=4, batch_size=4, dtype="float64",
        stage1_iters=5, stage2_iters=5,
    )
    return dataclasses.replace(cfg, **overrides).validate()


def tiny_samples(n: int = 4, seed: int = 0, k: int = 5, novel: int = 2) -> list[PairedSample]:
    names = ["Forest", "City", "Farmland", "Road", "Water"][:k]
    spec = ToySceneSpec(class_names=names, num_novel=novel, num_samples=n, tile_size=16,
                        cell_size=4, patch_size=4, seed=seed)
    return [make_toy_sample(spec, i) for i in range(n)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_cfg():
    return tiny_config()


@pytest.fixture
def samples16():
    return tiny_samples()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
