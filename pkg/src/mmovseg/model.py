"""Full two-encoder model: dense RGB/SAR encoders, global and text encoders, fusion head."""

from __future__ import annotations

import hashlib

import numpy as np
import torch
import torch.nn as nn

from .config import RunConfig
from .data import Batch
from .encoders import DenseEncoder, GlobalEncoder, TextEncoder, copy_to_single_channel, sar_config
from .head import DEFHead, HeadOutput

DTYPES = {"float32": torch.float32, "float64": torch.float64}


def _seed_for(seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


class MMOVSeg(nn.Module):
    """Parameter groups (top-level children): dense_rgb, dense_sar, global_rgb,
    global_sar, text, head. Each group is initialised from its own seed stream
    so a group's initial weights do not depend on which other groups exist."""

    def __init__(self, cfg: RunConfig):
        super().__init__()
        self.cfg = cfg
        size = tuple(cfg.image_size)
        d_g = cfg.unified_dim
        self.use_sar = cfg.fusion == "dual"
        self.use_global_sar = cfg.cmu_target in ("global", "both")

        def build(name, fn):
            torch.manual_seed(_seed_for(cfg.seed, name))
            return fn()

        self.dense_rgb = build("dense_rgb", lambda: DenseEncoder(cfg.dense, size, "rgb-dense"))
        if self.use_sar:
            self.dense_sar = build("dense_sar", lambda: DenseEncoder(sar_config(cfg.dense), size, "sar-dense"))
            if cfg.sar_init == "rgb_copy":
                copy_to_single_channel(self.dense_sar, self.dense_rgb)
        self.global_rgb = build("global_rgb", lambda: GlobalEncoder(cfg.global_encoder, size, d_g))
        if self.use_global_sar:
            self.global_sar = build(
                "global_sar", lambda: GlobalEncoder(sar_config(cfg.global_encoder), size, d_g))
            if cfg.sar_init == "rgb_copy":
                copy_to_single_channel(self.global_sar, self.global_rgb)
        self.text = build("text", lambda: TextEncoder(cfg.text, d_g))
        self.head = build("head", lambda: DEFHead(
            cfg.dense.embed_dim, cfg.unified_dim, d_g, cfg.decoder_dim,
            num_global=2 if self.use_global_sar else 1))
        self.to(DTYPES[cfg.dtype])
        self.external_text: dict[str, torch.Tensor] | None = None

    @property
    def dtype(self) -> torch.dtype:
        return DTYPES[self.cfg.dtype]

    def groups(self) -> dict[str, nn.Module]:
        return dict(self.named_children())

    def to_tensors(self, batch: Batch) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        rgb = torch.from_numpy(np.ascontiguousarray(batch.rgb.transpose(0, 3, 1, 2))).to(self.dtype)
        sar = torch.from_numpy(np.ascontiguousarray(batch.sar.transpose(0, 3, 1, 2))).to(self.dtype)
        return rgb, sar, torch.from_numpy(batch.label).long()

    def text_embeddings(self, vocabulary) -> torch.Tensor:
        if self.external_text is not None:
            return torch.stack([self.external_text[n] for n in vocabulary.names]).to(self.dtype)
        return self.text(vocabulary.prompts())

    def forward(self, rgb: torch.Tensor, sar: torch.Tensor | None, z_t: torch.Tensor,
                frozen_dense: bool = True) -> HeadOutput:
        with torch.set_grad_enabled(torch.is_grad_enabled() and not frozen_dense):
            rgb_taps = self.dense_rgb(rgb).taps
            sar_taps = self.dense_sar(sar).taps if self.use_sar else None
        z_globals = [self.global_rgb(rgb)]
        if self.use_global_sar:
            z_globals.append(self.global_sar(sar))
        return self.head(rgb_taps, sar_taps, z_globals, z_t, tuple(rgb.shape[-2:]))

    def segment(self, rgb, sar, vocabulary) -> HeadOutput:
        return self(rgb, sar, self.text_embeddings(vocabulary))


@torch.no_grad()
def param_digest(module: nn.Module) -> str:
    h = hashlib.sha256()
    for name, p in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(p.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()
