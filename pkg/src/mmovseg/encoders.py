"""Toy-scale encoders: dense ViT with multi-scale taps, global ViT with a class
token, and a byte-level text transformer."""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import TextConfig, ValidationError, ViTConfig


@dataclass
class FeaturePyramid:
    taps: list[torch.Tensor]  # each B x d x h x w
    source: str = "rgb-dense"

    def __post_init__(self):
        if len(self.taps) != 3 or len({t.shape for t in self.taps}) != 1:
            raise ValidationError("a pyramid holds three equally shaped taps")

    def __iter__(self):
        return iter(self.taps)

    def __getitem__(self, i):
        return self.taps[i]


class Attention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x, key_mask=None):
        b, n, c = x.shape
        q, k, v = self.qkv(x).reshape(b, n, 3, self.heads, c // self.heads).permute(2, 0, 3, 1, 4)
        attn = (q @ k.transpose(-2, -1)) * self.scale
        if key_mask is not None:
            attn = attn.masked_fill(~key_mask[:, None, None, :], float("-inf"))
        attn = attn.softmax(dim=-1)
        return self.proj((attn @ v).transpose(1, 2).reshape(b, n, c))


class Block(nn.Module):
    """Pre-norm transformer block."""

    def __init__(self, dim: int, heads: int, mlp_ratio: float = 2.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x, key_mask=None):
        x = x + self.attn(self.norm1(x), key_mask)
        return x + self.mlp(self.norm2(x))


class ViT(nn.Module):
    """Patch embedding + learned positional embedding + pre-norm blocks.

    ``forward`` returns the patch-token maps of the tap blocks (B x d x h x w)
    and, when built with a class token, the final normalised class token.
    """

    def __init__(self, cfg: ViTConfig, image_size: tuple[int, int], class_token: bool = False):
        super().__init__()
        cfg.validate(image_size)
        self.cfg = cfg
        self.grid = (image_size[0] // cfg.patch_size, image_size[1] // cfg.patch_size)
        self.taps = cfg.tap_indices()
        d = cfg.embed_dim
        self.patch_embed = nn.Conv2d(cfg.input_channels, d, cfg.patch_size, cfg.patch_size)
        n_tok = self.grid[0] * self.grid[1] + (1 if class_token else 0)
        self.cls_token = nn.Parameter(torch.randn(1, 1, d) * 0.02) if class_token else None
        self.pos_embed = nn.Parameter(torch.randn(1, n_tok, d) * 0.02)
        self.blocks = nn.ModuleList(Block(d, cfg.heads, cfg.mlp_ratio) for _ in range(cfg.depth))
        self.norm = nn.LayerNorm(d) if class_token else None

    def forward(self, x: torch.Tensor):
        b, c, h, w = x.shape
        if c != self.cfg.input_channels:
            raise ValidationError(f"expected {self.cfg.input_channels} input channels, got {c}")
        gh, gw = h // self.cfg.patch_size, w // self.cfg.patch_size
        if (gh, gw) != self.grid or h % self.cfg.patch_size or w % self.cfg.patch_size:
            raise ValidationError(f"input {h}x{w} does not match the {self.grid} patch grid")
        x = (x - 0.5) / 0.25
        tok = self.patch_embed(x).flatten(2).transpose(1, 2)
        if self.cls_token is not None:
            tok = torch.cat([self.cls_token.expand(b, -1, -1), tok], dim=1)
        tok = tok + self.pos_embed
        skip = 1 if self.cls_token is not None else 0
        taps = []
        for i, blk in enumerate(self.blocks, start=1):
            tok = blk(tok)
            if i in self.taps:
                taps.append(tok[:, skip:].transpose(1, 2).reshape(b, -1, gh, gw))
        cls = self.norm(tok[:, 0]) if self.cls_token is not None else None
        return taps, cls


class DenseEncoder(nn.Module):
    def __init__(self, cfg: ViTConfig, image_size, source: str = "rgb-dense"):
        super().__init__()
        self.vit = ViT(cfg, image_size)
        self.source = source

    def forward(self, x) -> FeaturePyramid:
        taps, _ = self.vit(x)
        return FeaturePyramid(taps, self.source)


class GlobalEncoder(nn.Module):
    """Class-token ViT projected to the joint embedding space and L2-normalised."""

    def __init__(self, cfg: ViTConfig, image_size, out_dim: int):
        super().__init__()
        self.vit = ViT(cfg, image_size, class_token=True)
        self.proj = nn.Linear(cfg.embed_dim, out_dim)

    def forward(self, x) -> torch.Tensor:
        _, cls = self.vit(x)
        return F.normalize(self.proj(cls), dim=-1)

    def pyramid(self, x) -> FeaturePyramid:
        taps, _ = self.vit(x)
        return FeaturePyramid(taps, "global")


BOS, EOS, PAD = 256, 257, 258


def tokenize(text: str, max_len: int) -> list[int]:
    ids = [BOS, *text.encode("utf-8"), EOS]
    if len(ids) > max_len:
        raise ValidationError(f"prompt {text!r} exceeds {max_len - 2} bytes")
    return ids + [PAD] * (max_len - len(ids))


class TextEncoder(nn.Module):
    """Byte-level transformer: mean-pool over real tokens, project, normalise."""

    def __init__(self, cfg: TextConfig, out_dim: int):
        super().__init__()
        self.cfg = cfg
        self.token_embed = nn.Embedding(259, cfg.embed_dim)
        self.pos_embed = nn.Parameter(torch.randn(1, cfg.max_len, cfg.embed_dim) * 0.02)
        self.blocks = nn.ModuleList(Block(cfg.embed_dim, cfg.heads) for _ in range(cfg.depth))
        self.norm = nn.LayerNorm(cfg.embed_dim)
        self.proj = nn.Linear(cfg.embed_dim, out_dim)

    def encode_prompt(self, prompt: str) -> torch.Tensor:
        ids = torch.tensor([tokenize(prompt, self.cfg.max_len)], device=self.pos_embed.device)
        mask = ids != PAD
        x = self.token_embed(ids) + self.pos_embed
        for blk in self.blocks:
            x = blk(x, mask)
        x = self.norm(x)
        pooled = (x * mask[..., None]).sum(1) / mask.sum(1, keepdim=True)
        return F.normalize(self.proj(pooled), dim=-1)[0]

    def forward(self, prompts: list[str]) -> torch.Tensor:
        # one prompt at a time: a class row never depends on which other classes are present
        return torch.stack([self.encode_prompt(p) for p in prompts])


def encode_text(encoder: TextEncoder, vocabulary) -> torch.Tensor:
    """N_c x d_g matrix of unit rows in vocabulary order."""
    if len(vocabulary) == 0:
        raise ValidationError("empty vocabulary")
    return encoder(vocabulary.prompts())


def load_external_embeddings(path: str | Path, names, dim: int | None = None) -> torch.Tensor:
    """Read ``dim=<d>`` + ``name,v1,...,vd`` rows; return rows in ``names`` order, unit norm."""
    path = Path(path)
    with path.open(newline="") as fh:
        header = fh.readline().strip()
        if not header.startswith("dim="):
            raise ValidationError(f"{path}: first line must be 'dim=<d>'")
        d = int(header[4:])
        table = {}
        for lineno, row in enumerate(csv.reader(fh), start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise ValidationError(f"{path}:{lineno}: expected {d} values, got {len(row) - 1}")
            table[row[0]] = [float(v) for v in row[1:]]
    if dim is not None and d != dim:
        raise ValidationError(f"{path}: embedding dim {d} does not match expected {dim}")
    missing = [n for n in names if n not in table]
    if missing:
        raise ValidationError(f"{path}: no embedding for class(es) {', '.join(missing)}")
    mat = torch.tensor(np.array([table[n] for n in names]), dtype=torch.float64)
    return F.normalize(mat, dim=-1)


def write_external_embeddings(path: str | Path, names, matrix) -> None:
    matrix = np.asarray(matrix)
    with Path(path).open("w", newline="") as fh:
        fh.write(f"dim={matrix.shape[1]}\n")
        w = csv.writer(fh, lineterminator="\n")
        for n, row in zip(names, matrix):
            w.writerow([n, *(repr(float(v)) for v in row)])


def sar_config(cfg: ViTConfig) -> ViTConfig:
    return dataclasses.replace(cfg, input_channels=1)


def copy_to_single_channel(dst: nn.Module, src: nn.Module) -> None:
    """Initialise a 1-channel ViT from a 3-channel one (patch kernel summed over channels)."""
    state = {k: v.clone() for k, v in src.state_dict().items()}
    for k, v in state.items():
        if k.endswith("patch_embed.weight"):
            state[k] = v.sum(dim=1, keepdim=True)
    dst.load_state_dict(state)
