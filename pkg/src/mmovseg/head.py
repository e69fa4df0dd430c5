"""Dual-encoder fusion head.

Every class-indexed operation uses weights shared across classes and runs
once per class, so the head accepts any number of text rows and a class
channel is bit-identical whatever other classes are present.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import ValidationError


def project_and_fuse(rgb_taps, sar_taps, projections) -> list[torch.Tensor]:
    """f_d^i = proj_i(f_rgb^i) + proj_i(f_sar^i); SAR term dropped when ``sar_taps`` is None."""
    out = []
    for i, proj in enumerate(projections):
        f = proj(rgb_taps[i])
        if sar_taps is not None:
            if sar_taps[i].shape != rgb_taps[i].shape:
                raise ValidationError(
                    f"tap {i}: rgb {tuple(rgb_taps[i].shape)} vs sar {tuple(sar_taps[i].shape)}"
                )
            f = f + proj(sar_taps[i])
        out.append(f)
    return out


def dense_text_similarity(f_d: torch.Tensor, z_t: torch.Tensor) -> torch.Tensor:
    """Cosine between every pixel feature (B x D x h x w) and every class row
    (N x D) -> B x N x h x w. Zero-norm pixels give similarity 0."""
    if f_d.shape[1] != z_t.shape[1]:
        raise ValidationError(f"feature dim {f_d.shape[1]} vs text dim {z_t.shape[1]}")
    f = F.normalize(f_d, dim=1)
    # per-class products: identical arithmetic regardless of how many classes are present
    return torch.stack([(f * z[None, :, None, None]).sum(1) for z in z_t], dim=1)


def global_text_similarity(z_img: torch.Tensor, z_t: torch.Tensor) -> torch.Tensor:
    """B x D unit image embeddings against N x D unit text rows -> B x N."""
    return torch.stack([(z_img * z[None]).sum(-1) for z in z_t], dim=1)


def _classwise(fn, x: torch.Tensor) -> torch.Tensor:
    """Apply ``fn`` to each class slice x[:, c] (B x ... ) and stack on dim 1.

    One call per class, not one call on a folded B*N batch: conv kernels may pick
    a different blocking (and summation order) for a different batch size, which
    would make a class's output depend on how many classes are present. Each
    slice is copied to a fresh buffer: a view's start address depends on c, and
    SIMD kernels sum misaligned heads in a different order.
    """
    return torch.stack([fn(x[:, c].clone(memory_format=torch.contiguous_format))
                        for c in range(x.shape[1])], dim=1)


def refine_similarity(sim: torch.Tensor, conv: nn.Conv2d) -> torch.Tensor:
    """Shared 7x7 conv per class channel followed by a sigmoid; output in (0, 1)."""
    return _classwise(lambda xc: torch.sigmoid(conv(xc)[:, 0]), sim[:, :, None])


def fuse_residual(h_dt: torch.Tensor, h_gt: torch.Tensor, conv: nn.Conv2d) -> torch.Tensor:
    """sigmoid(conv7([h_dt; h_gt])) + h_gt, the concat taken per class."""
    if h_dt.shape != h_gt.shape:
        raise ValidationError(f"h_dt {tuple(h_dt.shape)} vs h_gt {tuple(h_gt.shape)}")
    pairs = torch.stack([h_dt, h_gt], dim=2)
    return _classwise(lambda xc: torch.sigmoid(conv(xc)[:, 0]) + xc[:, 1], pairs)


def cross_entropy_loss(logits: torch.Tensor, label: torch.Tensor, ignore_index: int = 255) -> torch.Tensor:
    """Mean over non-ignored pixels of -log softmax(logits)[label]."""
    if not (label != ignore_index).any():
        raise ValidationError("every pixel is ignore_index; nothing to supervise")
    return F.cross_entropy(logits, label, ignore_index=ignore_index)


@dataclass
class HeadOutput:
    logits: torch.Tensor  # B x N x H x W
    f_d: list[torch.Tensor]
    h_dt: list[torch.Tensor]  # raw cosines
    h_gt: torch.Tensor  # raw cosines, B x N
    h_dt_refined: list[torch.Tensor]
    h_gt_refined: list[torch.Tensor]
    h_fuse: list[torch.Tensor]


def _conv7(in_ch: int) -> nn.Conv2d:
    return nn.Conv2d(in_ch, 1, 7, padding=3)


class DecoderStage(nn.Module):
    """One FPN step: class-agnostic features + per-class state/similarity, 3x3 conv, GELU."""

    def __init__(self, feat_ch: int, dim: int, first: bool):
        super().__init__()
        self.shared = nn.Conv2d(feat_ch, dim, 3, padding=1)
        self.per_class = nn.Conv2d(1 if first else dim + 1, dim, 3, padding=1, bias=False)

    def forward(self, state, h_fuse, feats):
        # conv([state; h; feats]) == conv_a([state; h]) + conv_b(feats): the
        # class-agnostic half is computed once per image and broadcast over classes
        x = h_fuse[:, :, None] if state is None else torch.cat([state, h_fuse[:, :, None]], dim=2)
        shared = self.shared(feats)
        return _classwise(lambda xc: F.gelu(self.per_class(xc) + shared), x)


class DEFHead(nn.Module):
    def __init__(self, feat_dim: int, unified_dim: int, global_dim: int, decoder_dim: int,
                 num_global: int = 1):
        super().__init__()
        self.projections = nn.ModuleList(nn.Conv2d(feat_dim, unified_dim, 1) for _ in range(3))
        self.refine_dense = nn.ModuleList(_conv7(1) for _ in range(3))
        self.refine_global = _conv7(1)
        self.fuse = nn.ModuleList(_conv7(2) for _ in range(3))
        feat_ch = unified_dim + num_global * global_dim
        self.decoder = nn.ModuleList(DecoderStage(feat_ch, decoder_dim, first=(k == 0)) for k in range(3))
        self.classifier = nn.Conv2d(decoder_dim, 1, 1)

    def forward(self, rgb_taps, sar_taps, z_globals: list[torch.Tensor], z_t: torch.Tensor,
                out_size: tuple[int, int]) -> HeadOutput:
        f_d = project_and_fuse(rgb_taps, sar_taps, self.projections)
        b, _, h, w = f_d[0].shape
        h_gt = torch.stack([global_text_similarity(z, z_t) for z in z_globals]).mean(0)
        h_gt_map = h_gt[:, :, None, None].expand(-1, -1, h, w)
        h_gt_ref = refine_similarity(h_gt_map, self.refine_global)
        h_dt, h_dt_ref, h_fuse = [], [], []
        for i in range(3):
            sim = dense_text_similarity(f_d[i], z_t)
            ref = refine_similarity(sim, self.refine_dense[i])
            h_dt.append(sim)
            h_dt_ref.append(ref)
            h_fuse.append(fuse_residual(ref, h_gt_ref, self.fuse[i]))
        z_cat = torch.cat(z_globals, dim=1)
        state = None
        # coarse to fine: deepest tap at the token grid, then x2 per stage
        for k, i in enumerate((2, 1, 0)):
            size = (h * 2 ** k, w * 2 ** k)
            feats = torch.cat([f_d[i], z_cat[:, :, None, None].expand(-1, -1, h, w)], dim=1)
            hf = h_fuse[i]
            if k > 0:
                feats = F.interpolate(feats, size=size, mode="bilinear", align_corners=False)
                hf = _classwise(lambda c: F.interpolate(
                    c[:, None], size=size, mode="bilinear", align_corners=False)[:, 0], hf)
                state = _classwise(
                    lambda sc: F.interpolate(sc, size=size, mode="bilinear", align_corners=False), state)
            state = self.decoder[k](state, hf, feats)
        # the 1x1 classifier commutes with bilinear upsampling, so classify first
        logits = _classwise(lambda sc: self.classifier(sc)[:, 0], state)
        sh, sw = logits.shape[-2:]
        if (sh, sw) != tuple(out_size):
            logits = _classwise(lambda c: F.interpolate(
                c[:, None], size=out_size, mode="bilinear", align_corners=False)[:, 0], logits)
        return HeadOutput(logits, f_d, h_dt, h_gt, h_dt_ref, [h_gt_ref] * 3, h_fuse)
