"""Cross-modal unification: align SAR encoder features with frozen RGB features."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .config import LOSS_KINDS, ValidationError
from .encoders import FeaturePyramid
from .optim import optimizer_step


@dataclass(frozen=True)
class AlignmentLossConfig:
    loss_kind: str = "infonce"
    temperature: float = 0.07

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise ValidationError(f"loss_kind must be one of {LOSS_KINDS}")
        if self.temperature <= 0:
            raise ValidationError("temperature must be > 0")


def pool_taps(pyramid: FeaturePyramid | list[torch.Tensor]) -> torch.Tensor:
    """Mean over the token grid, then L2-normalise: B x 3 x d."""
    pooled = torch.stack([t.mean(dim=(-2, -1)) for t in pyramid], dim=1)
    return F.normalize(pooled, dim=-1)


def infonce_loss(anchors: torch.Tensor, positives: torch.Tensor, temperature: float) -> torch.Tensor:
    """One-directional InfoNCE with in-batch negatives.

    Row b of ``positives`` is the positive for anchor b and a negative for every
    other anchor. Inputs are expected to be unit rows.
    """
    if temperature <= 0:
        raise ValidationError("temperature must be > 0")
    logits = anchors @ positives.T / temperature
    targets = torch.arange(anchors.shape[0], device=anchors.device)
    return F.cross_entropy(logits, targets)


def _check_shapes(a, b):
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def mse_align_loss(f_sar: torch.Tensor, f_rgb: torch.Tensor) -> torch.Tensor:
    _check_shapes(f_sar, f_rgb)
    return ((f_sar - f_rgb) ** 2).mean()


def l1_align_loss(f_sar: torch.Tensor, f_rgb: torch.Tensor) -> torch.Tensor:
    _check_shapes(f_sar, f_rgb)
    return (f_sar - f_rgb).abs().mean()


def tap_loss(sar: torch.Tensor, rgb: torch.Tensor, cfg: AlignmentLossConfig) -> torch.Tensor:
    """Loss between pooled B x d vectors of one tap."""
    if cfg.loss_kind == "infonce":
        return infonce_loss(sar, rgb, cfg.temperature)
    if cfg.loss_kind == "mse":
        return mse_align_loss(sar, rgb)
    return l1_align_loss(sar, rgb)


def multiscale_alignment_loss(sar_pyr, rgb_pyr, cfg: AlignmentLossConfig) -> torch.Tensor:
    """Arithmetic mean of the per-tap loss over the three taps."""
    sar, rgb = pool_taps(sar_pyr), pool_taps(rgb_pyr)
    _check_shapes(sar, rgb)
    losses = [tap_loss(sar[:, i], rgb[:, i], cfg) for i in range(sar.shape[1])]
    return torch.stack(losses).mean()


@torch.no_grad()
def alignment_gap(sar_pyr, rgb_pyr) -> tuple[float, float]:
    """Mean matched and mean mismatched cosine between pooled SAR and RGB
    features, averaged over taps."""
    sar, rgb = pool_taps(sar_pyr), pool_taps(rgb_pyr)
    b = sar.shape[0]
    sims = torch.einsum("itd,jtd->tij", sar, rgb)  # taps x B x B
    eye = torch.eye(b, dtype=torch.bool, device=sims.device)
    matched = sims[:, eye].mean().item()
    mismatched = sims[:, ~eye].mean().item()
    return matched, mismatched


def cmu_targets(cmu_target: str) -> tuple[str, ...]:
    return {"none": (), "dense": ("dense",), "global": ("global",), "both": ("dense", "global")}[cmu_target]


def cmu_train_step(rgb: torch.Tensor, sar: torch.Tensor, model, optimizer, cfg: AlignmentLossConfig,
                   targets=("dense",)) -> float:
    """One alignment step. Only the SAR encoders are updated; the RGB encoders
    run without gradients and must not be held by the optimizer."""
    held = {id(p) for g in optimizer.param_groups for p in g["params"]}
    frozen = [model.dense_rgb, model.global_rgb]
    assert not any(id(p) in held for m in frozen for p in m.parameters()), "RGB encoder is not frozen"
    losses = []
    if "dense" in targets:
        with torch.no_grad():
            rgb_pyr = model.dense_rgb(rgb)
        losses.append(multiscale_alignment_loss(model.dense_sar(sar), rgb_pyr, cfg))
    if "global" in targets:
        with torch.no_grad():
            rgb_pyr = model.global_rgb.pyramid(rgb)
        losses.append(multiscale_alignment_loss(model.global_sar.pyramid(sar), rgb_pyr, cfg))
    loss = torch.stack(losses).mean()
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    optimizer_step(optimizer)
    return loss.item()
