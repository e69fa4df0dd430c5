"""Parameter-group freezing and the AdamW step."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn


class NonFiniteGradientError(RuntimeError):
    pass


@dataclass
class FreezePolicy:
    """Learning rate per trainable group; groups not listed are frozen."""

    lrs: dict[str, float] = field(default_factory=dict)

    def trainable(self, group: str) -> bool:
        return group in self.lrs


def build_optimizer(groups: dict[str, nn.Module], policy: FreezePolicy, weight_decay: float,
                    betas=(0.9, 0.999), eps: float = 1e-8) -> torch.optim.AdamW:
    param_groups = []
    for name, module in groups.items():
        trainable = policy.trainable(name)
        for p in module.parameters():
            p.requires_grad_(trainable)
        if trainable:
            param_groups.append({"params": list(module.parameters()), "lr": policy.lrs[name], "name": name})
    if not param_groups:
        raise ValueError("freeze policy leaves nothing to train")
    return torch.optim.AdamW(param_groups, betas=tuple(betas), eps=eps, weight_decay=weight_decay,
                             foreach=False)


def optimizer_step(optimizer: torch.optim.Optimizer) -> None:
    """AdamW step (bias-corrected moments, decay ``w -= lr * wd * w``), refused if
    any gradient in any group is non-finite."""
    for group in optimizer.param_groups:
        for p in group["params"]:
            if p.grad is not None and not torch.isfinite(p.grad).all():
                raise NonFiniteGradientError(f"non-finite gradient in parameter group {group.get('name')!r}")
    optimizer.step()


def effective_lrs(optimizer: torch.optim.Optimizer) -> dict[str, float]:
    return {g["name"]: g["lr"] for g in optimizer.param_groups}
