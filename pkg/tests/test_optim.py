import math

import numpy as np
import pytest
import torch
import torch.nn as nn

from mmovseg.model import param_digest
from mmovseg.optim import FreezePolicy, NonFiniteGradientError, build_optimizer, effective_lrs, optimizer_step


def linear(value=1.0):
    m = nn.Linear(1, 1, bias=False).double()
    with torch.no_grad():
        m.weight.fill_(value)
    return m


def test_one_step_oracle():
    """First AdamW step: decoupled decay then a step of exactly lr * sign(g)."""
    m = linear(2.0)
    lr, wd = 0.1, 0.01
    opt = build_optimizer({"a": m}, FreezePolicy({"a": lr}), weight_decay=wd)
    m.weight.grad = torch.tensor([[3.0]], dtype=torch.float64)
    optimizer_step(opt)
    g = 3.0
    m1, v1 = 0.1 * g, 0.001 * g * g
    mhat, vhat = m1 / 0.1, v1 / 0.001
    expect = 2.0 * (1 - lr * wd) - lr * mhat / (math.sqrt(vhat) + 1e-8)
    assert m.weight.item() == pytest.approx(expect, abs=1e-12)


def test_two_step_oracle():
    m = linear(1.0)
    lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
    opt = build_optimizer({"a": m}, FreezePolicy({"a": lr}), weight_decay=0.0)
    w, mom, vel = 1.0, 0.0, 0.0
    for t, g in enumerate((0.5, -2.0), start=1):
        m.weight.grad = torch.tensor([[g]], dtype=torch.float64)
        optimizer_step(opt)
        mom = b1 * mom + (1 - b1) * g
        vel = b2 * vel + (1 - b2) * g * g
        w -= lr * (mom / (1 - b1**t)) / (math.sqrt(vel / (1 - b2**t)) + eps)
    assert m.weight.item() == pytest.approx(w, abs=1e-12)


def test_zero_lr_is_identity():
    m = linear(0.3)
    opt = build_optimizer({"a": m}, FreezePolicy({"a": 0.0}), weight_decay=0.1)
    m.weight.grad = torch.ones(1, 1, dtype=torch.float64)
    optimizer_step(opt)
    assert m.weight.item() == 0.3


@pytest.mark.parametrize("bad", [float("nan"), float("inf")])
def test_non_finite_gradient_refused(bad):
    m = linear(1.0)
    opt = build_optimizer({"head": m}, FreezePolicy({"head": 0.1}), weight_decay=0.0)
    m.weight.grad = torch.tensor([[bad]], dtype=torch.float64)
    with pytest.raises(NonFiniteGradientError, match="head"):
        optimizer_step(opt)
    assert m.weight.item() == 1.0


def test_frozen_group_bit_equal():
    frozen, live = nn.Linear(3, 3).double(), nn.Linear(3, 3).double()
    opt = build_optimizer({"f": frozen, "l": live}, FreezePolicy({"l": 0.1}), weight_decay=0.1)
    before = param_digest(frozen)
    for _ in range(5):
        opt.zero_grad()
        (frozen(live(torch.ones(2, 3, dtype=torch.float64))) ** 2).sum().backward()
        optimizer_step(opt)
    assert param_digest(frozen) == before
    assert all(not p.requires_grad for p in frozen.parameters())


def test_effective_lrs():
    opt = build_optimizer({"a": linear(), "b": linear(), "c": linear()}, FreezePolicy({"a": 1e-3, "c": 2e-6}), 0.0)
    assert effective_lrs(opt) == {"a": 1e-3, "c": 2e-6}


def test_nothing_to_train():
    with pytest.raises(ValueError):
        build_optimizer({"a": linear()}, FreezePolicy({}), 0.0)


def test_quadratic_descent():
    target = torch.tensor([1.0, -2.0, 0.5], dtype=torch.float64)
    p = nn.Parameter(torch.zeros(3, dtype=torch.float64))
    holder = nn.Module()
    holder.p = p
    opt = build_optimizer({"q": holder}, FreezePolicy({"q": 0.05}), weight_decay=0.0)
    losses = []
    for _ in range(300):
        opt.zero_grad()
        loss = ((p - target) ** 2).sum()
        loss.backward()
        optimizer_step(opt)
        losses.append(loss.item())
    assert losses[-1] < 1e-3 * losses[0]
    assert np.allclose(p.detach().numpy(), target.numpy(), atol=0.05)
