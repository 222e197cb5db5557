"""Finite-difference verification of analytic gradients.

Runs on a float64 copy of the model in eval mode so the central-difference
quotient at step 1e-4 is meaningful.
"""

from __future__ import annotations

import copy
import random
from typing import Sequence

import torch

from .model import ToyMlm, mlm_loss


def grad_check(
    model: ToyMlm,
    batch: Sequence[tuple[Sequence[int], Sequence[int], Sequence[int]]],
    group: str,
    n_probes: int = 8,
    step: float = 1e-4,
    seed: int = 0,
) -> float:
    """Max relative error between autograd and central differences.

    Probes n_probes random coordinates of the named parameter group. The
    group must be trainable; frozen groups receive no gradient by contract,
    so there is nothing to compare.
    """
    probed = copy.deepcopy(model).double()
    probed.eval()
    groups = probed.parameter_groups()
    if group not in groups:
        raise ValueError(f"unknown parameter group {group!r}")
    params = groups[group]
    if not all(p.requires_grad for p in params):
        raise ValueError(f"group {group!r} is frozen; frozen groups get zero gradient")

    loss = mlm_loss(probed, batch)
    probed.zero_grad()
    loss.backward()

    rng = random.Random(seed)
    worst = 0.0
    for _ in range(n_probes):
        p = params[rng.randrange(len(params))]
        coord = rng.randrange(p.numel())
        flat = p.data.view(-1)
        original = flat[coord].item()

        def loss_at(x: float) -> float:
            flat[coord] = x
            with torch.no_grad():
                return mlm_loss(probed, batch).item()

        plus = loss_at(original + step)
        minus = loss_at(original - step)
        flat[coord] = original
        fd = (plus - minus) / (2.0 * step)
        analytic = p.grad.view(-1)[coord].item()
        rel = abs(fd - analytic) / max(abs(fd), abs(analytic), 1e-8)
        worst = max(worst, rel)
    return worst
