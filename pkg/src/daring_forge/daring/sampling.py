"""Ancestral reverse-process sampling.

Standard posterior sampling over the training schedule; fewer steps than the
schedule length re-space the timesteps evenly and use the effective
per-segment variances. Deterministic given the seed; output pixels clipped
to [0, 1].
"""

from __future__ import annotations

import numpy as np
import torch

from ..protocol.captions import DecomposedCaption
from .model import CondUNet
from .schedule import NoiseSchedule
from .training import collate_batch


@torch.no_grad()
def sample(
    model: CondUNet,
    schedule: NoiseSchedule,
    captions: list[DecomposedCaption],
    steps: int | None = None,
    seed: int = 0,
    collect_attention_step: int | None = None,
) -> tuple[np.ndarray, dict[str, torch.Tensor] | None]:
    """Generate one image per caption.

    Returns (images [B, H, W, 3] in [0, 1], attention maps captured at the
    requested reverse step, if any).
    """
    steps = steps if steps is not None else schedule.steps
    if steps > schedule.steps:
        raise ValueError(f"steps {steps} exceeds the schedule length {schedule.steps}")
    if steps < 1:
        raise ValueError("steps must be >= 1")

    dtype = model.config.torch_dtype()
    size = model.config.image_size
    b = len(captions)
    gen = torch.Generator().manual_seed(seed)
    tokens, positions, key_mask = collate_batch(captions, model.config.max_tokens, dtype)

    ts = np.unique(np.linspace(0, schedule.steps - 1, steps).round().astype(int))
    abars = schedule.alpha_bars[torch.from_numpy(ts)].to(dtype)

    z = torch.randn((b, 3, size, size), generator=gen, dtype=dtype)
    collected: dict[str, torch.Tensor] | None = None
    model.eval()
    for i in range(len(ts) - 1, -1, -1):
        t = torch.full((b,), int(ts[i]), dtype=torch.int64)
        eps_pred, bundles = model(z, t, tokens, key_mask, positions)
        if collect_attention_step is not None and i == collect_attention_step:
            collected = {k: v.detach().clone() for k, v in bundles.items()}
        abar = abars[i]
        abar_prev = abars[i - 1] if i > 0 else torch.tensor(1.0, dtype=dtype)
        x0 = (z - torch.sqrt(1.0 - abar) * eps_pred) / torch.sqrt(abar)
        x0 = x0.clamp(-1.0, 1.0)
        if i == 0:
            z = x0
            break
        beta_eff = 1.0 - abar / abar_prev
        mean = (
            torch.sqrt(abar_prev) * beta_eff / (1.0 - abar) * x0
            + torch.sqrt(abar / abar_prev) * (1.0 - abar_prev) / (1.0 - abar) * z
        )
        var = beta_eff * (1.0 - abar_prev) / (1.0 - abar)
        noise = torch.randn(z.shape, generator=gen, dtype=dtype)
        z = mean + torch.sqrt(var) * noise

    images = ((z + 1.0) / 2.0).clamp(0.0, 1.0)
    return images.permute(0, 2, 3, 1).numpy(), collected
