"""Forward-process variance schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch


@dataclass
class NoiseSchedule:
    steps: int = 200
    beta_start: float = 1e-4
    beta_end: float = 0.02
    dtype: torch.dtype = torch.float64
    betas: torch.Tensor = field(init=False)
    alphas: torch.Tensor = field(init=False)
    alpha_bars: torch.Tensor = field(init=False)

    def __post_init__(self):
        self.betas = torch.linspace(self.beta_start, self.beta_end, self.steps, dtype=self.dtype)
        if not bool(((self.betas > 0) & (self.betas < 1)).all()):
            raise ValueError("betas must lie strictly inside (0, 1)")
        self.alphas = 1.0 - self.betas
        self.alpha_bars = torch.cumprod(self.alphas, dim=0)
        if not bool((self.alpha_bars[1:] < self.alpha_bars[:-1]).all()):
            raise ValueError("cumulative products must be strictly decreasing")


def add_noise(x0: torch.Tensor, t: torch.Tensor | int, eps: torch.Tensor, schedule: NoiseSchedule) -> torch.Tensor:
    """z_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, batched over the leading axis."""
    t = torch.as_tensor(t)
    if bool((t < 0).any()) or bool((t >= schedule.steps).any()):
        raise ValueError(f"t out of range [0, {schedule.steps})")
    if eps.shape != x0.shape:
        raise ValueError("eps must match x0's shape")
    abar = schedule.alpha_bars.to(x0.dtype)[t]
    while abar.dim() < x0.dim():
        abar = abar.unsqueeze(-1)
    return torch.sqrt(abar) * x0 + torch.sqrt(1.0 - abar) * eps
