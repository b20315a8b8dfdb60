"""Alignment and combined training losses.

The alignment loss pushes, for every masked caption group, each token's
attention map toward the group's downsampled region mask (term 1) and the
group-mean map toward the same mask (term 2):

    L = (1/N) sum_i [ sum_{j in span_i} msd(m_j, h_i) + msd(mean_j m_j, h_i) ]

with msd the mean squared difference over spatial positions, which keeps
the magnitude independent of the attention resolution.
"""

from __future__ import annotations

import torch


def hola_loss(
    group_maps: dict[int, torch.Tensor],
    group_masks: dict[int, torch.Tensor],
) -> torch.Tensor:
    """group_maps: {group: [width, S]} token maps; group_masks: {group: [S]}."""
    if not group_maps:
        raise ValueError("alignment loss needs at least one masked group")
    terms = []
    for gi, maps in group_maps.items():
        if maps.shape[0] == 0:
            raise ValueError(f"group {gi} has an empty span")
        h = group_masks[gi].to(maps.dtype)
        per_token = ((maps - h.unsqueeze(0)) ** 2).mean(dim=1).sum()
        group_mean = maps.mean(dim=0)
        mean_term = ((group_mean - h) ** 2).mean()
        terms.append(per_token + mean_term)
    return torch.stack(terms).mean()


def rlw_weights(generator: torch.Generator, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """Random loss weighting: softmax of two standard normal draws."""
    draws = torch.randn(2, generator=generator, dtype=dtype)
    return torch.softmax(draws, dim=0)


def combined_loss(
    noise_loss: torch.Tensor,
    hola: torch.Tensor | None,
    alpha: float,
    beta: float,
    rlw: bool = False,
    generator: torch.Generator | None = None,
) -> tuple[torch.Tensor, tuple[float, float]]:
    """alpha * L_noise + beta * L_align, optionally re-weighted per step by RLW.

    Returns (total, (w_noise, w_align)) with the effective weights applied.
    When beta is zero or no alignment loss is supplied, the alignment branch
    contributes nothing to the graph, so trajectories match a build with the
    supervision disabled bit for bit.
    """
    if alpha < 0 or beta < 0:
        raise ValueError("loss weights must be non-negative")
    if rlw:
        if generator is None:
            raise ValueError("RLW mode needs a generator")
        w = rlw_weights(generator, noise_loss.dtype)
        w_n, w_h = float(w[0]), float(w[1])
    else:
        w_n, w_h = 1.0, 1.0
    total = (w_n * alpha) * noise_loss
    if hola is not None and beta != 0.0:
        total = total + (w_h * beta) * hola
    return total, (w_n * alpha, w_h * beta)
