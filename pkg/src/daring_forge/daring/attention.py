"""Cross-attention maps and their per-group decomposition.

An attention map is row-stochastic over tokens: one spatial position's
distribution of attention across the caption. Decomposition slices the
token axis by caption group spans (heads averaged first); columns outside
every masked group fall into the catch-all bucket that receives no mask
supervision.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from ..protocol.captions import DecomposedCaption


@dataclass
class AttentionBundle:
    maps: torch.Tensor       # [heads, S, T] rows sum to 1 over tokens
    resolution: int          # spatial side r, S = r * r
    layer: str               # e.g. "down16", "mid8", "up16"

    def head_mean(self) -> torch.Tensor:
        return self.maps.mean(dim=0)


def as_bundles(raw: dict[str, torch.Tensor], batch_index: int = 0) -> dict[str, AttentionBundle]:
    """Wrap a model's per-layer map tensors for one batch item."""
    out = {}
    for layer, maps in raw.items():
        r = int(maps.shape[2] ** 0.5)
        out[layer] = AttentionBundle(maps=maps[batch_index], resolution=r, layer=layer)
    return out


def cross_attention(Q: torch.Tensor, K: torch.Tensor) -> torch.Tensor:
    """Softmax(Q K^T / sqrt(d)); rows are distributions over the T tokens."""
    if K.shape[0] == 0:
        raise ValueError("attention requires at least one token")
    if Q.shape[-1] != K.shape[-1]:
        raise ValueError("Q and K inner dimensions differ")
    d = Q.shape[-1]
    logits = (Q @ K.transpose(-1, -2)) / (d ** 0.5)
    return torch.softmax(logits, dim=-1)


def decompose_attention(
    maps: torch.Tensor, caption: DecomposedCaption
) -> tuple[dict[int, torch.Tensor], torch.Tensor]:
    """Split token-column maps by caption group.

    maps: [S, T] or [heads, S, T] (heads get averaged). Returns
    ({group_index: [width_i, S] for masked groups}, other: [k, S]) where the
    second element holds every column not covered by a masked group.
    """
    if maps.dim() == 3:
        maps = maps.mean(dim=0)
    S, T = maps.shape
    claimed = torch.zeros(T, dtype=torch.bool)
    groups: dict[int, torch.Tensor] = {}
    for gi, g in enumerate(caption.groups):
        s, e = g.span
        if e > T:
            raise ValueError(f"span {g.span} exceeds the token axis ({T})")
        if g.mask_index is None:
            continue
        groups[gi] = maps[:, s:e].transpose(0, 1)  # [width, S]
        claimed[s:e] = True
    n_tokens = len(caption.tokens)
    other_cols = [j for j in range(n_tokens) if not claimed[j]]
    other = maps[:, other_cols].transpose(0, 1) if other_cols else maps.new_zeros((0, S))
    return groups, other


def downsample_mask(mask, r: int) -> torch.Tensor:
    """Area-average a binary mask to r x r, flattened row-major, values in [0, 1]."""
    m = torch.as_tensor(mask, dtype=torch.float64)
    H, W = m.shape
    if r > min(H, W):
        raise ValueError(f"target side {r} exceeds mask size {H}x{W}")
    pooled = F.adaptive_avg_pool2d(m.unsqueeze(0).unsqueeze(0), (r, r))[0, 0]
    return pooled.reshape(-1)
