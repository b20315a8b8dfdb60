"""Attention-alignment scores at the supervised layer."""

from __future__ import annotations

import numpy as np
import torch

from ..daring.attention import decompose_attention, downsample_mask
from ..protocol.captions import DecomposedCaption


def otsu_threshold(values: np.ndarray, bins: int = 256) -> float:
    """Otsu's between-class-variance threshold; ties and constant input
    resolve low so binarization keeps everything at or above the threshold."""
    v = np.asarray(values, dtype=np.float64).ravel()
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        return lo
    hist, edges = np.histogram(v, bins=bins, range=(lo, hi))
    p = hist.astype(np.float64) / hist.sum()
    centers = (edges[:-1] + edges[1:]) / 2
    w0 = np.cumsum(p)
    w1 = 1.0 - w0
    mu0 = np.cumsum(p * centers)
    mu_total = mu0[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        m0 = mu0 / w0
        m1 = (mu_total - mu0) / w1
        between = w0 * w1 * (m0 - m1) ** 2
    between = np.nan_to_num(between, nan=-1.0)
    k = int(np.argmax(between))  # argmax takes the first (lowest) maximizer
    return float(edges[k + 1])


def _group_mean_maps(
    maps: torch.Tensor, caption: DecomposedCaption
) -> dict[int, np.ndarray]:
    groups, _ = decompose_attention(maps, caption)
    return {gi: m.mean(dim=0).detach().cpu().numpy() for gi, m in groups.items()}


def attention_iou(
    maps: torch.Tensor,
    caption: DecomposedCaption,
    group_masks: dict[int, np.ndarray],
    resolution: int,
) -> float:
    """Mean IoU between Otsu-binarized group-mean maps and downsampled masks.

    maps: [heads, S, T] (or [S, T]) at the supervised layer; group_masks maps
    group index to the full-resolution binary mask.
    """
    means = _group_mean_maps(maps, caption)
    ious = []
    for gi, mean_map in means.items():
        if gi not in group_masks:
            continue
        thr = otsu_threshold(mean_map)
        pred = mean_map >= thr
        target = downsample_mask(group_masks[gi], resolution).numpy() > 0.5
        union = np.logical_or(pred, target).sum()
        inter = np.logical_and(pred, target).sum()
        ious.append(inter / union if union else 1.0)
    return float(np.mean(ious)) if ious else float("nan")


def argmax_in_mask_rate(
    maps: torch.Tensor,
    caption: DecomposedCaption,
    group_masks: dict[int, np.ndarray],
    resolution: int,
) -> float:
    """Fraction of masked groups whose group-mean attention peaks inside the
    (downsampled, nonzero) mask region."""
    means = _group_mean_maps(maps, caption)
    hits, n = 0, 0
    for gi, mean_map in means.items():
        if gi not in group_masks:
            continue
        target = downsample_mask(group_masks[gi], resolution).numpy() > 0.0
        n += 1
        if target[int(np.argmax(mean_map))]:
            hits += 1
    return hits / n if n else float("nan")
