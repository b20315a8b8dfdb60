"""Fixed 24-dim handcrafted image features.

Per part: the mean color of the pixels matching the best (color, pattern)
template fit (6 parts x 3), mask area ratios for the four optional parts,
and the fitted pattern index for top and bottom. Raw mask means would alias
under complement-accent patterns (a half/half stripe mix of complementary
colors averages to gray whatever the base), so the color features ride on
the same template scoring the inverse renderer uses. Shared by the simulated
annotator and the corpus-level distance metric.
"""

from __future__ import annotations

import numpy as np

from .attributes import PALETTE, PART_ORDER, PART_SCHEMA

FEATURE_DIM = 24

_PATTERN_INDEX = {"solid": 0, "stripes": 1, "checker": 2, "dots": 3}


def _labels(img: np.ndarray) -> np.ndarray:
    d2 = ((img[..., None, :] - PALETTE[None, None, :, :]) ** 2).sum(axis=-1)
    return d2.argmin(axis=-1)


def featurize(image: np.ndarray, masks: dict[str, np.ndarray]) -> np.ndarray:
    from .invert import _texture_scores  # shared template scoring

    img = np.asarray(image, dtype=np.float64)
    if img.max() > 1.5:
        img = img / 255.0
    h, w = img.shape[:2]
    labels = _labels(img)
    union = np.zeros((h, w), dtype=bool)
    for m in masks.values():
        union |= m

    colors: list[float] = []
    pattern_idx: dict[str, int] = {}
    for part in PART_ORDER:
        mask = ~union if part == "background" else masks.get(part)
        if mask is None or not mask.any():
            colors.extend([0.0, 0.0, 0.0])
            continue
        patterns = PART_SCHEMA[part].patterns if part != "background" else ()
        scores, combos = _texture_scores(labels, mask, patterns)
        c, p = combos[int(np.argsort(-scores, kind="stable")[0])]
        pattern_idx[part] = _PATTERN_INDEX.get(p, 0)
        base_px = img[mask][labels[mask] == c]
        colors.extend((base_px.mean(axis=0) if base_px.size else PALETTE[c]).tolist())

    feats = list(colors)
    total = float(h * w)
    for part in ("hair", "top", "bottom", "shoes"):
        m = masks.get(part)
        feats.append(float(m.sum()) / total if m is not None else 0.0)
    for part in ("top", "bottom"):
        feats.append(pattern_idx.get(part, 0) / 3.0)

    out = np.asarray(feats, dtype=np.float64)
    assert out.shape == (FEATURE_DIM,)
    return out


ANNOTATOR_FEATURE_DIM = 29


def featurize_detailed(image: np.ndarray, masks: dict[str, np.ndarray]) -> np.ndarray:
    """Annotator features: base colors plus sub-band mask area ratios.

    A single per-part area cannot linearly separate entangled type/shape
    combinations, so the areas are split along the figure layout (hood band,
    torso core, collar-notch coverage, arm band, leg bands, center column),
    each scaled to O(1). Still cheap, fixed, and derived only from masks.
    """
    from .invert import _texture_scores
    from .render import layout_from_face_mask

    img = np.asarray(image, dtype=np.float64)
    if img.max() > 1.5:
        img = img / 255.0
    h, w = img.shape[:2]
    labels = _labels(img)
    total = float(h * w)

    colors: list[float] = []
    pattern_idx: dict[str, int] = {}
    for part in PART_ORDER:
        mask = None
        if part == "background":
            union = np.zeros((h, w), dtype=bool)
            for m in masks.values():
                union |= m
            mask = ~union
        else:
            mask = masks.get(part)
        if mask is None or not mask.any():
            colors.extend([0.0, 0.0, 0.0])
            continue
        patterns = PART_SCHEMA[part].patterns if part != "background" else ()
        scores, combos = _texture_scores(labels, mask, patterns)
        c, p = combos[int(np.argsort(-scores, kind="stable")[0])]
        pattern_idx[part] = _PATTERN_INDEX.get(p, 0)
        base_px = img[mask][labels[mask] == c]
        colors.extend((base_px.mean(axis=0) if base_px.size else PALETTE[c]).tolist())

    layout = layout_from_face_mask(masks["face"])
    yy = np.arange(h)[:, None]
    adx = np.abs(np.arange(w)[None, :] - layout.cx)
    ts = layout.head_cy + layout.vy(9)
    thw = layout.hx(7)

    def frac(m: np.ndarray, scale: float) -> float:
        return float(m.sum()) / total * scale

    hair = masks.get("hair", np.zeros((h, w), dtype=bool))
    top = masks.get("top", np.zeros((h, w), dtype=bool))
    bottom = masks.get("bottom", np.zeros((h, w), dtype=bool))
    shoes = masks.get("shoes", np.zeros((h, w), dtype=bool))

    notch_band = (yy >= ts) & (yy <= ts + 3) & (adx <= 3)
    notch_cover = float((top & notch_band).sum()) / max(1.0, float(notch_band.sum()))

    feats = list(colors) + [
        frac(hair & (yy < layout.head_cy), 60.0),
        frac(hair & (yy >= layout.head_cy), 60.0),
        frac(top & (yy < ts), 60.0),
        frac(top & (yy >= ts) & (adx <= thw), 30.0),
        notch_cover,
        frac(top & (adx > thw), 30.0),
        frac(bottom, 30.0),
        frac(bottom & (adx == 0), 200.0),
        frac(shoes, 60.0),
        float(pattern_idx.get("top", 0)),
        float(pattern_idx.get("bottom", 0)),
    ]
    out = np.asarray(feats, dtype=np.float64)
    assert out.shape == (ANNOTATOR_FEATURE_DIM,)
    return out
