"""Inverse renderer: recover attributes from an image plus part masks.

Works on a nearest-palette label field. Geometry is re-derived from the face
mask, every (type, shape) variant of each part is re-rendered, and textures
are scored as agreement between observed labels and the (color, pattern)
template. On renderer output the recovery is exact; on model samples it
returns the best-scoring attribute per category with a confidence in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attributes import (
    ACCENT_OF,
    PALETTE,
    PART_ORDER,
    PART_SCHEMA,
    AttributeSet,
    PartAttrs,
)
from .render import Layout, layout_from_face_mask, part_variant_mask, pattern_accent_cells


@dataclass
class Recovery:
    attrs: AttributeSet
    confidence: dict[tuple[str, str], float] = field(default_factory=dict)


def _label_field(image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest palette index per pixel (ties break to the lowest index)."""
    img = np.asarray(image, dtype=np.float64)
    if img.max() > 1.5:
        img = img / 255.0
    d2 = ((img[..., None, :] - PALETTE[None, None, :, :]) ** 2).sum(axis=-1)
    labels = d2.argmin(axis=-1)
    exact = 1.0 - np.sqrt(np.take_along_axis(d2, labels[..., None], axis=-1)[..., 0]) / np.sqrt(3.0)
    return labels, exact


def _geo_variants(part: str) -> list[tuple[str | None, str | None]]:
    schema = PART_SCHEMA[part]
    types = schema.types or (None,)
    shapes = schema.shapes or (None,)
    return [(t, s) for t in types for s in shapes]


def _texture_scores(labels: np.ndarray, mask: np.ndarray, patterns: tuple[str, ...]) -> tuple[np.ndarray, list[tuple[int, str]]]:
    """Agreement of observed labels with every (color, pattern) template on a mask."""
    obs = labels[mask]
    combos: list[tuple[int, str]] = []
    scores = []
    pats = patterns or ("solid",)
    accent_cells = {p: pattern_accent_cells(mask, p)[mask] for p in pats}
    for c in range(len(PALETTE)):
        for p in pats:
            tmpl = np.where(accent_cells[p], ACCENT_OF[c], c)
            scores.append(float((obs == tmpl).mean()))
            combos.append((c, p))
    return np.asarray(scores), combos


def _plurality(labels: np.ndarray, mask: np.ndarray) -> tuple[int, float]:
    counts = np.bincount(labels[mask].ravel(), minlength=len(PALETTE))
    idx = int(counts.argmax())
    return idx, counts[idx] / max(1, counts.sum())


def invert_render(image: np.ndarray, masks: dict[str, np.ndarray], trust_masks: bool = True) -> Recovery:
    """Recover the attribute set behind an image.

    With ``trust_masks=True`` (renderer output) the provided masks are taken
    as ground truth for part existence and silhouette. With ``trust_masks=
    False`` (model samples) masks only fix the intended layout via the face
    circle; existence and silhouettes are re-scored against the pixels.
    """
    labels, exactness = _label_field(image)
    face_mask = masks.get("face")
    if face_mask is None or not face_mask.any():
        raise ValueError("face mask required to anchor the figure layout")
    layout = layout_from_face_mask(face_mask)

    parts: dict[str, PartAttrs] = {}
    confidence: dict[tuple[str, str], float] = {}

    union = np.zeros(labels.shape, dtype=bool)
    occupied = np.zeros(labels.shape, dtype=bool)  # any pixel any variant could claim
    for part, m in masks.items():
        union |= m
    for part in PART_ORDER:
        if part in ("background",):
            continue
        if PART_SCHEMA[part].types or PART_SCHEMA[part].shapes:
            for t, s in _geo_variants(part):
                occupied |= part_variant_mask(part, layout, t, s)
        else:
            occupied |= part_variant_mask(part, layout)

    bg_region = ~(union | occupied)
    if not bg_region.any():
        bg_region = ~union
    bg_label, bg_agree = _plurality(labels, bg_region)
    parts["background"] = PartAttrs(True, color=bg_label)
    confidence[("background", "color")] = bg_agree * float(exactness[bg_region].mean())

    for part in PART_ORDER:
        if part == "background":
            continue
        schema = PART_SCHEMA[part]
        provided = masks.get(part)
        provided = provided if provided is not None else np.zeros(labels.shape, dtype=bool)

        if trust_masks:
            if not provided.any():
                if schema.always_exists:
                    raise ValueError(f"{part} mask empty but the part always exists")
                parts[part] = PartAttrs(exists=False)
                confidence[(part, "exists")] = 1.0
                continue
            type_, shape, geo_conf = _match_geometry(part, layout, provided)
            mask = provided
            exists_conf = 1.0
        else:
            exists, type_, shape, mask, exists_conf, geo_conf = _score_geometry(
                part, layout, labels, bg_label
            )
            if schema.always_exists:
                exists = True
            if not exists:
                parts[part] = PartAttrs(exists=False)
                confidence[(part, "exists")] = exists_conf
                continue

        scores, combos = _texture_scores(labels, mask, schema.patterns)
        order = np.argsort(-scores, kind="stable")
        best = int(order[0])
        color, pattern = combos[best]
        agree = float(scores[best])
        parts[part] = PartAttrs(
            exists=True,
            type=type_ if schema.types else None,
            color=color,
            pattern=pattern if schema.patterns else None,
            shape=shape if schema.shapes else None,
        )
        tex_conf = agree * float(exactness[mask].mean())
        confidence[(part, "exists")] = exists_conf
        confidence[(part, "color")] = tex_conf
        if schema.patterns:
            confidence[(part, "pattern")] = tex_conf
        if schema.types:
            confidence[(part, "type")] = geo_conf
        if schema.shapes:
            confidence[(part, "shape")] = geo_conf

    return Recovery(attrs=AttributeSet(parts), confidence=confidence)


def _match_geometry(part: str, layout: Layout, provided: np.ndarray) -> tuple[str | None, str | None, float]:
    """Identify (type, shape) for a trusted mask; exact match first, else best overlap."""
    best: tuple[float, str | None, str | None] = (-1.0, None, None)
    for t, s in _geo_variants(part):
        m = part_variant_mask(part, layout, t, s)
        if np.array_equal(m, provided):
            return t, s, 1.0
        inter = float((m & provided).sum())
        iou = inter / max(1.0, float((m | provided).sum()))
        if iou > best[0]:
            best = (iou, t, s)
    return best[1], best[2], best[0]


def _score_geometry(
    part: str, layout: Layout, labels: np.ndarray, bg_label: int
) -> tuple[bool, str | None, str | None, np.ndarray, float, float]:
    """Pick the variant (or absence) best explaining the pixels of a part's region."""
    schema = PART_SCHEMA[part]
    variants = _geo_variants(part)
    var_masks = [part_variant_mask(part, layout, t, s) for t, s in variants]
    region = np.zeros(labels.shape, dtype=bool)
    for m in var_masks:
        region |= m
    region_n = max(1, int(region.sum()))
    absent_score = float((labels[region] == bg_label).mean()) if region.any() else 1.0

    best_score, best_idx, best_agree = -1.0, 0, 0.0
    for i, m in enumerate(var_masks):
        scores, _ = _texture_scores(labels, m, schema.patterns)
        fit = float(scores.max())
        rest = region & ~m
        rest_fit = float((labels[rest] == bg_label).mean()) if rest.any() else 1.0
        total = (fit * m.sum() + rest_fit * rest.sum()) / region_n
        if total > best_score:
            best_score, best_idx, best_agree = total, i, fit

    exists = best_score > absent_score
    conf = float(abs(best_score - absent_score))
    t, s = variants[best_idx]
    return exists, t, s, var_masks[best_idx], conf, best_agree
