"""Ingest filter chain: person count, face size, image size, quality stubs.

Thresholds mirror the production values (face 224x224, image 640x1280) and
scale by a single factor; the desk-scale default is 1/16. The quality,
watermark and nsfw checks are stubs with a pluggable scorer seam so real
models can slot in without touching the chain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

FACE_MIN_FULL = (224, 224)
IMAGE_MIN_FULL = (640, 1280)
DESK_SCALE = 1.0 / 16.0


@dataclass(frozen=True)
class FilterThresholds:
    min_face: tuple[int, int] = (14, 14)
    min_image: tuple[int, int] = (40, 80)
    min_quality: float = 0.0

    @classmethod
    def at_scale(cls, factor: float = DESK_SCALE, min_quality: float = 0.0) -> "FilterThresholds":
        return cls(
            min_face=(round(FACE_MIN_FULL[0] * factor), round(FACE_MIN_FULL[1] * factor)),
            min_image=(round(IMAGE_MIN_FULL[0] * factor), round(IMAGE_MIN_FULL[1] * factor)),
            min_quality=min_quality,
        )

    @classmethod
    def for_corpus(cls, width: int, height: int, factor: float = DESK_SCALE) -> "FilterThresholds":
        """Desk-scale thresholds clamped so the renderer's own canvas passes."""
        base = cls.at_scale(factor)
        return cls(
            min_face=base.min_face,
            min_image=(min(base.min_image[0], width), min(base.min_image[1], height)),
            min_quality=base.min_quality,
        )


@dataclass(frozen=True)
class Verdict:
    keep: bool
    reason: str | None = None


def _stub_quality(meta: dict) -> float:
    phash = meta.get("phash", 0)
    return ((phash * 2654435761) % (1 << 32)) / float(1 << 32)


def filter_chain(
    meta: dict,
    thresholds: FilterThresholds = FilterThresholds(),
    quality_scorer: Callable[[dict], float] | None = None,
) -> Verdict:
    """Apply the checks in order; the first failure names the drop reason."""
    person_count = meta.get("person_count", 1 if meta.get("face_box") else 0)
    if person_count == 0:
        return Verdict(False, "no_person")
    if person_count > 1:
        return Verdict(False, "multiple_people")

    face_box = meta.get("face_box")
    if face_box is None:
        return Verdict(False, "no_person")
    fw, fh = face_box[2], face_box[3]
    if fw < thresholds.min_face[0] or fh < thresholds.min_face[1]:
        return Verdict(False, "face_too_small")

    if meta["width"] < thresholds.min_image[0] or meta["height"] < thresholds.min_image[1]:
        return Verdict(False, "image_too_small")

    score = (quality_scorer or _stub_quality)(meta)
    if score < thresholds.min_quality:
        return Verdict(False, "low_quality")

    if meta.get("watermark", False):
        return Verdict(False, "watermark")
    if meta.get("nsfw", False):
        return Verdict(False, "nsfw")
    return Verdict(True)
