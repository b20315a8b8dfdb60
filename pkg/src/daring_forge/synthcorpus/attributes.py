"""Closed attribute vocabulary for the paper-doll figures.

Six parts (background, hair, face, top, bottom, shoes) with small per-part
vocabularies, chosen so the inverse renderer can recover every attribute by
exact template matching: the 8 palette colors sit on the RGB cube corners
(pairwise distance >= 1), and pattern accents use the complement corner of
the base color so a pattern is visible on any base.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

# RGB cube corners; maximally separated so nearest-palette lookup has margin.
PALETTE = np.array(
    [
        (0.0, 0.0, 0.0),
        (1.0, 0.0, 0.0),
        (0.0, 1.0, 0.0),
        (0.0, 0.0, 1.0),
        (1.0, 1.0, 0.0),
        (1.0, 0.0, 1.0),
        (0.0, 1.0, 1.0),
        (1.0, 1.0, 1.0),
    ]
)
PALETTE_NAMES = ["black", "red", "green", "blue", "yellow", "magenta", "cyan", "white"]

# Accent used by pattern cells: the complement corner of the base color.
ACCENT_OF = {i: int(np.argmin(np.abs(PALETTE - (1.0 - PALETTE[i])).sum(axis=1))) for i in range(8)}

PATTERNS = ["solid", "stripes", "checker", "dots"]

PART_ORDER = ["background", "hair", "face", "top", "bottom", "shoes"]
# Pixel values in the indexed mask PNGs; background stays 0.
PART_IDS = {"background": 0, "hair": 1, "face": 2, "top": 3, "bottom": 4, "shoes": 5}


@dataclass(frozen=True)
class PartSchema:
    always_exists: bool = False
    types: tuple[str, ...] = ()
    patterns: tuple[str, ...] = ()
    shapes: tuple[str, ...] = ()
    has_color: bool = True


PART_SCHEMA: dict[str, PartSchema] = {
    "background": PartSchema(always_exists=True),
    "face": PartSchema(always_exists=True),
    "hair": PartSchema(shapes=("short-hair", "long-hair")),
    "top": PartSchema(
        types=("tshirt", "hoodie", "vest"),
        patterns=tuple(PATTERNS),
        shapes=("long-sleeve", "mid-sleeve", "sleeveless"),
    ),
    "bottom": PartSchema(
        types=("pants", "skirt"),
        patterns=tuple(PATTERNS),
        shapes=("long", "mid", "short"),
    ),
    "shoes": PartSchema(types=("sneakers", "boots")),
}


class VocabularyError(ValueError):
    """An attribute value is outside its part's declared vocabulary."""


@dataclass(frozen=True)
class PartAttrs:
    exists: bool = True
    type: str | None = None
    color: int | None = None
    pattern: str | None = None
    shape: str | None = None

    def validate(self, part: str) -> None:
        schema = PART_SCHEMA[part]
        if schema.always_exists and not self.exists:
            raise VocabularyError(f"{part} must always exist")
        if not self.exists:
            for name in ("type", "color", "pattern", "shape"):
                if getattr(self, name) is not None:
                    raise VocabularyError(f"{part}.{name} set on a non-existing part")
            return
        if schema.has_color:
            if self.color is None or not (0 <= self.color < len(PALETTE)):
                raise VocabularyError(f"{part}.color={self.color} outside palette")
        if schema.types:
            if self.type not in schema.types:
                raise VocabularyError(f"{part}.type={self.type!r} not in {schema.types}")
        elif self.type is not None:
            raise VocabularyError(f"{part} takes no type attribute")
        if schema.patterns:
            if self.pattern not in schema.patterns:
                raise VocabularyError(f"{part}.pattern={self.pattern!r} not in {schema.patterns}")
        elif self.pattern is not None:
            raise VocabularyError(f"{part} takes no pattern attribute")
        if schema.shapes:
            if self.shape not in schema.shapes:
                raise VocabularyError(f"{part}.shape={self.shape!r} not in {schema.shapes}")
        elif self.shape is not None:
            raise VocabularyError(f"{part} takes no shape attribute")


ABSENT = PartAttrs(exists=False)


@dataclass(frozen=True)
class AttributeSet:
    parts: dict[str, PartAttrs] = field(default_factory=dict)

    def __post_init__(self):
        for part in PART_ORDER:
            if part not in self.parts:
                raise VocabularyError(f"missing part {part!r}")
        for part, attrs in self.parts.items():
            if part not in PART_SCHEMA:
                raise VocabularyError(f"unknown part {part!r}")
            attrs.validate(part)

    def __getitem__(self, part: str) -> PartAttrs:
        return self.parts[part]

    @property
    def framing(self) -> str:
        """Camera framing, derived from which lower-body parts exist."""
        lower = self.parts["bottom"].exists or self.parts["shoes"].exists
        return "full-body" if lower else "half-body"

    def existing_parts(self) -> list[str]:
        return [p for p in PART_ORDER if self.parts[p].exists]

    def to_json(self) -> dict:
        out = {}
        for part, a in self.parts.items():
            rec: dict = {"exists": a.exists}
            if a.exists:
                for name in ("type", "color", "pattern", "shape"):
                    v = getattr(a, name)
                    if v is not None:
                        rec[name] = v
            out[part] = rec
        return out

    @classmethod
    def from_json(cls, data: dict) -> "AttributeSet":
        parts = {}
        for part, rec in data.items():
            parts[part] = PartAttrs(
                exists=rec["exists"],
                type=rec.get("type"),
                color=rec.get("color"),
                pattern=rec.get("pattern"),
                shape=rec.get("shape"),
            )
        return cls(parts)


def _part_combos(part: str) -> list[PartAttrs]:
    """All valid attribute combinations for one part (absent included if allowed)."""
    schema = PART_SCHEMA[part]
    combos: list[PartAttrs] = [] if schema.always_exists else [ABSENT]
    types = schema.types or (None,)
    patterns = schema.patterns or (None,)
    shapes = schema.shapes or (None,)
    for t in types:
        for c in range(len(PALETTE)):
            for p in patterns:
                for s in shapes:
                    combos.append(PartAttrs(True, t, c, p, s))
    return combos


# Canonical backdrop used while sweeping one part through its combinations.
_BASE = {
    "background": PartAttrs(True, color=0),
    "face": PartAttrs(True, color=4),
    "hair": ABSENT,
    "top": ABSENT,
    "bottom": ABSENT,
    "shoes": ABSENT,
}


def exhaustive_attribute_grid() -> Iterator[AttributeSet]:
    """Per-part exhaustive sweep against a fixed backdrop.

    The full cartesian product over all parts is astronomically large; the
    oracle's exactness is per-part, so sweeping each part through every one
    of its combinations (532 total) covers every renderable attribute value
    while staying under the 2,000-sample budget.
    """
    for part in PART_ORDER:
        for combo in _part_combos(part):
            parts = dict(_BASE)
            parts[part] = combo
            yield AttributeSet(parts)


def random_attribute_set(rng: np.random.Generator, weights: dict | None = None) -> AttributeSet:
    """Draw a random valid attribute set.

    ``weights`` optionally maps ``"<part>.<field>"`` to a probability vector
    over that field's vocabulary (existence fields use [p_absent, p_present]).
    Unspecified fields are uniform.
    """
    weights = weights or {}

    def pick(key: str, options: list) -> object:
        w = weights.get(key)
        if w is None:
            return options[int(rng.integers(len(options)))]
        w = np.asarray(w, dtype=float)
        return options[int(rng.choice(len(options), p=w / w.sum()))]

    parts = {}
    for part in PART_ORDER:
        schema = PART_SCHEMA[part]
        exists = True
        if not schema.always_exists:
            exists = bool(pick(f"{part}.exists", [False, True]))
        if not exists:
            parts[part] = ABSENT
            continue
        parts[part] = PartAttrs(
            exists=True,
            type=pick(f"{part}.type", list(schema.types)) if schema.types else None,
            color=int(pick(f"{part}.color", list(range(len(PALETTE))))),
            pattern=pick(f"{part}.pattern", list(schema.patterns)) if schema.patterns else None,
            shape=pick(f"{part}.shape", list(schema.shapes)) if schema.shapes else None,
        )
    return AttributeSet(parts)
