"""Deterministic paper-doll renderer.

Every part occupies its own canvas band (hair above/beside the head, torso,
legs, feet), so part masks are pairwise disjoint by construction; the only
overlap (a hoodie's hood behind the face) is resolved by subtracting the
face circle. Patterns are drawn with fixed pixel periods (stripes 4px bands,
checker 4px cells, dots on a 6px grid) anchored at the part's bounding box,
which keeps them recoverable by template matching without any learning.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attributes import ACCENT_OF, PALETTE, PART_IDS, PART_ORDER, AttributeSet, VocabularyError
from ..hashing import phash64

MIN_CANVAS = 48


@dataclass(frozen=True)
class Layout:
    """Figure placement; every part mask is a pure function of this."""

    width: int
    height: int
    cx: int
    head_cy: int

    @property
    def sx(self) -> float:
        return self.width / 64.0

    @property
    def sy(self) -> float:
        return self.height / 64.0

    def hx(self, units: float) -> int:
        return max(1, round(units * self.sx))

    def vy(self, units: float) -> int:
        return max(1, round(units * self.sy))

    @property
    def head_r(self) -> int:
        return max(4, round(7 * min(self.sx, self.sy)))


LAYOUT = Layout  # convenience alias for callers constructing layouts directly


def layout_for_seed(width: int, height: int, geometry_seed: int) -> Layout:
    rng = np.random.default_rng(geometry_seed)
    jx = max(2, width // 16)
    cx = width // 2 + int(rng.integers(-jx, jx + 1))
    head_cy = round(13 * height / 64.0) + int(rng.integers(-1, 2))
    return Layout(width, height, cx, head_cy)


def layout_from_face_mask(face_mask: np.ndarray) -> Layout:
    """Recover the layout from a rendered face mask (bbox center of the circle)."""
    ys, xs = np.nonzero(face_mask)
    if ys.size == 0:
        raise ValueError("face mask is empty; layout cannot be recovered")
    h, w = face_mask.shape
    return Layout(w, h, (int(xs.min()) + int(xs.max())) // 2, (int(ys.min()) + int(ys.max())) // 2)


def _grid(layout: Layout) -> tuple[np.ndarray, np.ndarray]:
    ys = np.arange(layout.height)[:, None] - layout.head_cy
    xs = np.arange(layout.width)[None, :] - layout.cx
    return ys, xs


def _face_mask(layout: Layout) -> np.ndarray:
    dy, dx = _grid(layout)
    return dy * dy + dx * dx <= layout.head_r * layout.head_r


def _torso_rows(layout: Layout) -> tuple[int, int]:
    return layout.head_cy + layout.vy(9), layout.head_cy + layout.vy(25)

def part_variant_mask(part: str, layout: Layout, type_: str | None = None, shape: str | None = None) -> np.ndarray:
    """Owned mask for one part under a given (type, shape) variant."""
    dy, dx = _grid(layout)
    adx = np.abs(dx)
    r = layout.head_r
    if part == "face":
        return _face_mask(layout)

    if part == "hair":
        dist2 = dy * dy + dx * dx
        cap = (dist2 > r * r) & (dist2 <= (r + 2) * (r + 2)) & (dy <= -3)
        if shape == "long-hair":
            ts, _ = _torso_rows(layout)
            strands = (adx >= r + 1) & (adx <= r + 2) & (dy >= -2) & (dy <= layout.vy(8))
            strands &= np.arange(layout.height)[:, None] < ts
            return cap | strands
        return cap

    if part == "top":
        ts, te = _torso_rows(layout)
        yy = np.arange(layout.height)[:, None]
        thw = layout.hx(7)
        torso = (yy >= ts) & (yy <= te) & (adx <= thw)
        if type_ == "vest":
            for k in range(4):
                torso &= ~((yy == ts + k) & (adx <= 3 - k))
        mask = torso
        if type_ == "hoodie":
            hood = (dy >= 6) & (dy <= 8) & (adx <= layout.hx(5))
            mask = mask | (hood & ~_face_mask(layout))
        if shape == "long-sleeve":
            arm_end = te
        elif shape == "mid-sleeve":
            arm_end = ts + layout.vy(8)
        else:
            arm_end = None
        if arm_end is not None:
            arms = (yy >= ts) & (yy <= arm_end) & (adx >= thw + 1) & (adx <= thw + 3)
            mask = mask | arms
        return mask

    if part == "bottom":
        _, te = _torso_rows(layout)
        bs = te + 1
        length = {"long": 15, "mid": 10, "short": 5}[shape]
        # never reach the shoe band, whatever the head jitter did
        be = min(bs + layout.vy(length), layout.height - 2 - layout.vy(8))
        yy = np.arange(layout.height)[:, None]
        rows = (yy >= bs) & (yy <= be)
        if type_ == "pants":
            return rows & (adx >= 1) & (adx <= layout.hx(6))
        return rows & (adx <= layout.hx(7))  # skirt

    if part == "shoes":
        h = layout.vy(4) if type_ == "sneakers" else layout.vy(8)
        bot = layout.height - 2
        yy = np.arange(layout.height)[:, None]
        return (yy > bot - h) & (yy <= bot) & (adx >= 1) & (adx <= layout.hx(7))

    raise ValueError(f"no variant mask for part {part!r}")


def pattern_accent_cells(mask: np.ndarray, pattern: str | None) -> np.ndarray:
    """Cells of the mask painted in the accent color, anchored at the mask bbox."""
    h, w = mask.shape
    if pattern in (None, "solid"):
        return np.zeros((h, w), dtype=bool)
    ys, xs = np.nonzero(mask)
    ay, ax = int(ys.min()), int(xs.min())
    v = np.arange(h)[:, None] - ay
    u = np.arange(w)[None, :] - ax
    if pattern == "stripes":
        accent = (v // 4) % 2 == 1
    elif pattern == "checker":
        accent = ((v // 4) + (u // 4)) % 2 == 1
    elif pattern == "dots":
        accent = (v % 6 < 2) & (u % 6 < 2)
    else:
        raise VocabularyError(f"unknown pattern {pattern!r}")
    return np.broadcast_to(accent, (h, w)) & mask


def pattern_texture(mask: np.ndarray, color_idx: int, pattern: str | None) -> np.ndarray:
    """Pixel colors for one part: base color with complement-colored pattern cells."""
    h, w = mask.shape
    tex = np.tile(PALETTE[color_idx], (h, w, 1))
    tex[pattern_accent_cells(mask, pattern)] = PALETTE[ACCENT_OF[color_idx]]
    return tex


@dataclass
class RenderedSample:
    image: np.ndarray                      # H x W x 3, float in [0, 1]
    masks: dict[str, np.ndarray]           # part -> bool H x W (background excluded)
    attrs: AttributeSet
    meta: dict = field(default_factory=dict)

    @property
    def h1(self) -> np.ndarray:
        """Aggregate figure mask: union of all part masks."""
        out = np.zeros(self.image.shape[:2], dtype=bool)
        for m in self.masks.values():
            out |= m
        return out

    def mask_index_image(self) -> np.ndarray:
        """Indexed mask image, part id as pixel value (background = 0)."""
        out = np.zeros(self.image.shape[:2], dtype=np.uint8)
        for part, m in self.masks.items():
            out[m] = PART_IDS[part]
        return out


def render_sample(attrs: AttributeSet, geometry_seed: int, width: int = 64, height: int = 64) -> RenderedSample:
    """Render a figure; deterministic in (attrs, geometry_seed, canvas size)."""
    if width < MIN_CANVAS or height < MIN_CANVAS:
        raise ValueError(f"canvas must be at least {MIN_CANVAS}x{MIN_CANVAS}")
    layout = layout_for_seed(width, height, geometry_seed)
    image = np.tile(PALETTE[attrs["background"].color], (height, width, 1))
    masks: dict[str, np.ndarray] = {}
    for part in PART_ORDER:
        if part == "background":
            continue
        pa = attrs[part]
        if not pa.exists:
            masks[part] = np.zeros((height, width), dtype=bool)
            continue
        mask = part_variant_mask(part, layout, pa.type, pa.shape)
        tex = pattern_texture(mask, pa.color, pa.pattern)
        image[mask] = tex[mask]
        masks[part] = mask

    ys, xs = np.nonzero(masks["face"])
    face_box = [int(xs.min()), int(ys.min()), int(xs.max()) - int(xs.min()) + 1, int(ys.max()) - int(ys.min()) + 1]
    meta = {
        "width": width,
        "height": height,
        "face_box": face_box,
        "phash": phash64(image),
        "geometry_seed": geometry_seed,
    }
    return RenderedSample(image=image, masks=masks, attrs=attrs, meta=meta)
