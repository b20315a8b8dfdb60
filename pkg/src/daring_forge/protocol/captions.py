"""Decomposed captions: token groups with spans tied to semantic masks.

A caption is a flat token sequence over the closed vocabulary, partitioned
into ordered groups. The body group ("full-body person") comes first and
pairs with the whole-figure aggregate mask; each existing part contributes
one group of "<attribute tokens> <type token>"; the background group has no
mask and is the catch-all bucket excluded from attention supervision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..synthcorpus.attributes import PALETTE_NAMES, PART_SCHEMA, AttributeSet
from ..synthcorpus.render import RenderedSample
from .questions import DEFAULT_MASK_INDEX, LabelProtocol

BODY_MASK_INDEX = DEFAULT_MASK_INDEX["body"]

PAD_TOKEN = "<pad>"

VOCAB: list[str] = (
    [PAD_TOKEN]
    + PALETTE_NAMES
    + ["solid", "stripes", "checker", "dots"]
    + ["long-sleeve", "mid-sleeve", "sleeveless"]
    + ["long", "mid", "short"]
    + ["short-hair", "long-hair"]
    + ["tshirt", "hoodie", "vest", "pants", "skirt", "sneakers", "boots"]
    + ["hair", "face", "background", "person"]
    + ["full-body", "half-body"]
)
TOKEN_IDS = {tok: i for i, tok in enumerate(VOCAB)}
PAD_ID = TOKEN_IDS[PAD_TOKEN]


@dataclass(frozen=True)
class CaptionGroup:
    group_id: str
    mask_index: int | None
    span: tuple[int, int]  # start inclusive, end exclusive over token positions


@dataclass(frozen=True)
class DecomposedCaption:
    tokens: tuple[int, ...]
    groups: tuple[CaptionGroup, ...]
    body_index: int
    other_index: int | None

    def words(self) -> list[str]:
        return [VOCAB[t] for t in self.tokens]

    def group_words(self, g: CaptionGroup) -> list[str]:
        return [VOCAB[t] for t in self.tokens[g.span[0] : g.span[1]]]

    def masked_groups(self) -> list[CaptionGroup]:
        return [g for g in self.groups if g.mask_index is not None]

    def to_json(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "groups": [
                {"group_id": g.group_id, "mask_index": g.mask_index, "span": list(g.span)}
                for g in self.groups
            ],
            "body_index": self.body_index,
            "other_index": self.other_index,
        }

    @classmethod
    def from_json(cls, data: dict) -> "DecomposedCaption":
        return cls(
            tokens=tuple(data["tokens"]),
            groups=tuple(
                CaptionGroup(g["group_id"], g["mask_index"], tuple(g["span"]))
                for g in data["groups"]
            ),
            body_index=data["body_index"],
            other_index=data.get("other_index"),
        )


def _part_tokens(part: str, attrs: AttributeSet) -> tuple[list[str], str]:
    """(droppable attribute tokens, mandatory type token) for one part group."""
    a = attrs[part]
    schema = PART_SCHEMA[part]
    words = [PALETTE_NAMES[a.color]]
    if schema.patterns:
        words.append(a.pattern)
    if schema.shapes:
        words.append(a.shape)
    type_word = a.type if schema.types else part
    return words, type_word


def assemble_caption(
    attrs: AttributeSet,
    protocol: LabelProtocol,
    dropout_p: float = 0.0,
    seed: int = 0,
) -> DecomposedCaption:
    """Build the decomposed caption for an attribute set.

    Attribute tokens are dropped independently with probability dropout_p;
    the body group and the per-group type tokens always survive. Determinism
    comes from the seed alone.
    """
    if not 0.0 <= dropout_p <= 1.0:
        raise ValueError("dropout_p must be in [0, 1]")
    rng = np.random.default_rng(seed)

    words: list[str] = []
    groups: list[CaptionGroup] = []
    body_index = 0
    other_index: int | None = None

    def push(group_id: str, mask_index: int | None, attr_words: list[str], type_word: str, droppable: bool):
        nonlocal other_index
        start = len(words)
        for wrd in attr_words:
            if droppable and dropout_p > 0 and rng.random() < dropout_p:
                continue
            words.append(wrd)
        words.append(type_word)
        groups.append(CaptionGroup(group_id, mask_index, (start, len(words))))
        if mask_index is None and other_index is None:
            other_index = len(groups) - 1

    push("body", protocol.mask_index["body"], [attrs.framing], "person", droppable=False)
    for part in protocol.part_order:
        if not attrs[part].exists:
            continue
        attr_words, type_word = _part_tokens(part, attrs)
        push(part, protocol.mask_index[part], attr_words, type_word, droppable=True)
    bg_words, bg_type = _part_tokens("background", attrs)
    push("background", None, bg_words, bg_type, droppable=True)

    return DecomposedCaption(
        tokens=tuple(TOKEN_IDS[w] for w in words),
        groups=tuple(groups),
        body_index=body_index,
        other_index=other_index,
    )


def assemble_continuous_caption(
    attrs: AttributeSet,
    protocol: LabelProtocol,
    seed: int = 0,
) -> DecomposedCaption:
    """Entangled-caption baseline: same tokens, one group, shuffled order.

    All attribute and type words end up in a single span tied to the
    whole-figure mask, so nothing marks which attribute describes which
    part; this is the un-discretized text space the grouped captions are
    compared against.
    """
    rng = np.random.default_rng(seed)
    words = [attrs.framing, "person"]
    for part in protocol.part_order:
        if not attrs[part].exists:
            continue
        attr_words, type_word = _part_tokens(part, attrs)
        words.extend(attr_words + [type_word])
    bg_words, bg_type = _part_tokens("background", attrs)
    words.extend(bg_words + [bg_type])
    order = rng.permutation(len(words))
    words = [words[i] for i in order]
    group = CaptionGroup("all", protocol.mask_index["body"], (0, len(words)))
    return DecomposedCaption(
        tokens=tuple(TOKEN_IDS[w] for w in words),
        groups=(group,),
        body_index=0,
        other_index=None,
    )


GROUP_SLOT_STRIDE = 4  # widest group: color + pattern + shape + type token


def position_ids(caption: DecomposedCaption) -> list[int]:
    """Group-relative slot ids: a token's position encodes which semantic
    group it sits in (by mask identity) and its offset inside the group, so
    slots stay stable however many parts a caption mentions. The
    single-group continuous baseline collapses to near-constant slots."""
    ids = [0] * len(caption.tokens)
    for g in caption.groups:
        base = (g.mask_index or 0) * GROUP_SLOT_STRIDE
        for offset, pos in enumerate(range(g.span[0], g.span[1])):
            ids[pos] = base + min(offset, GROUP_SLOT_STRIDE - 1)
    return ids


def align_groups_to_masks(
    caption: DecomposedCaption, sample: RenderedSample
) -> list[tuple[tuple[int, int], np.ndarray]]:
    """Resolve each masked group to its pixel mask; groups without masks are skipped."""
    index_to_part = {2: "hair", 3: "face", 4: "top", 5: "bottom", 6: "shoes"}
    pairs = []
    for g in caption.groups:
        if g.mask_index is None:
            continue
        if g.mask_index == BODY_MASK_INDEX:
            pairs.append((g.span, sample.h1))
        elif g.mask_index in index_to_part:
            pairs.append((g.span, sample.masks[index_to_part[g.mask_index]]))
        else:
            raise ValueError(f"mask index {g.mask_index} out of range")
    return pairs
