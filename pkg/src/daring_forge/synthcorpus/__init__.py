"""Procedural paper-doll corpus: renderer, inverse oracle, corpus generation."""

from .attributes import (
    ACCENT_OF,
    PALETTE,
    PALETTE_NAMES,
    PART_IDS,
    PART_ORDER,
    PART_SCHEMA,
    AttributeSet,
    PartAttrs,
    exhaustive_attribute_grid,
    random_attribute_set,
)
from .render import LAYOUT, RenderedSample, layout_from_face_mask, part_variant_mask, render_sample
from .invert import Recovery, invert_render
from .corpus import CorpusConfig, generate_corpus, load_manifest, load_sample
from .features import FEATURE_DIM, featurize

__all__ = [
    "ACCENT_OF",
    "PALETTE",
    "PALETTE_NAMES",
    "PART_IDS",
    "PART_ORDER",
    "PART_SCHEMA",
    "AttributeSet",
    "PartAttrs",
    "exhaustive_attribute_grid",
    "random_attribute_set",
    "LAYOUT",
    "RenderedSample",
    "layout_from_face_mask",
    "part_variant_mask",
    "render_sample",
    "Recovery",
    "invert_render",
    "CorpusConfig",
    "generate_corpus",
    "load_manifest",
    "load_sample",
    "FEATURE_DIM",
    "featurize",
]
