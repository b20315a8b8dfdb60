"""Corpus generation and on-disk layout.

Layout: ``images/<id>.png`` (8-bit RGB), ``masks/<id>.png`` (indexed, part id
as pixel value), ``manifest.jsonl`` with one ``{id, attrs, meta}`` record per
sample. Generation is a pure function of (n, weights, seed): each sample's
randomness is derived from ``default_rng([seed, index])`` so disjoint index
ranges can be rendered by independent workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .attributes import AttributeSet, random_attribute_set
from .render import RenderedSample, render_sample
from .attributes import PART_IDS


class DiskBudgetError(ValueError):
    """Requested corpus exceeds the configured sample budget."""


@dataclass(frozen=True)
class CorpusConfig:
    width: int = 64
    height: int = 64
    max_samples: int = 50_000


def _record(sample_id: str, sample: RenderedSample) -> dict:
    return {"id": sample_id, "attrs": sample.attrs.to_json(), "meta": sample.meta}


def sample_for_index(seed: int, index: int, weights: dict | None, config: CorpusConfig) -> RenderedSample:
    rng = np.random.default_rng([seed, index])
    attrs = random_attribute_set(rng, weights)
    geometry_seed = int(rng.integers(0, 2**31 - 1))
    return render_sample(attrs, geometry_seed, config.width, config.height)


def generate_corpus(
    n: int,
    out_dir: str | Path,
    seed: int = 0,
    weights: dict | None = None,
    config: CorpusConfig = CorpusConfig(),
) -> list[dict]:
    """Render n samples plus manifest into out_dir; returns the manifest records."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > config.max_samples:
        raise DiskBudgetError(f"n={n} exceeds the budget of {config.max_samples} samples")
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)

    records = []
    for i in range(n):
        sample = sample_for_index(seed, i, weights, config)
        sid = f"{i:06d}"
        save_sample_images(out, sid, sample)
        records.append(_record(sid, sample))

    with open(out / "manifest.jsonl", "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")
    return records


def save_sample_images(out: Path, sample_id: str, sample: RenderedSample) -> None:
    img_u8 = np.clip(np.round(sample.image * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(img_u8, mode="RGB").save(out / "images" / f"{sample_id}.png")
    Image.fromarray(sample.mask_index_image(), mode="L").save(out / "masks" / f"{sample_id}.png")


def load_manifest(corpus_dir: str | Path) -> list[dict]:
    path = Path(corpus_dir) / "manifest.jsonl"
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def load_sample(corpus_dir: str | Path, record: dict) -> RenderedSample:
    out = Path(corpus_dir)
    sid = record["id"]
    image = np.asarray(Image.open(out / "images" / f"{sid}.png"), dtype=np.float64) / 255.0
    index_img = np.asarray(Image.open(out / "masks" / f"{sid}.png"))
    masks = {part: index_img == pid for part, pid in PART_IDS.items() if part != "background"}
    return RenderedSample(
        image=image,
        masks=masks,
        attrs=AttributeSet.from_json(record["attrs"]),
        meta=dict(record["meta"]),
    )
