"""Scripted ablation grid over caption space and loss configuration.

Each named config maps onto the training knobs (caption mode, alignment
weight, loss terms, loss weighting scheme). Full-scale numbers are out of
reach at desk scale, so the grid's purpose is the orderings between rows;
every model-comparison claim averages over seeds.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from ..daring.model import ModelConfig
from ..daring.sampling import sample
from ..daring.training import TrainConfig, Trainer, load_training_items
from ..protocol.captions import assemble_caption, assemble_continuous_caption
from ..protocol.questions import LabelProtocol, build_protocol
from ..synthcorpus.render import render_sample
from .attention_metrics import argmax_in_mask_rate, attention_iou
from .distance import MIN_SET_SIZE, feature_distance, image_set_features
from .semantic import EvalSample, sample_eval_attrs, semantic_accuracy

# name -> (caption_mode, beta, rlw, term1, term2)
ABLATION_CONFIGS: dict[str, dict] = {
    "continuous-caption": {"caption_mode": "continuous", "beta": 0.0},
    "baseline": {"caption_mode": "continuous", "beta": 0.0},
    "discretized": {"caption_mode": "decomposed", "beta": 0.0},
    "+corpus": {"caption_mode": "decomposed", "beta": 0.0},
    "discretized+HOLA": {"caption_mode": "decomposed", "beta": 1.0},
    "+HOLA": {"caption_mode": "decomposed", "beta": 1.0},
    "fixed-beta": {"caption_mode": "decomposed", "beta": 1.0},
    "term1-only": {"caption_mode": "decomposed", "beta": 1.0, "hola_term2": False},
    "term1+term2": {"caption_mode": "decomposed", "beta": 1.0},
    "rlw": {"caption_mode": "decomposed", "beta": 1.0, "rlw": True},
    "rlw+beta": {"caption_mode": "decomposed", "beta": 0.001, "rlw": True},
}


def make_train_config(name: str, base: TrainConfig) -> TrainConfig:
    if name not in ABLATION_CONFIGS:
        raise KeyError(f"unknown ablation config {name!r}; choose from {sorted(ABLATION_CONFIGS)}")
    return replace(base, **ABLATION_CONFIGS[name])


@dataclass
class AblationResult:
    rows: list[dict] = field(default_factory=list)

    def to_markdown(self) -> str:
        cols = ["config", "acc_obj", "acc_tex", "acc_shape", "acc_all", "attn_iou", "feat_dist", "steps", "seed_count"]
        lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
        for row in self.rows:
            lines.append(
                "| "
                + " | ".join(
                    f"{row[c]:.4f}" if isinstance(row[c], float) else str(row[c]) for c in cols
                )
                + " |"
            )
        return "\n".join(lines) + "\n"


def generate_eval_samples(
    trainer: Trainer,
    protocol: LabelProtocol,
    n_prompts: int,
    sample_steps: int,
    seed: int,
    batch: int = 32,
) -> list[EvalSample]:
    """Draw fresh prompts, generate one image apiece, keep the intended attrs."""
    rng = np.random.default_rng([seed, 0x5EED])
    prompts = [sample_eval_attrs(rng) for _ in range(n_prompts)]
    samples: list[EvalSample] = []
    mode = trainer.config.caption_mode
    for start in range(0, n_prompts, batch):
        chunk = prompts[start : start + batch]
        captions = []
        for i, attrs in enumerate(chunk):
            cap_seed = 9_000_000 + start + i
            if mode == "continuous":
                captions.append(assemble_continuous_caption(attrs, protocol, seed=cap_seed))
            else:
                captions.append(assemble_caption(attrs, protocol, 0.0, seed=cap_seed))
        images, _ = sample(trainer.model, trainer.schedule, captions, steps=sample_steps, seed=seed + start)
        for i, attrs in enumerate(chunk):
            samples.append(EvalSample(image=images[i], attrs=attrs, geometry_seed=10_000 + start + i))
    return samples


def attention_scores(
    trainer: Trainer,
    protocol: LabelProtocol,
    n_images: int = 32,
    t_frac: float = 0.25,
    seed: int = 0,
) -> tuple[float, float]:
    """(mean IoU, argmax-in-mask rate) at the supervised layer, measured on
    noised training images at a fixed timestep."""
    from ..daring.schedule import add_noise
    from ..daring.training import collate_batch

    items = trainer.items[:n_images]
    layer = trainer.model.coarsest_attention_layer()
    r = trainer.config.model.image_size // (2 ** (len(trainer.config.model.channel_mults) - 1))
    gen = torch.Generator().manual_seed(seed)
    t = int(trainer.config.timesteps * t_frac)
    ious, rates = [], []
    for item in items:
        caption = assemble_caption(item.attrs, protocol, 0.0, 0)
        layout = render_sample(item.attrs, item.geometry_seed,
                               trainer.config.model.image_size, trainer.config.model.image_size)
        group_masks = {}
        masked_indices = [i for i, g in enumerate(caption.groups) if g.mask_index is not None]
        from ..protocol.captions import align_groups_to_masks

        for gi, (_, mask) in zip(masked_indices, align_groups_to_masks(caption, layout)):
            group_masks[gi] = mask
        tokens, positions, key_mask = collate_batch([caption], trainer.config.model.max_tokens, item.image.dtype)
        eps = torch.randn(item.image.shape, generator=gen, dtype=item.image.dtype)
        z = add_noise(item.image.unsqueeze(0), torch.tensor([t]), eps.unsqueeze(0), trainer.schedule)
        with torch.no_grad():
            _, bundles = trainer.model(z, torch.tensor([t]), tokens, key_mask, positions)
        maps = bundles[layer][0]
        ious.append(attention_iou(maps, caption, group_masks, r))
        rates.append(argmax_in_mask_rate(maps, caption, group_masks, r))
    return float(np.mean(ious)), float(np.mean(rates))


def evaluate_trained(
    trainer: Trainer,
    protocol: LabelProtocol,
    n_prompts: int = 64,
    sample_steps: int = 50,
    seed: int = 0,
) -> dict:
    samples = generate_eval_samples(trainer, protocol, n_prompts, sample_steps, seed)
    report = semantic_accuracy(samples, protocol)
    iou, argmax_rate = attention_scores(trainer, protocol, seed=seed)

    gen_pairs = []
    for s in samples[: max(MIN_SET_SIZE, min(64, len(samples)))]:
        layout = render_sample(s.attrs, s.geometry_seed, s.image.shape[1], s.image.shape[0])
        gen_pairs.append((s.image, layout.masks))
    corpus_pairs = []
    for item in trainer.items[: len(gen_pairs)]:
        img = ((item.image + 1.0) / 2.0).clamp(0, 1).permute(1, 2, 0).numpy()
        layout = render_sample(item.attrs, item.geometry_seed, img.shape[1], img.shape[0])
        corpus_pairs.append((img, layout.masks))
    if len(gen_pairs) >= MIN_SET_SIZE and len(corpus_pairs) >= MIN_SET_SIZE:
        fd = feature_distance(image_set_features(gen_pairs), image_set_features(corpus_pairs))
    else:
        fd = float("nan")  # too few samples for a stable Gaussian fit
    return {
        "acc_obj": report.acc_obj,
        "acc_tex": report.acc_tex,
        "acc_shape": report.acc_shape,
        "acc_all": report.acc_all,
        "attn_iou": iou,
        "argmax_in_mask": argmax_rate,
        "feat_dist": fd,
        "semantic": report.to_json(),
    }


def ablation_run(
    config_names: list[str],
    corpus_dir: str | Path,
    out_dir: str | Path,
    seeds: tuple[int, ...] = (0, 1, 2),
    steps: int = 2000,
    n_prompts: int = 256,
    sample_steps: int = 50,
    base: TrainConfig | None = None,
    protocol: LabelProtocol | None = None,
) -> AblationResult:
    """Train every named config per seed, evaluate, and emit the report table."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    protocol = protocol or build_protocol()
    base = base or TrainConfig(model=ModelConfig(dtype="float32"))
    result = AblationResult()
    per_seed_rows = []
    for name in config_names:
        metrics_per_seed = []
        for seed in seeds:
            cfg = replace(make_train_config(name, base), seed=seed)
            items = load_training_items(corpus_dir, protocol, cfg)
            trainer = Trainer(cfg, items, protocol)
            t0 = time.time()
            trainer.run(steps)
            metrics = evaluate_trained(trainer, protocol, n_prompts, sample_steps, seed)
            metrics["train_seconds"] = time.time() - t0
            metrics_per_seed.append(metrics)
            per_seed_rows.append({"config": name, "seed": seed, **{
                k: v for k, v in metrics.items() if k != "semantic"}})
        row = {"config": name, "steps": steps, "seed_count": len(seeds)}
        for key in ("acc_obj", "acc_tex", "acc_shape", "acc_all", "attn_iou", "feat_dist"):
            row[key] = float(np.mean([m[key] for m in metrics_per_seed]))
        result.rows.append(row)

    with open(out / "report.json", "w") as fh:
        json.dump({"rows": result.rows, "per_seed": per_seed_rows}, fh, indent=2, sort_keys=True)
    with open(out / "report.md", "w") as fh:
        fh.write(result.to_markdown())
    from .figures import ablation_figure

    ablation_figure(result.rows, out / "report.png")
    return result
