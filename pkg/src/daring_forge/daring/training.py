"""Training loop: one parameter stream, fully seeded.

Images train in [-1, 1]. Per step the trainer draws batch indices, caption
dropout, timesteps and noise from one generator, so a run is a pure function
of (config, corpus). The alignment loss is computed whenever supervision is
enabled but joins the total only with a non-zero weight, which keeps a
zero-weight run bit-identical to a build with the supervision ripped out.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..protocol.captions import DecomposedCaption, PAD_ID, assemble_caption, assemble_continuous_caption, position_ids
from ..protocol.questions import LabelProtocol, build_protocol
from ..synthcorpus.attributes import AttributeSet
from ..synthcorpus.corpus import load_manifest, load_sample
from ..synthcorpus.render import RenderedSample
from .attention import decompose_attention, downsample_mask
from .losses import combined_loss, hola_loss
from .model import CondUNet, ModelConfig
from .schedule import NoiseSchedule, add_noise


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, diagnostics: dict):
        super().__init__(f"non-finite loss at step {step}: {diagnostics}")
        self.step = step
        self.diagnostics = diagnostics


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    timesteps: int = 200
    beta_start: float = 1e-4
    beta_end: float = 0.02
    alpha: float = 1.0
    beta: float = 1.0
    rlw: bool = False
    hola_enabled: bool = True
    hola_term1: bool = True
    hola_term2: bool = True
    caption_mode: str = "decomposed"  # or "continuous"
    caption_dropout: float = 0.1
    lr: float = 2e-3
    weight_decay: float = 0.0
    batch_size: int = 8
    seed: int = 0
    offset_noise: float = 0.0

    def to_json(self) -> dict:
        d = asdict(self)
        d["model"] = asdict(self.model)
        return d

    @classmethod
    def from_json(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        model = data.pop("model")
        model["channel_mults"] = tuple(model["channel_mults"])
        model["attn_levels"] = tuple(model["attn_levels"])
        return cls(model=ModelConfig(**model), **data)


@dataclass
class TrainItem:
    image: torch.Tensor          # [3, H, W] in [-1, 1]
    attrs: AttributeSet
    masks_down: dict[int, torch.Tensor]  # group index -> [S] at the supervised layer
    geometry_seed: int


def prepare_item(sample: RenderedSample, protocol: LabelProtocol, config: TrainConfig) -> TrainItem:
    dtype = config.model.torch_dtype()
    img = torch.from_numpy(np.ascontiguousarray(sample.image.transpose(2, 0, 1))).to(dtype)
    img = img * 2.0 - 1.0
    r = config.model.image_size // (2 ** (len(config.model.channel_mults) - 1))
    caption = assemble_caption(sample.attrs, protocol, 0.0, 0)
    masks_down: dict[int, torch.Tensor] = {}
    from ..protocol.captions import align_groups_to_masks

    masked_indices = [i for i, g in enumerate(caption.groups) if g.mask_index is not None]
    for gi, (_, mask) in zip(masked_indices, align_groups_to_masks(caption, sample)):
        masks_down[gi] = downsample_mask(mask, r).to(dtype)
    return TrainItem(
        image=img,
        attrs=sample.attrs,
        masks_down=masks_down,
        geometry_seed=sample.meta.get("geometry_seed", 0),
    )


def load_training_items(corpus_dir: str | Path, protocol: LabelProtocol, config: TrainConfig) -> list[TrainItem]:
    records = load_manifest(corpus_dir)
    return [prepare_item(load_sample(corpus_dir, rec), protocol, config) for rec in records]


def caption_for(item: TrainItem, protocol: LabelProtocol, config: TrainConfig, draw_seed: int) -> DecomposedCaption:
    if config.caption_mode == "continuous":
        return assemble_continuous_caption(item.attrs, protocol, seed=draw_seed)
    return assemble_caption(item.attrs, protocol, config.caption_dropout, seed=draw_seed)


def collate_batch(
    captions: list[DecomposedCaption], max_tokens: int, dtype: torch.dtype
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    t_max = max(len(c.tokens) for c in captions)
    if t_max > max_tokens:
        raise ValueError(f"caption length {t_max} exceeds the model limit {max_tokens}")
    tokens = torch.full((len(captions), t_max), PAD_ID, dtype=torch.int64)
    positions = torch.zeros((len(captions), t_max), dtype=torch.int64)
    key_mask = torch.zeros((len(captions), t_max), dtype=torch.bool)
    for i, c in enumerate(captions):
        tokens[i, : len(c.tokens)] = torch.tensor(c.tokens, dtype=torch.int64)
        positions[i, : len(c.tokens)] = torch.tensor(position_ids(c), dtype=torch.int64)
        key_mask[i, : len(c.tokens)] = True
    return tokens, positions, key_mask


def compute_losses(
    model: CondUNet,
    schedule: NoiseSchedule,
    images: torch.Tensor,
    tokens: torch.Tensor,
    key_mask: torch.Tensor,
    captions: list[DecomposedCaption],
    masks_down: list[dict[int, torch.Tensor]],
    t: torch.Tensor,
    eps: torch.Tensor,
    hola_enabled: bool,
    hola_layer: str | None = None,
    term1: bool = True,
    term2: bool = True,
    positions: torch.Tensor | None = None,
) -> tuple[torch.Tensor, torch.Tensor | None, dict[str, torch.Tensor]]:
    """Pure loss evaluation given explicit noise draws; the finite-difference
    oracle re-invokes this with identical (t, eps)."""
    z = add_noise(images, t, eps, schedule)
    eps_pred, bundles = model(z, t, tokens, key_mask, positions)
    noise_loss = ((eps - eps_pred) ** 2).mean()

    hola = None
    if hola_enabled:
        layer = hola_layer or model.coarsest_attention_layer()
        maps = bundles[layer]  # [B, heads, S, T]
        per_item = []
        for i, caption in enumerate(captions):
            groups, _ = decompose_attention(maps[i], caption)
            supervised = {gi: m for gi, m in groups.items() if gi in masks_down[i]}
            per_item.append(
                _hola_terms(supervised, masks_down[i], term1=term1, term2=term2)
            )
        hola = torch.stack(per_item).mean()
    return noise_loss, hola, bundles


def _hola_terms(
    group_maps: dict[int, torch.Tensor],
    group_masks: dict[int, torch.Tensor],
    term1: bool,
    term2: bool,
) -> torch.Tensor:
    if term1 and term2:
        return hola_loss(group_maps, group_masks)
    if not group_maps:
        raise ValueError("alignment loss needs at least one masked group")
    terms = []
    for gi, maps in group_maps.items():
        h = group_masks[gi].to(maps.dtype)
        acc = maps.new_zeros(())
        if term1:
            acc = acc + ((maps - h.unsqueeze(0)) ** 2).mean(dim=1).sum()
        if term2:
            acc = acc + ((maps.mean(dim=0) - h) ** 2).mean()
        terms.append(acc)
    return torch.stack(terms).mean()


class Trainer:
    def __init__(self, config: TrainConfig, items: list[TrainItem], protocol: LabelProtocol | None = None):
        if not items:
            raise ValueError("training needs a non-empty corpus")
        self.config = config
        self.items = items
        self.protocol = protocol or build_protocol()
        torch.manual_seed(config.seed)  # parameter init draws from the global RNG
        self.model = CondUNet(config.model)
        self.schedule = NoiseSchedule(
            config.timesteps, config.beta_start, config.beta_end, dtype=config.model.torch_dtype()
        )
        self.optimizer = torch.optim.AdamW(
            self.model.parameters(), lr=config.lr, weight_decay=config.weight_decay
        )
        self.generator = torch.Generator().manual_seed(config.seed)
        self.step_count = 0
        self.bundle_probe = None  # optional callback(bundles) per step

    def _draw_batch(self) -> tuple[list[TrainItem], list[DecomposedCaption]]:
        n = min(self.config.batch_size, len(self.items))
        idx = torch.randint(len(self.items), (n,), generator=self.generator)
        batch = [self.items[int(i)] for i in idx]
        captions = []
        for slot, item in enumerate(batch):
            draw_seed = self.config.seed * 1_000_003 + self.step_count * 131 + slot
            captions.append(caption_for(item, self.protocol, self.config, draw_seed))
        return batch, captions

    def step(self, batch: list[TrainItem] | None = None, captions: list[DecomposedCaption] | None = None) -> dict:
        cfg = self.config
        if batch is None:
            batch, captions = self._draw_batch()
        if not batch:
            raise ValueError("batch must be non-empty")
        dtype = cfg.model.torch_dtype()
        images = torch.stack([b.image for b in batch])
        tokens, positions, key_mask = collate_batch(captions, cfg.model.max_tokens, dtype)
        t = torch.randint(0, cfg.timesteps, (len(batch),), generator=self.generator)
        eps = torch.randn(images.shape, generator=self.generator, dtype=dtype)
        if cfg.offset_noise > 0:
            offset = torch.randn((images.shape[0], images.shape[1], 1, 1), generator=self.generator, dtype=dtype)
            eps = eps + cfg.offset_noise * offset

        noise_loss, hola, bundles = compute_losses(
            self.model,
            self.schedule,
            images,
            tokens,
            key_mask,
            captions,
            [b.masks_down for b in batch],
            t,
            eps,
            hola_enabled=cfg.hola_enabled,
            term1=cfg.hola_term1,
            term2=cfg.hola_term2,
            positions=positions,
        )
        if self.bundle_probe is not None:
            self.bundle_probe(bundles)
        total, weights = combined_loss(
            noise_loss, hola, cfg.alpha, cfg.beta, rlw=cfg.rlw, generator=self.generator
        )
        if not torch.isfinite(total):
            raise TrainingDiverged(
                self.step_count,
                {
                    "loss_noise": float(noise_loss.detach()),
                    "loss_hola": None if hola is None else float(hola.detach()),
                    "t": t.tolist(),
                },
            )
        self.optimizer.zero_grad()
        total.backward()
        self.optimizer.step()
        self.step_count += 1
        return {
            "step": self.step_count,
            "loss_noise": float(noise_loss.detach()),
            "loss_hola": None if hola is None else float(hola.detach()),
            "loss_total": float(total.detach()),
            "w_noise": weights[0],
            "w_hola": weights[1],
        }

    def run(self, steps: int, log_path: str | Path | None = None) -> list[dict]:
        log = []
        fh = open(log_path, "a") if log_path else None
        try:
            for _ in range(steps):
                rec = self.step()
                log.append(rec)
                if fh:
                    fh.write(json.dumps(rec) + "\n")
        finally:
            if fh:
                fh.close()
        return log

    def save(self, path: str | Path) -> None:
        torch.save(
            {
                "config": self.config.to_json(),
                "model": self.model.state_dict(),
                "optimizer": self.optimizer.state_dict(),
                "step": self.step_count,
            },
            path,
        )


def load_checkpoint(path: str | Path, items: list[TrainItem] | None = None) -> Trainer:
    blob = torch.load(path, weights_only=False)
    config = TrainConfig.from_json(blob["config"])
    trainer = Trainer(config, items or [_dummy_item(config)], None)
    trainer.model.load_state_dict(blob["model"])
    trainer.optimizer.load_state_dict(blob["optimizer"])
    trainer.step_count = blob["step"]
    return trainer


def _dummy_item(config: TrainConfig) -> TrainItem:
    size = config.model.image_size
    return TrainItem(
        image=torch.zeros(3, size, size, dtype=config.model.torch_dtype()),
        attrs=None,  # placeholder: checkpoint loaded for sampling only
        masks_down={},
        geometry_seed=0,
    )
