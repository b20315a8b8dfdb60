"""Command-line entry point.

Every command resolves its configuration (JSON config file, overridden by
flags), writes the resolved values to ``config.lock.json`` in its output
directory, and emits figures next to the machine-readable outputs. Exit
codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from .daring.model import ModelConfig
from .daring.sampling import sample as sample_images
from .daring.training import TrainConfig, Trainer, load_checkpoint, load_training_items
from .evalsuite.ablation import ablation_run, evaluate_trained
from .evalsuite.figures import attention_grid_figure, flywheel_figure, training_curve_figure
from .flywheel.annotator import SimAnnotator, feature_router, pretrain_biased
from .flywheel.loop import initialize_state, run_flywheel, save_state
from .flywheel.server import ServerContext, create_app
from .protocol.captions import assemble_caption
from .protocol.questions import build_protocol
from .synthcorpus.corpus import CorpusConfig, generate_corpus


def _default_out(command: str) -> Path:
    root = os.environ.get("DARING_FORGE_HOME", "runs")
    return Path(root) / command


def _load_config(config_path: str | None) -> dict:
    if not config_path:
        return {}
    with open(config_path) as fh:
        return json.load(fh)


def _resolve(config_file: dict, command: str, **flags) -> dict:
    resolved = dict(config_file.get(command, config_file))
    for key, value in flags.items():
        if value is not None:
            resolved[key] = value
    return resolved


def _lock(out: Path, command: str, resolved: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.lock.json", "w") as fh:
        json.dump({command: resolved}, fh, indent=2, sort_keys=True)


def _emit(payload: dict, as_json: bool, human: str) -> None:
    if as_json:
        click.echo(json.dumps(payload, sort_keys=True))
    else:
        click.echo(human)


@click.group()
def cli():
    """Synthetic-corpus diffusion training and annotation flywheel."""


@cli.command("gen-data")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--n", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
@click.option("--width", type=int, default=None)
@click.option("--height", type=int, default=None)
@click.option("--weights", "weights_path", type=click.Path(exists=True), default=None)
@click.option("--json", "as_json", is_flag=True, default=False)
def gen_data(config_path, n, seed, out, width, height, weights_path, as_json):
    """Render a corpus with manifest."""
    cfg = _resolve(
        _load_config(config_path), "gen-data",
        n=n, seed=seed, out=out, width=width, height=height, weights=weights_path,
    )
    cfg.setdefault("n", 100)
    cfg.setdefault("seed", 0)
    cfg.setdefault("width", 64)
    cfg.setdefault("height", 64)
    out_dir = Path(cfg.get("out") or _default_out("corpus"))
    cfg["out"] = str(out_dir)
    weights = None
    if cfg.get("weights"):
        with open(cfg["weights"]) as fh:
            weights = json.load(fh)
    _lock(out_dir, "gen-data", cfg)
    records = generate_corpus(
        cfg["n"], out_dir, seed=cfg["seed"], weights=weights,
        config=CorpusConfig(width=cfg["width"], height=cfg["height"]),
    )
    _emit({"n": len(records), "out": str(out_dir)}, as_json,
          f"wrote {len(records)} samples to {out_dir}")


@cli.group()
def flywheel():
    """Annotation flywheel commands."""


@flywheel.command("run")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--corpus", type=click.Path(exists=True), default=None)
@click.option("--source", type=str, default=None, help="oracle | noisy_oracle:p")
@click.option("--k", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--max-iterations", "max_iterations", type=int, default=None)
@click.option("--stop", type=click.Choice(["all", "mean"]), default=None)
@click.option("--threshold", type=float, default=None)
@click.option("--pretrain-biased", "pretrain_n", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
@click.option("--json", "as_json", is_flag=True, default=False)
def flywheel_run(config_path, corpus, source, k, seed, max_iterations, stop, threshold,
                 pretrain_n, out, as_json):
    """Run the loop to completion with a simulated label source."""
    cfg = _resolve(
        _load_config(config_path), "flywheel-run",
        corpus=corpus, source=source, k=k, seed=seed, max_iterations=max_iterations,
        stop=stop, threshold=threshold, pretrain_biased=pretrain_n, out=out,
    )
    if not cfg.get("corpus"):
        raise click.UsageError("--corpus is required")
    cfg.setdefault("source", "oracle")
    cfg.setdefault("k", 200)
    cfg.setdefault("seed", 0)
    cfg.setdefault("max_iterations", 10)
    cfg.setdefault("stop", "all")
    cfg.setdefault("threshold", 0.85)
    out_dir = Path(cfg.get("out") or _default_out("flywheel"))
    cfg["out"] = str(out_dir)
    _lock(out_dir, "flywheel-run", cfg)

    protocol = build_protocol()
    state = initialize_state(cfg["corpus"], protocol, k=cfg["k"], seed=cfg["seed"])
    state.threshold = cfg["threshold"]
    if cfg.get("pretrain_biased"):
        pre = pretrain_biased(SimAnnotator(seed=cfg["seed"], router=feature_router(protocol)), state.pool, protocol, n=cfg["pretrain_biased"])
        state = initialize_state(cfg["corpus"], protocol, k=cfg["k"], seed=cfg["seed"], annotator=pre)
        state.threshold = cfg["threshold"]
    state, summary = run_flywheel(
        state, source=cfg["source"], max_iterations=cfg["max_iterations"], stop=cfg["stop"]
    )
    save_state(state, out_dir / "pool")
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    flywheel_figure(
        [r.per_category for r in state.acc_history],
        state.manual_history,
        state.threshold,
        out_dir / "flywheel.png",
    )
    _emit(summary, as_json,
          f"flywheel done in {summary['iterations']} iterations; "
          f"mean accuracy {summary['final_mean_accuracy']:.3f}; "
          f"manual labels {summary['manual_labels']} of {summary['full_labeling']} "
          f"({100*summary['manual_fraction']:.1f}%)")


@flywheel.command("serve")
@click.option("--corpus", type=click.Path(exists=True), required=True)
@click.option("--k", type=int, default=200)
@click.option("--seed", type=int, default=0)
@click.option("--host", type=str, default="127.0.0.1")
@click.option("--port", type=int, default=8000)
@click.option("--static", "static_dir", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), default=None)
def flywheel_serve(corpus, k, seed, host, port, static_dir, out):
    """Serve the console API (console label source)."""
    import uvicorn

    out_dir = Path(out or _default_out("flywheel-serve"))
    _lock(out_dir, "flywheel-serve", {"corpus": corpus, "k": k, "seed": seed, "port": port})
    protocol = build_protocol()
    state = initialize_state(corpus, protocol, k=k, seed=seed)
    context = ServerContext(state, corpus, save_dir=out_dir / "pool")
    if static_dir is None:
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        static_dir = bundled if bundled.exists() else None
    app = create_app(context, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port)


def _train_config_from(cfg: dict) -> TrainConfig:
    model = ModelConfig(
        base_channels=cfg.get("base_channels", 16),
        d_cond=cfg.get("d_cond", 48),
        heads=cfg.get("heads", 2),
        dtype=cfg.get("dtype", "float32"),
    )
    return TrainConfig(
        model=model,
        timesteps=cfg.get("timesteps", 200),
        alpha=cfg.get("alpha", 1.0),
        beta=cfg.get("beta", 1.0),
        rlw=cfg.get("rlw", False),
        hola_enabled=cfg.get("hola_enabled", True),
        hola_term1=cfg.get("hola_term1", True),
        hola_term2=cfg.get("hola_term2", True),
        caption_mode=cfg.get("caption_mode", "decomposed"),
        caption_dropout=cfg.get("caption_dropout", 0.1),
        lr=cfg.get("lr", 2e-3),
        weight_decay=cfg.get("weight_decay", 0.0),
        batch_size=cfg.get("batch_size", 8),
        seed=cfg.get("seed", 0),
        offset_noise=cfg.get("offset_noise", 0.0),
    )


@cli.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--corpus", type=click.Path(exists=True), default=None)
@click.option("--steps", type=int, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--beta", type=float, default=None)
@click.option("--rlw/--no-rlw", default=None)
@click.option("--caption-mode", type=click.Choice(["decomposed", "continuous"]), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--dtype", type=click.Choice(["float32", "float64"]), default=None)
@click.option("--out", type=click.Path(), default=None)
@click.option("--json", "as_json", is_flag=True, default=False)
def train(config_path, corpus, steps, alpha, beta, rlw, caption_mode, seed, lr,
          batch_size, dtype, out, as_json):
    """Train the text-conditioned diffusion model."""
    cfg = _resolve(
        _load_config(config_path), "train",
        corpus=corpus, steps=steps, alpha=alpha, beta=beta, rlw=rlw,
        caption_mode=caption_mode, seed=seed, lr=lr, batch_size=batch_size,
        dtype=dtype, out=out,
    )
    if not cfg.get("corpus"):
        raise click.UsageError("--corpus is required")
    cfg.setdefault("steps", 2000)
    out_dir = Path(cfg.get("out") or _default_out("train"))
    cfg["out"] = str(out_dir)
    _lock(out_dir, "train", cfg)

    protocol = build_protocol()
    tc = _train_config_from(cfg)
    items = load_training_items(cfg["corpus"], protocol, tc)
    trainer = Trainer(tc, items, protocol)
    log = trainer.run(cfg["steps"], log_path=out_dir / "log.jsonl")
    trainer.save(out_dir / "checkpoint.pt")
    training_curve_figure(log, out_dir / "loss.png")
    last = log[-1]
    _emit(
        {"steps": trainer.step_count, "final": last, "checkpoint": str(out_dir / "checkpoint.pt")},
        as_json,
        f"trained {trainer.step_count} steps; final noise loss {last['loss_noise']:.4f}; "
        f"checkpoint at {out_dir / 'checkpoint.pt'}",
    )


@cli.command("sample")
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--n", type=int, default=8)
@click.option("--steps", type=int, default=50)
@click.option("--seed", type=int, default=0)
@click.option("--prompt-seed", type=int, default=0)
@click.option("--out", type=click.Path(), default=None)
@click.option("--json", "as_json", is_flag=True, default=False)
def sample_cmd(ckpt, n, steps, seed, prompt_seed, out, as_json):
    """Sample images from a checkpoint for fresh prompts."""
    from PIL import Image

    from .evalsuite.semantic import sample_eval_attrs

    out_dir = Path(out or _default_out("samples"))
    _lock(out_dir, "sample", {"ckpt": ckpt, "n": n, "steps": steps, "seed": seed,
                              "prompt_seed": prompt_seed, "out": str(out_dir)})
    trainer = load_checkpoint(ckpt)
    protocol = build_protocol()
    rng = np.random.default_rng([prompt_seed, 0x5EED])
    prompts = [sample_eval_attrs(rng) for _ in range(n)]
    captions = [assemble_caption(a, protocol, 0.0, seed=i) for i, a in enumerate(prompts)]
    images, _ = sample_images(trainer.model, trainer.schedule, captions, steps=steps, seed=seed)
    meta = []
    for i, (img, attrs) in enumerate(zip(images, prompts)):
        path = out_dir / f"sample_{i:03d}.png"
        Image.fromarray(np.clip(np.round(img * 255), 0, 255).astype(np.uint8)).save(path)
        meta.append({"file": path.name, "attrs": attrs.to_json()})
    with open(out_dir / "samples.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    _emit({"n": n, "out": str(out_dir)}, as_json, f"wrote {n} samples to {out_dir}")


@cli.command("eval")
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--corpus", type=click.Path(exists=True), required=True)
@click.option("--n-prompts", type=int, default=256)
@click.option("--sample-steps", type=int, default=50)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), default=None)
@click.option("--json", "as_json", is_flag=True, default=False)
def eval_cmd(ckpt, corpus, n_prompts, sample_steps, seed, out, as_json):
    """Semantic accuracy + attention IoU + feature distance for a checkpoint."""
    out_dir = Path(out or _default_out("eval"))
    _lock(out_dir, "eval", {"ckpt": ckpt, "corpus": corpus, "n_prompts": n_prompts,
                            "sample_steps": sample_steps, "seed": seed, "out": str(out_dir)})
    protocol = build_protocol()
    trainer = load_checkpoint(ckpt)
    trainer.items = load_training_items(corpus, protocol, trainer.config)
    metrics = evaluate_trained(trainer, protocol, n_prompts, sample_steps, seed)
    with open(out_dir / "eval.json", "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
    _emit(metrics, as_json,
          f"acc_all={metrics['acc_all']:.3f} (obj {metrics['acc_obj']:.3f}, "
          f"tex {metrics['acc_tex']:.3f}, shape {metrics['acc_shape']:.3f}); "
          f"attn IoU {metrics['attn_iou']:.3f}; feature distance {metrics['feat_dist']:.4f}")


@cli.command("ablate")
@click.option("--corpus", type=click.Path(exists=True), required=True)
@click.option("--configs", type=str, default="continuous-caption,discretized,discretized+HOLA")
@click.option("--seeds", type=str, default="0,1,2")
@click.option("--steps", type=int, default=2000)
@click.option("--n-prompts", type=int, default=256)
@click.option("--sample-steps", type=int, default=50)
@click.option("--out", type=click.Path(), default=None)
@click.option("--json", "as_json", is_flag=True, default=False)
def ablate(corpus, configs, seeds, steps, n_prompts, sample_steps, out, as_json):
    """Train and score the named ablation grid."""
    out_dir = Path(out or _default_out("ablation"))
    names = [c.strip() for c in configs.split(",") if c.strip()]
    seed_tuple = tuple(int(s) for s in seeds.split(","))
    _lock(out_dir, "ablate", {"corpus": corpus, "configs": names, "seeds": list(seed_tuple),
                              "steps": steps, "n_prompts": n_prompts,
                              "sample_steps": sample_steps, "out": str(out_dir)})
    result = ablation_run(
        names, corpus, out_dir, seeds=seed_tuple, steps=steps,
        n_prompts=n_prompts, sample_steps=sample_steps,
    )
    _emit({"rows": result.rows}, as_json, result.to_markdown())


@cli.command("viz-attn")
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--prompt-seed", type=int, default=0)
@click.option("--t-frac", type=float, default=0.25)
@click.option("--out", type=click.Path(), default=None)
@click.option("--json", "as_json", is_flag=True, default=False)
def viz_attn(ckpt, prompt_seed, t_frac, out, as_json):
    """Dump attention maps (NPZ + heatmap grid) for one prompt."""
    import torch

    from .daring.schedule import add_noise
    from .daring.training import collate_batch
    from .evalsuite.semantic import sample_eval_attrs
    from .synthcorpus.render import render_sample

    out_dir = Path(out or _default_out("viz-attn"))
    _lock(out_dir, "viz-attn", {"ckpt": ckpt, "prompt_seed": prompt_seed,
                                "t_frac": t_frac, "out": str(out_dir)})
    trainer = load_checkpoint(ckpt)
    protocol = build_protocol()
    rng = np.random.default_rng([prompt_seed, 0x5EED])
    attrs = sample_eval_attrs(rng)
    caption = assemble_caption(attrs, protocol, 0.0, seed=0)
    rendered = render_sample(attrs, geometry_seed=prompt_seed,
                             width=trainer.config.model.image_size,
                             height=trainer.config.model.image_size)
    dtype = trainer.config.model.torch_dtype()
    img = torch.from_numpy(rendered.image.transpose(2, 0, 1)).to(dtype) * 2 - 1
    tokens, positions, key_mask = collate_batch([caption], trainer.config.model.max_tokens, dtype)
    t = int(trainer.config.timesteps * t_frac)
    gen = torch.Generator().manual_seed(prompt_seed)
    eps = torch.randn(img.shape, generator=gen, dtype=dtype)
    z = add_noise(img.unsqueeze(0), torch.tensor([t]), eps.unsqueeze(0), trainer.schedule)
    with torch.no_grad():
        _, bundles = trainer.model(z, torch.tensor([t]), tokens, key_mask, positions)

    from .daring.attention import as_bundles

    wrapped = as_bundles(bundles)
    arrays = {}
    for layer, bundle in wrapped.items():
        for head in range(bundle.maps.shape[0]):
            for tok in range(len(caption.tokens)):
                arrays[f"{layer}_head{head}_token{tok}"] = bundle.maps[head, :, tok].numpy()
    np.savez(out_dir / "attention.npz", **arrays)
    coarsest = wrapped[trainer.model.coarsest_attention_layer()]
    head_mean = coarsest.head_mean().numpy().T  # [T, S]
    attention_grid_figure(head_mean, caption.words(), coarsest.resolution, out_dir / "attention.png")
    _emit({"out": str(out_dir), "layers": sorted(bundles)}, as_json,
          f"attention dump for layers {sorted(bundles)} written to {out_dir}")


def main() -> None:
    try:
        cli.main(standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        if exc.ctx is not None:
            click.echo(exc.ctx.get_usage(), err=True)
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except click.Abort:
        sys.exit(1)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except Exception as exc:  # runtime failure
        click.echo(f"runtime failure: {exc}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    main()
