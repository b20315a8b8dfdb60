"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Training-dependent criteria share one module-scoped grid of trained models
(five configs, three seeds each, fixed budget). Budgets and regression
bounds are frozen from calibration runs; tolerances come straight from the
criteria.
"""

import time
from dataclasses import replace

import numpy as np
import pytest
import torch

from daring_forge.daring.model import ModelConfig
from daring_forge.daring.training import TrainConfig, Trainer, load_training_items
from daring_forge.evalsuite.ablation import evaluate_trained, make_train_config
from daring_forge.flywheel import (
    FilterThresholds,
    dedup_insert,
    filter_chain,
    initialize_state,
    run_flywheel,
)
from daring_forge.flywheel.loop import PoolRecord
from daring_forge.protocol import build_protocol
from daring_forge.synthcorpus import exhaustive_attribute_grid, generate_corpus, invert_render, render_sample

# frozen training budget for the ordering criteria (calibrated on 1 CPU core)
TRAIN_STEPS = 1500
N_PROMPTS = 256
SAMPLE_STEPS = 40
SEEDS = (0, 1, 2)
CORPUS_N = 128
ORDERING_CONFIGS = ("continuous-caption", "discretized", "discretized+HOLA", "term1-only", "rlw")


def _report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def protocol():
    return build_protocol()


@pytest.fixture(scope="module")
def train_corpus(tmp_path_factory):
    path = tmp_path_factory.mktemp("accept_train")
    generate_corpus(CORPUS_N, path, seed=21)
    return path


@pytest.fixture(scope="module")
def grid_metrics(train_corpus, protocol):
    """Train every ordering config per seed once; all ordering criteria read this."""
    base = TrainConfig(model=ModelConfig(dtype="float32"), batch_size=8, lr=2e-3)
    results: dict[str, list[dict]] = {}
    t0 = time.time()
    for name in ORDERING_CONFIGS:
        per_seed = []
        for seed in SEEDS:
            cfg = replace(make_train_config(name, base), seed=seed)
            items = load_training_items(train_corpus, protocol, cfg)
            trainer = Trainer(cfg, items, protocol)
            trainer.run(TRAIN_STEPS)
            per_seed.append(evaluate_trained(trainer, protocol, N_PROMPTS, SAMPLE_STEPS, seed))
        results[name] = per_seed
    results["_elapsed"] = time.time() - t0
    return results


def _mean(results, name, key):
    return float(np.mean([m[key] for m in results[name]]))


class TestLossCorrectness:
    def test_hola_oracle_and_gradients(self, train_corpus, protocol):
        from .test_daring_losses import scalar_hola_oracle
        from .test_daring_training import SMALL64, _check_gradients, _fixed_eval_closure

        start = time.time()
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(100):
            group_maps, group_masks = {}, {}
            for gi in range(int(rng.integers(1, 4))):
                width = int(rng.integers(1, 4))
                group_maps[gi] = torch.tensor(rng.random((width, 16)))
                group_masks[gi] = torch.tensor((rng.random(16) > 0.5).astype(float))
            from daring_forge.daring import hola_loss

            worst = max(worst, abs(float(hola_loss(group_maps, group_masks))
                                   - scalar_hola_oracle(group_maps, group_masks)))
        ok_oracle = worst <= 1e-10

        cfg = TrainConfig(model=SMALL64, seed=13, batch_size=2)
        items = load_training_items(train_corpus, protocol, cfg)[:2]
        trainer = Trainer(cfg, items, protocol)
        trainer.run(2)
        closure = _fixed_eval_closure(trainer, protocol)
        for kind in ("noise", "hola", "combined"):
            _check_gradients(trainer, closure, kind, n_coords=17, rel_tol=1e-4)
        elapsed = time.time() - start
        _report(
            "loss correctness",
            ok_oracle and elapsed < 60,
            f"oracle max |delta| {worst:.2e} (<=1e-10); 51 coords gradient-checked at rel 1e-4; "
            f"runtime {elapsed:.1f}s (<60s)",
        )


class TestTrivialAlignments:
    def test_hola_zero_at_exact_alignment(self):
        from daring_forge.daring import hola_loss

        masks = {0: torch.tensor([1.0, 0.0, 0.25, 0.5]), 1: torch.tensor([0.0, 1.0, 0.0, 1.0])}
        maps = {gi: m.unsqueeze(0).repeat(2, 1) for gi, m in masks.items()}
        value = float(hola_loss(maps, masks))
        _report("trivial alignment zero", value == 0.0, f"loss at exact alignment = {value}")

    def test_beta_zero_bitwise_100_steps(self, train_corpus, protocol):
        from .test_daring_training import SMALL64

        trainers = []
        for hola_enabled in (True, False):
            cfg = TrainConfig(model=SMALL64, seed=17, batch_size=2, beta=0.0, hola_enabled=hola_enabled)
            items = load_training_items(train_corpus, protocol, cfg)[:8]
            trainer = Trainer(cfg, items, protocol)
            trainer.run(100)
            trainers.append(trainer)
        same = all(
            torch.equal(a, b)
            for a, b in zip(trainers[0].model.parameters(), trainers[1].model.parameters())
        )
        _report("beta=0 bitwise trajectory", same, "100 steps, parameters bit-identical to the supervision-free build")


class TestAttentionInvariants:
    def test_rows_sum_to_one_500_steps(self, train_corpus, protocol):
        cfg = TrainConfig(
            model=ModelConfig(base_channels=8, d_cond=16, heads=2, dtype="float32"),
            seed=19, batch_size=4,
        )
        items = load_training_items(train_corpus, protocol, cfg)[:16]
        trainer = Trainer(cfg, items, protocol)
        worst = 0.0

        def probe(bundles):
            nonlocal worst
            for maps in bundles.values():
                worst = max(worst, float((maps.sum(dim=-1) - 1.0).abs().max().detach()))

        trainer.bundle_probe = probe
        trainer.run(500)
        _report("attention row sums", worst <= 1e-5, f"max |row sum - 1| = {worst:.2e} over 500 steps")


class TestRefocusingEffect:
    def test_orderings(self, grid_metrics):
        cont = _mean(grid_metrics, "continuous-caption", "acc_all")
        disc = _mean(grid_metrics, "discretized", "acc_all")
        hola = _mean(grid_metrics, "discretized+HOLA", "acc_all")
        iou_hola = _mean(grid_metrics, "discretized+HOLA", "attn_iou")
        iou_base = _mean(grid_metrics, "discretized", "attn_iou")
        elapsed = grid_metrics["_elapsed"]
        ok = hola > disc > cont and (iou_hola - iou_base) >= 0.05 and elapsed <= 8 * 3600
        _report(
            "refocusing effect",
            ok,
            f"acc_all means: continuous {cont:.3f} < discretized {disc:.3f} < +HOLA {hola:.3f}; "
            f"attention IoU gap {iou_hola - iou_base:.3f} (>=0.05); grid runtime {elapsed/60:.0f} min (<=8h CPU)",
        )

    def test_argmax_refocusing(self, grid_metrics):
        rate_hola = _mean(grid_metrics, "discretized+HOLA", "argmax_in_mask")
        rate_base = _mean(grid_metrics, "discretized", "argmax_in_mask")
        ok = rate_hola >= 0.8 and rate_hola > rate_base
        _report(
            "argmax refocusing",
            ok,
            f"argmax-in-mask {rate_hola:.3f} (>=0.8) vs beta=0 {rate_base:.3f}",
        )


class TestLossTermAblation:
    def test_term2_helps_texture(self, grid_metrics):
        both = _mean(grid_metrics, "discretized+HOLA", "acc_tex")
        term1 = _mean(grid_metrics, "term1-only", "acc_tex")
        _report(
            "loss-term ablation",
            both >= term1,
            f"acc_tex term1+term2 {both:.3f} >= term1-only {term1:.3f} (seed mean)",
        )


class TestOptimizationAblation:
    def test_fixed_beta_beats_rlw(self, grid_metrics):
        fixed = _mean(grid_metrics, "discretized+HOLA", "acc_all")
        rlw = _mean(grid_metrics, "rlw", "acc_all")
        _report(
            "optimization ablation",
            fixed > rlw,
            f"acc_all fixed-beta {fixed:.3f} > RLW-only {rlw:.3f} (seed mean)",
        )


class TestFlywheelConvergence:
    @pytest.fixture(scope="class")
    def fly_corpus(self, tmp_path_factory):
        path = tmp_path_factory.mktemp("accept_fly")
        generate_corpus(2200, path, seed=202)
        return path

    def test_converges_with_budget(self, fly_corpus, protocol):
        start = time.time()
        state = initialize_state(fly_corpus, protocol, k=200, seed=0)
        state, summary = run_flywheel(state, source="oracle", max_iterations=10)
        elapsed = time.time() - start

        exited: set[int] = set()
        monotone = True
        for sel in state.selected_history:
            if exited & set(sel):
                monotone = False
            exited |= set(protocol.category_ids()) - set(sel)
        for cat in protocol.category_ids():
            counts = [m.get(cat, 0) for m in state.manual_history]
            gone = False
            for c in counts:
                if c == 0:
                    gone = True
                elif gone:
                    monotone = False

        ok = (
            summary["final_mean_accuracy"] >= 0.85
            and summary["manual_fraction"] <= 0.30
            and monotone
            and elapsed < 120
        )
        _report(
            "flywheel convergence",
            ok,
            f"mean accuracy {summary['final_mean_accuracy']:.3f} (>=0.85) in {summary['iterations']} iterations; "
            f"manual {summary['manual_labels']}/{summary['full_labeling']} = "
            f"{summary['manual_fraction']:.1%} (<=30%); exits monotone: {monotone}; "
            f"runtime {elapsed:.0f}s (<120s)",
        )

    def test_deterministic_given_seed(self, fly_corpus, protocol):
        histories = []
        for _ in range(2):
            state = initialize_state(fly_corpus, protocol, k=100, eval_k=100, seed=3)
            state, _ = run_flywheel(state, source="oracle", max_iterations=3)
            histories.append([r.per_category for r in state.acc_history])
        _report(
            "flywheel determinism",
            histories[0] == histories[1],
            "two runs from the same seed produce identical accuracy histories",
        )


class TestDedupFilterExactness:
    def test_bit_flip_fixtures(self):
        base = 0x0123456789ABCDEF
        ok = True
        for flips, want_accept in ((1, False), (2, False), (3, True), (4, True)):
            for trial in range(25):
                rng = np.random.default_rng(trial)
                positions = rng.choice(64, size=flips, replace=False)
                flipped = base
                for b in positions:
                    flipped ^= 1 << int(b)
                pool = [PoolRecord("base", base, np.zeros(1), {})]
                accepted, _ = dedup_insert(pool, PoolRecord("x", flipped, np.zeros(1), {}))
                ok &= accepted == want_accept
        _report(
            "dedup exactness",
            ok,
            "100 constructed bit-flip fixtures: distance <3 rejected, >=3 accepted",
        )

    def test_filter_boundaries(self):
        full = FilterThresholds.at_scale(1.0)
        cases = [
            ({"width": 640, "height": 1280, "face_box": [0, 0, 224, 224]}, True, None),
            ({"width": 640, "height": 1280, "face_box": [0, 0, 223, 224]}, False, "face_too_small"),
            ({"width": 640, "height": 1280, "face_box": [0, 0, 224, 223]}, False, "face_too_small"),
            ({"width": 639, "height": 1280, "face_box": [0, 0, 224, 224]}, False, "image_too_small"),
            ({"width": 640, "height": 1279, "face_box": [0, 0, 224, 224]}, False, "image_too_small"),
            ({"width": 640, "height": 1280, "person_count": 0}, False, "no_person"),
        ]
        ok = True
        for meta, keep, reason in cases:
            verdict = filter_chain(meta, full)
            ok &= verdict.keep == keep and verdict.reason == reason
        _report("filter boundaries", ok, "one-pixel-under fixtures drop with the stated reason codes")


class TestOracleExactness:
    def test_round_trip_exhaustive(self):
        grid = list(exhaustive_attribute_grid())
        bad = 0
        for attrs in grid:
            sample = render_sample(attrs, geometry_seed=7)
            if invert_render(sample.image, sample.masks).attrs != attrs:
                bad += 1
        _report(
            "oracle exactness",
            bad == 0,
            f"{len(grid) - bad}/{len(grid)} exact recoveries over the exhaustive grid",
        )
