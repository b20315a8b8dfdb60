import json
import subprocess
import sys

import pytest

BASE = [sys.executable, "-m", "daring_forge.cli"]


def run_cli(*args, **kw):
    return subprocess.run(BASE + list(args), capture_output=True, text=True, **kw)


@pytest.fixture(scope="module")
def cli_corpus(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "corpus"
    res = run_cli("gen-data", "--n", "150", "--seed", "7", "--out", str(path))
    assert res.returncode == 0, res.stderr
    return path


class TestGenData:
    def test_rerun_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run_cli("gen-data", "--n", "6", "--seed", "3", "--out", str(a)).returncode == 0
        assert run_cli("gen-data", "--n", "6", "--seed", "3", "--out", str(b)).returncode == 0
        assert (a / "manifest.jsonl").read_bytes() == (b / "manifest.jsonl").read_bytes()
        assert (a / "images" / "000003.png").read_bytes() == (b / "images" / "000003.png").read_bytes()

    def test_config_lock_written(self, cli_corpus):
        lock = json.loads((cli_corpus / "config.lock.json").read_text())
        assert lock["gen-data"]["n"] == 150
        assert lock["gen-data"]["seed"] == 7

    def test_rerun_from_lock_identical(self, cli_corpus, tmp_path):
        out = tmp_path / "relock"
        lock_path = cli_corpus / "config.lock.json"
        res = run_cli("gen-data", "--config", str(lock_path), "--out", str(out))
        assert res.returncode == 0
        assert (out / "manifest.jsonl").read_bytes() == (cli_corpus / "manifest.jsonl").read_bytes()

    def test_json_flag(self, tmp_path):
        res = run_cli("gen-data", "--n", "3", "--out", str(tmp_path / "j"), "--json")
        body = json.loads(res.stdout)
        assert body["n"] == 3


class TestExitCodes:
    def test_unknown_flag_exits_1(self):
        res = run_cli("gen-data", "--frobnicate", "1")
        assert res.returncode == 1
        assert "Usage" in res.stderr or "usage" in res.stderr

    def test_missing_required_exits_1(self):
        res = run_cli("train")
        assert res.returncode == 1

    def test_validation_error_exits_1(self, tmp_path):
        res = run_cli("gen-data", "--n", "0", "--out", str(tmp_path / "x"))
        assert res.returncode == 1

    def test_unknown_command_exits_1(self):
        assert run_cli("explode").returncode == 1


class TestFlywheelRun:
    def test_oracle_run_writes_report_and_figure(self, cli_corpus, tmp_path):
        out = tmp_path / "fly"
        res = run_cli(
            "flywheel", "run", "--corpus", str(cli_corpus), "--source", "oracle",
            "--k", "30", "--out", str(out), "--json",
        )
        assert res.returncode == 0, res.stderr
        summary = json.loads(res.stdout)
        assert summary["final_mean_accuracy"] >= 0.85
        assert (out / "summary.json").exists()
        assert (out / "flywheel.png").exists()
        assert (out / "pool" / "state.json").exists()
        assert (out / "pool" / "manifest.jsonl").exists()


class TestTrainEvalPipeline:
    def test_train_then_eval_smoke(self, cli_corpus, tmp_path):
        out = tmp_path / "train"
        res = run_cli(
            "train", "--corpus", str(cli_corpus), "--steps", "30", "--beta", "1.0",
            "--batch-size", "2", "--out", str(out), "--json",
            "--config", "/dev/null" if False else str(_small_model_config(tmp_path)),
        )
        assert res.returncode == 0, res.stderr
        assert (out / "checkpoint.pt").exists()
        assert (out / "log.jsonl").exists()
        assert (out / "loss.png").exists()
        log_lines = (out / "log.jsonl").read_text().strip().splitlines()
        assert len(log_lines) == 30
        rec = json.loads(log_lines[-1])
        assert {"step", "loss_noise", "loss_hola", "loss_total"} <= set(rec)

        ev = tmp_path / "eval"
        res = run_cli(
            "eval", "--ckpt", str(out / "checkpoint.pt"), "--corpus", str(cli_corpus),
            "--n-prompts", "16", "--sample-steps", "10", "--out", str(ev), "--json",
        )
        assert res.returncode == 0, res.stderr
        metrics = json.loads(res.stdout)
        assert {"acc_obj", "acc_tex", "acc_shape", "acc_all", "attn_iou", "feat_dist"} <= set(metrics)
        assert (ev / "eval.json").exists()

        sm = tmp_path / "samples"
        res = run_cli(
            "sample", "--ckpt", str(out / "checkpoint.pt"), "--n", "2", "--steps", "10",
            "--out", str(sm), "--json",
        )
        assert res.returncode == 0, res.stderr
        assert (sm / "sample_000.png").exists()
        assert (sm / "samples.json").exists()

        vz = tmp_path / "viz"
        res = run_cli("viz-attn", "--ckpt", str(out / "checkpoint.pt"), "--out", str(vz), "--json")
        assert res.returncode == 0, res.stderr
        assert (vz / "attention.npz").exists()
        assert (vz / "attention.png").exists()


def _small_model_config(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(json.dumps({"train": {"base_channels": 8, "d_cond": 16, "dtype": "float32"}}))
    return path
