"""The annotation flywheel state machine.

A fixed eval set with full human ground truth measures the annotator each
iteration; categories under the accuracy trigger (default 0.85) get human
labels on K freshly sampled pool images, the annotator refits on everything
accumulated so far, and the loop exits once no category is selected (or the
mean crosses the trigger, behind a flag). A final pass labels the whole pool
with the finished annotator; human-sourced answers are never overwritten.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..hashing import hamming
from ..protocol.questions import LabelProtocol, ask_questions
from ..synthcorpus.attributes import AttributeSet
from ..synthcorpus.corpus import load_manifest, load_sample
from ..synthcorpus.features import featurize_detailed
from .annotator import SimAnnotator, feature_router
from .filters import FilterThresholds, filter_chain

DEDUP_MIN_DISTANCE = 3
DEFAULT_THRESHOLD = 0.85


class FlywheelError(RuntimeError):
    pass


@dataclass
class PoolRecord:
    sample_id: str
    phash: int
    features: np.ndarray
    truth: dict[int, str]                       # oracle view (gate-open questions only)
    answers: dict[int, tuple[str, str]] = field(default_factory=dict)  # qid -> (value, source)
    verdict: str = "keep"
    drop_reason: str | None = None

    def set_answer(self, qid: int, value: str, source: str) -> None:
        current = self.answers.get(qid)
        if current is not None and current[1] == "human" and source == "model":
            return  # human labels take precedence, always
        self.answers[qid] = (value, source)

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "phash": self.phash,
            "features": self.features.tolist(),
            "truth": {str(k): v for k, v in self.truth.items()},
            "answers": {str(k): list(v) for k, v in self.answers.items()},
            "verdict": self.verdict,
            "drop_reason": self.drop_reason,
        }

    @classmethod
    def from_json(cls, data: dict) -> "PoolRecord":
        return cls(
            sample_id=data["sample_id"],
            phash=data["phash"],
            features=np.asarray(data["features"]),
            truth={int(k): v for k, v in data["truth"].items()},
            answers={int(k): tuple(v) for k, v in data["answers"].items()},
            verdict=data["verdict"],
            drop_reason=data["drop_reason"],
        )


@dataclass
class AccuracyReport:
    per_category: dict[int, float]
    counts: dict[int, tuple[int, int]] = field(default_factory=dict)  # qid -> (correct, total)

    @property
    def mean(self) -> float:
        vals = list(self.per_category.values())
        return float(np.mean(vals)) if vals else 0.0


def dedup_insert(pool: list[PoolRecord], record: PoolRecord) -> tuple[bool, str | None]:
    """Accept iff the Hamming distance to every pooled hash is >= 3; first wins."""
    for existing in pool:
        if hamming(existing.phash, record.phash) < DEDUP_MIN_DISTANCE:
            return False, existing.sample_id
    pool.append(record)
    return True, None


def build_pool(
    corpus_dir: str | Path,
    protocol: LabelProtocol,
    thresholds: FilterThresholds | None = None,
) -> tuple[list[PoolRecord], list[PoolRecord]]:
    """Filter + dedup the corpus into the working pool; returns (kept, dropped)."""
    manifest = load_manifest(corpus_dir)
    if thresholds is None and manifest:
        meta = manifest[0]["meta"]
        thresholds = FilterThresholds.for_corpus(meta["width"], meta["height"])
    kept: list[PoolRecord] = []
    dropped: list[PoolRecord] = []
    for rec in manifest:
        sample = load_sample(corpus_dir, rec)
        attrs = AttributeSet.from_json(rec["attrs"])
        record = PoolRecord(
            sample_id=rec["id"],
            phash=rec["meta"]["phash"],
            features=featurize_detailed(sample.image, sample.masks),
            truth=ask_questions(attrs, protocol),
        )
        verdict = filter_chain(rec["meta"], thresholds or FilterThresholds())
        if not verdict.keep:
            record.verdict, record.drop_reason = "drop", verdict.reason
            dropped.append(record)
            continue
        accepted, dup_of = dedup_insert(kept, record)
        if not accepted:
            record.verdict, record.drop_reason = "drop", f"duplicate_of:{dup_of}"
            dropped.append(record)
    return kept, dropped


@dataclass
class FlywheelState:
    protocol: LabelProtocol
    pool: list[PoolRecord]
    eval_ids: list[str]
    iteration: int = 0
    acc_history: list[AccuracyReport] = field(default_factory=list)
    annotator: SimAnnotator = field(default_factory=SimAnnotator)
    manual_label_count: dict[int, int] = field(default_factory=dict)
    manual_history: list[dict[int, int]] = field(default_factory=list)
    selected_history: list[list[int]] = field(default_factory=list)
    training_labels: dict[int, list[tuple[str, str]]] = field(default_factory=dict)  # qid -> [(sample_id, answer)]
    seed: int = 0
    k_per_iteration: int = 200
    threshold: float = DEFAULT_THRESHOLD
    warning: bool = False
    awaiting: bool = False
    pending_tasks: list[dict] = field(default_factory=list)

    def eval_records(self) -> list[PoolRecord]:
        by_id = {r.sample_id: r for r in self.pool}
        return [by_id[i] for i in self.eval_ids]

    def record(self, sample_id: str) -> PoolRecord:
        for r in self.pool:
            if r.sample_id == sample_id:
                return r
        raise KeyError(sample_id)

    def eval_label_count(self) -> int:
        return sum(len(r.truth) for r in self.eval_records())

    def full_label_count(self) -> int:
        return sum(len(r.truth) for r in self.pool)

    def manual_total(self) -> int:
        return sum(self.manual_label_count.values())


def initialize_state(
    corpus_dir: str | Path,
    protocol: LabelProtocol,
    k: int = 200,
    eval_k: int | None = None,
    seed: int = 0,
    annotator: SimAnnotator | None = None,
    thresholds: FilterThresholds | None = None,
) -> FlywheelState:
    """Build the pool, draw the fixed eval set, and score the initial annotator."""
    pool, _ = build_pool(corpus_dir, protocol, thresholds)
    if not pool:
        raise FlywheelError("empty pool after filtering")
    eval_k = min(eval_k if eval_k is not None else k, len(pool))
    rng = np.random.default_rng([seed, 0xE7A1])
    eval_ids = [pool[i].sample_id for i in rng.choice(len(pool), size=eval_k, replace=False)]
    # eval-set human labels are the bootstrap ground truth (M_0)
    for rec in pool:
        if rec.sample_id in set(eval_ids):
            for qid, ans in rec.truth.items():
                rec.set_answer(qid, ans, "human")
    state = FlywheelState(
        protocol=protocol,
        pool=pool,
        eval_ids=list(eval_ids),
        annotator=annotator if annotator is not None else SimAnnotator(seed=seed, router=feature_router(protocol)),
        seed=seed,
        k_per_iteration=k,
    )
    state.acc_history.append(evaluate_annotator(state.annotator, state.eval_records(), protocol))
    return state


def evaluate_annotator(
    annotator: SimAnnotator, eval_records: list[PoolRecord], protocol: LabelProtocol
) -> AccuracyReport:
    """Per-category accuracy over gate-open instances; empty categories are absent."""
    if not eval_records:
        raise FlywheelError("evaluation requires a non-empty eval set")
    correct: dict[int, int] = {}
    total: dict[int, int] = {}
    for rec in eval_records:
        for qid, truth_answer in rec.truth.items():
            q = protocol.by_id(qid)
            pred = annotator.predict(rec.features, rec.sample_id, qid, q.vocabulary)
            total[qid] = total.get(qid, 0) + 1
            if pred == truth_answer:
                correct[qid] = correct.get(qid, 0) + 1
    per_cat = {qid: correct.get(qid, 0) / total[qid] for qid in total}
    return AccuracyReport(per_cat, {qid: (correct.get(qid, 0), total[qid]) for qid in total})


def select_categories(
    report: AccuracyReport, protocol: LabelProtocol, threshold: float = DEFAULT_THRESHOLD
) -> list[int]:
    """Categories still needing human labels: accuracy strictly below the
    trigger, plus categories the report never measured."""
    selected = []
    for qid in protocol.category_ids():
        acc = report.per_category.get(qid)
        if acc is None or acc < threshold:
            selected.append(qid)
    return selected


def _sample_fresh(state: FlywheelState) -> list[PoolRecord]:
    candidates = [r for r in state.pool if r.sample_id not in set(state.eval_ids)]
    if not candidates:
        return []
    rng = np.random.default_rng([state.seed, 1 + state.iteration])
    k = min(state.k_per_iteration, len(candidates))
    idx = rng.choice(len(candidates), size=k, replace=False)
    return [candidates[i] for i in idx]


def _label_value(state: FlywheelState, rec: PoolRecord, qid: int, source: str) -> str:
    truth = rec.truth[qid]
    if source == "oracle":
        return truth
    if source.startswith("noisy_oracle"):
        p = float(source.split(":", 1)[1]) if ":" in source else 0.1
        sid = int.from_bytes(hashlib.sha256(rec.sample_id.encode()).digest()[:4], "big")
        rng = np.random.default_rng([state.seed, 0x11071, state.iteration, sid, qid])
        if rng.random() < p:
            vocab = [v for v in state.protocol.by_id(qid).vocabulary if v != truth]
            return vocab[int(rng.integers(len(vocab)))] if vocab else truth
        return truth
    raise FlywheelError(f"unknown annotator source {source!r}")


def run_iteration(state: FlywheelState, source: str = "oracle") -> FlywheelState:
    """One pass of the loop: select, label, refit, re-evaluate.

    With the console source the iteration begins by queueing tasks and parks
    in ``awaiting`` until every queued task carries an answer; calling again
    with answers still outstanding returns the state unchanged (resumable),
    never raises.
    """
    if source == "console":
        if not state.awaiting:
            _begin_console_iteration(state)
            if not state.awaiting:
                return state
        if any(t["answer"] is None for t in state.pending_tasks):
            return state
        collected = _collect_console_answers(state)
        _apply_labels_and_advance(state, collected)
        return state

    selected = select_categories(state.acc_history[-1], state.protocol, state.threshold)
    state.selected_history.append(list(selected))
    if not selected:
        state.manual_history.append({})
        return state
    collected = []
    for rec in _sample_fresh(state):
        for qid in selected:
            if qid in rec.truth:
                collected.append((rec, qid, _label_value(state, rec, qid, source)))
    _apply_labels_and_advance(state, collected)
    return state


def _begin_console_iteration(state: FlywheelState) -> None:
    selected = select_categories(state.acc_history[-1], state.protocol, state.threshold)
    state.selected_history.append(list(selected))
    if not selected:
        state.manual_history.append({})
        return
    existing = {(t["sample_id"], t["question_id"]) for t in state.pending_tasks}
    for rec in _sample_fresh(state):
        for qid in selected:
            if qid not in rec.truth or (rec.sample_id, qid) in existing:
                continue
            state.pending_tasks.append(
                {
                    "task_id": f"{state.iteration}:{rec.sample_id}:{qid}",
                    "sample_id": rec.sample_id,
                    "question_id": qid,
                    "answer": None,
                }
            )
    state.awaiting = bool(state.pending_tasks)


def _collect_console_answers(state: FlywheelState) -> list[tuple[PoolRecord, int, str]]:
    by_id = {r.sample_id: r for r in state.pool}
    collected = [
        (by_id[t["sample_id"]], t["question_id"], t["answer"])
        for t in state.pending_tasks
        if t["answer"] is not None
    ]
    state.pending_tasks = []
    return collected


def _apply_labels_and_advance(state: FlywheelState, collected: list[tuple[PoolRecord, int, str]]) -> None:
    manual_now: dict[int, int] = {}
    for rec, qid, value in collected:
        rec.set_answer(qid, value, "human")
        pairs = state.training_labels.setdefault(qid, [])
        if (rec.sample_id, value) not in pairs:
            pairs = [p for p in pairs if p[0] != rec.sample_id]
            pairs.append((rec.sample_id, value))
            state.training_labels[qid] = pairs
        manual_now[qid] = manual_now.get(qid, 0) + 1
        state.manual_label_count[qid] = state.manual_label_count.get(qid, 0) + 1
    state.manual_history.append(manual_now)

    by_id = {r.sample_id: r for r in state.pool}
    labeled = {
        qid: [(by_id[sid].features, ans) for sid, ans in pairs]
        for qid, pairs in state.training_labels.items()
    }
    state.annotator = state.annotator.finetune(labeled)
    state.iteration += 1
    state.acc_history.append(evaluate_annotator(state.annotator, state.eval_records(), state.protocol))
    state.awaiting = False


def run_flywheel(
    state: FlywheelState,
    source: str = "oracle",
    max_iterations: int = 10,
    stop: str = "all",
) -> tuple[FlywheelState, dict]:
    """Iterate until the trigger clears (or the budget runs out), then label the pool."""
    if stop not in ("all", "mean"):
        raise ValueError("stop must be 'all' or 'mean'")
    while True:
        report = state.acc_history[-1]
        selected = select_categories(report, state.protocol, state.threshold)
        done = (not selected) if stop == "all" else bool(report.per_category) and report.mean >= state.threshold
        if done:
            break
        if state.iteration >= max_iterations:
            state.warning = True
            break
        state = run_iteration(state, source)
        if state.awaiting:
            return state, {"awaiting": True}

    _label_pool(state)
    final = state.acc_history[-1]
    summary = {
        "iterations": state.iteration,
        "final_accuracy": {str(k): v for k, v in final.per_category.items()},
        "final_mean_accuracy": final.mean,
        "manual_labels": state.manual_total(),
        "eval_bootstrap_labels": state.eval_label_count(),
        "full_labeling": state.full_label_count(),
        "manual_fraction": state.manual_total() / max(1, state.full_label_count()),
        "warning": state.warning,
    }
    return state, summary


def _label_pool(state: FlywheelState) -> None:
    """Final pass: the annotator answers every question, walking gates on its
    own predictions; human answers survive by precedence."""
    for rec in state.pool:
        answers: dict[int, str] = {}
        pending = list(state.protocol.questions)
        while pending:
            still = []
            for q in pending:
                if q.gate is not None:
                    parent, required = q.gate
                    if parent not in answers:
                        if any(p.id == parent for p in pending if p is not q):
                            still.append(q)
                            continue
                        else:
                            continue
                    if answers[parent] != required:
                        continue
                answers[q.id] = state.annotator.predict(rec.features, rec.sample_id, q.id, q.vocabulary)
            if len(still) == len(pending):
                break
            pending = still
        for qid, value in answers.items():
            rec.set_answer(qid, value, "model")


def save_state(state: FlywheelState, pool_dir: str | Path) -> None:
    out = Path(pool_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "manifest.jsonl", "w") as fh:
        for rec in state.pool:
            fh.write(json.dumps(rec.to_json(), sort_keys=True, separators=(",", ":")) + "\n")
    blob = {
        "protocol": state.protocol.to_json(),
        "eval_ids": state.eval_ids,
        "iteration": state.iteration,
        "acc_history": [
            {"per_category": {str(k): v for k, v in r.per_category.items()},
             "counts": {str(k): list(v) for k, v in r.counts.items()}}
            for r in state.acc_history
        ],
        "annotator": state.annotator.to_json(),
        "manual_label_count": {str(k): v for k, v in state.manual_label_count.items()},
        "manual_history": [{str(k): v for k, v in m.items()} for m in state.manual_history],
        "selected_history": state.selected_history,
        "training_labels": {str(k): v for k, v in state.training_labels.items()},
        "seed": state.seed,
        "k_per_iteration": state.k_per_iteration,
        "threshold": state.threshold,
        "warning": state.warning,
        "awaiting": state.awaiting,
        "pending_tasks": state.pending_tasks,
    }
    with open(out / "state.json", "w") as fh:
        json.dump(blob, fh, sort_keys=True, indent=1)


def load_state(pool_dir: str | Path) -> FlywheelState:
    out = Path(pool_dir)
    with open(out / "state.json") as fh:
        blob = json.load(fh)
    with open(out / "manifest.jsonl") as fh:
        pool = [PoolRecord.from_json(json.loads(line)) for line in fh if line.strip()]
    state = FlywheelState(
        protocol=LabelProtocol.from_json(blob["protocol"]),
        pool=pool,
        eval_ids=blob["eval_ids"],
        iteration=blob["iteration"],
        acc_history=[
            AccuracyReport(
                {int(k): v for k, v in r["per_category"].items()},
                {int(k): tuple(v) for k, v in r["counts"].items()},
            )
            for r in blob["acc_history"]
        ],
        annotator=SimAnnotator.from_json(blob["annotator"]),
        manual_label_count={int(k): v for k, v in blob["manual_label_count"].items()},
        manual_history=[{int(k): v for k, v in m.items()} for m in blob["manual_history"]],
        selected_history=blob["selected_history"],
        training_labels={int(k): [tuple(p) for p in v] for k, v in blob["training_labels"].items()},
        seed=blob["seed"],
        k_per_iteration=blob["k_per_iteration"],
        threshold=blob["threshold"],
        warning=blob["warning"],
        awaiting=blob["awaiting"],
        pending_tasks=blob["pending_tasks"],
    )
    return state
