"""Semantic accuracy: atomized questions answered by the inverse renderer.

Each generated image is judged against the attributes its caption intended:
the intended layout (same geometry seed) provides the region masks, the
inverse renderer recovers attributes from the pixels, and every gate-open
question scores one correct/incorrect. Accuracies aggregate by question
class (object, texture, shape).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..protocol.questions import ACC_OBJ, ACC_SHAPE, ACC_TEX, LabelProtocol, QuestionSpec, ask_questions
from ..synthcorpus.attributes import PALETTE, PALETTE_NAMES, AttributeSet, random_attribute_set
from ..synthcorpus.invert import invert_render
from ..synthcorpus.render import render_sample


@dataclass
class EvalSample:
    image: np.ndarray            # H x W x 3 in [0, 1]
    attrs: AttributeSet          # what the caption asked for
    geometry_seed: int


@dataclass
class SemanticReport:
    acc_obj: float
    acc_tex: float
    acc_shape: float
    acc_all: float
    per_question: dict[int, tuple[int, int]] = field(default_factory=dict)  # qid -> (correct, total)

    def to_json(self) -> dict:
        return {
            "acc_obj": self.acc_obj,
            "acc_tex": self.acc_tex,
            "acc_shape": self.acc_shape,
            "acc_all": self.acc_all,
            "per_question": {str(k): list(v) for k, v in self.per_question.items()},
        }


def sample_eval_attrs(rng: np.random.Generator, weights: dict | None = None) -> AttributeSet:
    """Eval prompts avoid part colors equal to the background color: such a
    part is rendered invisible and no judge could recover it."""
    for _ in range(100):
        attrs = random_attribute_set(rng, weights)
        bg = attrs["background"].color
        if all(
            not attrs[p].exists or attrs[p].color != bg
            for p in ("hair", "face", "top", "bottom", "shoes")
        ):
            return attrs
    raise RuntimeError("rejection sampling failed to find a collision-free prompt")


def _recovered_answer(attrs: AttributeSet, q: QuestionSpec) -> str | None:
    if q.part == "body":
        return attrs.framing if q.field == "framing" else None
    part = attrs[q.part]
    if q.field == "exists":
        return "yes" if part.exists else "no"
    if not part.exists:
        return None  # recovered part missing: any detail answer counts wrong
    value = getattr(part, q.field)
    if value is None:
        return None
    return PALETTE_NAMES[value] if q.field == "color" else str(value)


def semantic_accuracy(samples: list[EvalSample], protocol: LabelProtocol) -> SemanticReport:
    if not samples:
        raise ValueError("semantic accuracy needs at least one sample")
    correct: dict[int, int] = {}
    total: dict[int, int] = {}
    for sample in samples:
        layout = render_sample(sample.attrs, sample.geometry_seed,
                               sample.image.shape[1], sample.image.shape[0])
        recovery = invert_render(sample.image, layout.masks, trust_masks=False)
        intended = ask_questions(sample.attrs, protocol)
        for qid, want in intended.items():
            q = protocol.by_id(qid)
            got = _recovered_answer(recovery.attrs, q)
            total[qid] = total.get(qid, 0) + 1
            if got == want:
                correct[qid] = correct.get(qid, 0) + 1

    def class_acc(acc_class: int) -> float:
        qs = [q.id for q in protocol.questions if q.acc_class == acc_class and q.id in total]
        c = sum(correct.get(qid, 0) for qid in qs)
        t = sum(total[qid] for qid in qs)
        return c / t if t else float("nan")

    all_c = sum(correct.get(qid, 0) for qid in total)
    all_t = sum(total.values())
    return SemanticReport(
        acc_obj=class_acc(ACC_OBJ),
        acc_tex=class_acc(ACC_TEX),
        acc_shape=class_acc(ACC_SHAPE),
        acc_all=all_c / all_t,
        per_question={qid: (correct.get(qid, 0), total[qid]) for qid in total},
    )
