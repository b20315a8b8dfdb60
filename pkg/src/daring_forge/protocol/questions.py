"""Question bank over the paper-doll attribute schema.

Each question carries an accuracy class (0 = object/existence, 1 = texture,
2 = shape) and an optional gate: a detail question is asked only once its
parent confirmed the part exists. The default bank is 20 questions over the
six parts plus one derived framing question.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..synthcorpus.attributes import PALETTE_NAMES, PART_SCHEMA, AttributeSet

ACC_OBJ, ACC_TEX, ACC_SHAPE = 0, 1, 2

# Caption/mask group numbering: 1 is the whole-figure aggregate.
DEFAULT_MASK_INDEX = {"body": 1, "hair": 2, "face": 3, "top": 4, "bottom": 5, "shoes": 6}


class ProtocolError(ValueError):
    """Invalid protocol configuration (duplicate ids, bad gating graph)."""


@dataclass(frozen=True)
class QuestionSpec:
    id: int
    part: str
    acc_class: int
    text: str
    vocabulary: tuple[str, ...]
    gate: tuple[int, str] | None = None  # (parent question id, required answer)
    field: str = ""                      # attribute field this question reads


@dataclass(frozen=True)
class LabelProtocol:
    questions: tuple[QuestionSpec, ...]
    mask_index: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_MASK_INDEX))
    part_order: tuple[str, ...] = ("hair", "face", "top", "bottom", "shoes")

    def by_id(self, qid: int) -> QuestionSpec:
        for q in self.questions:
            if q.id == qid:
                return q
        raise KeyError(qid)

    def category_ids(self) -> list[int]:
        return [q.id for q in self.questions]

    def to_json(self) -> dict:
        return {
            "questions": [
                {
                    "id": q.id,
                    "part": q.part,
                    "acc_class": q.acc_class,
                    "text": q.text,
                    "vocabulary": list(q.vocabulary),
                    "gate": list(q.gate) if q.gate else None,
                    "field": q.field,
                }
                for q in self.questions
            ],
            "mask_index": self.mask_index,
            "part_order": list(self.part_order),
        }

    @classmethod
    def from_json(cls, data: dict) -> "LabelProtocol":
        qs = tuple(
            QuestionSpec(
                id=q["id"],
                part=q["part"],
                acc_class=q["acc_class"],
                text=q["text"],
                vocabulary=tuple(q["vocabulary"]),
                gate=tuple(q["gate"]) if q.get("gate") else None,
                field=q.get("field", ""),
            )
            for q in data["questions"]
        )
        return cls(qs, dict(data["mask_index"]), tuple(data["part_order"]))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "LabelProtocol":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def _default_questions() -> list[QuestionSpec]:
    colors = tuple(PALETTE_NAMES)
    yn = ("yes", "no")
    qs = [
        QuestionSpec(1, "body", ACC_OBJ, "what is the camera framing of the figure?", ("full-body", "half-body"), field="framing"),
        QuestionSpec(2, "background", ACC_TEX, "what color is the background?", colors, field="color"),
        QuestionSpec(3, "face", ACC_OBJ, "is a face visible?", yn, field="exists"),
        QuestionSpec(4, "face", ACC_TEX, "what color is the face?", colors, gate=(3, "yes"), field="color"),
        QuestionSpec(5, "hair", ACC_OBJ, "is hair visible?", yn, field="exists"),
        QuestionSpec(6, "hair", ACC_TEX, "what color is the hair?", colors, gate=(5, "yes"), field="color"),
        QuestionSpec(7, "hair", ACC_SHAPE, "what length is the hair?", PART_SCHEMA["hair"].shapes, gate=(5, "yes"), field="shape"),
        QuestionSpec(8, "top", ACC_OBJ, "does the figure wear a top?", yn, field="exists"),
        QuestionSpec(9, "top", ACC_OBJ, "what kind of top is it?", PART_SCHEMA["top"].types, gate=(8, "yes"), field="type"),
        QuestionSpec(10, "top", ACC_TEX, "what color is the top?", colors, gate=(8, "yes"), field="color"),
        QuestionSpec(11, "top", ACC_TEX, "what pattern does the top have?", PART_SCHEMA["top"].patterns, gate=(8, "yes"), field="pattern"),
        QuestionSpec(12, "top", ACC_SHAPE, "what sleeve length does the top have?", PART_SCHEMA["top"].shapes, gate=(8, "yes"), field="shape"),
        QuestionSpec(13, "bottom", ACC_OBJ, "does the figure wear bottoms?", yn, field="exists"),
        QuestionSpec(14, "bottom", ACC_OBJ, "what kind of bottoms are they?", PART_SCHEMA["bottom"].types, gate=(13, "yes"), field="type"),
        QuestionSpec(15, "bottom", ACC_TEX, "what color are the bottoms?", colors, gate=(13, "yes"), field="color"),
        QuestionSpec(16, "bottom", ACC_TEX, "what pattern do the bottoms have?", PART_SCHEMA["bottom"].patterns, gate=(13, "yes"), field="pattern"),
        QuestionSpec(17, "bottom", ACC_SHAPE, "what length are the bottoms?", PART_SCHEMA["bottom"].shapes, gate=(13, "yes"), field="shape"),
        QuestionSpec(18, "shoes", ACC_OBJ, "does the figure wear shoes?", yn, field="exists"),
        QuestionSpec(19, "shoes", ACC_OBJ, "what kind of shoes are they?", PART_SCHEMA["shoes"].types, gate=(18, "yes"), field="type"),
        QuestionSpec(20, "shoes", ACC_TEX, "what color are the shoes?", colors, gate=(18, "yes"), field="color"),
    ]
    return qs


def build_protocol(config: dict | None = None) -> LabelProtocol:
    """Build and validate a protocol; the default mirrors the synthetic corpus."""
    config = config or {}
    questions = config.get("questions")
    if questions is None:
        questions = _default_questions()
    else:
        questions = [q if isinstance(q, QuestionSpec) else QuestionSpec(**q) for q in questions]
    protocol = LabelProtocol(
        questions=tuple(questions),
        mask_index=dict(config.get("mask_index", DEFAULT_MASK_INDEX)),
        part_order=tuple(config.get("part_order", ("hair", "face", "top", "bottom", "shoes"))),
    )
    _validate(protocol)
    return protocol


def _validate(protocol: LabelProtocol) -> None:
    ids = [q.id for q in protocol.questions]
    if len(set(ids)) != len(ids):
        raise ProtocolError("duplicate question ids")
    by_id = {q.id: q for q in protocol.questions}
    for q in protocol.questions:
        if q.gate is not None:
            parent, answer = q.gate
            if parent not in by_id:
                raise ProtocolError(f"question {q.id} gated on missing parent {parent}")
            if answer not in by_id[parent].vocabulary:
                raise ProtocolError(f"question {q.id} gate answer {answer!r} not in parent vocabulary")
    # gating graph must be acyclic
    state: dict[int, int] = {}

    def visit(qid: int) -> None:
        if state.get(qid) == 1:
            raise ProtocolError("gating graph contains a cycle")
        if state.get(qid) == 2:
            return
        state[qid] = 1
        gate = by_id[qid].gate
        if gate is not None:
            visit(gate[0])
        state[qid] = 2

    for qid in ids:
        visit(qid)
    # every part with questions needs an existence and a detail question
    parts_seen: dict[str, list[QuestionSpec]] = {}
    for q in protocol.questions:
        parts_seen.setdefault(q.part, []).append(q)
    for part, qs in parts_seen.items():
        if part in ("body", "background"):
            continue
        if not any(q.field == "exists" for q in qs):
            raise ProtocolError(f"part {part} lacks an existence question")
        if not any(q.field != "exists" for q in qs):
            raise ProtocolError(f"part {part} lacks a detail question")


def _answer(attrs: AttributeSet, q: QuestionSpec) -> str:
    if q.part == "body":
        if q.field == "framing":
            return attrs.framing
        raise ProtocolError(f"unknown body field {q.field!r}")
    part = attrs[q.part]
    if q.field == "exists":
        return "yes" if part.exists else "no"
    value = getattr(part, q.field)
    if q.field == "color":
        return PALETTE_NAMES[value]
    return str(value)


def ask_questions(attrs: AttributeSet, protocol: LabelProtocol) -> dict[int, str]:
    """Answer every gate-open question from ground-truth attributes.

    Questions whose gate is closed are skipped entirely; gates may appear in
    any order in the bank (the graph is acyclic by validation).
    """
    decided: dict[int, str | None] = {}  # None marks a closed gate
    pending = list(protocol.questions)
    while pending:
        still = []
        for q in pending:
            if q.gate is None:
                decided[q.id] = _answer(attrs, q)
            else:
                parent, required = q.gate
                if parent not in decided:
                    still.append(q)
                    continue
                decided[q.id] = _answer(attrs, q) if decided[parent] == required else None
        if len(still) == len(pending):
            raise ProtocolError("unresolvable gating order")
        pending = still
    return {q.id: decided[q.id] for q in protocol.questions if decided[q.id] is not None}


def gate_open_questions(attrs: AttributeSet, protocol: LabelProtocol) -> list[QuestionSpec]:
    open_ids = ask_questions(attrs, protocol)
    return [q for q in protocol.questions if q.id in open_ids]
