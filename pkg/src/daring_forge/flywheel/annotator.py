"""Simulated learnable annotator.

One multinomial logistic head per category over the fixed image features,
routed: each head sees only its question's part slice (that part's template
color plus its layout band areas), which keeps heads sample-efficient the
way a fine-tuned judge is. An untrained head answers with a deterministic
pseudo-uniform draw keyed by (seed, sample id, question id); fine-tuning
refits each head on the accumulated labels for its category, so behaviour
is a pure function of the label set order and the seed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from sklearn.linear_model import LogisticRegression

from ..protocol.questions import LabelProtocol

# Feature layout of featurize_detailed: 6 x 3 template colors, then band
# areas (hair above/below, hood, torso core, notch cover, arms, legs,
# leg-center, shoes), then the two fitted pattern indices.
_PART_SLICES: dict[str, list[int]] = {
    "background": [0, 1, 2],
    "hair": [3, 4, 5, 18, 19],
    "face": [6, 7, 8],
    "top": [9, 10, 11, 20, 21, 22, 23, 27],
    "bottom": [12, 13, 14, 24, 25, 28],
    "shoes": [15, 16, 17, 26],
    "body": [18, 19, 23, 24, 25, 26],
}


def feature_router(protocol: LabelProtocol) -> dict[int, list[int]]:
    return {q.id: list(_PART_SLICES.get(q.part, [])) or None for q in protocol.questions}


def _pseudo_uniform(seed: int, sample_id: str, qid: int, n: int) -> int:
    digest = hashlib.sha256(f"{seed}|{sample_id}|{qid}".encode()).digest()
    return int.from_bytes(digest[:8], "big") % n


@dataclass
class _Head:
    classes: list[str]
    coef: np.ndarray | None = None       # (n_classes, n_features)
    intercept: np.ndarray | None = None
    constant: str | None = None
    slice: list[int] | None = None

    def predict(self, features: np.ndarray) -> str:
        if self.constant is not None:
            return self.constant
        f = features[self.slice] if self.slice is not None else features
        logits = self.coef @ f + self.intercept
        return self.classes[int(np.argmax(logits))]

    def to_json(self) -> dict:
        return {
            "classes": self.classes,
            "coef": None if self.coef is None else self.coef.tolist(),
            "intercept": None if self.intercept is None else self.intercept.tolist(),
            "constant": self.constant,
            "slice": self.slice,
        }

    @classmethod
    def from_json(cls, data: dict) -> "_Head":
        return cls(
            classes=list(data["classes"]),
            coef=None if data["coef"] is None else np.asarray(data["coef"]),
            intercept=None if data["intercept"] is None else np.asarray(data["intercept"]),
            constant=data["constant"],
            slice=data.get("slice"),
        )


@dataclass
class SimAnnotator:
    seed: int = 0
    heads: dict[int, _Head] = field(default_factory=dict)
    router: dict[int, list[int] | None] = field(default_factory=dict)

    def predict(self, features: np.ndarray, sample_id: str, question_id: int, vocabulary: tuple[str, ...]) -> str:
        head = self.heads.get(question_id)
        if head is None:
            return vocabulary[_pseudo_uniform(self.seed, sample_id, question_id, len(vocabulary))]
        return head.predict(features)

    def finetune(self, labeled: dict[int, list[tuple[np.ndarray, str]]]) -> "SimAnnotator":
        """Refit one head per category on its accumulated (features, answer) pairs.

        Categories with zero examples keep their current head.
        """
        heads = dict(self.heads)
        for qid, pairs in labeled.items():
            if not pairs:
                continue
            sl = self.router.get(qid)
            X = np.stack([f[sl] if sl is not None else f for f, _ in pairs])
            y = [a for _, a in pairs]
            classes = sorted(set(y))
            if len(classes) == 1:
                heads[qid] = _Head(classes=classes, constant=classes[0], slice=sl)
                continue
            clf = LogisticRegression(max_iter=1000, C=10.0)
            clf.fit(X, y)
            coef, intercept = clf.coef_, clf.intercept_
            if coef.shape[0] == 1:  # binary: expand to per-class rows
                coef = np.vstack([-coef[0], coef[0]])
                intercept = np.asarray([-intercept[0], intercept[0]])
            heads[qid] = _Head(classes=list(clf.classes_), coef=coef, intercept=intercept, slice=sl)
        return SimAnnotator(seed=self.seed, heads=heads, router=self.router)

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "heads": {str(q): h.to_json() for q, h in self.heads.items()},
            "router": {str(q): s for q, s in self.router.items()},
        }

    @classmethod
    def from_json(cls, data: dict) -> "SimAnnotator":
        return cls(
            seed=data["seed"],
            heads={int(q): _Head.from_json(h) for q, h in data["heads"].items()},
            router={int(q): s for q, s in data.get("router", {}).items()},
        )


_HEAD_COLORS = {"black", "red", "green", "blue"}


def pretrain_biased(
    annotator: SimAnnotator,
    records: list,
    protocol: LabelProtocol,
    n: int = 50,
) -> SimAnnotator:
    """Pretraining stand-in: fit on a head-heavy pool slice.

    Only records whose texture answers stay in the head of each vocabulary
    (common colors, solid patterns) are used, so the pretrained heads never
    see tail classes. Existence-style categories come out usable; texture
    and shape categories start weak, mimicking a generic pretrained
    captioner on a long-tail distribution.
    """
    texture_qids = {q.id for q in protocol.questions if q.acc_class == 1}

    def headish(rec) -> bool:
        for qid in texture_qids:
            ans = rec.truth.get(qid)
            if ans is None:
                continue
            if ans not in _HEAD_COLORS and ans != "solid":
                return False
        return True

    chosen = [rec for rec in records if headish(rec)][:n]
    if not chosen:
        chosen = records[:n]
    labeled: dict[int, list[tuple[np.ndarray, str]]] = {}
    for rec in chosen:
        for qid, ans in rec.truth.items():
            labeled.setdefault(qid, []).append((rec.features, ans))
    return annotator.finetune(labeled)
