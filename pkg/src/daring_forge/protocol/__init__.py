"""Label protocol: question bank with hierarchical gating, decomposed captions."""

from .questions import (
    ACC_OBJ,
    ACC_TEX,
    ACC_SHAPE,
    LabelProtocol,
    ProtocolError,
    QuestionSpec,
    ask_questions,
    build_protocol,
    gate_open_questions,
)
from .captions import (
    BODY_MASK_INDEX,
    VOCAB,
    TOKEN_IDS,
    CaptionGroup,
    DecomposedCaption,
    align_groups_to_masks,
    assemble_caption,
    assemble_continuous_caption,
)

__all__ = [
    "ACC_OBJ",
    "ACC_TEX",
    "ACC_SHAPE",
    "LabelProtocol",
    "ProtocolError",
    "QuestionSpec",
    "ask_questions",
    "build_protocol",
    "gate_open_questions",
    "BODY_MASK_INDEX",
    "VOCAB",
    "TOKEN_IDS",
    "CaptionGroup",
    "DecomposedCaption",
    "align_groups_to_masks",
    "assemble_caption",
    "assemble_continuous_caption",
]
