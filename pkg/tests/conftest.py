import numpy as np
import pytest

from daring_forge.protocol import build_protocol
from daring_forge.synthcorpus import AttributeSet, PartAttrs


@pytest.fixture(scope="session")
def protocol():
    return build_protocol()


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def make_attrs(**overrides) -> AttributeSet:
    parts = {
        "background": PartAttrs(True, color=3),
        "face": PartAttrs(True, color=4),
        "hair": PartAttrs(True, color=0, shape="long-hair"),
        "top": PartAttrs(True, "tshirt", 1, "solid", "long-sleeve"),
        "bottom": PartAttrs(True, "pants", 2, "stripes", "long"),
        "shoes": PartAttrs(True, "boots", 5),
    }
    parts.update(overrides)
    return AttributeSet(parts)


@pytest.fixture
def full_attrs():
    return make_attrs()


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    from daring_forge.synthcorpus import generate_corpus

    path = tmp_path_factory.mktemp("corpus")
    generate_corpus(40, path, seed=123)
    return path
