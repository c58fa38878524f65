"""Which features feed each vocoder condition at training and at test time.

    condition     train features   test features
    UB            natural          natural
    AM            natural          synthetic
    TM            synthetic        synthetic
    NPF           pseudo           enhanced
    NPF_cascade   pseudo           enhanced_pf   (conventional post-filter first)
"""

from __future__ import annotations

from types import MappingProxyType

STAGES = ("train", "test")
SOURCES = ("natural", "synthetic", "pseudo", "enhanced", "enhanced_pf")

ROUTING = MappingProxyType({
    "UB": MappingProxyType({"train": "natural", "test": "natural"}),
    "AM": MappingProxyType({"train": "natural", "test": "synthetic"}),
    "TM": MappingProxyType({"train": "synthetic", "test": "synthetic"}),
    "NPF": MappingProxyType({"train": "pseudo", "test": "enhanced"}),
    "NPF_cascade": MappingProxyType({"train": "pseudo", "test": "enhanced_pf"}),
})

TRAIN_SOURCES = ("natural", "synthetic", "pseudo")


class RoutingError(RuntimeError):
    pass


def route(condition: str, stage: str) -> str:
    try:
        return ROUTING[condition][stage]
    except KeyError:
        raise RoutingError(f"no route for condition {condition!r} at stage {stage!r}") from None


def training_sources(conditions) -> list:
    """Distinct training feature sources, in a fixed order, for a set of conditions."""
    wanted = {route(c, "train") for c in conditions}
    return [s for s in TRAIN_SOURCES if s in wanted]


def needs_cycvc(conditions) -> bool:
    return any(route(c, "train") == "pseudo" for c in conditions)


def guard_training_source(condition: str, source: str):
    """The proposed conditions must never train on raw synthetic features."""
    expected = route(condition, "train")
    if source != expected or (condition.startswith("NPF") and source == "synthetic"):
        raise RoutingError(f"condition {condition} must train on {expected!r} features, got {source!r}")
