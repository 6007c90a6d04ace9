"""Sequence similarity and the validity gate for generated steps.

Similarity is the Ratcliff/Obershelp ratio 2*M/(|a|+|b|) over characters
of whitespace-normalized inputs, where M is the total size of recursively
matched longest common blocks (longest block first, ties broken leftmost
in a, then leftmost in b). Two empty strings score 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass
from difflib import SequenceMatcher

from stepfim.decompose import normalize_ws


@dataclass(frozen=True)
class GateConfig:
    """Threshold above which a candidate counts as a near-duplicate."""

    eta: float = 0.8

    def __post_init__(self) -> None:
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must be in (0, 1]")


@dataclass(frozen=True)
class GateOutcome:
    valid: bool
    score: float


def similarity(a: str, b: str) -> float:
    """Ratcliff/Obershelp ratio in [0, 1] over normalized characters."""
    a_norm = normalize_ws(a)
    b_norm = normalize_ws(b)
    # autojunk would drop popular characters on longer strings and break
    # the exact-ratio contract
    return SequenceMatcher(None, a_norm, b_norm, autojunk=False).ratio()


def gate(candidate: str, next_step: str, config: GateConfig | None = None) -> GateOutcome:
    """Decide whether a generated candidate is worth inserting.

    Invalid when the candidate is empty after trimming or scores >= eta
    against the step that would follow it; equality rejects, so near
    duplicates are never inserted.
    """
    if config is None:
        config = GateConfig()
    score = similarity(candidate, next_step)
    if not candidate.strip():
        return GateOutcome(valid=False, score=score)
    return GateOutcome(valid=score < config.eta, score=score)
