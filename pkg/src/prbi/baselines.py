"""Simplified verification-cost comparators.

These are not ports of any published defense. They only stand in for the two
families PRBI is compared with: random consensus sampling and recursive
splitting. Their per-frame verification counts are what matters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from prbi.core import Perceive, validate_group
from prbi.detections import DEFAULT_TAU_MATCH, DetectionSet

DEFAULT_RETRY_CAP = 50


@dataclass(frozen=True)
class BaselineStep:
    collaborators: tuple[int, ...]
    verifications: int


def _passes(subset, perceive, d_ref, epsilon, tau_match) -> bool:
    return validate_group(subset, perceive(frozenset(subset)), d_ref, epsilon, tau_match)


def random_consensus_step(
    n: int,
    perceive: Perceive,
    d_ref: DetectionSet,
    epsilon: float,
    rng: np.random.Generator,
    cap: int = DEFAULT_RETRY_CAP,
    tau_match: float = DEFAULT_TAU_MATCH,
) -> BaselineStep:
    """Draw uniform non-empty subsets until one validates or ``cap`` draws are spent."""
    for trial in range(1, cap + 1):
        mask = int(rng.integers(1, 1 << n))
        subset = tuple(i for i in range(n) if mask >> i & 1)
        if _passes(subset, perceive, d_ref, epsilon, tau_match):
            return BaselineStep(subset, trial)
    return BaselineStep((), cap)


def sequential_split_step(
    n: int,
    perceive: Perceive,
    d_ref: DetectionSet,
    epsilon: float,
    tau_match: float = DEFAULT_TAU_MATCH,
) -> BaselineStep:
    """Validate the whole fleet, halving every failed group down to singletons.

    All passing leaves are kept as collaborators.
    """
    spent = 0
    passed: list[int] = []
    stack = [tuple(range(n))]
    while stack:
        group = stack.pop()
        spent += 1
        if _passes(group, perceive, d_ref, epsilon, tau_match):
            passed.extend(group)
        elif len(group) > 1:
            cut = (len(group) + 1) // 2
            # Push the second half first so the first half is visited first.
            stack.append(group[cut:])
            stack.append(group[:cut])
    return BaselineStep(tuple(sorted(passed)), spent)
