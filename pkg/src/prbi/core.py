"""The PRBI defense state machine.

One call to :func:`step` processes one frame. A frame whose fused perception
drifts too far from the trusted reference is *flagged*; on flagged frames the
fleet is split into the most suspicious vehicles and the rest, both groups are
validated against the reference, per-vehicle counters are updated, and the
attacker count and per-vehicle benign probabilities are re-estimated. Once the
estimate passes the windowed t-test and the zero-probability count agrees with
it, the attacker set is frozen and excluded from every later fusion.
"""

from __future__ import annotations

import json
import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum
from statistics import fmean, stdev

from prbi.detections import DEFAULT_TAU_MATCH, DetectionSet, jaccard
from prbi.tdist import t_upper_quantile

Perceive = Callable[[frozenset], DetectionSet]


class Rounding(str, Enum):
    FLOOR = "floor"
    CEIL = "ceil"
    NEAREST = "nearest"


def round_nearest(x: float) -> int:
    """Round half away from zero."""
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def apply_rounding(x: float, mode: Rounding) -> int:
    mode = Rounding(mode)
    if mode is Rounding.FLOOR:
        return math.floor(x)
    if mode is Rounding.CEIL:
        return math.ceil(x)
    return round_nearest(x)


@dataclass(frozen=True)
class PrbiConfig:
    epsilon: float = 0.35
    window_size: int = 10
    alpha: float = 0.01
    gamma: float = 0.35
    lam: float = 0.65
    tau_match: float = DEFAULT_TAU_MATCH
    grouping_rounding: Rounding = Rounding.FLOOR
    # False runs the estimator forever; used for convergence traces.
    halt_on_convergence: bool = True

    def __post_init__(self):
        object.__setattr__(self, "grouping_rounding", Rounding(self.grouping_rounding))
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if int(self.window_size) != self.window_size or self.window_size < 2:
            raise ValueError(f"window_size must be an integer >= 2, got {self.window_size}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.gamma < 0 or self.lam < 0:
            raise ValueError("prior weights must be non-negative")
        if not 0.0 < self.tau_match <= 1.0:
            raise ValueError(f"tau_match must lie in (0, 1], got {self.tau_match}")


@dataclass(frozen=True)
class CounterState:
    """Per-vehicle passed-validation counts and the number of flagged frames.

    The abnormal count of vehicle i is always ``total - c_normal[i]``.
    """

    n: int
    c_normal: tuple[int, ...]
    total: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"fleet size must be >= 2, got {self.n}")
        object.__setattr__(self, "c_normal", tuple(int(c) for c in self.c_normal))
        if len(self.c_normal) != self.n:
            raise ValueError("c_normal length must equal n")
        if self.total < 0 or any(c < 0 or c > self.total for c in self.c_normal):
            raise ValueError("counts must satisfy 0 <= c_normal[i] <= total")

    @classmethod
    def zeros(cls, n: int) -> "CounterState":
        return cls(n, (0,) * n, 0)

    @property
    def c_abnormal(self) -> tuple[int, ...]:
        return tuple(self.total - c for c in self.c_normal)

    @property
    def sum_normal(self) -> int:
        return sum(self.c_normal)


@dataclass(frozen=True)
class GroupPartition:
    group1: tuple[int, ...]
    group2: tuple[int, ...]


@dataclass(frozen=True)
class RecoveryResult:
    collaborators: tuple[int, ...]
    verifications: int
    credited: tuple[int, ...]
    # Perception of the probed subset closest to the reference when none passed.
    closest: DetectionSet | None = None
    closest_similarity: float = -1.0


@dataclass(frozen=True)
class FrameOutcome:
    frame: int
    perception: DetectionSet
    verifications: int
    flagged: bool
    converged_now: bool
    similarity: float = 1.0


@dataclass(frozen=True)
class PrbiState:
    counters: CounterState
    m: float
    p_benign: tuple[float, ...]
    window: tuple[float, ...] = ()
    d_ref: DetectionSet | None = None
    converged: bool = False
    attackers: frozenset = field(default_factory=frozenset)
    # Set once some flagged frame has produced a trusted collaborator set.
    trusted_seen: bool = False
    last_frame: int = -1

    @property
    def n(self) -> int:
        return self.counters.n

    def to_snapshot(self) -> dict:
        c = self.counters
        return {
            "n": c.n,
            "N": c.total,
            "c_normal": list(c.c_normal),
            "c_abnormal": list(c.c_abnormal),
            "m": self.m,
            "p_benign": list(self.p_benign),
            "window": list(self.window),
            "converged": self.converged,
            "attackers": sorted(self.attackers),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_snapshot(), indent=2, sort_keys=True)

    @classmethod
    def from_snapshot(cls, snap: dict) -> "PrbiState":
        counters = CounterState(int(snap["n"]), tuple(snap["c_normal"]), int(snap["N"]))
        if tuple(snap["c_abnormal"]) != counters.c_abnormal:
            raise ValueError("snapshot violates c_normal + c_abnormal = N")
        return cls(
            counters=counters,
            m=float(snap["m"]),
            p_benign=tuple(float(p) for p in snap["p_benign"]),
            window=tuple(float(w) for w in snap["window"]),
            converged=bool(snap["converged"]),
            attackers=frozenset(int(a) for a in snap["attackers"]),
            trusted_seen=any(p != 0 for p in snap["p_benign"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "PrbiState":
        return cls.from_snapshot(json.loads(text))


def initial_state(n: int) -> PrbiState:
    return PrbiState(counters=CounterState.zeros(n), m=float(n - 1), p_benign=(0.0,) * n)


def suspicion_order(p_benign: Sequence[float]) -> list[int]:
    """Vehicle ids by ascending benign probability, ties by ascending id."""
    return sorted(range(len(p_benign)), key=lambda i: (p_benign[i], i))


def soft_sample(p_benign: Sequence[float], m: float, rounding: Rounding = Rounding.FLOOR) -> GroupPartition:
    n = len(p_benign)
    if n < 2:
        raise ValueError("need at least two vehicles")
    order = suspicion_order(p_benign)
    cut = min(max(apply_rounding(m, rounding), 0), n)
    return GroupPartition(tuple(order[:cut]), tuple(order[cut:]))


def validate_group(
    group: Sequence[int],
    observed: DetectionSet | None,
    d_ref: DetectionSet,
    epsilon: float,
    tau_match: float = DEFAULT_TAU_MATCH,
) -> bool:
    if not group:
        return True
    if observed is None:
        raise ValueError("a non-empty group needs its fused perception")
    return jaccard(observed, d_ref, tau_match) >= epsilon


def credit(counters: CounterState, members: Iterable[int]) -> CounterState:
    """Add one normal detection to each member without advancing the total."""
    c = list(counters.c_normal)
    for i in members:
        c[i] += 1
    return replace(counters, c_normal=tuple(c))


def apply_frame_counts(
    counters: CounterState,
    group1: Sequence[int],
    ok1: bool,
    group2: Sequence[int],
    ok2: bool,
) -> CounterState:
    if set(group1) & set(group2):
        raise ValueError("groups overlap")
    passed = [i for g, ok in ((group1, ok1), (group2, ok2)) if ok for i in g]
    bumped = replace(counters, total=counters.total + 1)
    return credit(bumped, passed)


def estimate_attacker_count(counters: CounterState) -> float:
    n, total, s = counters.n, counters.total, counters.sum_normal
    if s == 0 or total == 0:
        return float(n - 1)
    return min(math.log2(n * total / s), float(n - 1))


def bayesian_update(counters: CounterState, p_prev: Sequence[float], gamma: float, lam: float) -> tuple[float, ...]:
    n, total = counters.n, counters.total
    if len(p_prev) != n:
        raise ValueError("p_prev length must equal n")
    if total == 0:
        return (0.0,) * n
    abnormal = counters.c_abnormal
    sum_abnormal = sum(abnormal)
    if sum_abnormal == 0:
        return tuple(p_prev)
    p_attack = sum_abnormal / (n * total)
    out = []
    for j in range(n):
        likelihood = (sum_abnormal - abnormal[j]) / (n * total - total)
        prior = gamma * p_prev[j] + lam * counters.c_normal[j] / total
        out.append(min(max(likelihood * prior / p_attack, 0.0), 1.0))
    return tuple(out)


def select_attackers(p_benign: Sequence[float], m: float) -> frozenset:
    count = min(max(round_nearest(m), 0), len(p_benign))
    return frozenset(suspicion_order(p_benign)[:count])


def t_test_converged(window: Sequence[float], m: float, alpha: float) -> bool:
    """Accept H0 (the window mean equals m) at two-sided level alpha."""
    w_p = len(window)
    if w_p < 2:
        return False
    mean = fmean(window)
    s = stdev(window, mean)
    if s == 0:
        return mean == m
    stat = abs(mean - m) / (s / math.sqrt(w_p))
    return stat <= t_upper_quantile(alpha / 2.0, w_p - 1)


def second_condition(p_benign: Sequence[float], m: float) -> bool:
    zeros = sum(1 for p in p_benign if p == 0)
    return zeros == round_nearest(m)


def _halves(group: Sequence[int]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    cut = (len(group) + 1) // 2
    return tuple(group[:cut]), tuple(group[cut:])


def divide_and_conquer_recovery(
    group1: Sequence[int],
    group2: Sequence[int],
    perceive: Perceive,
    d_ref: DetectionSet,
    epsilon: float,
    tau_match: float = DEFAULT_TAU_MATCH,
) -> RecoveryResult:
    """Search the proper subsets of two already-failed groups for a passing one.

    Each failed group is halved level by level (first half before second
    half within a level) and the first subset whose fused perception passes
    is returned. Group 1's subtree is exhausted before group 2's. The two
    roots are not re-validated. When nothing passes, the perception of the
    probed subset most similar to the reference is returned as `closest`.
    """
    spent = 0
    best, best_sim = None, -1.0
    for root in (tuple(group1), tuple(group2)):
        level = [root] if len(root) > 1 else []
        while level:
            nxt = []
            for g in level:
                for sub in _halves(g):
                    spent += 1
                    observed = perceive(frozenset(sub))
                    sim = jaccard(observed, d_ref, tau_match)
                    if sim >= epsilon:
                        return RecoveryResult(sub, spent, sub)
                    if sim > best_sim:
                        best, best_sim = observed, sim
                    if len(sub) > 1:
                        nxt.append(sub)
            level = nxt
    return RecoveryResult((), spent, (), best, best_sim)


def _probe(group, perceive, d_ref, config) -> tuple[bool, int, DetectionSet | None, float]:
    if not group:
        return True, 0, None, -1.0
    observed = perceive(frozenset(group))
    sim = jaccard(observed, d_ref, config.tau_match)
    return sim >= config.epsilon, 1, observed, sim


def step(state: PrbiState, frame: int, perceive: Perceive, config: PrbiConfig) -> tuple[PrbiState, FrameOutcome]:
    """Advance the defense by one frame.

    ``perceive`` maps a set of vehicle ids to their fused perception for
    this frame. The first frame seeds the trusted reference.
    """
    if frame <= state.last_frame:
        raise ValueError(f"frames must be strictly increasing ({frame} after {state.last_frame})")
    n = state.n
    fleet = frozenset(range(n))
    full = perceive(fleet)

    if state.d_ref is None:
        new = replace(state, d_ref=full, last_frame=frame)
        return new, FrameOutcome(frame, full, 0, False, False)

    similarity = jaccard(full, state.d_ref, config.tau_match)
    if state.converged or similarity >= config.epsilon:
        out = perceive(fleet - state.attackers) if state.attackers else full
        new = replace(state, d_ref=out, last_frame=frame)
        return new, FrameOutcome(frame, out, 0, False, False, similarity)

    part = soft_sample(state.p_benign, state.m, config.grouping_rounding)
    ok1, v1, seen1, sim1 = _probe(part.group1, perceive, state.d_ref, config)
    ok2, v2, seen2, sim2 = _probe(part.group2, perceive, state.d_ref, config)
    verifications = v1 + v2
    counters = apply_frame_counts(state.counters, part.group1, ok1, part.group2, ok2)
    m = estimate_attacker_count(counters)
    p = bayesian_update(counters, state.p_benign, config.gamma, config.lam)
    collaborators = tuple(i for i in range(n) if p[i] != 0)

    if not collaborators and not ok1 and not ok2 and not state.trusted_seen:
        rec = divide_and_conquer_recovery(
            part.group1, part.group2, perceive, state.d_ref, config.epsilon, config.tau_match
        )
        verifications += rec.verifications
        counters = credit(counters, rec.credited)
        m = estimate_attacker_count(counters)
        p = bayesian_update(counters, state.p_benign, config.gamma, config.lam)
        collaborators = rec.collaborators
        if not collaborators:
            # Every vehicle failed on its own. With at least one benign
            # vehicle that indicts the reference, not the fleet: void the
            # frame's counts and move the reference to the closest view
            # (roots included, since a failed singleton root is never split).
            candidates = [(sim1, seen1), (sim2, seen2), (rec.closest_similarity, rec.closest)]
            closest = max((c for c in candidates if c[1] is not None), key=lambda c: c[0])[1]
            new = replace(state, d_ref=closest, last_frame=frame)
            return new, FrameOutcome(frame, DetectionSet(full.frame), verifications, True, False, similarity)
    elif not collaborators:
        # No probability evidence yet (e.g. a false alarm where every group
        # passed): trust whoever validated on this frame.
        collaborators = tuple(sorted((part.group1 if ok1 else ()) + (part.group2 if ok2 else ())))

    attackers = select_attackers(p, m)
    window = (state.window + (m,))[-config.window_size:]
    converged = (
        config.halt_on_convergence
        and t_test_converged(window, m, config.alpha)
        and second_condition(p, m)
    )

    d_ref = state.d_ref
    if converged:
        out = perceive(fleet - attackers)
        d_ref = out
    elif collaborators:
        out = perceive(frozenset(collaborators))
        d_ref = out
    else:
        # No trusted subset: emit nothing and keep the old reference.
        out = DetectionSet(full.frame)

    new = PrbiState(
        counters=counters,
        m=m,
        p_benign=p,
        window=window,
        d_ref=d_ref,
        converged=converged,
        attackers=attackers,
        trusted_seen=state.trusted_seen or bool(collaborators),
        last_frame=frame,
    )
    return new, FrameOutcome(frame, out, verifications, True, converged, similarity)

