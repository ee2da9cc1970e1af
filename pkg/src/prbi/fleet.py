"""Synthetic world and perception oracle.

The world is a square plane with wraparound holding a roughly constant number
of moving boxes. Every vehicle sees every object. A fused perception of a
benign subset is the ground truth with positional jitter and random misses; a
subset containing an active attacker additionally loses a fraction of its
boxes and gains spurious boxes placed away from every real object.

All randomness is drawn from generators keyed by ``(seed, frame, ...)`` so
the same query always returns the same detections.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from prbi.detections import Box2D, DetectionSet, jaccard

N_CLASSES = 3
_BOX_SIZE_RANGE = (2.0, 5.0)

# Stream tags keep world evolution and each kind of perception noise independent.
_STREAM_WORLD = 0
_STREAM_RENDER = 1
_STREAM_ATTACK = 2


@dataclass(frozen=True)
class AttackModel:
    kind: str = "persistent"
    period: int = 1
    start: int = 1

    def __post_init__(self):
        if self.kind not in ("persistent", "intermittent"):
            raise ValueError(f"unknown attack model {self.kind!r}")
        if self.period < 1:
            raise ValueError(f"attack period must be >= 1, got {self.period}")
        if self.start < 0:
            raise ValueError("attack start must be non-negative")

    @classmethod
    def intermittent(cls, period: int, start: int = 1) -> "AttackModel":
        return cls("intermittent", period, start)


def attack_active(model: AttackModel, frame: int) -> bool:
    if frame < model.start:
        return False
    if model.kind == "persistent":
        return True
    return (frame - model.start) % model.period == 0


@dataclass(frozen=True)
class WorldConfig:
    n: int
    attacker_set: frozenset = field(default_factory=frozenset)
    seed: int = 0
    object_count: int = 20
    persist_prob: float = 0.9
    jitter_sigma: float = 0.05
    miss_prob: float = 0.05
    attack_model: AttackModel = field(default_factory=AttackModel)
    delta_del: float = 0.6
    delta_inj: float = 0.6
    speed: float = 0.05
    world_size: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "attacker_set", frozenset(int(a) for a in self.attacker_set))
        if self.n < 2:
            raise ValueError(f"fleet size must be >= 2, got {self.n}")
        if any(a < 0 or a >= self.n for a in self.attacker_set):
            raise ValueError("attacker ids must lie in [0, n)")
        if len(self.attacker_set) > self.n - 1:
            raise ValueError("at most n - 1 vehicles may be malicious")
        if self.object_count < 1:
            raise ValueError("object_count must be >= 1")
        for name in ("persist_prob", "miss_prob", "delta_del"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.delta_inj < 0 or self.jitter_sigma < 0 or self.speed < 0:
            raise ValueError("delta_inj, jitter_sigma and speed must be non-negative")

    @property
    def k(self) -> int:
        return len(self.attacker_set)


@dataclass(frozen=True)
class WorldObject:
    oid: int
    box: Box2D
    vx: float
    vy: float


@dataclass(frozen=True)
class WorldState:
    frame: int
    objects: tuple[WorldObject, ...]
    next_id: int


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def _spawn(rng: np.random.Generator, oid: int, config: WorldConfig) -> WorldObject:
    w, h = rng.uniform(*_BOX_SIZE_RANGE, size=2)
    cx, cy = rng.uniform(0.0, config.world_size, size=2)
    vx, vy = rng.normal(0.0, config.speed * (w + h) / 2, size=2)
    cls = int(rng.integers(N_CLASSES))
    return WorldObject(oid, Box2D(float(cx), float(cy), float(w), float(h), cls), float(vx), float(vy))


def initial_world(config: WorldConfig) -> WorldState:
    rng = _rng(config.seed, 0, _STREAM_WORLD)
    objs = tuple(_spawn(rng, i, config) for i in range(config.object_count))
    return WorldState(0, objs, config.object_count)


def step_world(state: WorldState, config: WorldConfig) -> WorldState:
    frame = state.frame + 1
    rng = _rng(config.seed, frame, _STREAM_WORLD)
    size = config.world_size
    survive = rng.random(len(state.objects)) < config.persist_prob
    kept = []
    for obj, alive in zip(state.objects, survive):
        if not alive:
            continue
        b = obj.box
        moved = replace(b, cx=(b.cx + obj.vx) % size, cy=(b.cy + obj.vy) % size)
        kept.append(replace(obj, box=moved))
    next_id = state.next_id
    while len(kept) < config.object_count:
        kept.append(_spawn(rng, next_id, config))
        next_id += 1
    return WorldState(frame, tuple(kept), next_id)


def subset_mask(subset: Iterable[int]) -> int:
    mask = 0
    for i in subset:
        mask |= 1 << int(i)
    return mask


def is_attacked(subset: Iterable[int], frame: int, config: WorldConfig) -> bool:
    return attack_active(config.attack_model, frame) and bool(set(subset) & config.attacker_set)


def _render_benign(world: WorldState, mask: int, config: WorldConfig) -> list[Box2D]:
    rng = _rng(config.seed, world.frame, _STREAM_RENDER, mask)
    objs = world.objects
    # An object is missing from the fused view only if every member misses it.
    keep = rng.random(len(objs)) >= config.miss_prob ** bin(mask).count("1")
    noise = rng.normal(0.0, 1.0, size=(len(objs), 4))
    scores = rng.uniform(0.5, 1.0, size=len(objs))
    out = []
    for i, obj in enumerate(objs):
        if not keep[i]:
            continue
        b = obj.box
        sig = config.jitter_sigma
        w = b.w * float(np.exp(sig * noise[i, 2] / 2))
        h = b.h * float(np.exp(sig * noise[i, 3] / 2))
        out.append(
            Box2D(
                b.cx + sig * b.w * float(noise[i, 0]),
                b.cy + sig * b.h * float(noise[i, 1]),
                w,
                h,
                b.class_id,
                float(scores[i]),
            )
        )
    return out


def _disjoint_from(x0, y0, x1, y1, truth: np.ndarray, margin: float) -> bool:
    if len(truth) == 0:
        return True
    sep = (
        (x1 + margin <= truth[:, 0])
        | (truth[:, 2] + margin <= x0)
        | (y1 + margin <= truth[:, 1])
        | (truth[:, 3] + margin <= y0)
    )
    return bool(sep.all())


def _corrupt(boxes: list[Box2D], world: WorldState, mask: int, config: WorldConfig) -> list[Box2D]:
    rng = _rng(config.seed, world.frame, _STREAM_ATTACK, mask)
    n_del = int(round(config.delta_del * len(boxes)))
    if n_del:
        drop = set(rng.choice(len(boxes), size=n_del, replace=False).tolist())
        boxes = [b for i, b in enumerate(boxes) if i not in drop]
    truth = np.array([o.box.corners for o in world.objects]) if world.objects else np.zeros((0, 4))
    n_inj = int(round(config.delta_inj * len(world.objects)))
    size = config.world_size
    injected: list[Box2D] = []
    for _ in range(50 * max(n_inj, 1)):
        if len(injected) >= n_inj:
            break
        w, h = rng.uniform(*_BOX_SIZE_RANGE, size=2)
        cx, cy = rng.uniform(w / 2, size - w / 2), rng.uniform(h / 2, size - h / 2)
        x0, y0, x1, y1 = cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2
        if _disjoint_from(x0, y0, x1, y1, truth, margin=1.0):
            injected.append(
                Box2D(float(cx), float(cy), float(w), float(h), int(rng.integers(N_CLASSES)), float(rng.uniform(0.5, 1.0)))
            )
    return boxes + injected


def perceive(world: WorldState, subset: Iterable[int], config: WorldConfig, attacks: bool = True) -> DetectionSet:
    """Fused perception of ``subset`` at the world's current frame.

    ``attacks=False`` renders the same subset as if nobody were malicious.
    """
    subset = frozenset(subset)
    if not subset:
        raise ValueError("cannot perceive with an empty subset")
    if any(i < 0 or i >= config.n for i in subset):
        raise ValueError("subset contains unknown vehicle ids")
    mask = subset_mask(subset)
    boxes = _render_benign(world, mask, config)
    if attacks and is_attacked(subset, world.frame, config):
        boxes = _corrupt(boxes, world, mask, config)
    return DetectionSet(world.frame, tuple(boxes))


class FleetOracle:
    """Stateful convenience wrapper: one world, advanced frame by frame."""

    def __init__(self, config: WorldConfig):
        self.config = config
        self.world = initial_world(config)

    @property
    def frame(self) -> int:
        return self.world.frame

    def advance(self) -> None:
        self.world = step_world(self.world, self.config)

    def perceive(self, subset: Iterable[int]) -> DetectionSet:
        return perceive(self.world, subset, self.config)

    def benign(self, subset: Iterable[int] | None = None) -> DetectionSet:
        subset = range(self.config.n) if subset is None else subset
        return perceive(self.world, subset, self.config, attacks=False)

    def __call__(self, subset: Iterable[int]) -> DetectionSet:
        return self.perceive(subset)


def prefix_attackers(n: int, k: int) -> frozenset:
    """The ego vehicle plus the next k - 1 ids."""
    if not 0 <= k <= n - 1:
        raise ValueError(f"attacker count must lie in [0, {n - 1}], got {k}")
    return frozenset(range(k))


def attackers_for_ratio(n: int, ratio: float) -> frozenset:
    """Attacker set for a malicious fraction, rounding k = ratio * n down."""
    if not 0.0 <= ratio < 1.0:
        raise ValueError(f"attacker ratio must lie in [0, 1), got {ratio}")
    k = int(np.floor(ratio * n + 1e-9))
    return prefix_attackers(n, min(k, n - 1))


@dataclass(frozen=True)
class Calibration:
    """Inter-frame Jaccard samples for benign and attacked fused perception."""

    benign: np.ndarray
    adversarial: np.ndarray
    epsilon: float

    @property
    def benign_mean(self) -> float:
        return float(np.mean(self.benign))

    @property
    def benign_pass_rate(self) -> float:
        return float(np.mean(self.benign >= self.epsilon))

    @property
    def adversarial_fail_rate(self) -> float:
        return float(np.mean(self.adversarial < self.epsilon))

    def separated(self, level: float = 0.99, mean_range: tuple[float, float] = (0.7, 0.9)) -> bool:
        lo, hi = mean_range
        return (
            lo <= self.benign_mean <= hi
            and self.benign_pass_rate >= level
            and self.adversarial_fail_rate >= level
        )

    def histogram(self, bins: int = 20) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        edges = np.linspace(0.0, 1.0, bins + 1)
        return edges, np.histogram(self.benign, edges)[0], np.histogram(self.adversarial, edges)[0]


def calibrate(config: WorldConfig, frames: int = 1000, epsilon: float = 0.35) -> Calibration:
    """Compare each frame's fused perception with the previous benign output.

    The benign sample uses the whole fleet rendered without attacks; the
    adversarial sample corrupts the same rendering as an active attacker
    would, regardless of the configured attacker set or schedule.
    """
    if frames < 1:
        raise ValueError("need at least one frame")
    everyone = range(config.n)
    mask = subset_mask(everyone)
    world = initial_world(config)
    prev = perceive(world, everyone, config, attacks=False)
    benign, adversarial = [], []
    for _ in range(frames):
        world = step_world(world, config)
        clean = _render_benign(world, mask, config)
        cur = DetectionSet(world.frame, tuple(clean))
        bad = DetectionSet(world.frame, tuple(_corrupt(clean, world, mask, config)))
        benign.append(jaccard(prev, cur))
        adversarial.append(jaccard(prev, bad))
        prev = cur
    return Calibration(np.array(benign), np.array(adversarial), epsilon)
