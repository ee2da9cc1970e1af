"""Detection boxes, optimal IoU matching and set-level Jaccard similarity."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

DEFAULT_TAU_MATCH = 0.5


@dataclass(frozen=True)
class Box2D:
    """Axis-aligned box given by centre and extent, with one class label."""

    cx: float
    cy: float
    w: float
    h: float
    class_id: int = 0
    score: float = 1.0

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box extent must be positive, got w={self.w}, h={self.h}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")
        if self.class_id < 0:
            raise ValueError(f"class_id must be non-negative, got {self.class_id}")

    @classmethod
    def from_corners(cls, x0, y0, x1, y1, class_id=0, score=1.0) -> "Box2D":
        return cls((x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0, class_id, score)

    @property
    def corners(self) -> tuple[float, float, float, float]:
        return (
            self.cx - self.w / 2,
            self.cy - self.h / 2,
            self.cx + self.w / 2,
            self.cy + self.h / 2,
        )

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class DetectionSet:
    """One frame's perception output. Box order carries no meaning."""

    frame: int
    boxes: tuple[Box2D, ...] = ()

    def __post_init__(self):
        if self.frame < 0:
            raise ValueError(f"frame index must be non-negative, got {self.frame}")
        if not isinstance(self.boxes, tuple):
            object.__setattr__(self, "boxes", tuple(self.boxes))

    def __len__(self) -> int:
        return len(self.boxes)

    def __iter__(self):
        return iter(self.boxes)

    @cached_property
    def corner_array(self) -> np.ndarray:
        if not self.boxes:
            return np.zeros((0, 4))
        return np.array([b.corners for b in self.boxes], dtype=float)

    @cached_property
    def class_array(self) -> np.ndarray:
        return np.array([b.class_id for b in self.boxes], dtype=int)

    def to_text(self) -> str:
        lines = [str(self.frame)]
        for b in self.boxes:
            lines.append(f"{b.cx!r} {b.cy!r} {b.w!r} {b.h!r} {b.class_id} {b.score!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DetectionSet":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty detection record")
        boxes = []
        for ln in lines[1:]:
            parts = ln.split()
            if len(parts) != 6:
                raise ValueError(f"malformed box line: {ln!r}")
            cx, cy, w, h = (float(p) for p in parts[:4])
            boxes.append(Box2D(cx, cy, w, h, int(parts[4]), float(parts[5])))
        return cls(int(lines[0]), tuple(boxes))


def dump_records(sets: Iterable[DetectionSet]) -> str:
    """Concatenate records, blank-line separated."""
    return "\n".join(ds.to_text() for ds in sets)


def load_records(text: str) -> list[DetectionSet]:
    chunks = [c for c in text.split("\n\n") if c.strip()]
    return [DetectionSet.from_text(c) for c in chunks]


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[tuple[int, int, float], ...]
    unmatched_a: tuple[int, ...] = field(default=())
    unmatched_b: tuple[int, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.pairs)


def iou(a: Box2D, b: Box2D) -> float:
    ax0, ay0, ax1, ay1 = a.corners
    bx0, by0, bx1, by1 = b.corners
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two (k, 4) corner arrays."""
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    return inter / (area_a[:, None] + area_b[None, :] - inter)


def _box_key(b: Box2D) -> tuple:
    return (b.cx, b.cy, b.w, b.h, b.class_id, b.score)


def optimal_assignment(ious: np.ndarray) -> list[tuple[int, int]]:
    """Max-total-IoU one-to-one assignment (cost 1 - IoU)."""
    if ious.size == 0:
        return []
    rows, cols = linear_sum_assignment(1.0 - ious)
    return list(zip(rows.tolist(), cols.tolist()))


def hungarian_match(a: DetectionSet, b: DetectionSet, tau_match: float = DEFAULT_TAU_MATCH) -> MatchResult:
    """Optimal one-to-one matching over same-class pairs with IoU >= tau_match.

    Ineligible pairs are excluded before assignment rather than dropped after
    it, so a cross-class tie can never displace a valid pair. Among eligible
    pairs the assignment maximizes the number of matches, then total IoU.
    """
    if not 0.0 < tau_match <= 1.0:
        raise ValueError(f"tau_match must lie in (0, 1], got {tau_match}")
    order_a = sorted(range(len(a.boxes)), key=lambda i: _box_key(a.boxes[i]))
    order_b = sorted(range(len(b.boxes)), key=lambda i: _box_key(b.boxes[i]))
    pairs = []
    if order_a and order_b:
        ious = iou_matrix(a.corner_array[order_a], b.corner_array[order_b])
        same = a.class_array[order_a][:, None] == b.class_array[order_b][None, :]
        eligible = same & (ious >= tau_match)
        weight = np.where(eligible, 1.0 + ious, 0.0)
        rows, cols = linear_sum_assignment(weight, maximize=True)
        for r, c in zip(rows.tolist(), cols.tolist()):
            if eligible[r, c]:
                pairs.append((order_a[r], order_b[c], float(ious[r, c])))
    pairs.sort()
    used_a = {p[0] for p in pairs}
    used_b = {p[1] for p in pairs}
    return MatchResult(
        pairs=tuple(pairs),
        unmatched_a=tuple(i for i in range(len(a.boxes)) if i not in used_a),
        unmatched_b=tuple(i for i in range(len(b.boxes)) if i not in used_b),
    )


def jaccard(a: DetectionSet, b: DetectionSet, tau_match: float = DEFAULT_TAU_MATCH) -> float:
    """Matched pairs over the union of two detection sets; two empty sets score 1."""
    if not a.boxes and not b.boxes:
        return 1.0
    # Evaluate in a fixed argument order so the result is exactly symmetric.
    if sorted(map(_box_key, b.boxes)) < sorted(map(_box_key, a.boxes)):
        a, b = b, a
    matched = len(hungarian_match(a, b, tau_match).pairs)
    return matched / (len(a) + len(b) - matched)


def greedy_assignment(ious: np.ndarray) -> list[tuple[int, int]]:
    """Highest-IoU-first greedy assignment; used only as a comparison baseline."""
    taken_r, taken_c, out = set(), set(), []
    flat = sorted(
        ((ious[r, c], r, c) for r in range(ious.shape[0]) for c in range(ious.shape[1])),
        key=lambda t: (-t[0], t[1], t[2]),
    )
    for _, r, c in flat:
        if r not in taken_r and c not in taken_c:
            taken_r.add(r)
            taken_c.add(c)
            out.append((r, c))
    return out


def as_boxes(rows: Sequence[Sequence[float]]) -> tuple[Box2D, ...]:
    """Build boxes from (cx, cy, w, h[, class_id[, score]]) rows."""
    out = []
    for row in rows:
        cx, cy, w, h = row[:4]
        cls = int(row[4]) if len(row) > 4 else 0
        score = float(row[5]) if len(row) > 5 else 1.0
        out.append(Box2D(float(cx), float(cy), float(w), float(h), cls, score))
    return tuple(out)

