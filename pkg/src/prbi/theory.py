"""Closed forms and brute-force oracles for the grouping and convergence results.

Nothing here touches the simulator. The checks in :func:`run_theory_checks`
compare each closed form against an independent enumeration or grid
evaluation and are what ``prbi theory`` prints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from prbi.core import Rounding, apply_rounding


def _check_nk(n: int, k: int) -> None:
    if n < 2 or not 1 <= k <= n - 1:
        raise ValueError(f"need n >= 2 and 1 <= k <= n - 1, got n={n}, k={k}")


def p_ideal_exact(n: int, k: int) -> Fraction:
    """Chance that a uniformly drawn non-empty subset holds no attacker."""
    _check_nk(n, k)
    return Fraction(2 ** (n - k) - 1, 2**n - 1)


def p_ideal(n: int, k: int) -> float:
    return float(p_ideal_exact(n, k))


def p_ideal_approx(n: int, k: int) -> float:
    if k < 0 or k > n:
        raise ValueError(f"k must lie in [0, n], got {k}")
    return 2.0**-k


def brute_force_all_benign(n: int, k: int, attacker_mask: int | None = None) -> Fraction:
    """Enumerate every non-empty subset and count those avoiding the attackers."""
    if n > 20:
        raise ValueError("enumeration limited to n <= 20")
    _check_nk(n, k)
    if attacker_mask is None:
        attacker_mask = (1 << k) - 1
    if bin(attacker_mask).count("1") != k or attacker_mask >= 1 << n:
        raise ValueError("attacker mask must select exactly k of the n vehicles")
    subsets = np.arange(1, 1 << n, dtype=np.int64)
    clean = int(np.count_nonzero((subsets & attacker_mask) == 0))
    return Fraction(clean, (1 << n) - 1)


def convergence_target(n: int, k: int, rounding: Rounding) -> float:
    """Where the continuous attacker-count estimate settles for a grouping rounding mode."""
    _check_nk(n, k)
    rounding = Rounding(rounding)
    if rounding is Rounding.FLOOR:
        return float(k)
    if rounding is Rounding.NEAREST:
        return k - 0.5
    if k == 1:
        return math.log2(n / (n - 1))
    return float(k - 1)


def drift_next_m(n: int, k: int, total: int, sum_beta: int, rounding: Rounding = Rounding.FLOOR) -> float:
    """One-frame update of the attacker-count estimate under effective attacks.

    With ``r`` vehicles in the suspicious group: if ``r < k`` neither group
    passes, otherwise the ``n - r`` vehicles of the second group all pass.
    """
    _check_nk(n, k)
    if total < 1 or not 0 < sum_beta <= n * total:
        raise ValueError("need total >= 1 and 0 < sum_beta <= n * total")
    m = min(math.log2(n * total / sum_beta), n - 1)
    r = apply_rounding(m, rounding)
    if r < k:
        nxt = math.log2(n * (total + 1) / sum_beta)
    else:
        nxt = math.log2(n * (total + 1) / (n - r + sum_beta))
    return min(nxt, float(n - 1))


def key_function(m):
    """m + m / (2^m - 1); works on scalars and arrays."""
    return m + m / (np.power(2.0, m) - 1.0)


def key_inequality_holds(n: int, m: float) -> bool:
    if not 1 <= m <= n - 1:
        raise ValueError(f"m must lie in [1, n - 1], got {m}")
    return bool(key_function(m) < n)


@dataclass(frozen=True)
class TheoryCheck:
    name: str
    passed: bool
    detail: str


def run_theory_checks(max_n: int = 12, p_ideal_fn: Callable[[int, int], Fraction] | None = None) -> list[TheoryCheck]:
    """Cross-check every closed form against its independent oracle."""
    if max_n < 2:
        raise ValueError(f"max_n must be >= 2, got {max_n}")
    p_ideal_fn = p_ideal_fn or p_ideal_exact
    checks = []

    bad = [
        (n, k)
        for n in range(2, max_n + 1)
        for k in range(1, n)
        if Fraction(p_ideal_fn(n, k)) != brute_force_all_benign(n, k)
    ]
    checks.append(
        TheoryCheck(
            "all-benign probability = subset enumeration",
            not bad,
            f"n=2..{max_n}, all k" + (f"; mismatches {bad[:3]}" if bad else ""),
        )
    )

    table = [round(float(p_ideal_fn(5, k)), 3) for k in range(1, 5)]
    checks.append(
        TheoryCheck(
            "n=5 probabilities 0.484/0.226/0.097/0.032",
            table == [0.484, 0.226, 0.097, 0.032],
            str(table),
        )
    )

    gap = max(abs(float(p_ideal_fn(5, k)) - p_ideal_approx(5, k)) for k in range(1, 5))
    checks.append(TheoryCheck("n=5 approximation gap <= 0.032", gap <= 0.032 + 1e-12, f"max gap {gap:.4f}"))

    worst = math.inf
    for n in range(3, max(max_n, 3) + 1):
        grid = np.linspace(1.0, n - 1.0, 10_000)
        worst = min(worst, float(np.min(n - key_function(grid))))
    checks.append(
        TheoryCheck(
            "m + m/(2^m-1) < n on [1, n-1]",
            worst > 0,
            f"n=3..{max(max_n, 3)}, min margin {worst:.4g}",
        )
    )
    checks.append(
        TheoryCheck(
            "equality at n=2, m=1",
            float(key_function(1.0)) == 2.0 and not key_inequality_holds(2, 1.0),
            "f(1) = 2",
        )
    )

    mono = all(
        bool(np.all(np.diff(key_function(np.linspace(1.0, n - 1.0, 10_000))) > 0)) for n in range(3, max(max_n, 3) + 1)
    )
    checks.append(TheoryCheck("m + m/(2^m-1) strictly increasing", mono, "dense grid"))

    rng = np.random.default_rng(2024)
    violations = 0
    for n in range(3, min(max_n, 10) + 1):
        for k in range(1, n):
            for _ in range(200):
                total, sum_beta = _random_reachable(rng, n, k)
                m = min(math.log2(n * total / sum_beta), n - 1)
                nxt = drift_next_m(n, k, total, sum_beta)
                if (math.floor(m) < k and not nxt > m) or (math.floor(m) >= k and not nxt < m):
                    violations += 1
    checks.append(TheoryCheck("estimate drifts toward k", violations == 0, f"{violations} violations"))

    fixed = all(drift_next_m(2, 1, t, t) == 1.0 for t in range(1, 200))
    checks.append(TheoryCheck("n=2 fixed point m = 1", fixed, "sum_beta = N"))

    targets = (
        convergence_target(6, 1, Rounding.CEIL),
        convergence_target(6, 5, Rounding.FLOOR),
        convergence_target(6, 5, Rounding.NEAREST),
    )
    checks.append(
        TheoryCheck(
            "rounding targets",
            abs(targets[0] - 0.263) < 5e-4 and targets[1:] == (5.0, 4.5),
            ", ".join(f"{t:.3f}" for t in targets),
        )
    )
    return checks


def _random_reachable(rng: np.random.Generator, n: int, k: int) -> tuple[int, int]:
    """Counter totals reachable with k attackers and an unclamped estimate."""
    total = int(rng.integers(1, 500))
    lo = max(1, math.ceil(n * total / 2 ** (n - 1)))
    hi = (n - k) * total
    return total, int(rng.integers(lo, hi + 1))


def format_checks(checks: list[TheoryCheck]) -> str:
    width = max(len(c.name) for c in checks)
    lines = [f"{'check':<{width}}  result  detail", "-" * (width + 24)]
    for c in checks:
        lines.append(f"{c.name:<{width}}  {'PASS' if c.passed else 'FAIL':<6}  {c.detail}")
    return "\n".join(lines)
