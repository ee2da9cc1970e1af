import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from prbi import theory
from prbi.core import CounterState, Rounding, apply_frame_counts, estimate_attacker_count, soft_sample
from prbi.theory import (
    brute_force_all_benign,
    convergence_target,
    drift_next_m,
    key_function,
    key_inequality_holds,
    p_ideal,
    p_ideal_approx,
    p_ideal_exact,
    run_theory_checks,
)


def test_table_values():
    assert [round(p_ideal(5, k), 3) for k in range(1, 5)] == [0.484, 0.226, 0.097, 0.032]
    assert p_ideal_exact(5, 1) == Fraction(15, 31)
    assert [p_ideal_approx(5, k) for k in range(1, 5)] == [0.5, 0.25, 0.125, 0.0625]


@pytest.mark.parametrize("n", range(2, 13))
def test_closed_form_equals_enumeration(n):
    for k in range(1, n):
        assert brute_force_all_benign(n, k) == p_ideal_exact(n, k)


@given(st.integers(2, 10), st.data())
def test_enumeration_independent_of_attacker_placement(n, data):
    k = data.draw(st.integers(1, n - 1))
    ids = data.draw(st.permutations(range(n)))[:k]
    mask = sum(1 << i for i in ids)
    assert brute_force_all_benign(n, k, mask) == p_ideal_exact(n, k)


def test_argument_validation():
    with pytest.raises(ValueError):
        p_ideal_exact(5, 0)
    with pytest.raises(ValueError):
        p_ideal_exact(5, 5)
    with pytest.raises(ValueError):
        brute_force_all_benign(21, 1)
    with pytest.raises(ValueError):
        brute_force_all_benign(5, 2, attacker_mask=0b1)
    with pytest.raises(ValueError):
        key_inequality_holds(5, 0.5)


def test_convergence_targets():
    assert convergence_target(6, 3, Rounding.FLOOR) == 3.0
    assert convergence_target(6, 3, Rounding.NEAREST) == 2.5
    assert convergence_target(6, 3, Rounding.CEIL) == 2.0
    assert convergence_target(6, 1, Rounding.CEIL) == pytest.approx(0.263034, abs=1e-6)
    assert convergence_target(6, 1, "ceil") == pytest.approx(math.log2(6 / 5))


def _live_transition(n, k, total, sum_beta, rounding=Rounding.FLOOR):
    """One frame through the core functions with attackers 0..k-1 and an ideal oracle."""
    benign = list(range(k, n))
    c = [0] * n
    left = sum_beta
    for i in benign:
        take = min(total, left)
        c[i] = take
        left -= take
    counters = CounterState(n, tuple(c), total)
    m = estimate_attacker_count(counters)
    # Benign probability orders vehicles exactly like their pass counts here.
    p = [ci / total for ci in c]
    part = soft_sample(p, m, rounding)
    ok1 = not set(part.group1) & set(range(k))
    ok2 = not set(part.group2) & set(range(k))
    return m, estimate_attacker_count(apply_frame_counts(counters, part.group1, ok1, part.group2, ok2))


@given(st.integers(3, 9), st.data())
def test_drift_closed_form_matches_live_core(n, data):
    k = data.draw(st.integers(1, n - 1))
    total = data.draw(st.integers(1, 200))
    lo = max(1, math.ceil(n * total / 2 ** (n - 1)))
    sum_beta = data.draw(st.integers(lo, (n - k) * total))
    m, live = _live_transition(n, k, total, sum_beta)
    assert drift_next_m(n, k, total, sum_beta) == pytest.approx(live, abs=1e-12)
    if math.floor(m) < k:
        assert live > m
    else:
        assert live < m


def test_two_vehicle_fixed_point():
    for total in range(1, 50):
        assert drift_next_m(2, 1, total, total) == 1.0
        assert _live_transition(2, 1, total, total) == (1.0, 1.0)


def test_key_inequality_grid():
    for n in range(3, 21):
        grid = np.linspace(1.0, n - 1.0, 10_000)
        assert np.all(key_function(grid) < n)
    assert key_function(1.0) == 2.0
    assert not key_inequality_holds(2, 1.0)
    assert key_inequality_holds(3, 2.0)


@given(st.floats(1e-3, 30))
def test_key_function_exceeds_identity(m):
    assert key_function(m) > m


def test_all_checks_pass():
    checks = run_theory_checks()
    assert len(checks) == 9
    assert all(c.passed for c in checks), theory.format_checks(checks)
    assert all(c.passed for c in run_theory_checks(max_n=16))


def test_wrong_formula_is_caught():
    wrong = lambda n, k: Fraction(2 ** (n - k), 2**n)  # noqa: E731
    checks = run_theory_checks(max_n=8, p_ideal_fn=wrong)
    assert not checks[0].passed


def test_format_checks():
    text = theory.format_checks(run_theory_checks(max_n=4))
    assert "PASS" in text and "FAIL" not in text
