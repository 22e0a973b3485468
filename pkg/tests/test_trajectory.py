import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from cavcoord.trajectory import (
    InfeasibleEntry,
    Limits,
    coefficients,
    evaluate,
    exit_time_bounds,
    is_state_control_feasible,
    time_at_position,
)

LIMITS = Limits(v_min=0.15, v_max=0.5, u_min=-0.45, u_max=0.45)

# bisection on the feasibility predicate of an independently solved cubic
T_VMAX_03_53 = 12.23076923076923
T_UMAX_03_53 = 5.027713773341709
T_UB_03_53 = 26.5
U0_AT_122308 = 0.0327040528475632
VF_AT_122308 = 0.4999983647839878  # v0 + numerical integral of u


speeds = st.floats(0.15, 0.5)
lengths = st.floats(1.0, 10.0)


def test_constant_speed_coefficients():
    tr = coefficients(0.5, 5.0, 10.0)
    assert (tr.a, tr.b, tr.c, tr.d) == (0.0, 0.0, 0.5, 0.0)


def test_coefficients_match_linear_solve():
    a, b, c, d = oracles.cubic_by_solve(0.3, 5.3, 12.2308)
    tr = coefficients(0.3, 5.3, 12.2308)
    assert tr.a == pytest.approx(float(a), rel=1e-12)
    assert tr.b == pytest.approx(float(b), rel=1e-12)
    assert tr.c == 0.3 and tr.d == 0.0


def test_exit_speed_reaches_vmax():
    tr = coefficients(0.3, 5.3, 12.2308)
    _, v, _ = evaluate(tr, tr.tf)
    assert v == pytest.approx(VF_AT_122308, abs=1e-9)
    assert v == pytest.approx(0.5, abs=1e-5)


def test_entry_control():
    tr = coefficients(0.3, 5.3, 12.2308)
    _, _, u = evaluate(tr, 0.0)
    assert u == pytest.approx(U0_AT_122308, abs=1e-12)
    assert u == pytest.approx(0.0327, abs=5e-5)


@pytest.mark.parametrize("args", [(0.0, 5.0, 10.0), (0.3, 0.0, 10.0), (0.3, 5.0, 0.0), (-1, 1, 1)])
def test_coefficients_reject_non_positive(args):
    with pytest.raises(ValueError):
        coefficients(*args)


def test_evaluate_constant_speed():
    tr = coefficients(0.5, 5.0, 10.0)
    assert evaluate(tr, 4.0) == pytest.approx((2.0, 0.5, 0.0))


def test_evaluate_outside_horizon():
    tr = coefficients(0.5, 5.0, 10.0)
    with pytest.raises(ValueError):
        evaluate(tr, 10.5)
    with pytest.raises(ValueError):
        evaluate(tr.shifted(3.0), 1.0)


def test_shifted_keeps_shape():
    tr = coefficients(0.3, 5.3, 14.0)
    sh = tr.shifted(7.5)
    assert sh.tf == pytest.approx(21.5)
    assert evaluate(sh, 7.5 + 3.0) == pytest.approx(evaluate(tr, 3.0))


def test_bounds_tutorial_case():
    b = exit_time_bounds(0.3, 5.3, LIMITS)
    assert b.t_umax == pytest.approx(T_UMAX_03_53, abs=1e-9)
    assert b.t_vmax == pytest.approx(T_VMAX_03_53, abs=1e-9)
    assert b.t_lb == pytest.approx(T_VMAX_03_53, abs=1e-9)
    # 9 v0^2 + 12 S u_min < 0: no u_min root
    assert 9 * 0.3**2 + 12 * 5.3 * -0.45 < 0
    assert b.t_umin is None
    assert b.t_ub == pytest.approx(T_UB_03_53, abs=1e-9)


def test_bounds_lower_is_max_not_min():
    # taking the smaller candidate would certify an infeasible cubic
    b = exit_time_bounds(0.3, 5.3, LIMITS)
    too_early = coefficients(0.3, 5.3, min(b.t_umax, b.t_vmax))
    assert not is_state_control_feasible(too_early, LIMITS)
    assert is_state_control_feasible(coefficients(0.3, 5.3, b.t_lb), LIMITS)


def test_bounds_at_vmax_entry():
    b = exit_time_bounds(0.5, 4.0, LIMITS)
    assert b.t_lb == pytest.approx(4.0 / 0.5)


def test_bounds_with_umin_root():
    # short zone, fast entry: decelerating to v_min would need u < u_min
    lim = Limits(0.15, 0.5, -0.05, 0.45)
    b = exit_time_bounds(0.5, 1.0, lim)
    assert b.t_umin is not None and b.t_umin < b.t_vmin
    lb, ub = oracles.bisect_bounds(np.array([0.5]), np.array([1.0]), lim)
    assert b.t_ub == pytest.approx(float(ub[0]), abs=1e-6)
    assert b.t_lb == pytest.approx(float(lb[0]), abs=1e-6)


def test_bounds_reject_bad_entry():
    with pytest.raises(InfeasibleEntry):
        exit_time_bounds(0.6, 5.0, LIMITS)
    with pytest.raises(InfeasibleEntry):
        exit_time_bounds(0.1, 5.0, LIMITS)


@pytest.mark.parametrize("bad", [(0, 0.5, -1, 1), (0.6, 0.5, -1, 1), (0.1, 0.5, 0.0, 1), (0.1, 0.5, -1, 0)])
def test_limits_invariants(bad):
    with pytest.raises(ValueError):
        Limits(*bad)


def test_feasibility_examples():
    assert is_state_control_feasible(coefficients(0.3, 3.0, 10.0), LIMITS)
    b = exit_time_bounds(0.3, 5.3, LIMITS)
    assert not is_state_control_feasible(coefficients(0.3, 5.3, b.t_lb - 1e-3), LIMITS)
    assert is_state_control_feasible(coefficients(0.3, 5.3, b.t_lb), LIMITS)
    assert is_state_control_feasible(coefficients(0.3, 5.3, b.t_ub), LIMITS)
    assert not is_state_control_feasible(coefficients(0.3, 5.3, b.t_ub + 1e-3), LIMITS)


def test_time_at_position_examples():
    tr = coefficients(0.5, 5.0, 10.0)
    assert time_at_position(tr, 2.5) == pytest.approx(5.0, abs=1e-12)
    tr = coefficients(0.3, 5.3, 12.2308).shifted(4.0)
    assert time_at_position(tr, 0.0) == 4.0
    assert time_at_position(tr, 5.3) == tr.tf
    t = time_at_position(tr, 2.65)
    assert evaluate(tr, t)[0] == pytest.approx(2.65, abs=1e-9)
    with pytest.raises(ValueError):
        time_at_position(tr, 5.4)
    with pytest.raises(ValueError):
        time_at_position(tr, -0.1)


def test_time_at_position_matches_polynomial_roots():
    tr = coefficients(0.2, 6.0, 20.0)
    for p in np.linspace(0.1, 5.9, 13):
        ref = oracles.crossing_time(tr.a, tr.b, tr.c, tr.d, p, tr.duration)
        assert time_at_position(tr, p) == pytest.approx(ref, abs=1e-9)


@settings(max_examples=300, deadline=None)
@given(v0=speeds, S=lengths, frac=st.floats(0.0, 1.0))
def test_endpoint_check_suffices(v0, S, frac):
    b = exit_time_bounds(v0, S, LIMITS)
    tf = b.t_lb + frac * (b.t_ub - b.t_lb)
    tr = coefficients(v0, S, tf)
    assert is_state_control_feasible(tr, LIMITS)
    tau = np.linspace(0.0, tf, 1000)
    v = (3 * tr.a * tau + 2 * tr.b) * tau + tr.c
    u = 6 * tr.a * tau + 2 * tr.b
    assert v.min() >= LIMITS.v_min - 1e-9 and v.max() <= LIMITS.v_max + 1e-9
    assert u.min() >= LIMITS.u_min - 1e-9 and u.max() <= LIMITS.u_max + 1e-9


@settings(max_examples=300, deadline=None)
@given(v0=speeds, S=lengths, frac=st.floats(0.0, 1.0), q=st.floats(0.0, 1.0))
def test_round_trip(v0, S, frac, q):
    b = exit_time_bounds(v0, S, LIMITS)
    tr = coefficients(v0, S, b.t_lb + frac * (b.t_ub - b.t_lb)).shifted(3.0)
    t = tr.t0 + q * tr.duration
    p = evaluate(tr, t)[0]
    assert time_at_position(tr, p) == pytest.approx(t, abs=1e-8)


@settings(max_examples=200, deadline=None)
@given(v0=st.floats(0.01, 2.0), S=st.floats(0.1, 50.0), tf=st.floats(0.1, 100.0))
def test_boundary_conditions(v0, S, tf):
    tr = coefficients(v0, S, tf)
    p, _, u = tr.local(tf)
    assert p == pytest.approx(S, abs=1e-9 * max(1.0, S))
    assert abs(u) <= 1e-9


def test_dense_sampling_never_violates_limits_inside_bounds():
    rng = np.random.default_rng(3)
    for _ in range(200):
        v0, S = rng.uniform(0.15, 0.5), rng.uniform(1.0, 10.0)
        b = exit_time_bounds(v0, S, LIMITS)
        tf = rng.uniform(b.t_lb, b.t_ub)
        assert oracles.feasible(v0, S, tf, LIMITS, tol=1e-9)
    assert math.isfinite(b.t_lb)
