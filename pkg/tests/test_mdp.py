import math

import numpy as np
import pytest

from aoisched.mdp import (ConvergenceError, NonThresholdPolicyError, TruncationSpec, ValueTable,
                          extract_thresholds, flip_point, interior_limits, joint_truncation,
                          solve_decoupled, solve_joint)
from aoisched.whittle import DecoupledParams, beta, integer_thresholds, optimal_cost, whittle

CELLS = [(lam, m) for lam in (0.2, 0.5, 0.8, 1.0) for m in (0.5, 1, 5, 10)]


def policy_cost(lam, m, sched, A, W):
    """Average cost of a fixed decoupled policy on the clamped grid, by a
    direct stationary-distribution solve (independent of value iteration)."""
    n = A * W
    idx = lambda a, d: (min(a, A) - 1) * W + min(d, W - 1)
    P = np.zeros((n, n))
    c = np.zeros(n)
    for a in range(1, A + 1):
        for d in range(W):
            i = idx(a, d)
            if sched[a - 1, d]:
                c[i] = a + m
                P[i, idx(a + 1, 0)] += 1 - lam
                P[i, idx(1, a)] += lam
            else:
                c[i] = a + d
                P[i, idx(a + 1, d)] += 1 - lam
                P[i, idx(1, d + a)] += lam
    # pi (P - I) = 0, sum pi = 1
    M = np.vstack([(P - np.eye(n)).T, np.ones(n)])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1
    pi = np.linalg.lstsq(M, rhs, rcond=None)[0]
    return float(pi @ c)


@pytest.fixture(scope="module")
def tables():
    return {(lam, m): solve_decoupled(DecoupledParams(lam, m), TruncationSpec(64, 64)) for lam, m in CELLS}


def test_reference_pinned_and_cost_bounds(tables):
    for vt in tables.values():
        assert vt.f[0, 0] == 0.0
        assert vt.j_avg >= 1.0
        assert vt.span <= vt.trunc.tol


def test_examples():
    vt = solve_decoupled(DecoupledParams(1, 1), TruncationSpec(64, 64))
    assert vt.j_avg == pytest.approx(2.0, abs=1e-6)
    vt = solve_decoupled(DecoupledParams(1, 0), TruncationSpec(16, 16))
    assert vt.j_avg == pytest.approx(1.0, abs=1e-9)
    assert vt.policy.all()


def test_value_iteration_matches_policy_evaluation():
    for lam, m in [(0.5, 10), (0.8, 1), (0.3, 5)]:
        vt = solve_decoupled(DecoupledParams(lam, m), TruncationSpec(40, 30))
        assert policy_cost(lam, m, vt.policy, 40, 31) == pytest.approx(vt.j_avg, abs=1e-7)


def test_closed_form_is_upper_envelope(tables):
    """The closed form uses real-valued thresholds; the integer grid can do
    no worse and agrees exactly when beta is an integer."""
    for (lam, m), vt in tables.items():
        jc = optimal_cost(DecoupledParams(lam, m))
        assert vt.j_avg <= jc + 1e-7
        assert jc - vt.j_avg < 0.15
    # beta = 1 and beta = 4 (lam=1: b^2 + b - 2m = 0 with m = 1, 10)
    assert tables[(1.0, 1)].j_avg == pytest.approx(2.0, abs=1e-6)
    assert tables[(1.0, 10)].j_avg == pytest.approx(5.0, abs=1e-6)


def test_better_threshold_policy_does_not_exist():
    # brute force over integer thresholds for a = 1..3 (later rows fixed at the a=3 value)
    lam, m, A, W = 0.5, 10, 30, 25
    vt = solve_decoupled(DecoupledParams(lam, m), TruncationSpec(A, W - 1))
    best = math.inf
    for t1 in range(1, 8):
        for t2 in range(t1, 9):
            for t3 in range(t2, 9):
                T = np.array([t1, t2] + [t3] * (A - 2))
                sched = np.arange(W)[None, :] >= T[:, None]
                best = min(best, policy_cost(lam, m, sched, A, W))
    assert vt.j_avg <= best + 1e-7


@pytest.mark.invariant
def test_f_monotone_in_d(tables):
    for vt in tables.values():
        a_lim, d_lim = interior_limits(vt)
        f = vt.f[:a_lim, :d_lim + 1]
        assert np.all(np.diff(f, axis=1) >= -1e-7)


@pytest.mark.invariant
def test_idle_states_with_equal_aoi_share_value(tables):
    """Idle states with equal AoI share the same cost-to-go."""
    for vt in tables.values():
        a_lim, d_lim = interior_limits(vt)
        groups = {}
        for a in range(1, a_lim + 1):
            for d in range(0, d_lim + 1):
                if not vt.policy[a - 1, d]:
                    groups.setdefault(a + d, []).append(vt.f[a - 1, d])
        for vals in groups.values():
            assert max(vals) - min(vals) <= 1e-6


@pytest.mark.invariant
def test_value_gap_above_threshold_equals_cost(tables):
    """Above the threshold, f(a, d) - f(a, 0) equals the scheduling cost."""
    for (lam, m), vt in tables.items():
        a_lim, d_lim = interior_limits(vt)
        for a in range(1, a_lim + 1):
            for d in range(1, d_lim + 1):
                if vt.policy[a - 1, d]:
                    assert vt.f[a - 1, d] - vt.f[a - 1, 0] == pytest.approx(m, abs=1e-6)


@pytest.mark.invariant
def test_threshold_structure(tables):
    for vt in tables.values():
        th = extract_thresholds(vt)
        vals = [th[a] for a in sorted(th)]
        assert all(x <= y for x, y in zip(vals, vals[1:]))


def test_threshold_examples():
    vt = solve_decoupled(DecoupledParams(1, 1), TruncationSpec(32, 32))
    assert extract_thresholds(vt)[1] == 1
    vt = solve_decoupled(DecoupledParams(0.5, 0), TruncationSpec(32, 32))
    assert set(extract_thresholds(vt).values()) == {0}
    vt = solve_decoupled(DecoupledParams(0.5, 10), TruncationSpec(128, 128))
    th = extract_thresholds(vt)
    assert [th[a] for a in range(1, 8)] == [4, 5, 5, 5, 5, 5, 5]
    assert [th[a] for a in range(1, 8)] == integer_thresholds(DecoupledParams(0.5, 10), 7).tolist()


def test_non_threshold_policy_reported():
    vt = solve_decoupled(DecoupledParams(0.5, 1), TruncationSpec(20, 20))
    bad = ValueTable(vt.f, vt.j_avg, vt.policy.copy(), vt.q_gap, vt.trunc, vt.iterations, vt.span,
                     params=vt.params)
    bad.policy[0, 10] = False
    with pytest.raises(NonThresholdPolicyError) as e:
        extract_thresholds(bad, a_limit=3)
    assert e.value.a == 1


def test_non_convergence_reported():
    with pytest.raises(ConvergenceError) as e:
        solve_decoupled(DecoupledParams(0.3, 5), TruncationSpec(32, 32, max_iters=3))
    assert e.value.iterations == 3 and e.value.span > 0


def test_truncation_validation():
    with pytest.raises(ValueError):
        TruncationSpec(1, 10)
    with pytest.raises(ValueError):
        TruncationSpec(10, 10, tol=0)


def test_small_grid_warns():
    vt = solve_decoupled(DecoupledParams(0.2, 50), TruncationSpec(8, 4))
    assert vt.warnings


def test_flip_point_exact_cases():
    # a = 1, the d/lam branch and integer x all flip exactly at the index
    for lam, a, d in [(0.5, 1, 5), (0.3, 1, 12), (0.7, 4, 3), (1.0, 1, 7), (1.0, 3, 6), (0.5, 2, 4)]:
        assert flip_point(lam, a, d) == pytest.approx(whittle(lam, a, d), abs=1e-5)


def test_flip_point_near_index_elsewhere():
    # with a fractional x the integer grid flips close to, not at, the index
    f = flip_point(0.5, 2, 5)
    assert f == pytest.approx(37 / 3, abs=1e-5)
    assert abs(f - whittle(0.5, 2, 5)) < 0.15


def test_to_csv(tmp_path):
    vt = solve_decoupled(DecoupledParams(0.5, 2), TruncationSpec(4, 3))
    p = tmp_path / "vt.csv"
    vt.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0].startswith("# a_max=4 d_max=3")
    assert lines[1] == "a,d,f,schedule"
    assert len(lines) == 2 + 4 * 4
    a, d, f, s = lines[2 + 5].split(",")
    assert (int(a), int(d)) == (2, 1) and float(f) == vt.value(2, 1)


# -- joint model ----------------------------------------------------------------

def joint_bellman_residual(vt):
    l1, l2 = vt.lambdas
    A, W = vt.f.shape[0], vt.f.shape[1]
    f = vt.f
    a = np.arange(1, A + 1)[:, None, None, None]
    d1 = np.arange(W)[None, :, None, None]
    b = np.arange(1, A + 1)[None, None, :, None]
    d2 = np.arange(W)[None, None, None, :]
    a, d1, b, d2 = np.broadcast_arrays(a, d1, b, d2)
    ca = lambda x: np.minimum(x, A) - 1
    cd = lambda x: np.minimum(x, W - 1)

    def expect(na0, nd0, na1, nd1, oa, od, ob, oe):
        # next states for (no arrival, arrival) of each terminal
        out = 0.0
        for x1, p1 in ((0, 1 - l1), (1, l1)):
            for x2, p2 in ((0, 1 - l2), (1, l2)):
                s1 = (ca(np.where(x1, 1, na0)), cd(np.where(x1, od, nd0)))
                s2 = (ca(np.where(x2, 1, na1)), cd(np.where(x2, oe, nd1)))
                out = out + p1 * p2 * f[s1[0], s1[1], s2[0], s2[1]]
        return out

    # schedule terminal 1: it resets d1 (arrival gives (1, a)); terminal 2 ages
    q1 = a + b + d2 + expect(a + 1, 0 * d1, b + 1, d2, a, a, b, d2 + b)
    q2 = a + d1 + b + expect(a + 1, d1, b + 1, 0 * d2, a, d1 + a, b, b)
    best = np.minimum(q1, q2)
    diff = best - f
    return diff.max() - diff.min(), float(diff.mean())


def test_joint_bellman_residual_independent():
    vt = solve_joint((0.5, 0.3), TruncationSpec(14, 13, tol=1e-10))
    span, j = joint_bellman_residual(vt)
    assert span < 1e-8
    assert j == pytest.approx(vt.j_avg, abs=1e-8)


def test_joint_lambda_one():
    vt = solve_joint((1.0, 1.0), TruncationSpec(32, 31))
    assert vt.j_avg / 2 == pytest.approx(1.5, abs=1e-6)


def test_joint_rejects_other_sizes():
    with pytest.raises(ValueError):
        solve_joint((0.5, 0.5, 0.5))


def test_joint_priority_for_rare_terminal():
    vt = solve_joint((1.0, 1e-3), TruncationSpec(16, 15))
    # terminal 2 empty: serve terminal 1
    assert all(vt.policy[0, d1, a2 - 1, 0] == 0 for d1 in range(1, 15) for a2 in range(1, 16))
    # terminal 2 holding a packet with a larger gap than terminal 1 can offer: serve it
    assert all(vt.policy[0, 1, a2 - 1, d2] == 1 for a2 in range(1, 8) for d2 in range(2, 15))


def test_joint_truncation_rule():
    assert joint_truncation((1.0, 1.0)).a_max == 16
    assert joint_truncation((0.2, 0.9)).a_max == math.ceil(math.log(1e-5) / math.log(0.8))
    assert joint_truncation((0.01, 0.5)).a_max == 64
