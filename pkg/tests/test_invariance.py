import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cuscoflow import cusco as cm
from cuscoflow import invariance as inv
from cuscoflow import operators as op
from cuscoflow.geometry import Ball, ClosedSet, box
from cuscoflow.integrator import IntegratorConfig
from cuscoflow.reporting import FAIL, INCONCLUSIVE, PASS
from cuscoflow.sampling import Sampler
from cuscoflow.systems import canned_systems, constant_drift, point_set_ball_drift, sweeping_ball

DISK = Ball([0, 0], 1)
ND = op.NormalConeOf(DISK)


# -- frozen examples --------------------------------------------------------------

def test_condition_star_examples():
    assert inv.check_condition_star(DISK, ND).holds
    assert inv.check_condition_star(DISK, op.QuadraticGradient(np.eye(2))).holds
    # y = (0, 1) ∈ dom A projects onto (0, 1.5) ∉ dom A
    bad = inv.check_condition_star(Ball([0, 2], 0.5), ND)
    assert not bad.holds and bad.witnesses
    y, p = bad.witnesses[0]
    assert np.linalg.norm(p) > 1


def test_strong_margin_examples():
    F = cm.Singleton(cm.AffineMap(-np.eye(2), [0, 0]))
    got = inv.evaluate_strong(DISK, ND, F, [1, 0], "normal-projected")
    assert got.margin == pytest.approx(-1)
    assert np.allclose(got.xi, [1, 0]) and np.allclose(got.v, [-1, 0])
    assert inv.strong_margin(DISK, ND, cm.constant_singleton([1, 0]), [1, 0], "normal-inf") == -math.inf
    s = constant_drift()
    assert inv.strong_margin(s.S, s.A, s.F, [0.5, 0], "normal-inf") == pytest.approx(1)


def test_tangent_margins_are_indicators():
    s = constant_drift()
    assert inv.strong_margin(s.S, s.A, s.F, [0.5, 0], "tangent-projected") == 1
    assert inv.strong_margin(s.S, s.A, s.F, [-0.5, 0], "tangent-projected") == 0
    assert inv.strong_margin(s.S, s.A, s.F, [0.5, 0], "tangent-intersect") == 1


def test_certify_strong_examples():
    s = sweeping_ball()
    rep = inv.certify_strong(s.S, s.A, s.F, "normal-inf", Sampler(200))
    assert rep.verdict == PASS and len(rep.points) == 200
    d = constant_drift()
    rep = inv.certify_strong(d.S, d.A, d.F, "normal-inf", Sampler(200))
    assert rep.verdict == FAIL
    worst = max(rep.witnesses, key=lambda r: r.margin)
    assert np.allclose(worst.x, [0.5, 0]) and worst.margin == pytest.approx(1)


def test_certify_strong_flags_absent_normals():
    S = box([-1e3, -1e3], [1e3, 1e3])
    inner = Sampler(20).region_points(Ball([0, 0], 2))
    rep = inv.certify_strong(S, op.QuadraticGradient(np.eye(2)), cm.constant_singleton([1, 0]),
                             points=inner)
    assert rep.verdict == PASS and "no active normals" in rep.notes


def test_certify_strong_inconclusive_without_projection_hypothesis():
    rep = inv.certify_strong(Ball([0, 2], 0.5), ND, cm.constant_singleton([0, 0]), sampler=Sampler(20))
    assert rep.verdict == INCONCLUSIVE


def test_weak_examples():
    p = point_set_ball_drift()
    assert inv.weak_margin(p.S, p.A, p.F, [0, 0], m_x=0.0) == pytest.approx(-1)
    assert inv.strong_margin(p.S, p.A, p.F, [0, 0]) == pytest.approx(1)
    # hand value: ξ = (1, 0), inf_v ⟨ξ, v⟩ = -1, σ over A(x) ∩ B_1 = 1
    assert inv.weak_margin(DISK, ND, cm.constant_ball([0, 0], 1), [1, 0]) == pytest.approx(-2)
    rep = inv.certify_weak(DISK, ND, cm.constant_ball([0, 0], 1), sampler=Sampler(40))
    assert rep.verdict == PASS


def test_weak_horizon_examples():
    assert inv.weak_horizon(3, 1, 2) == pytest.approx(1 / 3)
    assert inv.weak_horizon(3, 0, 0) == math.inf
    assert inv.weak_horizon(0.3, 0, 1) == pytest.approx(0.1)


def test_falsification_examples():
    d = constant_drift()
    ev = inv.falsify_by_simulation(d.S, d.A, d.F, [0.5, 0], IntegratorConfig(1e-3, 1.0))
    assert ev.falsified
    assert ev.runs[0].exit_time == pytest.approx(0.011, abs=2e-3)  # first time d_S > 10h at unit speed
    s = sweeping_ball()
    ev = inv.falsify_by_simulation(s.S, s.A, s.F, [1, 0], IntegratorConfig(1e-2, 2.0))
    assert not ev.falsified
    assert max(r.max_distance for r in ev.runs) <= 2e-2
    p = point_set_ball_drift()
    weak = inv.falsify_by_simulation(p.S, p.A, p.F, [0, 0], IntegratorConfig(1e-2, 1.0), kind="weak")
    assert weak.supported and weak.runs[0].max_distance == 0
    strong = inv.falsify_by_simulation(p.S, p.A, p.F, [0, 0], IntegratorConfig(1e-2, 1.0))
    assert strong.falsified


def test_variant_parsing():
    assert inv.CriterionVariant.parse("v") is inv.CriterionVariant.NORMAL_INF
    assert inv.CriterionVariant.parse("NormalProjected") is inv.CriterionVariant.NORMAL_PROJECTED
    with pytest.raises(ValueError):
        inv.CriterionVariant.parse("bogus")


def test_point_outside_set_raises():
    with pytest.raises(inv.NotInSetError):
        inv.strong_margin(DISK, ND, cm.constant_singleton([0, 0]), [2, 0])


# -- properties -------------------------------------------------------------------

SYSTEMS = canned_systems()
angle = st.floats(0, 2 * math.pi)


@pytest.mark.parametrize("idx", range(len(SYSTEMS)))
@settings(max_examples=15, deadline=None)
@given(a=angle)
def test_strong_variant_pointwise_relations(idx, a):
    # the variants agree per system, not per point: an unbounded A(x) lets the
    # inf variant pass where the projected residual leaves S
    s = SYSTEMS[idx]
    u = np.array([math.cos(a), math.sin(a)])
    x = s.S.pieces[0].project(s.S.pieces[0].support_point(u) + u)
    m = {v.value: inv.strong_margin(s.S, s.A, s.F, x, v) for v in inv.STRONG_VARIANTS}
    tol = inv.TOL_ANALYTIC
    assert (m["tangent-projected"] <= tol) == (m["normal-projected"] <= tol), m
    assert m["normal-inf"] <= m["normal-projected"] + 1e-9, m
    assert m["normal-inf"] <= m["normal-inf-truncated"] + 1e-9, m


def test_inf_variant_passes_where_projected_fails():
    s = SYSTEMS[5]
    x = np.array([1.0, 1e-6])
    assert s.S.distance(x) < 1e-12 and np.allclose(s.S.pieces[0].project(x), x)
    assert inv.strong_margin(s.S, s.A, s.F, x, "normal-projected") == pytest.approx(1e-6, rel=1e-3)
    assert inv.strong_margin(s.S, s.A, s.F, x, "normal-inf") == -math.inf
    assert inv.strong_margin(s.S, s.A, s.F, x, "tangent-projected") == 1
    assert inv.certify_strong(s.S, s.A, s.F, "normal-inf", Sampler(40)).verdict == FAIL


@pytest.mark.parametrize("idx", range(len(SYSTEMS)))
@settings(max_examples=15, deadline=None)
@given(a=angle)
def test_truncated_margin_dominates_inf_margin(idx, a):
    s = SYSTEMS[idx]
    u = np.array([math.cos(a), math.sin(a)])
    x = s.S.pieces[0].project(s.S.pieces[0].support_point(u) + u)
    full = inv.strong_margin(s.S, s.A, s.F, x, "normal-inf")
    trunc = inv.strong_margin(s.S, s.A, s.F, x, "normal-inf-truncated")
    assert trunc >= full - 1e-9


@settings(max_examples=15, deadline=None)
@given(a=angle, r=st.floats(0.0, 1.0))
def test_weak_pass_implied_by_strong_pass(a, r):
    # F(x) = B(c, r): strong needs σ_F(ξ) ≤ σ_A(ξ); weak only -σ_F(-ξ) ≤ σ_{A∩B}(ξ)
    F = cm.constant_ball([0.4 * math.cos(a), 0.4 * math.sin(a)], r)
    A = op.QuadraticGradient(np.eye(2))
    for x in ([1, 0], [0, 1], [-0.6, 0.8]):
        strong = inv.strong_margin(DISK, A, F, x) <= inv.TOL_ANALYTIC
        weak = inv.weak_margin(DISK, A, F, x) <= inv.TOL_ANALYTIC
        assert weak or not strong


@pytest.mark.parametrize("idx", [0, 1, 2])
def test_certified_systems_keep_trajectories_close(idx):
    s = SYSTEMS[idx]
    assert s.invariant
    assert inv.certify_strong(s.S, s.A, s.F, "normal-inf", Sampler(60)).verdict == PASS
    for x0 in Sampler(4).boundary_points(s.S):
        ev = inv.falsify_by_simulation(s.S, s.A, s.F, x0, IntegratorConfig(1e-2, 1.0))
        assert not ev.falsified


def test_weak_steering_decreases_distance():
    p = point_set_ball_drift()
    from cuscoflow.integrator import DistanceTo, Steered, integrate
    traj = integrate(p.A, p.F, IntegratorConfig(1e-2, 1.0, Steered(DistanceTo(p.S))), [0.3, -0.2])
    d = np.array([p.S.distance(x) for x in traj.states])
    assert np.all(np.diff(d) <= 1e-12) and d[-1] == pytest.approx(0, abs=1e-12)


def test_union_certificate_uses_sampled_tolerance():
    S = ClosedSet([Ball([-0.5, 0], 1), Ball([0.5, 0], 1)])
    rep = inv.certify_strong(S, op.QuadraticGradient(np.eye(2)), cm.constant_singleton([0, 0]),
                             sampler=Sampler(40))
    assert rep.tol == inv.TOL_SAMPLED and rep.verdict == PASS
