import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cuscoflow import geometry as geo
from cuscoflow.geometry import Ball, ClosedSet, Cone, HPolytope, Intersection, Translate, VPolytope, box

coord = st.floats(-5, 5, allow_nan=False)
point2 = st.tuples(coord, coord).map(np.array)
unit_dir = st.floats(0, 2 * math.pi).map(lambda a: np.array([math.cos(a), math.sin(a)]))

BODIES = {
    "ball": Ball([0.5, -0.2], 1.3),
    "box": box([-1, -0.5], [2, 1]),
    "triangle": VPolytope([[0, 0], [2, 0], [0.5, 1.5]]),
    "hpoly": HPolytope([[1, 1], [-1, 0], [0, -1]], [1, 0, 0]),
    "lens": Intersection([Ball([0, 0], 1), Ball([1, 0], 1)]),
    "shifted": Translate(box([0, 0], [1, 1]), [-2, 1]),
}
BOUNDED = ["ball", "box", "triangle", "hpoly", "lens", "shifted"]


# -- frozen examples ------------------------------------------------------------

def test_support_examples():
    assert geo.support(Ball([0, 0], 1), [3, 4]) == pytest.approx(5)
    assert geo.support(box([-1, -1], [1, 1]), [1, -2]) == pytest.approx(3)
    assert geo.support(Cone([[1, 0]], 2), [1, 0]) == math.inf


def test_projection_examples():
    assert np.allclose(geo.project(Ball([0, 0], 1), [3, 4]), [0.6, 0.8])
    assert np.allclose(geo.project(box([-1, -1], [1, 1]), [2, 0.5]), [1, 0.5])
    assert np.allclose(geo.project(Cone([[1, 0]], 2), [-1, 1]), [0, 0])


def test_distance_examples():
    assert geo.distance(Ball([0, 0], 1), [2, 0]) == pytest.approx(1)
    assert geo.distance(Ball([0, 0], 1), [0.5, 0]) == 0
    union = ClosedSet([Ball([-2, 0], 1), Ball([2, 0], 1)])
    assert geo.distance(union, [0, 0]) == pytest.approx(1)


def test_project_set_examples():
    union = ClosedSet([Ball([-2, 0], 1), Ball([2, 0], 1)])
    got = geo.project_set(union, [0, 0])
    assert len(got) == 2
    assert np.allclose(got[0], [-1, 0]) and np.allclose(got[1], [1, 0])
    one = geo.project_set(Ball([0, 0], 1), [2, 0])
    assert len(one) == 1 and np.allclose(one[0], [1, 0])
    inside = geo.project_set(box([-1, -1], [1, 1]), [0.3, -0.2])
    assert len(inside) == 1 and np.allclose(inside[0], [0.3, -0.2])


def test_normal_rays_examples():
    rays = geo.proximal_normal_rays(box([-1, -1], [1, 1]), [1, 1])
    assert sorted(map(tuple, np.round(rays, 12))) == [(0.0, 1.0), (1.0, 0.0)]
    rays = geo.proximal_normal_rays(Ball([0, 0], 1), [1, 0])
    assert len(rays) == 1 and np.allclose(rays[0], [1, 0])
    assert geo.proximal_normal_rays(Ball([0, 0], 1), [0, 0]) == []


def test_normal_rays_off_set_raises():
    with pytest.raises(geo.NotInSetError, match="point not in set"):
        geo.proximal_normal_rays(Ball([0, 0], 1), [2, 0])


def test_tangent_examples():
    ball = Ball([0, 0], 1)
    assert geo.tangent_membership(ball, [1, 0], [0, 1])
    assert not geo.tangent_membership(ball, [1, 0], [1, 0])
    assert geo.tangent_membership(ball, [1, 0], [-1, 0])


def test_min_norm_point_examples():
    assert np.allclose(geo.min_norm_point(Ball([3, 0], 1)), [2, 0])
    assert np.allclose(geo.min_norm_point(Cone([[1, 0]], 2)), [0, 0])
    # oracle: brute force over a fine discretization of the segment
    s = np.linspace(0, 1, 100001)[:, None]
    seg = (1 - s) * np.array([1, 1]) + s * np.array([2, 1])
    oracle = seg[np.argmin(np.linalg.norm(seg, axis=1))]
    got = geo.min_norm_point(VPolytope([[1, 1], [2, 1]]))
    assert np.allclose(got, oracle, atol=1e-5)
    assert np.allclose(got, [1, 1], atol=1e-9)


def test_union_normal_cone_keeps_common_rays_only():
    # two boxes sharing the edge x = 1: the corner (1, 1) has only the upward normal
    union = ClosedSet([box([0, 0], [1, 1]), box([1, 0], [2, 1])])
    rays = geo.proximal_normal_rays(union, [1, 1])
    assert len(rays) == 1 and np.allclose(rays[0], [0, 1])


def test_empty_polytope_rejected():
    with pytest.raises(geo.EmptySetError):
        HPolytope([[1, 0], [-1, 0]], [-1, -1])


def test_projection_matches_brute_force_on_lens():
    lens = BODIES["lens"]
    axis = np.linspace(-1, 2, 601)
    grid = np.stack(np.meshgrid(axis, axis), -1).reshape(-1, 2)
    # membership oracle written directly from the two disks
    inside = grid[(np.linalg.norm(grid, axis=1) <= 1) & (np.linalg.norm(grid - [1, 0], axis=1) <= 1)]
    for x in ([2.0, 1.0], [-1.0, 0.3], [0.5, 2.0]):
        oracle = np.min(np.linalg.norm(inside - x, axis=1))
        assert geo.distance(lens, x) == pytest.approx(oracle, abs=1e-2)


# -- properties -------------------------------------------------------------------

@pytest.mark.parametrize("name", BOUNDED)
@settings(max_examples=40, deadline=None)
@given(x=point2, z=point2)
def test_projection_variational_inequality(name, x, z):
    body = BODIES[name]
    p = body.project(x)
    assert body.contains(p, tol=1e-7)
    q = body.project(z)
    assert float((x - p) @ (q - p)) <= 1e-6 * (1 + np.linalg.norm(x))


@pytest.mark.parametrize("name", BOUNDED)
@settings(max_examples=40, deadline=None)
@given(x=point2, y=point2)
def test_distance_is_one_lipschitz(name, x, y):
    body = BODIES[name]
    assert abs(body.distance(x) - body.distance(y)) <= np.linalg.norm(x - y) + 1e-7


@pytest.mark.parametrize("name", BOUNDED)
@settings(max_examples=30, deadline=None)
@given(xi=unit_dir)
def test_support_dual_to_support_point(name, xi):
    body = BODIES[name]
    s = body.support(xi)
    p = body.support_point(xi)
    assert body.contains(p, tol=1e-6)
    assert float(xi @ p) == pytest.approx(s, abs=1e-6)
    # no boundary point beats the support value
    for u in np.eye(2):
        q = body.project(p + 3 * u)
        assert float(xi @ q) <= s + 1e-6


@pytest.mark.parametrize("name", BOUNDED)
@settings(max_examples=30, deadline=None)
@given(x=point2)
def test_distance_gradient_matches_finite_differences(name, x):
    body = BODIES[name]
    d = body.distance(x)
    if d < 1e-2:
        return
    grad = (x - body.project(x)) / d
    eps = 1e-6
    fd = np.array([(body.distance(x + eps * e) - body.distance(x - eps * e)) / (2 * eps) for e in np.eye(2)])
    assert np.allclose(fd, grad, atol=1e-4)


@pytest.mark.parametrize("name", ["ball", "box", "triangle", "hpoly"])
@settings(max_examples=30, deadline=None)
@given(u=unit_dir, v=unit_dir)
def test_tangent_normal_polarity(name, u, v):
    body = BODIES[name]
    x = body.project(body.support_point(u) + u)
    rays = geo.proximal_normal_rays(body, x)
    worst = max((float(r @ v) for r in rays), default=-1.0)
    if abs(worst) < 0.05:
        return  # too close to the tangent boundary for the distance-ratio surrogate
    polar = geo.tangent_membership(body, x, v)
    surrogate = geo.tangent_membership(body, x, v, method="surrogate")
    assert polar == surrogate == (worst < 0)


@settings(max_examples=30, deadline=None)
@given(x=point2)
def test_union_distance_is_min_of_pieces(x):
    pieces = [Ball([-2, 0], 1), box([1, -1], [3, 1])]
    union = ClosedSet(pieces)
    assert union.distance(x) == pytest.approx(min(p.distance(x) for p in pieces))
    for p in geo.project_set(union, x):
        assert np.linalg.norm(x - p) == pytest.approx(union.distance(x), abs=1e-9)


def test_surrogate_tangent_agrees_with_polar_on_ball():
    ball = Ball([0, 0], 1)
    for ang in np.linspace(0, 2 * math.pi, 37):
        v = np.array([math.cos(ang), math.sin(ang)])
        if abs(v[0]) < 0.05:
            continue  # surrogate resolution near the tangent line
        assert geo.tangent_membership(ball, [1, 0], v, method="surrogate") == (v[0] < 0)


def test_dimension_mismatch_raises():
    with pytest.raises(geo.DimensionError):
        geo.project(Ball([0, 0], 1), [1, 2, 3])
