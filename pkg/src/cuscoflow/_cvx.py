"""Conic-solver fallbacks for convex bodies without a closed-form oracle."""
from __future__ import annotations

import math

import numpy as np


def body_constraints(body, s):
    """cvxpy constraints expressing ``s in body``."""
    import cvxpy as cp

    from . import geometry as g

    if isinstance(body, g.Ball):
        return [cp.norm(s - body.center, 2) <= body.radius]
    if isinstance(body, g.HPolytope):
        return [body.normals @ s <= body.offsets]
    if isinstance(body, g.VPolytope):
        lam = cp.Variable(body.vertices.shape[0], nonneg=True)
        return [cp.sum(lam) == 1, s == body.vertices.T @ lam]
    if isinstance(body, g.Cone):
        if body.generators.shape[0] == 0:
            return [s == 0]
        mu = cp.Variable(body.generators.shape[0], nonneg=True)
        return [s == body.generators.T @ mu]
    if isinstance(body, g.Translate):
        t = cp.Variable(body.dim)
        return body_constraints(body.base, t) + [s == t + body.shift]
    if isinstance(body, g.Intersection):
        out = []
        for p in body.parts:
            out += body_constraints(p, s)
        return out
    raise TypeError(f"no conic description for {type(body).__name__}")


def _solve(problem):
    import cvxpy as cp

    try:
        problem.solve(solver=cp.CLARABEL)
    except cp.SolverError:
        problem.solve(solver=cp.SCS, eps=1e-10, max_iters=200_000)
    return problem.status


def support_via_solver(body, xi: np.ndarray):
    import cvxpy as cp

    from .geometry import EmptySetError, GeometryError

    s = cp.Variable(body.dim)
    prob = cp.Problem(cp.Maximize(xi @ s), body_constraints(body, s))
    status = _solve(prob)
    if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
        return math.inf, None
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        raise EmptySetError("body is empty")
    if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise GeometryError(f"support solve failed: {status}")
    p = np.asarray(s.value, dtype=float)
    return float(xi @ p), p


def feasible_difference(target_set, base_point: np.ndarray, subtract_body) -> bool:
    """Whether some x* in ``subtract_body`` puts ``base_point - x*`` in ``target_set``.

    ``target_set`` must be a ConvexBody.  Used for nonempty-intersection
    tests such as [v - A(x)] ∩ T != ∅.
    """
    import cvxpy as cp

    n = base_point.size
    xs = cp.Variable(n)
    d = cp.Variable(n)
    cons = body_constraints(subtract_body, xs) + body_constraints(target_set, d)
    cons.append(d == base_point - xs)
    prob = cp.Problem(cp.Minimize(0), cons)
    status = _solve(prob)
    return status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)


def minimize_over(body, objective_builder):
    """Minimize a convex cvxpy expression of ``s`` over ``s in body``."""
    import cvxpy as cp

    s = cp.Variable(body.dim)
    prob = cp.Problem(cp.Minimize(objective_builder(s)), body_constraints(body, s))
    _solve(prob)
    return prob.value, (None if s.value is None else np.asarray(s.value, dtype=float))
