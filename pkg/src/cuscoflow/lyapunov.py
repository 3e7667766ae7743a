"""Lyapunov pairs (V, W): subgradient criteria, envelopes, lifting, trajectory checks.

A pair is certified when, at every sampled x in dom V,

    sup_{ξ ∈ ∂V(x)} sup_{v ∈ F(x)} inf_{x* ∈ A(x)} ⟨ξ, v - x*⟩ + aV(x) + W(x) ≤ tol,

with the singular subgradients checked without the aV + W term.  The inner
infimum is ⟨ξ, v⟩ - σ_{A(x)}(ξ), so the supremum over v is σ_{F(x)}(ξ).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .cusco import CuscoMap, Selection
from .geometry import (
    TAU_GEO,
    Ball,
    ConvexBody,
    GeometryError,
    HPolytope,
    Intersection,
    NotInSetError,
    as_point,
    axis_frame,
    dedup_directions,
)
from .integrator import Trajectory
from .invariance import M_RADIUS, M_SAMPLES, TOL_ANALYTIC
from .operators import MonotoneOperator, OperatorError, OperatorValue, local_min_section_bound, min_section
from .reporting import FAIL, INCONCLUSIVE, PASS, CertificateReport, PointRecord, map_ordered
from .sampling import Sampler

DEFAULT_REGION_RADIUS = 3.0
ACTIVE_TOL = 1e-12


class LyapunovError(ValueError):
    pass


# -- scalar functions ---------------------------------------------------------

class ScalarFn:
    dim: int

    def value(self, x) -> float:
        raise NotImplementedError

    def values(self, Z: np.ndarray) -> np.ndarray:
        """Values at the rows of Z."""
        return np.array([self.value(z) for z in Z])

    def in_domain(self, x) -> bool:
        return True

    def domain_body(self) -> ConvexBody | None:
        """The closed convex domain, or None for R^n."""
        return None

    def subgradients(self, x, budget: int = 64) -> list[np.ndarray]:
        raise NotImplementedError

    def singular_subgradients(self, x) -> list[np.ndarray]:
        self._require(x)
        return [np.zeros(self.dim)]

    def directional_derivative(self, x, d) -> float:
        raise NotImplementedError

    def linear_directional(self, x) -> np.ndarray | None:
        """g with V'(x; d) = ⟨g, d⟩ for all d, when V is differentiable at x."""
        return None

    def directional_cvx(self, x, d):
        """(cvxpy expression, constraints) for V'(x; d) with d a cvxpy variable."""
        raise NotImplementedError

    def lipschitz_on(self, points) -> float:
        """max ‖ξ‖ over subgradients at the given points (local Lipschitz estimate)."""
        best = 0.0
        for p in points:
            for g in self.subgradients(p):
                best = max(best, float(np.linalg.norm(g)))
        return best

    def _require(self, x) -> np.ndarray:
        x = as_point(x, self.dim)
        if not self.in_domain(x):
            raise LyapunovError("x not in dom V")
        return x

    def to_dict(self) -> dict:
        raise NotImplementedError


class ConvexQuadratic(ScalarFn):
    """½xᵀQx + bᵀx + c."""

    def __init__(self, Q, b=None, c: float = 0.0):
        Q = np.atleast_2d(np.array(Q, dtype=float))
        if Q.shape[0] != Q.shape[1]:
            raise LyapunovError("Q must be square")
        if not np.allclose(Q, Q.T, atol=1e-9) or np.linalg.eigvalsh(0.5 * (Q + Q.T)).min() < -1e-9:
            raise LyapunovError("Q not PSD")
        self.Q = 0.5 * (Q + Q.T)
        self.dim = Q.shape[0]
        self.b = np.zeros(self.dim) if b is None else as_point(b, self.dim)
        self.c = float(c)

    @classmethod
    def zero(cls, n: int) -> "ConvexQuadratic":
        return cls(np.zeros((n, n)))

    def value(self, x) -> float:
        x = as_point(x, self.dim)
        return float(0.5 * x @ self.Q @ x + self.b @ x + self.c)

    def values(self, Z: np.ndarray) -> np.ndarray:
        return 0.5 * np.einsum("ij,jk,ik->i", Z, self.Q, Z) + Z @ self.b + self.c

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.Q @ x + self.b

    def subgradients(self, x, budget: int = 64):
        return [self.gradient(self._require(x))]

    def directional_derivative(self, x, d) -> float:
        return float(self.gradient(self._require(x)) @ as_point(d, self.dim))

    def linear_directional(self, x):
        return self.gradient(as_point(x, self.dim))

    def directional_cvx(self, x, d):
        return self.gradient(as_point(x, self.dim)) @ d, []

    def lipschitz_on(self, points) -> float:
        return max((float(np.linalg.norm(self.gradient(as_point(p, self.dim)))) for p in points),
                   default=0.0)

    def to_dict(self) -> dict:
        return {"kind": "ConvexQuadratic", "Q": self.Q.tolist(), "b": self.b.tolist(), "c": self.c}


class NormPower(ScalarFn):
    """weight·‖x‖^p for p ∈ {1, 2}."""

    def __init__(self, p: int, weight: float = 1.0, dim: int = 2):
        if p not in (1, 2):
            raise LyapunovError("p must be 1 or 2")
        if not weight >= 0:
            raise LyapunovError("weight must be ≥ 0")
        self.p = int(p)
        self.weight = float(weight)
        self.dim = int(dim)

    def value(self, x) -> float:
        return self.weight * float(np.linalg.norm(as_point(x, self.dim))) ** self.p

    def values(self, Z: np.ndarray) -> np.ndarray:
        return self.weight * np.linalg.norm(Z, axis=1) ** self.p

    def subgradients(self, x, budget: int = 64):
        x = self._require(x)
        nx = float(np.linalg.norm(x))
        if self.p == 2:
            return [2.0 * self.weight * x]
        if nx > 0:
            return [self.weight * x / nx]
        frame = axis_frame(self.dim)
        extra = []
        for i, a in enumerate(frame):
            for b in frame[i + 1:]:
                s = a + b
                if np.linalg.norm(s) > 0:
                    extra.append(s / np.linalg.norm(s))
        return [self.weight * u for u in (frame + extra)[:max(budget, 2 * self.dim)]]

    def directional_derivative(self, x, d) -> float:
        x = self._require(x)
        d = as_point(d, self.dim)
        nx = float(np.linalg.norm(x))
        if self.p == 2:
            return float(2.0 * self.weight * x @ d)
        if nx == 0:
            return self.weight * float(np.linalg.norm(d))
        return float(self.weight * x @ d / nx)

    def linear_directional(self, x):
        x = as_point(x, self.dim)
        if self.p == 2:
            return 2.0 * self.weight * x
        nx = float(np.linalg.norm(x))
        return None if nx == 0 else self.weight * x / nx

    def directional_cvx(self, x, d):
        import cvxpy as cp

        g = self.linear_directional(x)
        if g is None:
            return self.weight * cp.norm(d, 2), []
        return g @ d, []

    def lipschitz_on(self, points) -> float:
        if self.p == 1:
            return self.weight
        return max((2 * self.weight * float(np.linalg.norm(p)) for p in points), default=0.0)

    def to_dict(self) -> dict:
        return {"kind": "NormPower", "p": self.p, "weight": self.weight, "dim": self.dim}


class MaxAffine(ScalarFn):
    """max_i ⟨g_i, x⟩ + c_i."""

    def __init__(self, gradients, offsets):
        G = np.atleast_2d(np.array(gradients, dtype=float))
        c = np.array(offsets, dtype=float).reshape(-1)
        if G.shape[0] != c.size or G.shape[0] == 0:
            raise LyapunovError("gradients and offsets must be nonempty and of equal length")
        self.G = G
        self.c = c
        self.dim = G.shape[1]

    def _vals(self, x):
        return self.G @ x + self.c

    def active(self, x: np.ndarray) -> np.ndarray:
        vals = self._vals(x)
        top = vals.max()
        return np.flatnonzero(vals >= top - ACTIVE_TOL * max(1.0, abs(top)))

    def value(self, x) -> float:
        return float(self._vals(as_point(x, self.dim)).max())

    def values(self, Z: np.ndarray) -> np.ndarray:
        return (Z @ self.G.T + self.c).max(axis=1)

    def subgradients(self, x, budget: int = 64):
        x = self._require(x)
        return dedup_directions([self.G[i] for i in self.active(x)])[:budget]

    def directional_derivative(self, x, d) -> float:
        x = self._require(x)
        d = as_point(d, self.dim)
        return float(max(self.G[i] @ d for i in self.active(x)))

    def linear_directional(self, x):
        x = as_point(x, self.dim)
        act = self.active(x)
        grads = dedup_directions([self.G[i] for i in act])
        return grads[0] if len(grads) == 1 else None

    def directional_cvx(self, x, d):
        import cvxpy as cp

        act = self.active(as_point(x, self.dim))
        return cp.max(self.G[act] @ d), []

    def lipschitz_on(self, points) -> float:
        return float(np.linalg.norm(self.G, axis=1).max())

    def to_dict(self) -> dict:
        return {"kind": "MaxAffine", "gradients": self.G.tolist(), "offsets": self.c.tolist()}


class IndicatorPlus(ScalarFn):
    """smooth(x) on a convex body, +inf outside."""

    def __init__(self, body: ConvexBody, smooth: ConvexQuadratic | None = None):
        self.body = body
        self.dim = body.dim
        self.smooth = ConvexQuadratic.zero(self.dim) if smooth is None else smooth
        if self.smooth.dim != self.dim:
            raise LyapunovError("dimension mismatch")

    def in_domain(self, x) -> bool:
        return self.body.contains(as_point(x, self.dim))

    def domain_body(self):
        return self.body

    def value(self, x) -> float:
        x = as_point(x, self.dim)
        return self.smooth.value(x) if self.in_domain(x) else math.inf

    def _rays(self, x: np.ndarray):
        return self.body.normal_rays(self.body.project(x))

    def subgradients(self, x, budget: int = 64):
        x = self._require(x)
        g = self.smooth.gradient(x)
        return [g] + [g + r for r in self._rays(x)][: max(0, budget - 1)]

    def singular_subgradients(self, x):
        x = self._require(x)
        rays = self._rays(x)
        return rays if rays else [np.zeros(self.dim)]

    def directional_derivative(self, x, d) -> float:
        x = self._require(x)
        d = as_point(d, self.dim)
        if any(float(r @ d) > TAU_GEO * max(1.0, float(np.linalg.norm(d))) for r in self._rays(x)):
            return math.inf
        return float(self.smooth.gradient(x) @ d)

    def linear_directional(self, x):
        x = as_point(x, self.dim)
        return None if self._rays(x) else self.smooth.gradient(x)

    def directional_cvx(self, x, d):
        x = as_point(x, self.dim)
        rays = self._rays(x)
        cons = [np.array(rays) @ d <= 0] if rays else []
        return self.smooth.gradient(x) @ d, cons

    def lipschitz_on(self, points) -> float:
        return self.smooth.lipschitz_on(points)

    def to_dict(self) -> dict:
        return {"kind": "IndicatorPlus", "body": self.body.to_dict(), "smooth": self.smooth.to_dict()}


@dataclass(frozen=True)
class LyapunovPair:
    V: ScalarFn
    W: ScalarFn
    a: float = 0.0

    def __post_init__(self):
        if not (self.a >= 0 and math.isfinite(self.a)):
            raise LyapunovError("a must be ≥ 0")
        if self.V.dim != self.W.dim:
            raise LyapunovError("V and W differ in dimension")

    def to_dict(self) -> dict:
        return {"V": self.V.to_dict(), "W": self.W.to_dict(), "a": self.a}


def subgradients(V: ScalarFn, x, budget: int = 64) -> list[np.ndarray]:
    return V.subgradients(x, budget)


def singular_subgradients(V: ScalarFn, x) -> list[np.ndarray]:
    return V.singular_subgradients(x)


def directional_derivative(V: ScalarFn, x, d) -> float:
    """Contingent directional derivative V'(x; d); +inf when d leaves dom V."""
    return V.directional_derivative(x, d)


# -- criteria -----------------------------------------------------------------

LYAPUNOV_VARIANTS = ("s1", "truncated", "directional", "directional-truncated")


def lyapunov_variant(variant: str) -> str:
    aliases = {"subgradient": "s1", "i": "truncated", "ii": "directional",
               "iii": "directional-truncated"}
    v = aliases.get(variant, variant)
    if v not in LYAPUNOV_VARIANTS:
        raise ValueError(f"unknown Lyapunov variant {variant!r}")
    return v


@dataclass(frozen=True)
class LyapunovMargin:
    margin: float
    xi: np.ndarray | None = None
    v: np.ndarray | None = None


def _value_body(A: MonotoneOperator, x) -> ConvexBody:
    val: OperatorValue = A.evaluate(x)
    if val.empty:
        raise OperatorError("empty value")
    return val.body


def _truncated(A: MonotoneOperator, F: CuscoMap, x, m_x: float) -> ConvexBody:
    body = _value_body(A, x)
    R = F.norm_bound(x) + m_x
    if float(np.linalg.norm(min_section(A, x))) > R + TAU_GEO:
        raise OperatorError("𝔪 bound too small")
    return Intersection([body, Ball(np.zeros(body.dim), R + TAU_GEO)])


def _candidates(F: CuscoMap, x, dirs) -> list[np.ndarray]:
    Fx = F.value(x)
    cands = list(F.extreme_points(x))
    for g in dirs:
        if np.any(g):
            cands.append(Fx.support_point(g))
    return dedup_directions(cands, tol=1e-12)


def lyapunov_margin(pair: LyapunovPair, A: MonotoneOperator, F: CuscoMap, x, variant: str = "s1",
                    budget: int = 64, m_x: float | None = None) -> LyapunovMargin:
    """Largest left-hand side of a Lyapunov criterion at x (pass iff ≤ tol).

    Parameters
    ----------
    pair : LyapunovPair
    A : MonotoneOperator
    F : CuscoMap
    x : array_like
        A point of dom V ∩ dom A.
    variant : str
        ``"s1"``: subgradient form with the singular check;
        ``"truncated"``: same with A(x) ∩ B_{‖F(x)‖+𝔪(x)};
        ``"directional"``: sup_v V'(x; v - Π_{A(x)}(v));
        ``"directional-truncated"``: sup_v inf_{x*} V'(x; v - x*) over the truncation.
    m_x : float, optional
        𝔪(x) for the truncated variants; estimated locally when omitted.
    """
    variant = lyapunov_variant(variant)
    V, W, a = pair.V, pair.W, pair.a
    x = as_point(x, V.dim)
    if not V.in_domain(x):
        raise LyapunovError("x not in dom V")
    if not A.in_domain(x):
        raise OperatorError("x not in dom A")
    offset = a * V.value(x) + W.value(x)
    truncated = variant in ("truncated", "directional-truncated")
    if truncated and m_x is None:
        m_x = local_min_section_bound(A, _dom_set(V), x, M_RADIUS, M_SAMPLES)
    Ax = _truncated(A, F, x, m_x) if truncated else _value_body(A, x)
    Fx = F.value(x)
    best = LyapunovMargin(-math.inf)
    if variant in ("s1", "truncated"):
        for xi in V.subgradients(x, budget):
            sa = Ax.support(xi)
            if math.isinf(sa):
                continue
            m = Fx.support(xi) - sa + offset
            if m > best.margin:
                best = LyapunovMargin(m, xi, Fx.support_point(xi))
        for rho in V.singular_subgradients(x):
            if not np.any(rho):
                continue
            sa = Ax.support(rho)
            if math.isinf(sa):
                continue
            m = Fx.support(rho) - sa
            if m > best.margin:
                best = LyapunovMargin(m, rho, Fx.support_point(rho))
        return best
    dirs = V.subgradients(x, budget)
    for v in _candidates(F, x, dirs):
        if variant == "directional":
            d = v - Ax.project(v)
            m = V.directional_derivative(x, d) + offset
        else:
            m = _inf_directional(V, x, v, Ax) + offset
        if m > best.margin:
            best = LyapunovMargin(m, None, v)
    return best


def _inf_directional(V: ScalarFn, x: np.ndarray, v: np.ndarray, body: ConvexBody) -> float:
    """inf over x* ∈ body of V'(x; v - x*)."""
    g = V.linear_directional(x)
    if g is not None:
        return float(g @ v) - body.support(g)
    import cvxpy as cp

    from ._cvx import _solve, body_constraints

    xs = cp.Variable(V.dim)
    d = v - xs
    expr, cons = V.directional_cvx(x, d)
    prob = cp.Problem(cp.Minimize(expr), cons + body_constraints(body, xs))
    status = _solve(prob)
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return math.inf
    if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
        return -math.inf
    return float(prob.value)


def _dom_set(V: ScalarFn):
    from .geometry import ClosedSet

    body = V.domain_body()
    if body is None:
        return ClosedSet(Ball(np.zeros(V.dim), 1e6))
    return ClosedSet(body)


def _sample_points(V: ScalarFn, region: ConvexBody | None, sampler: Sampler) -> list[np.ndarray]:
    body = V.domain_body()
    if region is None:
        region = body if body is not None else Ball(np.zeros(V.dim), DEFAULT_REGION_RADIUS)
    elif body is not None:
        region = Intersection([region, body])
    pts = sampler.region_points(region)
    if body is not None:
        # boundary points carry the nontrivial subgradients of an indicator
        pts = pts + sampler.boundary_points(region)
    return [p for p in pts if V.in_domain(p)]


def certify_lyapunov(pair: LyapunovPair, A: MonotoneOperator, F: CuscoMap, variant: str = "s1",
                     sampler: Sampler | None = None, tol: float = TOL_ANALYTIC,
                     region: ConvexBody | None = None, m=None, budget: int = 64,
                     scenario: str = "", points=None) -> CertificateReport:
    """Sampled certificate that (V, W) is a strong a-Lyapunov pair.

    Samples dom V (intersected with ``region``, default B(0, 3) for finite V)
    and checks ``lyapunov_margin`` ≤ tol.  ``inconclusive`` when a sample of
    dom V falls outside dom A.
    """
    variant = lyapunov_variant(variant)
    sampler = sampler or Sampler(n_points=500)
    pts = _sample_points(pair.V, region, sampler) if points is None else [as_point(p) for p in points]
    outside = [p for p in pts if not A.in_domain(p)]
    notes = ["sampled certificate"]
    if variant in ("truncated", "directional-truncated") and m is None:
        notes.append(f"𝔪 estimated by sampling (radius {M_RADIUS}, {M_SAMPLES} samples)")
    inside = [p for p in pts if A.in_domain(p)]

    def m_of(p):
        if m is None:
            return None
        return float(m(p)) if callable(m) else float(m)

    results = map_ordered(lambda p: lyapunov_margin(pair, A, F, p, variant, budget, m_of(p)), inside)
    records = [PointRecord(p, r.margin, r.xi, r.v) for p, r in zip(inside, results)]
    witnesses = [r for r in records if r.margin > tol]
    if outside:
        verdict = INCONCLUSIVE
        notes.append("dom V ⊄ dom A on samples")
    elif not records:
        verdict = INCONCLUSIVE
        notes.append("no sample in dom V")
    else:
        verdict = FAIL if witnesses else PASS
    return CertificateReport(
        scenario, variant, tol, records, verdict, witnesses,
        {"dom_V_in_dom_A": {"holds": not outside, "checked": len(pts),
                            "witnesses": [{"x": p} for p in outside[:10]]}},
        None, notes, sampler.seed, {"a": pair.a})


def local_horizon(F: CuscoMap, A: MonotoneOperator, x0, c: float, rho: float) -> float:
    """Largest T with 3(‖F(x0)‖ + ‖A°(x0)‖)·T·e^{cT} ≤ ρ (+inf if x0 is stationary)."""
    if not rho > 0:
        raise ValueError("rho must be > 0")
    K = 3.0 * (F.norm_bound(x0) + float(np.linalg.norm(min_section(A, x0))))
    if K == 0.0:
        return math.inf
    g = lambda T: K * T * math.exp(c * T) - rho  # noqa: E731
    hi = rho / K
    return brentq(g, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def certify_lyapunov_local(pair: LyapunovPair, A: MonotoneOperator, F: CuscoMap, x0, rho: float,
                           c: float, variant: str = "s1", sampler: Sampler | None = None,
                           tol: float = TOL_ANALYTIC, scenario: str = "") -> CertificateReport:
    """Criterion on B(x0, ρ) ∩ dom V; the report carries the horizon T of validity."""
    x0 = as_point(x0, pair.V.dim)
    rep = certify_lyapunov(pair, A, F, variant, sampler, tol, Ball(x0, rho), scenario=scenario)
    rep.extra["horizon"] = local_horizon(F, A, x0, c, rho)
    rep.extra["x0"] = x0
    rep.extra["rho"] = rho
    return rep


# -- trajectory verification --------------------------------------------------

@dataclass
class TrajectoryCheck:
    V0: float
    lhs: np.ndarray
    violations: np.ndarray
    max_violation: float
    worst_index: int
    worst_violation_t: float
    C: float
    tol: float
    passed: bool
    error: str | None = None

    def to_dict(self) -> dict:
        return {"V(x0)": self.V0, "max_violation": self.max_violation,
                "worst_index": self.worst_index, "worst_violation_t": self.worst_violation_t,
                "C": self.C, "tol": self.tol, "verdict": PASS if self.passed else FAIL,
                "error": self.error}


def verify_along_trajectory(pair: LyapunovPair, traj: Trajectory, C: float | None = None) -> TrajectoryCheck:
    """Check e^{a t_k}V(x_k) + ∫_0^{t_k} W ≤ V(x0) + C·h along a discrete trajectory.

    ∫W uses the trapezoid rule on the trajectory grid.  When ``C`` is not
    given it is estimated as (a·sup V + Lip(W)·sup‖ẋ‖)·max(1, t_K), the last
    factor accounting for errors accumulated over the horizon.
    """
    V, W, a = pair.V, pair.W, pair.a
    t = traj.times
    states = traj.states
    Vs = np.array([V.value(s) for s in states])
    bad = np.flatnonzero(~np.isfinite(Vs))
    Ws = np.array([W.value(s) for s in states])
    V0 = float(Vs[0])
    if bad.size:
        k = int(bad[0])
        return TrajectoryCheck(V0, Vs, np.full_like(Vs, np.nan), math.inf, k, float(t[k]),
                               math.nan, math.nan, False, f"V infinite at index {k}")
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (Ws[1:] + Ws[:-1]) * np.diff(t))])
    lhs = np.exp(a * t) * Vs + integral
    viol = lhs - V0
    if C is None:
        speed = float(np.max(np.linalg.norm(traj.velocities[:-1], axis=1))) if len(t) > 1 else 0.0
        C = (a * float(np.max(np.abs(Vs))) + W.lipschitz_on(states) * speed) * max(1.0, float(t[-1]))
    tol = C * traj.h
    k = int(np.argmax(viol))
    mv = float(viol[k])
    return TrajectoryCheck(V0, lhs, viol, mv, k, float(t[k]), float(C), float(tol), mv <= tol + 1e-12)


# -- Pasch–Hausdorff envelope ---------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Explicit search grid for the envelope: ``points`` per axis over [lo, hi]."""

    lo: float
    hi: float
    points: int = 2001
    refine_to: float = 1e-6


def _grid_envelope(W: ScalarFn, k: float, x: np.ndarray, grid: GridSpec) -> float:
    n = x.size
    lo = np.full(n, grid.lo, dtype=float)
    hi = np.full(n, grid.hi, dtype=float)
    per = grid.points if n == 1 else max(5, int(round(grid.points ** (1.0 / n))))
    best_val, best_z = math.inf, None
    while True:
        axes = [np.linspace(lo[i], hi[i], per) for i in range(n)]
        Z = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        vals = W.values(Z) + k * np.linalg.norm(Z - x, axis=1)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best_z = float(vals[i]), Z[i]
        spacing = float(np.max((hi - lo) / (per - 1)))
        if spacing <= grid.refine_to:
            return best_val
        lo = best_z - 2 * spacing
        hi = best_z + 2 * spacing


def pasch_hausdorff(W: ScalarFn, k: float, x, grid: GridSpec | None = None) -> float:
    """W_k(x) = inf_z W(z) + k‖x - z‖, the k-Lipschitz envelope of W.

    Closed forms are used for w‖·‖ (min(w, k)‖x‖) and w‖·‖² (the minimizer
    lies on the segment [0, x] at radius min(‖x‖, k/(2w))); max-affine W with
    every ‖g_i‖ ≤ k is already k-Lipschitz and equals its envelope.  Other
    cases solve the convex program, or search ``grid`` when one is given.
    """
    if not k > 0:
        raise ValueError("k must be > 0")
    x = as_point(x, W.dim)
    if grid is not None:
        return _grid_envelope(W, k, x, grid)
    nx = float(np.linalg.norm(x))
    if isinstance(W, NormPower):
        w = W.weight
        if W.p == 1:
            return min(w, k) * nx
        if w == 0.0:
            return 0.0
        s = min(nx, k / (2.0 * w))
        return w * s * s + k * (nx - s)
    if isinstance(W, MaxAffine) and np.all(np.linalg.norm(W.G, axis=1) <= k):
        return W.value(x)
    if isinstance(W, ConvexQuadratic) and not np.any(W.Q) and np.linalg.norm(W.b) <= k:
        return W.value(x)
    if isinstance(W, MaxAffine) and W.dim == 1:
        return _envelope_max_affine_1d(W, k, x)
    return _envelope_cvx(W, k, x)


def _envelope_max_affine_1d(W: "MaxAffine", k: float, x: np.ndarray) -> float:
    """Dual LP: max Σλ_i(g_i x + c_i) over the simplex with |Σλ_i g_i| ≤ k."""
    from scipy.optimize import linprog

    g = W.G[:, 0]
    res = linprog(-(g * x[0] + W.c), A_ub=np.vstack([g, -g]), b_ub=[k, k],
                  A_eq=np.ones((1, g.size)), b_eq=[1.0], bounds=(0, None), method="highs")
    if res.status == 2:
        return -math.inf
    if res.status != 0:
        raise LyapunovError(f"envelope LP failed: {res.message}")
    return float(-res.fun)


def _envelope_cvx(W: ScalarFn, k: float, x: np.ndarray) -> float:
    import cvxpy as cp

    from ._cvx import _solve, body_constraints

    z = cp.Variable(W.dim)
    cons = []
    if isinstance(W, ConvexQuadratic):
        obj = 0.5 * cp.quad_form(z, cp.psd_wrap(W.Q)) + W.b @ z + W.c
    elif isinstance(W, MaxAffine):
        obj = cp.max(W.G @ z + W.c)
    elif isinstance(W, IndicatorPlus):
        s = W.smooth
        obj = 0.5 * cp.quad_form(z, cp.psd_wrap(s.Q)) + s.b @ z + s.c
        cons = body_constraints(W.body, z)
    else:
        raise LyapunovError(f"no envelope routine for {type(W).__name__}")
    prob = cp.Problem(cp.Minimize(obj + k * cp.norm(x - z, 2)), cons)
    _solve(prob)
    if prob.value is None:
        raise LyapunovError("envelope program failed")
    return float(prob.value)


class Envelope(ScalarFn):
    """The function x -> W_k(x) as a ScalarFn (used by lifted systems)."""

    def __init__(self, W: ScalarFn, k: float):
        self.W = W
        self.k = float(k)
        self.dim = W.dim

    def value(self, x) -> float:
        return pasch_hausdorff(self.W, self.k, x)

    def subgradients(self, x, budget: int = 64):
        raise NotImplementedError("envelope subgradients are not needed")

    def lipschitz_on(self, points) -> float:
        return self.k

    def to_dict(self) -> dict:
        return {"kind": "Envelope", "W": self.W.to_dict(), "k": self.k}


# -- epigraph transform ---------------------------------------------------------

class Padded(ConvexBody):
    """body × {0}^pad in R^{n+pad}."""

    def __init__(self, base: ConvexBody, pad: int, offset=None):
        self.base = base
        self.pad = int(pad)
        self.n = base.dim
        self.dim = base.dim + self.pad
        self.offset = np.zeros(self.pad) if offset is None else as_point(offset, self.pad)

    @property
    def tolerance(self) -> float:
        return self.base.tolerance

    @property
    def bounded(self) -> bool:
        return self.base.bounded

    def support(self, xi) -> float:
        xi = as_point(xi, self.dim)
        return self.base.support(xi[: self.n]) + float(xi[self.n:] @ self.offset)

    def support_point(self, xi):
        xi = as_point(xi, self.dim)
        p = self.base.support_point(xi[: self.n])
        return None if p is None else np.concatenate([p, self.offset])

    def project(self, x) -> np.ndarray:
        x = as_point(x, self.dim)
        return np.concatenate([self.base.project(x[: self.n]), self.offset])

    def normal_rays(self, x):
        x = as_point(x, self.dim)
        self._require_member(x)
        rays = [np.concatenate([r, np.zeros(self.pad)]) for r in self.base.normal_rays(x[: self.n])]
        for i in range(self.pad):
            e = np.zeros(self.dim)
            e[self.n + i] = 1.0
            rays += [e, -e]
        return rays

    def halfspaces(self):
        hs = self.base.halfspaces()
        if hs is None:
            return None
        N, c = hs
        eye = np.eye(self.pad)
        top = np.hstack([N, np.zeros((N.shape[0], self.pad))])
        side = np.hstack([np.zeros((2 * self.pad, self.n)), np.vstack([eye, -eye])])
        return np.vstack([top, side]), np.concatenate([c, self.offset, -self.offset])

    def to_dict(self) -> dict:
        return {"kind": "Padded", "base": self.base.to_dict(), "offset": self.offset.tolist()}


class LiftedOperator(MonotoneOperator):
    """Â(x, α, β, γ) = (A(x), θ_{R³}); dom Â = dom A × R³."""

    def __init__(self, A: MonotoneOperator, pad: int = 3):
        self.A = A
        self.pad = pad
        self.n = A.dim
        self.dim = A.dim + pad

    def evaluate(self, z) -> OperatorValue:
        z = as_point(z, self.dim)
        val = self.A.evaluate(z[: self.n])
        if val.empty:
            return val
        return OperatorValue(Padded(val.body, self.pad), val.bounded)

    def resolvent(self, lam: float, y) -> np.ndarray:
        y = as_point(y, self.dim)
        return np.concatenate([self.A.resolvent(lam, y[: self.n]), y[self.n:]])

    def domain_distance(self, z) -> float:
        return self.A.domain_distance(as_point(z, self.dim)[: self.n])

    def in_domain(self, z, tol=None) -> bool:
        z = as_point(z, self.dim)
        return self.A.in_domain(z[: self.n]) if tol is None else self.A.in_domain(z[: self.n], tol)

    def project_to_domain(self, z) -> np.ndarray:
        z = as_point(z, self.dim)
        return np.concatenate([self.A.project_to_domain(z[: self.n]), z[self.n:]])

    @property
    def full_domain(self) -> bool:
        return self.A.full_domain

    def to_dict(self) -> dict:
        return {"kind": "Lifted", "A": self.A.to_dict(), "pad": self.pad}


class LiftedCusco(CuscoMap):
    """F̂_k(x, α, β, γ) = (F(x), W_k(x), 1, 0), Lipschitz with constant √(L² + k²)."""

    def __init__(self, F: CuscoMap, Wk: Envelope):
        self.F = F
        self.Wk = Wk
        self.n = F.dim
        self.dim = F.dim + 3
        self.L = math.hypot(F.L, Wk.k)

    def _tail(self, x: np.ndarray) -> np.ndarray:
        return np.array([self.Wk.value(x), 1.0, 0.0])

    def value(self, z) -> ConvexBody:
        z = as_point(z, self.dim)
        x = z[: self.n]
        return Padded(self.F.value(x), 3, self._tail(x))

    def norm_bound(self, z) -> float:
        z = as_point(z, self.dim)
        x = z[: self.n]
        return math.sqrt(self.F.norm_bound(x) ** 2 + float(self._tail(x) @ self._tail(x)))

    def extreme_points(self, z) -> list[np.ndarray]:
        z = as_point(z, self.dim)
        x = z[: self.n]
        tail = self._tail(x)
        return [np.concatenate([p, tail]) for p in self.F.extreme_points(x)]

    def selection(self, z0, v0) -> Selection:
        z0 = as_point(z0, self.dim)
        v0 = as_point(v0, self.dim)
        x0 = z0[: self.n]
        gap = float(np.linalg.norm(v0[self.n:] - self._tail(x0)))
        if gap > TAU_GEO * max(1.0, float(np.linalg.norm(v0))):
            from .cusco import NotInValueError

            raise NotInValueError(gap)
        inner = self.F.selection(x0, v0[: self.n])
        n = self.n

        def f(z: np.ndarray) -> np.ndarray:
            x = z[:n]
            return np.concatenate([inner.fn(x), self._tail(x)])

        return Selection(f, math.hypot(inner.constant, self.Wk.k))

    def to_dict(self) -> dict:
        return {"kind": "Lifted", "F": self.F.to_dict(), "k": self.Wk.k}


class EpigraphValue(ScalarFn):
    """Ṽ(x, α, β, γ) = e^{aβ}V(x) + α on R^{n+3} (γ is ignored)."""

    def __init__(self, V: ScalarFn, a: float):
        self.V = V
        self.a = float(a)
        self.n = V.dim
        self.dim = V.dim + 3

    def in_domain(self, z) -> bool:
        return self.V.in_domain(as_point(z, self.dim)[: self.n])

    def value(self, z) -> float:
        z = as_point(z, self.dim)
        x, alpha, beta = z[: self.n], z[self.n], z[self.n + 1]
        v = self.V.value(x)
        return math.exp(self.a * beta) * v + alpha if math.isfinite(v) else math.inf

    def subgradients(self, z, budget: int = 64):
        z = self._require(z)
        x, beta = z[: self.n], z[self.n + 1]
        s = math.exp(self.a * beta)
        vx = self.V.value(x)
        return [np.concatenate([s * g, [1.0, self.a * s * vx, 0.0]]) for g in self.V.subgradients(x, budget)]

    def to_dict(self) -> dict:
        return {"kind": "EpigraphValue", "V": self.V.to_dict(), "a": self.a}


@dataclass(frozen=True)
class LiftedSystem:
    A: LiftedOperator
    F: LiftedCusco
    V: EpigraphValue


def epigraph_transform(pair: LyapunovPair, A: MonotoneOperator, F: CuscoMap, k: float) -> LiftedSystem:
    """Lift (A, F, V) to R^{n+3}; lifted solutions are (x(t), α0 + ∫W_k, β0 + t, γ0)."""
    if not k >= 1:
        raise ValueError("k must be ≥ 1")
    return LiftedSystem(LiftedOperator(A), LiftedCusco(F, Envelope(pair.W, k)),
                        EpigraphValue(pair.V, pair.a))


def lift_state(x, alpha: float = 0.0, beta: float = 0.0, gamma: float = 0.0) -> np.ndarray:
    return np.concatenate([as_point(x), [alpha, beta, gamma]])
