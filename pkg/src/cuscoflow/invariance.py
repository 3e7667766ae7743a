"""Strong and weak invariance criteria, certificates, and simulation falsification.

Margins are the largest value of the criterion's left-hand side over the
sampled normal directions at a point; a point passes iff its margin is at
most ``tol``.  Points with a trivial normal cone have margin -inf.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .cusco import CuscoMap
from .geometry import (
    TAU_GEO,
    Ball,
    ClosedSet,
    Cone,
    ConvexBody,
    GeometryError,
    Intersection,
    NotInSetError,
    Translate,
    VPolytope,
    as_point,
    cone_directions,
    dedup_directions,
    project_set,
    proximal_normal_rays,
)
from .integrator import DistanceTo, FixedSelection, IntegrationError, IntegratorConfig, Steered, integrate
from .operators import MonotoneOperator, OperatorError, local_min_section_bound, min_section
from .reporting import FAIL, INCONCLUSIVE, PASS, CertificateReport, PointRecord, map_ordered
from .sampling import Sampler

TOL_ANALYTIC = 1e-7
TOL_SAMPLED = 1e-4
M_RADIUS = 0.05
M_SAMPLES = 256
KAPPA = 10.0
DEFAULT_BUDGET = 64


class CriterionVariant(enum.Enum):
    TANGENT_PROJECTED = "tangent-projected"
    TANGENT_INTERSECT = "tangent-intersect"
    NORMAL_PROJECTED = "normal-projected"
    NORMAL_INF = "normal-inf"
    NORMAL_INF_TRUNCATED = "normal-inf-truncated"
    WEAK_TANGENT = "weak-tangent"
    WEAK_NORMAL = "weak-normal"

    @property
    def weak(self) -> bool:
        return self in (CriterionVariant.WEAK_TANGENT, CriterionVariant.WEAK_NORMAL)

    @property
    def tangent(self) -> bool:
        return self in (CriterionVariant.TANGENT_PROJECTED, CriterionVariant.TANGENT_INTERSECT,
                        CriterionVariant.WEAK_TANGENT)

    @classmethod
    def parse(cls, tag: "str | CriterionVariant") -> "CriterionVariant":
        if isinstance(tag, cls):
            return tag
        key = str(tag).strip()
        aliases = {
            "ii": cls.TANGENT_PROJECTED, "iii": cls.TANGENT_INTERSECT,
            "iv": cls.NORMAL_PROJECTED, "v": cls.NORMAL_INF, "vi": cls.NORMAL_INF_TRUNCATED,
            "TangentProjected": cls.TANGENT_PROJECTED, "TangentIntersect": cls.TANGENT_INTERSECT,
            "NormalProjected": cls.NORMAL_PROJECTED, "NormalInf": cls.NORMAL_INF,
            "NormalInfTruncated": cls.NORMAL_INF_TRUNCATED, "WeakTangent": cls.WEAK_TANGENT,
            "WeakNormal": cls.WEAK_NORMAL,
        }
        if key in aliases:
            return aliases[key]
        try:
            return cls(key.lower())
        except ValueError:
            raise ValueError(f"unknown criterion variant {tag!r}") from None


STRONG_VARIANTS = (CriterionVariant.TANGENT_PROJECTED, CriterionVariant.TANGENT_INTERSECT,
                   CriterionVariant.NORMAL_PROJECTED, CriterionVariant.NORMAL_INF,
                   CriterionVariant.NORMAL_INF_TRUNCATED)


@dataclass(frozen=True)
class PointMargin:
    margin: float
    xi: np.ndarray | None = None
    v: np.ndarray | None = None


def _as_set(S) -> ClosedSet:
    return S if isinstance(S, ClosedSet) else ClosedSet(S)


def _require_point(S: ClosedSet, A: MonotoneOperator, x) -> np.ndarray:
    x = as_point(x, S.dim)
    if not S.contains(x):
        raise NotInSetError("point not in set")
    if not A.in_domain(x):
        raise OperatorError("point not in dom A")
    return x


def _value(A: MonotoneOperator, x) -> ConvexBody:
    val = A.evaluate(x)
    if val.empty:
        raise OperatorError("empty value")
    return val.body


def _candidate_velocities(F: CuscoMap, x: np.ndarray, xis) -> list[np.ndarray]:
    """Extreme points of F(x) plus its support points in the sampled directions."""
    body = F.value(x)
    cands = list(F.extreme_points(x))
    for xi in xis:
        cands.append(body.support_point(xi))
        cands.append(body.support_point(-xi))
    return dedup_directions(cands, tol=1e-12)


def truncation_radius(A: MonotoneOperator, F: CuscoMap, x: np.ndarray) -> float:
    """‖F(x)‖ + ‖A°(x)‖."""
    return F.norm_bound(x) + float(np.linalg.norm(min_section(A, x)))


def _truncate(body: ConvexBody, radius: float) -> ConvexBody:
    ball = Ball(np.zeros(body.dim), radius)
    if isinstance(body, VPolytope) and body.vertices.shape[0] == 1:
        p = body.vertices[0]
        if np.linalg.norm(p) > radius * (1 + 1e-12) + TAU_GEO:
            raise OperatorError("𝔪 bound too small")
        return body
    return Intersection([body, ball])


def _normal_dirs(S: ClosedSet, x: np.ndarray, budget: int):
    rays = proximal_normal_rays(S, x, budget)
    return rays, cone_directions(rays, budget)


def normal_projected_margin(S, A, F, x, budget: int = DEFAULT_BUDGET) -> PointMargin:
    """max over ξ ∈ N_S(x), v of ⟨ξ, v - Π_{A(x)}(v)⟩."""
    S = _as_set(S)
    x = _require_point(S, A, x)
    rays, dirs = _normal_dirs(S, x, budget)
    if not rays:
        return PointMargin(-math.inf)
    Ax = _value(A, x)
    best = PointMargin(-math.inf)
    for v in _candidate_velocities(F, x, dirs):
        d = v - Ax.project(v)
        for xi in dirs:
            m = float(xi @ d)
            if m > best.margin:
                best = PointMargin(m, xi, v)
    return best


def normal_inf_margin(S, A, F, x, budget: int = DEFAULT_BUDGET, truncated: bool = False) -> PointMargin:
    """max over ξ ∈ N_S(x) of σ_{F(x)}(ξ) - σ_{A(x)}(ξ), optionally with A(x) ∩ B_{‖F‖+‖A°‖}."""
    S = _as_set(S)
    x = _require_point(S, A, x)
    rays, dirs = _normal_dirs(S, x, budget)
    if not rays:
        return PointMargin(-math.inf)
    Ax = _value(A, x)
    if truncated:
        Ax = _truncate(Ax, truncation_radius(A, F, x))
    Fx = F.value(x)
    best = PointMargin(-math.inf)
    for xi in dirs:
        sa = Ax.support(xi)
        if math.isinf(sa):
            continue
        m = Fx.support(xi) - sa
        if m > best.margin:
            best = PointMargin(m, xi, Fx.support_point(xi))
    return best


def _piece_rays(S: ClosedSet, x: np.ndarray) -> list[list[np.ndarray]]:
    """Normal generators of each piece containing x (its tangent cone is their polar)."""
    return [p.normal_rays(p.project(x)) for p in S.containing_pieces(x)]


def tangent_projected_margin(S, A, F, x, budget: int = DEFAULT_BUDGET,
                             tol: float = TOL_ANALYTIC) -> PointMargin:
    """1 if some candidate v has v - Π_{A(x)}(v) outside T_S(x), else 0."""
    S = _as_set(S)
    x = _require_point(S, A, x)
    per_piece = _piece_rays(S, x)
    if any(len(r) == 0 for r in per_piece):
        return PointMargin(0.0)
    Ax = _value(A, x)
    dirs = [xi for r in per_piece for xi in r]
    for v in _candidate_velocities(F, x, dirs):
        d = v - Ax.project(v)
        if not any(all(float(xi @ d) <= tol for xi in r) for r in per_piece):
            worst = max(dirs, key=lambda xi: float(xi @ d))
            return PointMargin(1.0, worst, v)
    return PointMargin(0.0)


def _generator_form(body: ConvexBody):
    """(points, rays) with body = conv(points) + cone(rays), or None."""
    if isinstance(body, VPolytope):
        return body.vertices, np.zeros((0, body.dim))
    if isinstance(body, Cone):
        return np.zeros((1, body.dim)), body.generators
    if isinstance(body, Translate):
        inner = _generator_form(body.base)
        if inner is not None:
            return inner[0] + body.shift, inner[1]
    return None


def _min_max_over(value_body: ConvexBody, v: np.ndarray, rays: np.ndarray) -> float:
    """min over x* ∈ value_body of max_j ⟨ρ_j, v - x*⟩ (−inf when unbounded below)."""
    gf = _generator_form(value_body)
    n = v.size
    if gf is not None:
        P, G = gf
        kp, kg = P.shape[0], G.shape[0]
        # variables: λ (kp), μ (kg), t ; min t s.t. ρ_j·(v - Pᵀλ - Gᵀμ) ≤ t
        c = np.zeros(kp + kg + 1)
        c[-1] = 1.0
        A_ub = np.hstack([-(rays @ P.T), -(rays @ G.T), -np.ones((rays.shape[0], 1))])
        b_ub = -(rays @ v)
        A_eq = np.zeros((1, kp + kg + 1))
        A_eq[0, :kp] = 1.0
        bounds = [(0, None)] * (kp + kg) + [(None, None)]
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs")
        if res.status == 3:
            return -math.inf
        if res.status != 0:
            raise GeometryError(f"tangent LP failed: {res.message}")
        return float(res.fun)
    import cvxpy as cp

    from ._cvx import _solve, body_constraints

    xs = cp.Variable(n)
    t = cp.Variable()
    prob = cp.Problem(cp.Minimize(t), body_constraints(value_body, xs) + [rays @ (v - xs) <= t])
    status = _solve(prob)
    if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
        return -math.inf
    return float(prob.value)


def tangent_intersect_margin(S, A, F, x, budget: int = DEFAULT_BUDGET,
                             tol: float = TOL_ANALYTIC) -> PointMargin:
    """1 if some candidate v has [v - A(x)] ∩ T_S(x) = ∅, else 0."""
    S = _as_set(S)
    x = _require_point(S, A, x)
    per_piece = _piece_rays(S, x)
    if any(len(r) == 0 for r in per_piece):
        return PointMargin(0.0)
    Ax = _value(A, x)
    dirs = [xi for r in per_piece for xi in r]
    for v in _candidate_velocities(F, x, dirs):
        if not any(_min_max_over(Ax, v, np.array(r)) <= tol for r in per_piece):
            return PointMargin(1.0, None, v)
    return PointMargin(0.0)


def strong_margin(S, A, F, x, variant="normal-inf", budget: int = DEFAULT_BUDGET,
                  tol: float = TOL_ANALYTIC) -> float:
    """Largest violated quantity of a strong-invariance criterion at x (pass iff ≤ tol)."""
    return evaluate_strong(S, A, F, x, variant, budget, tol).margin


def evaluate_strong(S, A, F, x, variant="normal-inf", budget: int = DEFAULT_BUDGET,
                    tol: float = TOL_ANALYTIC) -> PointMargin:
    variant = CriterionVariant.parse(variant)
    if variant is CriterionVariant.NORMAL_INF:
        return normal_inf_margin(S, A, F, x, budget)
    if variant is CriterionVariant.NORMAL_INF_TRUNCATED:
        return normal_inf_margin(S, A, F, x, budget, truncated=True)
    if variant is CriterionVariant.NORMAL_PROJECTED:
        return normal_projected_margin(S, A, F, x, budget)
    if variant is CriterionVariant.TANGENT_PROJECTED:
        return tangent_projected_margin(S, A, F, x, budget, tol)
    if variant is CriterionVariant.TANGENT_INTERSECT:
        return tangent_intersect_margin(S, A, F, x, budget, tol)
    raise ValueError(f"{variant.value} is not a strong-invariance criterion")


def weak_normal_margin(S, A, F, x, m_x: float, budget: int = DEFAULT_BUDGET) -> PointMargin:
    """max over ξ ∈ N_S(x) of -σ_{F(x)}(-ξ) - σ_{A(x) ∩ B_{m+‖F(x)‖}}(ξ)."""
    S = _as_set(S)
    x = _require_point(S, A, x)
    rays, dirs = _normal_dirs(S, x, budget)
    if not rays:
        return PointMargin(-math.inf)
    Ax = _truncate(_value(A, x), m_x + F.norm_bound(x))
    Fx = F.value(x)
    best = PointMargin(-math.inf)
    for xi in dirs:
        m = -Fx.support(-xi) - Ax.support(xi)
        if m > best.margin:
            best = PointMargin(m, xi, Fx.support_point(-xi))
    return best


def weak_tangent_margin(S, A, F, x, m_x: float, budget: int = DEFAULT_BUDGET,
                        tol: float = TOL_ANALYTIC) -> PointMargin:
    """0 if some v ∈ F(x), x* ∈ A(x) ∩ B_{m+‖F(x)‖} give v - x* ∈ T_S(x), else 1."""
    import cvxpy as cp

    from ._cvx import _solve, body_constraints

    S = _as_set(S)
    x = _require_point(S, A, x)
    per_piece = _piece_rays(S, x)
    if any(len(r) == 0 for r in per_piece):
        return PointMargin(0.0)
    Ax = _value(A, x)
    R = m_x + F.norm_bound(x)
    if float(np.linalg.norm(min_section(A, x))) > R + TAU_GEO:
        raise OperatorError("𝔪 bound too small")
    Fx = F.value(x)
    for r in per_piece:
        rays = np.array(r)
        v = cp.Variable(S.dim)
        xs = cp.Variable(S.dim)
        t = cp.Variable()
        cons = body_constraints(Fx, v) + body_constraints(Ax, xs)
        cons += [cp.norm(xs, 2) <= R + TAU_GEO, rays @ (v - xs) <= t]
        prob = cp.Problem(cp.Minimize(t), cons)
        status = _solve(prob)
        if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE) or (
                prob.value is not None and prob.value <= max(tol, 1e-7)):
            return PointMargin(0.0)
    return PointMargin(1.0)


def weak_margin(S, A, F, x, m_x: float | None = None, budget: int = DEFAULT_BUDGET,
                variant="weak-normal", tol: float = TOL_ANALYTIC) -> float:
    """Weak-invariance margin at x; 𝔪(x) is estimated locally when not supplied."""
    return evaluate_weak(S, A, F, x, m_x, budget, variant, tol).margin


def evaluate_weak(S, A, F, x, m_x=None, budget=DEFAULT_BUDGET, variant="weak-normal",
                  tol=TOL_ANALYTIC) -> PointMargin:
    variant = CriterionVariant.parse(variant)
    if m_x is None:
        m_x = local_min_section_bound(A, _as_set(S), x, M_RADIUS, M_SAMPLES)
    if variant is CriterionVariant.WEAK_NORMAL:
        return weak_normal_margin(S, A, F, x, m_x, budget)
    if variant is CriterionVariant.WEAK_TANGENT:
        return weak_tangent_margin(S, A, F, x, m_x, budget, tol)
    raise ValueError(f"{variant.value} is not a weak-invariance criterion")


def weak_horizon(r: float, m: float, supF: float) -> float:
    """Time (r/3)/(m + sup‖F‖) for which a steered solution stays in S; +inf if stationary."""
    if not r > 0:
        raise ValueError("r must be > 0")
    if m < 0 or supF < 0:
        raise ValueError("m and supF must be ≥ 0")
    denom = m + supF
    return math.inf if denom == 0 else (r / 3.0) / denom


@dataclass
class ConditionCheck:
    holds: bool
    witnesses: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    checked: int = 0

    def to_dict(self) -> dict:
        return {"holds": self.holds, "checked": self.checked,
                "witnesses": [{"y": y, "projection": p} for y, p in self.witnesses]}


def check_condition_star(S, A: MonotoneOperator, samples: int = 200, seed: int = 0) -> ConditionCheck:
    """Whether Π_S(y) ⊂ S ∩ dom A for sampled y ∈ dom A."""
    S = _as_set(S)
    if A.full_domain:
        return ConditionCheck(True, [], 0)
    dom = A.body
    sampler = Sampler(n_points=samples, seed=seed)
    pts = sampler.boundary_points(dom) + sampler.region_points(dom, samples)
    witnesses = []
    for y in pts:
        for p in project_set(S, y):
            if not A.in_domain(p, 10 * max(TAU_GEO, S.tolerance)):
                witnesses.append((y, p))
    return ConditionCheck(not witnesses, witnesses[:10], len(pts))


def check_subset_of_domain(S, A: MonotoneOperator, points) -> ConditionCheck:
    bad = [(p, A.project_to_domain(p)) for p in points if not A.in_domain(p)]
    return ConditionCheck(not bad, bad[:10], len(points))


def default_tol(S) -> float:
    return TOL_ANALYTIC if _as_set(S).convex else TOL_SAMPLED


def _collect(points, results, tol):
    records = [PointRecord(x, r.margin, r.xi, r.v) for x, r in zip(points, results)]
    witnesses = [rec for rec in records if rec.margin > tol]
    return records, witnesses


def certify_strong(S, A: MonotoneOperator, F: CuscoMap, variant="normal-inf",
                   sampler: Sampler | None = None, tol: float | None = None,
                   budget: int = DEFAULT_BUDGET, scenario: str = "", points=None) -> CertificateReport:
    """Sampled strong-invariance certificate of S on its boundary mesh.

    Parameters
    ----------
    S : ClosedSet or ConvexBody
    A : MonotoneOperator
    F : CuscoMap
    variant : str or CriterionVariant
        One of the strong variants.
    sampler : Sampler, optional
        Boundary mesh; 200 points by default.
    tol : float, optional
        Margin tolerance; 1e-7 for a convex S, 1e-4 for unions.
    points : sequence of array_like, optional
        Explicit points of S to check instead of the sampler's boundary mesh.

    Returns
    -------
    CertificateReport
        ``pass`` iff every sampled margin is ≤ tol; ``inconclusive`` when
        the projection hypothesis on S and dom A fails on samples.
    """
    S = _as_set(S)
    variant = CriterionVariant.parse(variant)
    if variant.weak:
        raise ValueError("use certify_weak for weak variants")
    sampler = sampler or Sampler()
    tol = default_tol(S) if tol is None else tol
    cond = check_condition_star(S, A, seed=sampler.seed)
    pts = sampler.boundary_points(S) if points is None else [as_point(p, S.dim) for p in points]
    pts = [p for p in pts if A.in_domain(p)]
    results = map_ordered(lambda p: evaluate_strong(S, A, F, p, variant, budget, tol), pts)
    records, witnesses = _collect(pts, results, tol)
    notes = ["sampled certificate"]
    if not S.convex:
        notes.append("normal cones of unions are sampled from piece generators")
    if all(r.margin == -math.inf for r in records) and not variant.tangent:
        notes.append("no active normals")
    if not cond.holds:
        verdict = INCONCLUSIVE
        notes.append("projection hypothesis Π_S(dom A) ⊂ S ∩ dom A failed on samples")
    elif not pts:
        verdict = INCONCLUSIVE
        notes.append("no sample in S ∩ dom A")
    else:
        verdict = FAIL if witnesses else PASS
    return CertificateReport(scenario, variant.value, tol, records, verdict, witnesses,
                             {"condition_star": cond.to_dict()}, None, notes, sampler.seed)


def certify_weak(S, A: MonotoneOperator, F: CuscoMap, variant="weak-normal",
                 sampler: Sampler | None = None, tol: float | None = None,
                 budget: int = DEFAULT_BUDGET, m=None, scenario: str = "") -> CertificateReport:
    """Sampled weak-invariance certificate; ``m`` is a number, a callable x -> 𝔪(x), or None."""
    S = _as_set(S)
    variant = CriterionVariant.parse(variant)
    if not variant.weak:
        raise ValueError("use certify_strong for strong variants")
    sampler = sampler or Sampler()
    tol = default_tol(S) if tol is None else tol
    pts = sampler.boundary_points(S)
    sub = check_subset_of_domain(S, A, pts)
    pts = [p for p in pts if A.in_domain(p)]
    notes = ["sampled certificate"]
    if m is None:
        m_vals = map_ordered(lambda p: local_min_section_bound(A, S, p, M_RADIUS, M_SAMPLES), pts)
        notes.append(f"𝔪 estimated by sampling (radius {M_RADIUS}, {M_SAMPLES} samples)")
    elif callable(m):
        m_vals = [float(m(p)) for p in pts]
    else:
        m_vals = [float(m)] * len(pts)
    results = map_ordered(
        lambda pm: evaluate_weak(S, A, F, pm[0], pm[1], budget, variant, tol), list(zip(pts, m_vals)))
    records, witnesses = _collect(pts, results, tol)
    if not sub.holds:
        verdict = INCONCLUSIVE
        notes.append("S ⊄ dom A on samples")
    elif not pts:
        verdict = INCONCLUSIVE
    else:
        verdict = FAIL if witnesses else PASS
    return CertificateReport(scenario, variant.value, tol, records, verdict, witnesses,
                             {"subset_of_domain": sub.to_dict()}, m_vals, notes, sampler.seed)


@dataclass
class RunRecord:
    selection: np.ndarray | None
    max_distance: float
    exit_time: float | None
    error: str | None = None

    def to_dict(self) -> dict:
        return {"selection": self.selection, "max_distance": self.max_distance,
                "exit_time": self.exit_time, "error": self.error}


@dataclass
class SimulationEvidence:
    kind: str
    x0: np.ndarray
    threshold: float
    runs: list[RunRecord]

    @property
    def exits(self) -> list[RunRecord]:
        return [r for r in self.runs if r.max_distance > self.threshold]

    @property
    def falsified(self) -> bool:
        """Strong runs: some selection leaves S by more than κh."""
        return self.kind == "strong" and bool(self.exits)

    @property
    def supported(self) -> bool:
        """Weak runs: the steered solution stays within κh of S."""
        return self.kind == "weak" and all(r.error is None for r in self.runs) and not self.exits

    def to_dict(self) -> dict:
        return {"kind": self.kind, "x0": self.x0, "threshold": self.threshold,
                "falsified": self.falsified, "supported": self.supported,
                "runs": [r.to_dict() for r in self.runs]}


def _run_record(S: ClosedSet, A, F, cfg, x0, v0, threshold) -> RunRecord:
    try:
        traj = integrate(A, F, cfg, x0)
    except IntegrationError as exc:
        traj = exc.partial
        err = str(exc)
    else:
        err = None
    if traj is None:
        return RunRecord(v0, math.nan, None, err)
    d = np.array([S.distance(s) for s in traj.states])
    out = np.flatnonzero(d > threshold)
    exit_t = float(traj.times[out[0]]) if out.size else None
    return RunRecord(v0, float(d.max()), exit_t, err)


def falsify_by_simulation(S, A: MonotoneOperator, F: CuscoMap, x0, cfg: IntegratorConfig,
                          kind: str = "strong", kappa: float = KAPPA) -> SimulationEvidence:
    """Simulation evidence for (or against) invariance of S from x0.

    ``kind="strong"`` runs one fixed-selection trajectory per extreme point
    of F(x0); leaving S by more than κh falsifies strong invariance.
    ``kind="weak"`` runs a single trajectory steered toward S.
    """
    S = _as_set(S)
    x0 = as_point(x0, S.dim)
    threshold = kappa * cfg.h
    if kind == "strong":
        runs = [
            _run_record(S, A, F, IntegratorConfig(cfg.h, cfg.T, FixedSelection(v, x0), cfg.refine),
                        x0, v, threshold)
            for v in F.extreme_points(x0)
        ]
    elif kind == "weak":
        steered = IntegratorConfig(cfg.h, cfg.T, Steered(DistanceTo(S)), cfg.refine)
        runs = [_run_record(S, A, F, steered, x0, None, threshold)]
    else:
        raise ValueError("kind must be 'strong' or 'weak'")
    return SimulationEvidence(kind, x0, threshold, runs)
