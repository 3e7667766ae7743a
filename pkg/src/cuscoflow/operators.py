"""Maximal monotone operators: values, resolvents, minimal sections."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import quadprog
from scipy.optimize import brentq, minimize_scalar
from scipy.stats import qmc

from .geometry import (
    TAU_GEO,
    Ball,
    ClosedSet,
    Cone,
    ConvexBody,
    GeometryError,
    Translate,
    as_point,
    min_norm_point,
    project_set,
    singleton,
)

TAU_RES = 1e-8
RESOLVENT_MAX_ITER = 100_000


class OperatorError(ValueError):
    pass


class ResolventError(OperatorError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class OperatorValue:
    """A(x) as a convex body; ``body is None`` marks x outside dom A."""

    body: ConvexBody | None
    bounded: bool

    @property
    def empty(self) -> bool:
        return self.body is None


def _check_square(M, name: str) -> np.ndarray:
    M = np.array(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise OperatorError(f"{name} must be a square matrix")
    if not np.isfinite(M).all():
        raise OperatorError(f"{name} has non-finite entries")
    return M


def check_psd(Q: np.ndarray, tol: float = 1e-9, name: str = "Q") -> None:
    if not np.allclose(Q, Q.T, atol=tol, rtol=0.0):
        raise OperatorError(f"{name} not symmetric")
    if np.linalg.eigvalsh(0.5 * (Q + Q.T)).min() < -tol:
        raise OperatorError(f"{name} not PSD")


class MonotoneOperator:
    dim: int

    def evaluate(self, x) -> OperatorValue:
        raise NotImplementedError

    def resolvent(self, lam: float, y) -> np.ndarray:
        raise NotImplementedError

    def domain_distance(self, x) -> float:
        return 0.0

    def in_domain(self, x, tol: float = TAU_GEO) -> bool:
        return self.domain_distance(x) <= tol

    def project_to_domain(self, x) -> np.ndarray:
        return as_point(x, self.dim)

    @property
    def full_domain(self) -> bool:
        return True

    def to_dict(self) -> dict:
        raise NotImplementedError


class NormalConeOf(MonotoneOperator):
    """Normal cone operator N_C of a convex body; its resolvent is Π_C."""

    def __init__(self, body: ConvexBody):
        self.body = body
        self.dim = body.dim

    def evaluate(self, x) -> OperatorValue:
        x = as_point(x, self.dim)
        p = self.body.project(x)
        if float(np.linalg.norm(x - p)) > max(TAU_GEO, self.body.tolerance):
            return OperatorValue(None, False)
        rays = self.body.normal_rays(p)
        return OperatorValue(Cone(rays, self.dim), len(rays) == 0)

    def resolvent(self, lam: float, y) -> np.ndarray:
        _check_lambda(lam)
        return self.body.project(as_point(y, self.dim))

    def domain_distance(self, x) -> float:
        return self.body.distance(as_point(x, self.dim))

    def in_domain(self, x, tol: float | None = None) -> bool:
        tol = max(TAU_GEO, self.body.tolerance) if tol is None else tol
        return self.domain_distance(x) <= tol

    def project_to_domain(self, x) -> np.ndarray:
        return self.body.project(as_point(x, self.dim))

    @property
    def full_domain(self) -> bool:
        return False

    def to_dict(self) -> dict:
        return {"kind": "NormalConeOf", "body": self.body.to_dict()}

    def __repr__(self) -> str:
        return f"NormalConeOf({self.body!r})"


class QuadraticGradient(MonotoneOperator):
    """x -> Qx + b, the gradient of ½xᵀQx + bᵀx with Q symmetric PSD."""

    def __init__(self, Q, b=None):
        Q = _check_square(Q, "Q")
        check_psd(Q)
        self.Q = 0.5 * (Q + Q.T)
        self.dim = Q.shape[0]
        self.b = np.zeros(self.dim) if b is None else as_point(b, self.dim)
        self._eig = np.linalg.eigh(self.Q)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.Q @ x + self.b

    @property
    def matrix(self) -> np.ndarray:
        return self.Q

    def evaluate(self, x) -> OperatorValue:
        x = as_point(x, self.dim)
        return OperatorValue(singleton(self.apply(x)), True)

    def resolvent(self, lam: float, y) -> np.ndarray:
        _check_lambda(lam)
        y = as_point(y, self.dim)
        w, U = self._eig
        return U @ ((U.T @ (y - lam * self.b)) / (1.0 + lam * w))

    def to_dict(self) -> dict:
        return {"kind": "QuadraticGradient", "Q": self.Q.tolist(), "b": self.b.tolist()}

    def __repr__(self) -> str:
        return f"QuadraticGradient(Q={self.Q.tolist()}, b={self.b.tolist()})"


class LinearMonotone(MonotoneOperator):
    """x -> Mx with M + Mᵀ PSD."""

    def __init__(self, M):
        M = _check_square(M, "M")
        check_psd(M + M.T, name="M + M^T")
        self.M = M
        self.dim = M.shape[0]
        self.b = np.zeros(self.dim)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.M @ x

    @property
    def matrix(self) -> np.ndarray:
        return self.M

    def evaluate(self, x) -> OperatorValue:
        x = as_point(x, self.dim)
        return OperatorValue(singleton(self.apply(x)), True)

    def resolvent(self, lam: float, y) -> np.ndarray:
        _check_lambda(lam)
        y = as_point(y, self.dim)
        return np.linalg.solve(np.eye(self.dim) + lam * self.M, y)

    def to_dict(self) -> dict:
        return {"kind": "LinearMonotone", "M": self.M.tolist()}

    def __repr__(self) -> str:
        return f"LinearMonotone({self.M.tolist()})"


class ScaledNormSubdiff(MonotoneOperator):
    """Subdifferential of w‖·‖; the resolvent is soft shrinkage."""

    def __init__(self, weight: float, dim: int):
        w = float(weight)
        if not (w > 0 and math.isfinite(w)):
            raise OperatorError("weight must be > 0")
        self.weight = w
        self.dim = int(dim)

    def evaluate(self, x) -> OperatorValue:
        x = as_point(x, self.dim)
        nx = float(np.linalg.norm(x))
        if nx == 0.0:
            return OperatorValue(Ball(np.zeros(self.dim), self.weight), True)
        return OperatorValue(singleton(self.weight * x / nx), True)

    def resolvent(self, lam: float, y) -> np.ndarray:
        _check_lambda(lam)
        y = as_point(y, self.dim)
        ny = float(np.linalg.norm(y))
        if ny <= lam * self.weight:
            return np.zeros(self.dim)
        return (1.0 - lam * self.weight / ny) * y

    def to_dict(self) -> dict:
        return {"kind": "ScaledNormSubdiff", "weight": self.weight, "dim": self.dim}

    def __repr__(self) -> str:
        return f"ScaledNormSubdiff(weight={self.weight}, dim={self.dim})"


class SumWithNormalCone(MonotoneOperator):
    """x -> smooth(x) + N_C(x) for a linear monotone ``smooth`` part."""

    def __init__(self, smooth: QuadraticGradient | LinearMonotone, body: ConvexBody):
        if not isinstance(smooth, (QuadraticGradient, LinearMonotone)):
            raise OperatorError("smooth part must be QuadraticGradient or LinearMonotone")
        if smooth.dim != body.dim:
            raise OperatorError("dimension mismatch between smooth part and body")
        self.smooth = smooth
        self.body = body
        self.dim = body.dim
        self._cone = NormalConeOf(body)

    def evaluate(self, x) -> OperatorValue:
        x = as_point(x, self.dim)
        val = self._cone.evaluate(x)
        if val.empty:
            return val
        return OperatorValue(Translate(val.body, self.smooth.apply(self.body.project(x))),
                             val.bounded)

    def domain_distance(self, x) -> float:
        return self._cone.domain_distance(x)

    def in_domain(self, x, tol: float | None = None) -> bool:
        return self._cone.in_domain(x, tol)

    def project_to_domain(self, x) -> np.ndarray:
        return self._cone.project_to_domain(x)

    @property
    def full_domain(self) -> bool:
        return False

    def resolvent(self, lam: float, y) -> np.ndarray:
        """Solve y ∈ x + λ(Bx + b + N_C(x)).

        Exact for a quadratic smooth part over a ball (secular equation) or a
        polyhedron (active-set QP); otherwise projected fixed-point iteration
        x <- Π_C(x - γ((I + λM)x + λb - y)) with the contraction-optimal γ.
        """
        _check_lambda(lam)
        y = as_point(y, self.dim)
        a = y - lam * self.smooth.b
        if isinstance(self.smooth, QuadraticGradient):
            if isinstance(self.body, Ball):
                return self._ball_quadratic(lam, a)
            hs = self.body.halfspaces()
            if hs is not None:
                G = np.eye(self.dim) + lam * self.smooth.Q
                N, c = hs
                try:
                    return np.asarray(quadprog.solve_qp(G, a, -N.T, -c)[0], dtype=float)
                except ValueError as exc:
                    raise ResolventError(f"active-set QP failed: {exc}", math.inf) from exc
        return self._fixed_point(lam, a)

    def _ball_quadratic(self, lam: float, a: np.ndarray) -> np.ndarray:
        w, U = self.smooth._eig
        c, r = self.body.center, self.body.radius
        dw = 1.0 + lam * w
        free = U @ ((U.T @ a) / dw)
        if np.linalg.norm(free - c) <= r:
            return free
        if r == 0.0:
            return c.copy()
        # x(μ) - c = (B + μI)^{-1}(a - Bc), norm strictly decreasing in μ
        Bc = U @ (dw * (U.T @ c))
        z = U.T @ (a - Bc)

        def gap(mu: float) -> float:
            return float(np.linalg.norm(z / (dw + mu))) - r

        hi = float(np.linalg.norm(z)) / r
        mu = brentq(gap, 0.0, hi, xtol=1e-15 * max(1.0, hi), rtol=4 * np.finfo(float).eps)
        return c + U @ (z / (dw + mu))

    def _fixed_point(self, lam: float, a: np.ndarray) -> np.ndarray:
        B = np.eye(self.dim) + lam * self.smooth.matrix
        gamma, rho = _contraction_step(B.tobytes(), self.dim)
        x = self.body.project(a)
        scale = 1.0 + float(np.linalg.norm(a))
        tol = max(TAU_RES * 1e-4, 1e-14) * scale
        step = math.inf
        for _ in range(RESOLVENT_MAX_ITER):
            x_new = self.body.project(x - gamma * (B @ x - a))
            step = float(np.linalg.norm(x_new - x))
            x = x_new
            # a posteriori distance to the fixed point is ≤ rho/(1-rho)·step
            if rho / (1.0 - rho) * step <= tol or step == 0.0:
                return x
        raise ResolventError("projected fixed-point iteration did not converge", step)

    def to_dict(self) -> dict:
        return {"kind": "SumWithNormalCone", "smooth": self.smooth.to_dict(),
                "body": self.body.to_dict()}

    def __repr__(self) -> str:
        return f"SumWithNormalCone({self.smooth!r}, {self.body!r})"


@lru_cache(maxsize=256)
def _contraction_step(B_bytes: bytes, n: int) -> tuple[float, float]:
    B = np.frombuffer(B_bytes, dtype=float).reshape(n, n)
    I = np.eye(n)
    nb = float(np.linalg.norm(B, 2))
    res = minimize_scalar(lambda g: np.linalg.norm(I - g * B, 2), bounds=(0.0, 2.0 / nb),
                          method="bounded", options={"xatol": 1e-12})
    gamma = float(res.x)
    rho = float(np.linalg.norm(I - gamma * B, 2))
    if rho >= 1.0:
        gamma = 1.0 / nb**2
        rho = float(np.linalg.norm(I - gamma * B, 2))
    return gamma, rho


def _check_lambda(lam: float) -> None:
    if not (lam > 0 and math.isfinite(lam)):
        raise OperatorError("λ must be > 0")


# -- operations ---------------------------------------------------------------

def evaluate(A: MonotoneOperator, x) -> OperatorValue:
    return A.evaluate(x)


def resolvent(A: MonotoneOperator, lam: float, y) -> np.ndarray:
    """The unique x with y ∈ x + λA(x)."""
    return A.resolvent(lam, y)


def _value_body(A: MonotoneOperator, x) -> ConvexBody:
    val = A.evaluate(x)
    if val.empty:
        raise OperatorError("empty value")
    return val.body


def min_section(A: MonotoneOperator, x) -> np.ndarray:
    """Least-norm element A°(x) of A(x)."""
    return min_norm_point(_value_body(A, x))


def project_onto_value(A: MonotoneOperator, x, v) -> np.ndarray:
    body = _value_body(A, x)
    return body.project(as_point(v, body.dim))


def value_support(A: MonotoneOperator, x, xi) -> float:
    """σ_{A(x)}(ξ); equals ⟨ξ,v⟩ - inf_{x*∈A(x)} ⟨ξ, v - x*⟩ for any v."""
    body = _value_body(A, x)
    return body.support(as_point(xi, body.dim))


def _ball_samples(n: int, count: int) -> np.ndarray:
    """Deterministic low-discrepancy points in the closed unit ball."""
    if count <= 0:
        return np.zeros((0, n))
    sampler = qmc.Halton(d=n, scramble=False)
    pts = np.zeros((0, n))
    while pts.shape[0] < count:
        batch = 2.0 * sampler.random(max(64, 4 * count)) - 1.0
        batch = batch[np.linalg.norm(batch, axis=1) <= 1.0]
        pts = np.vstack([pts, batch])
    return pts[:count]


def local_min_section_bound(A: MonotoneOperator, S, x, radius: float = 0.05,
                            samples: int = 256) -> float:
    """Sampled estimate of limsup_{y→x, y∈S} ‖A°(y)‖ over S ∩ B(x, radius) ∩ dom A.

    Parameters
    ----------
    A : MonotoneOperator
    S : ClosedSet or ConvexBody
    x : array_like
        A point of S ∩ dom A.
    radius : float
    samples : int
        Number of Halton points drawn in the ball before projecting onto S.

    Returns
    -------
    float
        Maximum of ‖A°(y)‖ over x itself, the axis points x ± radius e_i and
        the sampled points, each projected onto S and kept if it stays in the
        ball and in dom A.
    """
    if not radius > 0:
        raise OperatorError("radius must be > 0")
    S = S if isinstance(S, ClosedSet) else ClosedSet(S)
    x = as_point(x, S.dim)
    n = S.dim
    if isinstance(A, NormalConeOf):
        # θ lies in every normal cone, so A° vanishes on the whole domain
        if not A.in_domain(x):
            raise OperatorError("no sample in domain")
        return 0.0
    cands = [x]
    for e in np.eye(n):
        cands += [x + radius * e, x - radius * e]
    cands += list(x + radius * _ball_samples(n, samples))
    best = -math.inf
    for y in cands:
        p = project_set(S, y)[0]
        if np.linalg.norm(p - x) > radius * (1.0 + 1e-12) + TAU_GEO:
            continue
        if not A.in_domain(p):
            continue
        try:
            best = max(best, float(np.linalg.norm(min_section(A, p))))
        except (OperatorError, GeometryError):
            continue
    if best == -math.inf:
        raise OperatorError("no sample in domain")
    return best
