"""Convex bodies and finite unions of them in R^n.

Every body exposes a support function, a metric projection, a distance and
a finite set of generators for its normal cone.  Closed sets are finite
unions of convex bodies; their projection is set-valued.

Tolerances: bodies with closed-form or finite active-set projections are
accurate to ``TAU_GEO``; intersections that need alternating projections
are accurate to ``TAU_ITER``.
"""
from __future__ import annotations

import itertools
import math
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import quadprog
from scipy.optimize import brentq, linprog, nnls
from scipy.spatial import ConvexHull

TAU_GEO = 1e-9
TAU_ITER = 1e-6
DYKSTRA_MAX_SWEEPS = 10_000
DEFAULT_T_GRID = (1e-1, 1e-2, 1e-3, 1e-4)
DEFAULT_TANGENT_TOL = 1e-3
MAX_DIM = 16

# relative threshold used to decide the sign of <g, xi> for cone generators
_CONE_SIGN_TOL = 1e-12


class GeometryError(ValueError):
    pass


class DimensionError(GeometryError):
    pass


class EmptySetError(GeometryError):
    pass


class NotInSetError(GeometryError):
    pass


def as_point(x, dim: int | None = None) -> np.ndarray:
    """Return ``x`` as a finite 1-d float array, checking the dimension."""
    p = np.array(x, dtype=float).reshape(-1)
    if p.size == 0 or p.size > MAX_DIM:
        raise DimensionError(f"dimension must be in 1..{MAX_DIM}, got {p.size}")
    if not np.isfinite(p).all():
        raise GeometryError("point has non-finite entries")
    if dim is not None and p.size != dim:
        raise DimensionError(f"expected dimension {dim}, got {p.size}")
    return p


def _as_rows(rows, dim: int | None = None) -> np.ndarray:
    arr = np.array(rows, dtype=float)
    if arr.size == 0:
        if dim is None:
            raise DimensionError("cannot infer dimension from an empty list")
        return np.zeros((0, dim))
    arr = np.atleast_2d(arr)
    if dim is not None and arr.shape[1] != dim:
        raise DimensionError(f"expected rows of dimension {dim}, got {arr.shape[1]}")
    if not np.isfinite(arr).all():
        raise GeometryError("non-finite entries")
    return arr


def axis_frame(n: int) -> list[np.ndarray]:
    """The 2n signed unit vectors +-e_i; they generate all of R^n as a cone."""
    eye = np.eye(n)
    out = []
    for i in range(n):
        out.append(eye[i].copy())
        out.append(-eye[i])
    return out


def dedup_directions(vectors: Iterable[np.ndarray], tol: float = 1e-9) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    for v in vectors:
        if not any(np.linalg.norm(v - w) <= tol for w in out):
            out.append(v)
    return out


def orthonormal_complement(vectors: np.ndarray, n: int) -> np.ndarray:
    """Rows spanning the orthogonal complement of span(vectors)."""
    if vectors.size == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(np.atleast_2d(vectors))
    rank = int(np.sum(s > 1e-12 * max(1.0, s[0])))
    return vt[rank:]


def _min_norm_in_hull(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Wolfe's algorithm: least-norm point of conv(points) and its weights."""
    k = points.shape[0]
    norms = np.einsum("ij,ij->i", points, points)
    scale = max(1.0, float(norms.max()))
    z1, z2, z3 = 1e-12, 1e-10, 1e-10
    start = int(np.argmin(norms))
    active = [start]
    weights = np.array([1.0])
    x = points[start].copy()
    for _ in range(50 * k + 50):
        j = int(np.argmin(points @ x))
        if x @ points[j] > x @ x - z1 * scale or j in active:
            break
        active.append(j)
        weights = np.append(weights, 0.0)
        while True:
            P = points[active]
            m = len(active)
            kkt = np.zeros((m + 1, m + 1))
            kkt[:m, :m] = P @ P.T
            kkt[:m, m] = 1.0
            kkt[m, :m] = 1.0
            rhs = np.zeros(m + 1)
            rhs[m] = 1.0
            sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
            alpha = sol[:m]
            if (alpha > z2).all():
                weights = alpha
                break
            mask = alpha <= z3
            denom = weights[mask] - alpha[mask]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(denom > 0, weights[mask] / denom, np.inf)
            theta = min(1.0, float(np.min(ratios)))
            weights = theta * alpha + (1.0 - theta) * weights
            weights[weights <= z2] = 0.0
            keep = weights > 0.0
            active = [a for a, kp in zip(active, keep) if kp]
            weights = weights[keep]
            weights = weights / weights.sum()
        x = weights @ points[active]
    full = np.zeros(k)
    full[active] = weights
    return x, full


class ConvexBody:
    """Nonempty closed convex subset of R^n."""

    dim: int

    @property
    def tolerance(self) -> float:
        return TAU_GEO

    @property
    def bounded(self) -> bool:
        raise NotImplementedError

    def support(self, xi) -> float:
        raise NotImplementedError

    def support_point(self, xi) -> np.ndarray | None:
        """A maximizer of <xi, .> over the body, or None if unbounded."""
        raise NotImplementedError

    def project(self, x) -> np.ndarray:
        raise NotImplementedError

    def normal_rays(self, x) -> list[np.ndarray]:
        """Unit generators of the normal cone at ``x`` (empty in the interior)."""
        raise NotImplementedError

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray] | None:
        """An (N, c) description {s : N s <= c}, or None if not polyhedral."""
        return None

    def distance(self, x) -> float:
        x = as_point(x, self.dim)
        return float(np.linalg.norm(x - self.project(x)))

    def contains(self, x, tol: float | None = None) -> bool:
        tol = self.tolerance if tol is None else tol
        return self.distance(x) <= tol

    def _require_member(self, x: np.ndarray) -> None:
        if not self.contains(x):
            raise NotInSetError("point not in set")

    def to_dict(self) -> dict:
        raise NotImplementedError


class Ball(ConvexBody):
    def __init__(self, center, radius: float):
        self.center = as_point(center)
        self.dim = self.center.size
        r = float(radius)
        if not math.isfinite(r) or r < 0:
            raise GeometryError("radius must be ≥ 0")
        self.radius = r

    bounded = True

    def support(self, xi) -> float:
        xi = as_point(xi, self.dim)
        return float(self.center @ xi + self.radius * np.linalg.norm(xi))

    def support_point(self, xi) -> np.ndarray:
        xi = as_point(xi, self.dim)
        nxi = np.linalg.norm(xi)
        if nxi == 0.0:
            return self.center.copy()
        return self.center + self.radius * xi / nxi

    def project(self, x) -> np.ndarray:
        x = as_point(x, self.dim)
        d = x - self.center
        nd = float(np.linalg.norm(d))
        if nd <= self.radius:
            return x.copy()
        return self.center + d * (self.radius / nd)

    def normal_rays(self, x) -> list[np.ndarray]:
        x = as_point(x, self.dim)
        self._require_member(x)
        if self.radius == 0.0:
            return axis_frame(self.dim)
        d = x - self.center
        nd = float(np.linalg.norm(d))
        if nd >= self.radius - TAU_GEO * max(1.0, self.radius):
            return [d / nd]
        return []

    def halfspaces(self):
        if self.radius == 0.0:
            eye = np.eye(self.dim)
            return np.vstack([eye, -eye]), np.concatenate([self.center, -self.center])
        return None

    def to_dict(self) -> dict:
        return {"kind": "Ball", "center": self.center.tolist(), "radius": self.radius}

    def __repr__(self) -> str:
        return f"Ball(center={self.center.tolist()}, radius={self.radius})"


class HPolytope(ConvexBody):
    """Polyhedron {s : <a_i, s> <= c_i}; may be unbounded."""

    def __init__(self, normals, offsets):
        N = _as_rows(normals)
        c = np.array(offsets, dtype=float).reshape(-1)
        if N.shape[0] != c.size:
            raise DimensionError("normals and offsets have different lengths")
        if N.shape[0] == 0:
            raise GeometryError("HPolytope needs at least one halfspace")
        row_norms = np.linalg.norm(N, axis=1)
        if (row_norms == 0.0).any():
            raise GeometryError("normals must be nonzero")
        self.normals = N
        self.offsets = c
        self.dim = N.shape[1]
        self._row_norms = row_norms
        res = linprog(np.zeros(self.dim), A_ub=N, b_ub=c, bounds=[(None, None)] * self.dim,
                      method="highs")
        if res.status == 2:
            raise EmptySetError("HPolytope is empty")
        self._bounds = _axis_bounds(N, c)

    @cached_property
    def bounded(self) -> bool:
        return all(math.isfinite(self.support(e)) for e in axis_frame(self.dim))

    def _lp_max(self, xi: np.ndarray):
        res = linprog(-xi, A_ub=self.normals, b_ub=self.offsets,
                      bounds=[(None, None)] * self.dim, method="highs")
        if res.status == 3:
            return None
        if res.status != 0:
            raise GeometryError(f"support LP failed: {res.message}")
        p = res.x
        # snap onto the active face to remove LP solver slack
        slack = self.offsets - self.normals @ p
        active = slack <= 1e-7 * (1.0 + np.abs(self.offsets))
        if active.any():
            Na = self.normals[active]
            q = p + np.linalg.pinv(Na) @ (self.offsets[active] - Na @ p)
            if (self.normals @ q <= self.offsets + 1e-12 * (1.0 + np.abs(self.offsets))).all():
                p = q
        return p

    def support(self, xi) -> float:
        xi = as_point(xi, self.dim)
        if not xi.any():
            return 0.0
        p = self._lp_max(xi)
        return math.inf if p is None else float(xi @ p)

    def support_point(self, xi):
        xi = as_point(xi, self.dim)
        if not xi.any():
            return self.project(np.zeros(self.dim))
        return self._lp_max(xi)

    def project(self, x) -> np.ndarray:
        x = as_point(x, self.dim)
        if self._bounds is not None:
            return np.clip(x, *self._bounds)
        if (self.normals @ x <= self.offsets).all():
            return x.copy()
        try:
            sol = quadprog.solve_qp(np.eye(self.dim), x, -self.normals.T, -self.offsets)[0]
        except ValueError as exc:
            raise GeometryError(f"polytope projection failed: {exc}") from exc
        return np.asarray(sol, dtype=float)

    def normal_rays(self, x) -> list[np.ndarray]:
        x = as_point(x, self.dim)
        self._require_member(x)
        slack = self.offsets - self.normals @ x
        active = np.flatnonzero(slack <= TAU_GEO * np.maximum(1.0, self._row_norms))
        rays = [self.normals[i] / self._row_norms[i] for i in active]
        return dedup_directions(rays)

    def halfspaces(self):
        return self.normals, self.offsets

    def to_dict(self) -> dict:
        return {"kind": "HPolytope", "normals": self.normals.tolist(),
                "offsets": self.offsets.tolist()}

    def __repr__(self) -> str:
        return f"HPolytope(m={self.normals.shape[0]}, dim={self.dim})"


def _axis_bounds(N: np.ndarray, c: np.ndarray):
    """(lo, hi) when every row of N is a multiple of a unit vector, else None."""
    if (np.count_nonzero(N, axis=1) != 1).any():
        return None
    lo = np.full(N.shape[1], -np.inf)
    hi = np.full(N.shape[1], np.inf)
    for a, b in zip(N, c):
        i = int(np.flatnonzero(a)[0])
        if a[i] > 0:
            hi[i] = min(hi[i], b / a[i])
        else:
            lo[i] = max(lo[i], b / a[i])
    return lo, hi


def box(lo, hi) -> HPolytope:
    """Axis-aligned box [lo, hi] as an HPolytope."""
    lo = as_point(lo)
    hi = as_point(hi, lo.size)
    eye = np.eye(lo.size)
    return HPolytope(np.vstack([eye, -eye]), np.concatenate([hi, -lo]))


class VPolytope(ConvexBody):
    """Convex hull of finitely many points."""

    def __init__(self, vertices):
        V = _as_rows(vertices)
        if V.shape[0] == 0:
            raise EmptySetError("VPolytope needs at least one vertex")
        self.vertices = V
        self.dim = V.shape[1]

    bounded = True

    def support(self, xi) -> float:
        xi = as_point(xi, self.dim)
        return float(np.max(self.vertices @ xi))

    def support_point(self, xi) -> np.ndarray:
        xi = as_point(xi, self.dim)
        return self.vertices[int(np.argmax(self.vertices @ xi))].copy()

    def project(self, x) -> np.ndarray:
        x = as_point(x, self.dim)
        if self.vertices.shape[0] == 1:
            return self.vertices[0].copy()
        p, _ = _min_norm_in_hull(self.vertices - x)
        return p + x

    def weights(self, x) -> np.ndarray:
        """Convex weights of the projection of ``x``."""
        x = as_point(x, self.dim)
        return _min_norm_in_hull(self.vertices - x)[1]

    @cached_property
    def _hrep(self) -> tuple[np.ndarray, np.ndarray]:
        V = self.vertices
        v0 = V[0]
        D = V - v0
        n = self.dim
        if np.allclose(D, 0.0):
            eye = np.eye(n)
            return np.vstack([eye, -eye]), np.concatenate([v0, -v0])
        _, s, vt = np.linalg.svd(D)
        rank = int(np.sum(s > 1e-10 * max(1.0, s[0])))
        basis = vt[:rank]
        comp = vt[rank:]
        rows, offs = [], []
        for u in comp:
            rows += [u, -u]
            offs += [float(u @ v0), -float(u @ v0)]
        coords = D @ basis.T
        if rank == 1:
            u = basis[0]
            rows += [u, -u]
            offs += [float(u @ v0 + coords.max()), -float(u @ v0 + coords.min())]
        else:
            hull = ConvexHull(coords)
            for eq in hull.equations:
                a_red, b_red = eq[:-1], eq[-1]
                nrm = np.linalg.norm(a_red)
                a = (a_red / nrm) @ basis
                rows.append(a)
                offs.append(float(-b_red / nrm + a @ v0))
        N = np.array(rows)
        c = np.array(offs)
        # coplanar triangulated facets repeat
        keep: list[int] = []
        for i in range(N.shape[0]):
            if not any(np.allclose(N[i], N[j], atol=1e-9) and abs(c[i] - c[j]) < 1e-9 for j in keep):
                keep.append(i)
        return N[keep], c[keep]

    def normal_rays(self, x) -> list[np.ndarray]:
        x = as_point(x, self.dim)
        self._require_member(x)
        N, c = self._hrep
        slack = c - N @ x
        active = np.flatnonzero(slack <= TAU_GEO * 10)
        return dedup_directions([N[i] / np.linalg.norm(N[i]) for i in active])

    def halfspaces(self):
        return self._hrep

    def to_dict(self) -> dict:
        return {"kind": "VPolytope", "vertices": self.vertices.tolist()}

    def __repr__(self) -> str:
        return f"VPolytope({self.vertices.tolist()})"


def singleton(p) -> VPolytope:
    return VPolytope([as_point(p)])


class Cone(ConvexBody):
    """Closed convex cone generated by finitely many rays; no rays means {0}."""

    def __init__(self, generators, dim: int | None = None):
        G = _as_rows(generators, dim)
        G = G[np.linalg.norm(G, axis=1) > 0.0] if G.shape[0] else G
        self.generators = G
        self.dim = G.shape[1]
        self._gnorm = np.linalg.norm(G, axis=1) if G.shape[0] else np.zeros(0)

    @property
    def bounded(self) -> bool:
        return self.generators.shape[0] == 0

    @cached_property
    def _orthonormal(self) -> bool:
        # orthonormal generators decouple the projection: μ_i = max(0, <g_i, x>)
        G = self.generators
        return float(np.abs(G @ G.T - np.eye(G.shape[0])).max()) <= 1e-14

    def support(self, xi) -> float:
        xi = as_point(xi, self.dim)
        if self.generators.shape[0] == 0:
            return 0.0
        m = self.generators @ xi
        thresh = _CONE_SIGN_TOL * np.linalg.norm(xi) * self._gnorm
        return math.inf if (m > thresh).any() else 0.0

    def support_point(self, xi):
        return np.zeros(self.dim) if math.isfinite(self.support(xi)) else None

    def project(self, x) -> np.ndarray:
        x = as_point(x, self.dim)
        G = self.generators
        if G.shape[0] == 0:
            return np.zeros(self.dim)
        if G.shape[0] == 1:
            g = G[0]
            return max(0.0, float(g @ x)) / float(g @ g) * g
        if self._orthonormal:
            return G.T @ np.maximum(G @ x, 0.0)
        mu, _ = nnls(G.T, x)
        return G.T @ mu

    def normal_rays(self, x) -> list[np.ndarray]:
        x = as_point(x, self.dim)
        self._require_member(x)
        G = self.generators
        if G.shape[0] == 0:
            return axis_frame(self.dim)
        if G.shape[0] == 1:
            g = G[0] / self._gnorm[0]
            comp = orthonormal_complement(g[None, :], self.dim)
            rays = [u for w in comp for u in (w, -w)]
            if np.linalg.norm(x) <= TAU_GEO:
                rays.append(-g)
            return dedup_directions(rays)
        raise NotImplementedError("normal cone of a cone with several generators")

    def halfspaces(self):
        if self.generators.shape[0] == 0:
            eye = np.eye(self.dim)
            return np.vstack([eye, -eye]), np.zeros(2 * self.dim)
        return None

    def to_dict(self) -> dict:
        return {"kind": "Cone", "generators": self.generators.tolist(), "dim": self.dim}

    def __repr__(self) -> str:
        return f"Cone({self.generators.tolist()})"


class Translate(ConvexBody):
    def __init__(self, base: ConvexBody, shift):
        self.base = base
        self.shift = as_point(shift, base.dim)
        self.dim = base.dim

    @property
    def tolerance(self) -> float:
        return self.base.tolerance

    @property
    def bounded(self) -> bool:
        return self.base.bounded

    def support(self, xi) -> float:
        xi = as_point(xi, self.dim)
        return self.base.support(xi) + float(self.shift @ xi)

    def support_point(self, xi):
        p = self.base.support_point(xi)
        return None if p is None else p + self.shift

    def project(self, x) -> np.ndarray:
        x = as_point(x, self.dim)
        return self.shift + self.base.project(x - self.shift)

    def normal_rays(self, x) -> list[np.ndarray]:
        x = as_point(x, self.dim)
        return self.base.normal_rays(x - self.shift)

    def halfspaces(self):
        hs = self.base.halfspaces()
        if hs is None:
            return None
        N, c = hs
        return N, c + N @ self.shift

    def to_dict(self) -> dict:
        return {"kind": "Translate", "base": self.base.to_dict(), "shift": self.shift.tolist()}

    def __repr__(self) -> str:
        return f"Translate({self.base!r}, {self.shift.tolist()})"


class Intersection(ConvexBody):
    def __init__(self, parts: Sequence[ConvexBody]):
        parts = list(parts)
        if not parts:
            raise GeometryError("Intersection needs at least one part")
        dims = {p.dim for p in parts}
        if len(dims) != 1:
            raise DimensionError("Intersection parts differ in dimension")
        self.parts = parts
        self.dim = parts[0].dim
        hs = self.halfspaces()
        if hs is not None:
            res = linprog(np.zeros(self.dim), A_ub=hs[0], b_ub=hs[1],
                          bounds=[(None, None)] * self.dim, method="highs")
            if res.status == 2:
                raise EmptySetError("Intersection is empty")

    @cached_property
    def _polyhedral(self):
        pieces = [p.halfspaces() for p in self.parts]
        if any(h is None for h in pieces):
            return None
        return np.vstack([h[0] for h in pieces]), np.concatenate([h[1] for h in pieces])

    def halfspaces(self):
        return self._polyhedral

    @property
    def tolerance(self) -> float:
        return TAU_GEO if self._polyhedral is not None else TAU_ITER

    @cached_property
    def bounded(self) -> bool:
        if any(p.bounded for p in self.parts):
            return True
        return all(math.isfinite(self.support(e)) for e in axis_frame(self.dim))

    def project(self, x) -> np.ndarray:
        x = as_point(x, self.dim)
        if len(self.parts) == 1:
            return self.parts[0].project(x)
        if self._polyhedral is not None:
            return HPolytope(*self._polyhedral).project(x)
        return self._dykstra(x)

    def _dykstra(self, x: np.ndarray) -> np.ndarray:
        y = x.copy()
        incr = [np.zeros(self.dim) for _ in self.parts]
        scale = 1.0 + float(np.linalg.norm(x))
        for _ in range(DYKSTRA_MAX_SWEEPS):
            y_prev = y
            moved = 0.0
            for i, part in enumerate(self.parts):
                z = part.project(y + incr[i])
                new_incr = y + incr[i] - z
                moved += float(np.linalg.norm(new_incr - incr[i]))
                incr[i] = new_incr
                y = z
            if np.linalg.norm(y - y_prev) <= 1e-14 * scale and moved <= 1e-12 * scale:
                break
        if max(p.distance(y) for p in self.parts) > TAU_ITER:
            raise EmptySetError("Intersection is empty (alternating projections did not meet)")
        return y

    def support(self, xi) -> float:
        xi = as_point(xi, self.dim)
        if not xi.any():
            return 0.0
        return self._support(xi)[0]

    def support_point(self, xi):
        xi = as_point(xi, self.dim)
        if not xi.any():
            return self.project(np.zeros(self.dim))
        return self._support(xi)[1]

    def _support(self, xi: np.ndarray):
        if len(self.parts) == 1:
            p = self.parts[0]
            return p.support(xi), p.support_point(xi)
        if self._polyhedral is not None:
            poly = HPolytope(*self._polyhedral)
            p = poly.support_point(xi)
            return (math.inf, None) if p is None else (float(xi @ p), p)
        balls = [p for p in self.parts if isinstance(p, Ball)]
        if balls:
            ball = balls[0]
            rest = [p for p in self.parts if p is not ball]
            other = rest[0] if len(rest) == 1 else Intersection(rest)
            return _support_ball_cut(other, ball, xi)
        return _support_generic(self, xi)

    def normal_rays(self, x) -> list[np.ndarray]:
        x = as_point(x, self.dim)
        self._require_member(x)
        rays: list[np.ndarray] = []
        for p in self.parts:
            if p.contains(x, max(p.tolerance, self.tolerance)):
                rays += p.normal_rays(p.project(x))
        return dedup_directions(rays)

    def to_dict(self) -> dict:
        return {"kind": "Intersection", "parts": [p.to_dict() for p in self.parts]}

    def __repr__(self) -> str:
        return f"Intersection({self.parts!r})"


def _support_ball_cut(P: ConvexBody, ball: Ball, xi: np.ndarray):
    """sup <xi, s> over P ∩ ball, using only the projection oracle of P.

    The maximizer is Π_P(c + t xi) at the smallest t where it reaches the
    sphere; ||Π_P(c + t xi) - c|| is nondecreasing in t (Lagrangian duality).
    """
    c, r = ball.center, ball.radius
    scale = float(np.max(np.abs(xi)))
    # rescale first so tiny directions do not underflow; ξ = 0 takes any feasible point
    u = xi / scale if scale > 0 else np.eye(xi.size)[0]
    u = u / np.linalg.norm(u)
    p0 = P.project(c)
    d0 = float(np.linalg.norm(p0 - c))
    tol = max(P.tolerance, TAU_GEO) * max(1.0, r)
    if d0 > r + tol:
        raise EmptySetError("Intersection is empty")
    if d0 >= r - 1e-15 * max(1.0, r):
        return float(xi @ p0), p0

    def gap(t: float) -> float:
        return float(np.linalg.norm(P.project(c + t * u) - c)) - r

    t_hi = max(1.0, r)
    while gap(t_hi) < 0.0:
        t_hi *= 4.0
        if t_hi > 1e12 * max(1.0, r):
            p = P.support_point(u)
            return float(xi @ p), p
    t_star = brentq(gap, 0.0, t_hi, xtol=1e-15 * t_hi, rtol=4 * np.finfo(float).eps, maxiter=400)
    p = P.project(c + t_star * u)
    return float(xi @ p), p


def _support_generic(body: Intersection, xi: np.ndarray):
    from ._cvx import support_via_solver

    return support_via_solver(body, xi)


class ClosedSet:
    """Finite union of convex bodies."""

    def __init__(self, pieces: Sequence[ConvexBody] | ConvexBody):
        if isinstance(pieces, ConvexBody):
            pieces = [pieces]
        pieces = list(pieces)
        if not pieces:
            raise EmptySetError("ClosedSet needs at least one piece")
        if len({p.dim for p in pieces}) != 1:
            raise DimensionError("pieces differ in dimension")
        self.pieces = pieces
        self.dim = pieces[0].dim

    @property
    def tolerance(self) -> float:
        return max(p.tolerance for p in self.pieces)

    @property
    def convex(self) -> bool:
        return len(self.pieces) == 1

    def distance(self, x) -> float:
        x = as_point(x, self.dim)
        return min(p.distance(x) for p in self.pieces)

    def contains(self, x, tol: float | None = None) -> bool:
        tol = self.tolerance if tol is None else tol
        return self.distance(x) <= tol

    def containing_pieces(self, x) -> list[ConvexBody]:
        x = as_point(x, self.dim)
        return [p for p in self.pieces if p.distance(x) <= p.tolerance]

    def to_dict(self) -> dict:
        return {"kind": "ClosedSet", "pieces": [p.to_dict() for p in self.pieces]}

    def __repr__(self) -> str:
        return f"ClosedSet({self.pieces!r})"


def _as_set(s) -> ClosedSet:
    return s if isinstance(s, ClosedSet) else ClosedSet(s)


# -- operations ---------------------------------------------------------------

def support(body: ConvexBody, xi) -> float:
    """Support function sup_{s in body} <xi, s>; +inf for unbounded directions."""
    return body.support(as_point(xi, body.dim))


def support_point(body: ConvexBody, xi):
    return body.support_point(as_point(xi, body.dim))


def project(body: ConvexBody, x) -> np.ndarray:
    """Nearest point of the convex body to ``x``."""
    return body.project(as_point(x, body.dim))


def distance(s: ClosedSet | ConvexBody, x) -> float:
    return _as_set(s).distance(x)


def project_set(s: ClosedSet | ConvexBody, x) -> list[np.ndarray]:
    """All nearest points of a finite union, sorted lexicographically.

    Parameters
    ----------
    s : ClosedSet or ConvexBody
    x : array_like, shape (n,)

    Returns
    -------
    list of arrays, shape (n,)
        Per-piece projections achieving the minimal distance within the
        set tolerance, deduplicated.
    """
    s = _as_set(s)
    x = as_point(x, s.dim)
    cands = [p.project(x) for p in s.pieces]
    dists = [float(np.linalg.norm(x - q)) for q in cands]
    dmin = min(dists)
    tol = s.tolerance
    best = [q for q, d in zip(cands, dists) if d <= dmin + tol]
    best = dedup_directions(best, tol=tol)
    return sorted(best, key=lambda q: tuple(q.tolist()))


def proximal_normal_rays(s: ClosedSet | ConvexBody, x, budget: int = 64) -> list[np.ndarray]:
    """Unit generators of the proximal normal cone of ``s`` at ``x``.

    For a convex piece the generators are exact (active facets, radial ray).
    For unions, rays of the containing pieces are kept only if they are
    normal to every containing piece; points interior to some piece get the
    trivial cone, returned as an empty list.
    """
    s = _as_set(s)
    x = as_point(x, s.dim)
    if not s.contains(x):
        raise NotInSetError("point not in set")
    pieces = s.containing_pieces(x)
    per_piece = [p.normal_rays(p.project(x)) for p in pieces]
    if len(pieces) == 1:
        rays = per_piece[0]
    else:
        if any(len(r) == 0 for r in per_piece):
            return []
        rays = []
        for cand in itertools.chain.from_iterable(per_piece):
            if all(_is_normal(p, x, cand) for p in pieces):
                rays.append(cand)
    rays = dedup_directions(rays)
    return rays[:budget]


def _is_normal(body: ConvexBody, x: np.ndarray, xi: np.ndarray) -> bool:
    # xi in N_C(x)  iff  Π_C(x + xi) = x
    q = body.project(x + xi)
    return float(np.linalg.norm(q - body.project(x))) <= 10 * body.tolerance


def cone_directions(rays: Sequence[np.ndarray], budget: int = 64) -> list[np.ndarray]:
    """Unit samples of cone(rays): the generators, pairwise bisectors, centroid."""
    out = list(rays)
    if len(rays) >= 2:
        for a, b in itertools.combinations(rays, 2):
            m = a + b
            nm = np.linalg.norm(m)
            if nm > 1e-9:
                out.append(m / nm)
    if len(rays) >= 3:
        m = np.sum(rays, axis=0)
        nm = np.linalg.norm(m)
        if nm > 1e-9:
            out.append(m / nm)
    return dedup_directions(out)[:budget]


def tangent_membership(s: ClosedSet | ConvexBody, x, v, t_grid: Sequence[float] | None = None,
                       tol: float = DEFAULT_TANGENT_TOL, method: str = "polar") -> bool:
    """Whether ``v`` lies in the Bouligand tangent cone of ``s`` at ``x``.

    ``method="polar"`` uses the exact polarity T = N° on each convex piece
    containing ``x`` (the tangent cone of a finite union is the union of the
    pieces' tangent cones).  ``method="surrogate"`` evaluates the liminf
    definition on ``t_grid``: min_t d_S(x + t v) / t <= tol.
    """
    s = _as_set(s)
    x = as_point(x, s.dim)
    v = as_point(v, s.dim)
    if not s.contains(x):
        raise NotInSetError("point not in set")
    if method == "surrogate":
        grid = DEFAULT_T_GRID if t_grid is None else t_grid
        return min(s.distance(x + t * v) / t for t in grid) <= tol
    if method != "polar":
        raise ValueError(f"unknown method {method!r}")
    for piece in s.containing_pieces(x):
        rays = piece.normal_rays(piece.project(x))
        if all(float(xi @ v) <= tol for xi in rays):
            return True
    return False


def min_norm_point(body: ConvexBody) -> np.ndarray:
    """Least-norm element of the body, i.e. its projection of the origin."""
    return body.project(np.zeros(body.dim))


def bounding_box(body: ConvexBody) -> tuple[np.ndarray, np.ndarray]:
    hi = np.array([body.support(e) for e in np.eye(body.dim)])
    lo = -np.array([body.support(-e) for e in np.eye(body.dim)])
    return lo, hi
