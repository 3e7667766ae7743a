"""Lipschitz set-valued maps with convex compact values and their selections."""
from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np
import quadprog

from .geometry import TAU_GEO, Ball, ConvexBody, GeometryError, VPolytope, as_point, dedup_directions


class CuscoError(ValueError):
    pass


class NotInValueError(CuscoError):
    def __init__(self, violation: float):
        super().__init__(f"v0 not in F(x0): violation distance {violation:.3e}")
        self.violation = violation


class AffineMap:
    """x -> Cx + d."""

    def __init__(self, C, d):
        self.C = np.atleast_2d(np.array(C, dtype=float))
        self.d = as_point(d, self.C.shape[0])
        if not np.all(np.isfinite(self.C)):
            raise CuscoError("affine map has non-finite entries")
        self.dim_in = self.C.shape[1]
        self.dim_out = self.C.shape[0]

    @classmethod
    def constant(cls, d, dim_in: int | None = None) -> "AffineMap":
        d = as_point(d)
        n = d.size if dim_in is None else dim_in
        return cls(np.zeros((d.size, n)), d)

    @property
    def lipschitz(self) -> float:
        return float(np.linalg.norm(self.C, 2))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.C @ x + self.d

    def to_dict(self) -> dict:
        return {"C": self.C.tolist(), "d": self.d.tolist()}

    def __repr__(self) -> str:
        return f"AffineMap(C={self.C.tolist()}, d={self.d.tolist()})"


class RadiusMap:
    """x -> max(r0 + <g, x>, 0)."""

    def __init__(self, r0: float, g=None, dim: int | None = None):
        self.r0 = float(r0)
        if not math.isfinite(self.r0):
            raise CuscoError("radius offset must be finite")
        if g is None:
            if dim is None:
                raise CuscoError("radius map needs g or dim")
            g = np.zeros(dim)
        self.g = as_point(g)

    @property
    def lipschitz(self) -> float:
        return float(np.linalg.norm(self.g))

    def __call__(self, x: np.ndarray) -> float:
        return max(self.r0 + float(self.g @ x), 0.0)

    def to_dict(self) -> dict:
        return {"r0": self.r0, "g": self.g.tolist()}


class Selection(NamedTuple):
    fn: Callable[[np.ndarray], np.ndarray]
    constant: float


class CuscoMap:
    dim: int
    L: float

    def value(self, x) -> ConvexBody:
        raise NotImplementedError

    def norm_bound(self, x) -> float:
        raise NotImplementedError

    def extreme_points(self, x) -> list[np.ndarray]:
        raise NotImplementedError

    def selection(self, x0, v0) -> Selection:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def _declared(self, L, default: float) -> float:
        if L is None:
            return default
        L = float(L)
        if not (L >= 0 and math.isfinite(L)):
            raise CuscoError("Lipschitz constant must be ≥ 0")
        return L


class Singleton(CuscoMap):
    def __init__(self, f: AffineMap, L: float | None = None):
        if f.dim_in != f.dim_out:
            raise CuscoError("Singleton map must send R^n to R^n")
        self.f = f
        self.dim = f.dim_out
        self.L = self._declared(L, f.lipschitz)

    def value(self, x) -> VPolytope:
        return VPolytope([self.f(as_point(x, self.dim))])

    def norm_bound(self, x) -> float:
        return float(np.linalg.norm(self.f(as_point(x, self.dim))))

    def extreme_points(self, x) -> list[np.ndarray]:
        return [self.f(as_point(x, self.dim))]

    def selection(self, x0, v0) -> Selection:
        x0 = as_point(x0, self.dim)
        gap = float(np.linalg.norm(self.f(x0) - as_point(v0, self.dim)))
        if gap > TAU_GEO * max(1.0, float(np.linalg.norm(v0))):
            raise NotInValueError(gap)
        return Selection(self.f, self.f.lipschitz)

    def to_dict(self) -> dict:
        return {"kind": "Singleton", "f": self.f.to_dict(), "L": self.L}

    def __repr__(self) -> str:
        return f"Singleton({self.f!r})"


class BallValued(CuscoMap):
    def __init__(self, center: AffineMap, radius: RadiusMap, L: float | None = None):
        if center.dim_in != center.dim_out or radius.g.size != center.dim_in:
            raise CuscoError("BallValued maps must act on R^n")
        self.center = center
        self.radius = radius
        self.dim = center.dim_out
        self.L = self._declared(L, center.lipschitz + radius.lipschitz)

    def value(self, x) -> Ball:
        x = as_point(x, self.dim)
        return Ball(self.center(x), self.radius(x))

    def norm_bound(self, x) -> float:
        x = as_point(x, self.dim)
        return float(np.linalg.norm(self.center(x))) + self.radius(x)

    def extreme_points(self, x) -> list[np.ndarray]:
        x = as_point(x, self.dim)
        c, r = self.center(x), self.radius(x)
        pts = [c + s * r * e for e in np.eye(self.dim) for s in (1.0, -1.0)] + [c]
        return dedup_directions(pts, tol=0.0)

    def selection(self, x0, v0) -> Selection:
        x0 = as_point(x0, self.dim)
        v0 = as_point(v0, self.dim)
        u0 = v0 - self.center(x0)
        nu = float(np.linalg.norm(u0))
        r0 = self.radius(x0)
        if nu > r0 + TAU_GEO * max(1.0, r0):
            raise NotInValueError(nu - r0)
        c, rad = self.center, self.radius
        const = c.lipschitz + rad.lipschitz
        if nu == 0.0:
            return Selection(c, c.lipschitz)

        def f(y: np.ndarray) -> np.ndarray:
            return c(y) + min(1.0, rad(y) / nu) * u0

        return Selection(f, const)

    def to_dict(self) -> dict:
        return {"kind": "BallValued", "center": self.center.to_dict(),
                "radius": self.radius.to_dict(), "L": self.L}

    def __repr__(self) -> str:
        return f"BallValued({self.center!r}, r0={self.radius.r0})"


class PolytopeValued(CuscoMap):
    def __init__(self, vertex_maps: list[AffineMap], L: float | None = None):
        if not vertex_maps:
            raise CuscoError("PolytopeValued needs at least one vertex map")
        dims = {(m.dim_in, m.dim_out) for m in vertex_maps}
        if len(dims) != 1 or vertex_maps[0].dim_in != vertex_maps[0].dim_out:
            raise CuscoError("vertex maps must all act on the same R^n")
        self.vertex_maps = list(vertex_maps)
        self.dim = vertex_maps[0].dim_out
        self.L = self._declared(L, max(m.lipschitz for m in vertex_maps))

    def vertices(self, x) -> np.ndarray:
        x = as_point(x, self.dim)
        return np.array([m(x) for m in self.vertex_maps])

    def value(self, x) -> VPolytope:
        return VPolytope(self.vertices(x))

    def norm_bound(self, x) -> float:
        return float(np.max(np.linalg.norm(self.vertices(x), axis=1)))

    def extreme_points(self, x) -> list[np.ndarray]:
        return dedup_directions(list(self.vertices(x)), tol=0.0)

    def selection(self, x0, v0) -> Selection:
        x0 = as_point(x0, self.dim)
        v0 = as_point(v0, self.dim)
        V = self.vertices(x0)
        gap = VPolytope(V).distance(v0)
        if gap > TAU_GEO * max(1.0, float(np.linalg.norm(v0))):
            raise NotInValueError(gap)
        lam = least_norm_weights(V, v0)
        maps = self.vertex_maps
        C = sum(l * m.C for l, m in zip(lam, maps))
        d = sum(l * m.d for l, m in zip(lam, maps))
        f = AffineMap(C, d)
        return Selection(f, max(m.lipschitz for m in maps))

    def to_dict(self) -> dict:
        return {"kind": "PolytopeValued", "vertex_maps": [m.to_dict() for m in self.vertex_maps],
                "L": self.L}

    def __repr__(self) -> str:
        return f"PolytopeValued({len(self.vertex_maps)} maps)"


def least_norm_weights(V: np.ndarray, v0: np.ndarray) -> np.ndarray:
    """argmin Σλ_i² over λ ≥ 0, Σλ_i = 1, Σλ_i V_i = v0.

    Equality rows are reduced to an orthonormal basis of their row space so
    the active-set QP sees a full-rank constraint matrix.
    """
    k = V.shape[0]
    if k == 1:
        return np.ones(1)
    E = np.vstack([V.T, np.ones((1, k))])
    rhs = np.concatenate([v0, [1.0]])
    U, s, Wt = np.linalg.svd(E, full_matrices=False)
    rank = int(np.sum(s > 1e-12 * max(1.0, s[0])))
    Er = Wt[:rank]
    rr = (U[:, :rank].T @ rhs) / s[:rank]
    if rank == k:
        # the equalities pin λ down; quadprog rejects solutions lying exactly on λ ≥ 0
        lam = Er.T @ rr
        if lam.min() < -1e-9:
            raise GeometryError("selection weights infeasible: v0 outside the value")
        lam = np.clip(lam, 0.0, None)
        return lam / lam.sum()
    Cmat = np.hstack([Er.T, np.eye(k)])
    b = np.concatenate([rr, np.full(k, -1e-12)])
    try:
        lam = quadprog.solve_qp(np.eye(k), np.zeros(k), Cmat, b, meq=rank)[0]
    except ValueError as exc:
        raise GeometryError(f"selection weights infeasible: {exc}") from exc
    lam = np.clip(lam, 0.0, None)
    return lam / lam.sum()


# -- operations ---------------------------------------------------------------

def value(F: CuscoMap, x) -> ConvexBody:
    return F.value(x)


def norm_bound(F: CuscoMap, x) -> float:
    """‖F(x)‖ = sup of norms over the value."""
    return F.norm_bound(x)


def lipschitz_selection(F: CuscoMap, x0, v0) -> Selection:
    """A Lipschitz selection f of F with f(x0) = v0, and its Lipschitz constant."""
    return F.selection(x0, v0)


def extreme_points(F: CuscoMap, x) -> list[np.ndarray]:
    return F.extreme_points(x)


def constant_singleton(v) -> Singleton:
    v = as_point(v)
    return Singleton(AffineMap.constant(v))


def constant_ball(center, radius: float) -> BallValued:
    c = as_point(center)
    return BallValued(AffineMap.constant(c), RadiusMap(radius, dim=c.size))
