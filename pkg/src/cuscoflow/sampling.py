"""Deterministic boundary and region samplers for certification."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .geometry import (
    Ball,
    ClosedSet,
    ConvexBody,
    HPolytope,
    VPolytope,
    bounding_box,
)

UNBOUNDED_CAP = 10.0


@dataclass(frozen=True)
class Sampler:
    """Boundary mesh with seed-controlled jitter.

    In the plane, directions form an angular grid 2πk/N shifted by
    ``jitter``·U(0,1)·2π/N; in higher dimension they come from a seeded
    Sobol sequence mapped to the sphere.  Boundary points are found by
    casting rays from a central point of each convex piece.
    """

    n_points: int = 200
    jitter: float = 0.0
    seed: int = 0

    def directions(self, n: int, count: int, salt: int = 0) -> np.ndarray:
        if n == 1:
            base = np.array([[1.0], [-1.0]])
            return np.vstack([base] * math.ceil(count / 2))[:count]
        if n == 2:
            rng = np.random.default_rng(np.random.PCG64([self.seed, salt]))
            shift = self.jitter * rng.random() * 2 * math.pi / count
            ang = 2 * math.pi * np.arange(count) / count + shift
            return np.column_stack([np.cos(ang), np.sin(ang)])
        sob = qmc.Sobol(d=n, scramble=True, seed=np.random.default_rng([self.seed, salt]))
        m = math.ceil(math.log2(max(2, 2 * count)))
        pts = qmc.MultivariateNormalQMC(mean=np.zeros(n), engine=sob).random(2**m)[:count]
        del sob
        return pts / np.linalg.norm(pts, axis=1, keepdims=True)

    def boundary_points(self, S) -> list[np.ndarray]:
        """About ``n_points`` points on the boundaries of the pieces of S."""
        S = S if isinstance(S, ClosedSet) else ClosedSet(S)
        per = math.ceil(self.n_points / len(S.pieces))
        out: list[np.ndarray] = []
        for i, piece in enumerate(S.pieces):
            dirs = self.directions(S.dim, per, salt=i)
            c = piece_center(piece)
            out += [boundary_along_ray(piece, u, c) for u in dirs]
        seen: set[tuple] = set()
        unique = []
        for p in out:
            key = tuple(p.tolist())
            if key not in seen:
                seen.add(key)
                unique.append(p)
        return unique[: max(self.n_points, 1)]

    def region_points(self, body: ConvexBody, count: int | None = None) -> list[np.ndarray]:
        """Low-discrepancy points of ``body`` (Halton in its bounding box, rejection)."""
        count = self.n_points if count is None else count
        lo, hi = _finite_box(body)
        halton = qmc.Halton(d=body.dim, scramble=True, seed=np.random.default_rng(self.seed))
        out: list[np.ndarray] = []
        tries = 0
        while len(out) < count and tries < 50:
            batch = lo + (hi - lo) * halton.random(4 * count)
            out += [p for p in batch if body.contains(p)]
            tries += 1
        return out[:count]


def _finite_box(body: ConvexBody) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = bounding_box(body)
    c = body.project(np.zeros(body.dim))
    lo = np.where(np.isfinite(lo), lo, c - UNBOUNDED_CAP)
    hi = np.where(np.isfinite(hi), hi, c + UNBOUNDED_CAP)
    return lo, hi


def piece_center(body: ConvexBody) -> np.ndarray:
    if isinstance(body, Ball):
        return body.center.copy()
    if isinstance(body, VPolytope):
        return body.vertices.mean(axis=0)
    lo, hi = _finite_box(body)
    return body.project(0.5 * (lo + hi))


def boundary_along_ray(body: ConvexBody, u: np.ndarray, center: np.ndarray | None = None) -> np.ndarray:
    """Last point of ``body`` on the ray center + t·u, t ≥ 0."""
    c = piece_center(body) if center is None else center
    if isinstance(body, Ball):
        return body.center + body.radius * u
    if isinstance(body, HPolytope):
        rate = body.normals @ u
        slack = body.offsets - body.normals @ c
        pos = rate > 1e-15
        t = float(np.min(slack[pos] / rate[pos])) if np.any(pos) else UNBOUNDED_CAP
        return c + min(t, UNBOUNDED_CAP) * u
    lo, hi = _finite_box(body)
    t_hi = float(np.linalg.norm(hi - lo)) + 1.0
    if body.contains(c + t_hi * u):
        return c + t_hi * u
    t_lo = 0.0
    for _ in range(80):
        mid = 0.5 * (t_lo + t_hi)
        if body.contains(c + mid * u):
            t_lo = mid
        else:
            t_hi = mid
    return c + t_lo * u
