"""Catching-up integration of x' ∈ f(x) - A(x) and the associated a priori bounds."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .cusco import CuscoMap, NotInValueError, lipschitz_selection
from .geometry import TAU_GEO, ClosedSet, as_point, distance
from .operators import MonotoneOperator, OperatorError, min_section, project_onto_value

DEFAULT_H = 1e-3
DEFAULT_T = 5.0
MAX_STEPS = 10_000_000
GRONWALL_PANELS = 10_000


class IntegrationError(RuntimeError):
    """Raised when a step fails; carries the trajectory computed so far."""

    def __init__(self, message: str, index: int, partial: "Trajectory | None"):
        super().__init__(f"step {index}: {message}")
        self.index = index
        self.partial = partial


@dataclass(frozen=True)
class FixedSelection:
    """Follow a Lipschitz selection f of F with f(anchor) = v0 (anchor defaults to x0)."""

    v0: np.ndarray | None = None
    anchor: np.ndarray | None = None


@dataclass(frozen=True)
class DistanceTo:
    target: ClosedSet

    def __call__(self, x: np.ndarray) -> float:
        return distance(self.target, x)


@dataclass(frozen=True)
class LyapunovValue:
    V: object

    def __call__(self, x: np.ndarray) -> float:
        return float(self.V.value(x))


@dataclass(frozen=True)
class Steered:
    """Pick, at every step, the extreme velocity minimizing the objective after the step."""

    objective: Union[DistanceTo, LyapunovValue]


@dataclass(frozen=True)
class IntegratorConfig:
    h: float = DEFAULT_H
    T: float = DEFAULT_T
    mode: Union[FixedSelection, Steered] = field(default_factory=FixedSelection)
    refine: bool = False

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError("h must be > 0")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError("T must be > 0")
        if self.h > self.T:
            raise ValueError("h must not exceed T")
        if self.T / self.h > MAX_STEPS:
            raise ValueError(f"T/h exceeds {MAX_STEPS}")

    @property
    def steps(self) -> int:
        return max(1, math.ceil(self.T / self.h - 1e-9))


@dataclass
class Trajectory:
    h: float
    times: np.ndarray
    states: np.ndarray
    velocities: np.ndarray
    selections: np.ndarray
    selection_constant: float | None = None

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self, stream=None) -> str:
        """Rows t, x1..xn, v1..vn, sel1..seln with 17 significant digits."""
        n = self.dim
        header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"v{i + 1}" for i in range(n)] \
            + [f"sel{i + 1}" for i in range(n)]
        buf = io.StringIO() if stream is None else stream
        buf.write(",".join(header) + "\n")
        table = np.column_stack([self.times, self.states, self.velocities, self.selections])
        for row in table:
            buf.write(",".join(format(float(v), ".17g") for v in row) + "\n")
        return buf.getvalue() if stream is None else ""


def step(A: MonotoneOperator, v, x, h: float) -> np.ndarray:
    """One catching-up step x+ = J_{hA}(x + h v)."""
    return A.resolvent(h, as_point(x, A.dim) + h * as_point(v, A.dim))


def _steer(A, F, objective, x, h):
    best_v, best_x, best_val = None, None, math.inf
    for v in sorted(F.extreme_points(x), key=lambda p: tuple(p.tolist())):
        xn = step(A, v, x, h)
        val = objective(xn)
        if val < best_val - 1e-14 * max(1.0, abs(best_val)) or best_v is None:
            best_v, best_x, best_val = v, xn, val
    return best_v, best_x


def _default_v0(F: CuscoMap, x0: np.ndarray) -> np.ndarray:
    return F.value(x0).project(np.zeros(F.dim))


def integrate(A: MonotoneOperator, F: CuscoMap, cfg: IntegratorConfig, x0) -> Trajectory:
    """Catching-up trajectory of ⌈T/h⌉ steps from ``x0``.

    Parameters
    ----------
    A : MonotoneOperator
    F : CuscoMap
    cfg : IntegratorConfig
        ``FixedSelection`` follows one Lipschitz selection of F through the
        anchor point; ``Steered`` chooses among extreme points of F(x_k) the
        one minimizing the objective at the post-step state.
    x0 : array_like
        Initial state in the closure of dom A.

    Returns
    -------
    Trajectory
        ``velocities[k] = (x_{k+1} - x_k)/h`` for k < K and, on the last
        row, the exact right derivative v - Π_{A(x_K)}(v) at the final state.

    Raises
    ------
    IntegrationError
        On a failing step, with the partial trajectory attached.
    """
    x0 = as_point(x0, A.dim)
    if A.domain_distance(x0) > 10 * TAU_GEO * max(1.0, float(np.linalg.norm(x0))):
        raise IntegrationError("x0 outside the closure of dom A", 0, None)
    if cfg.refine:
        return _richardson(A, F, cfg, x0)
    return _integrate(A, F, cfg.h, cfg.steps, cfg.mode, x0)


def _integrate(A, F, h, K, mode, x0) -> Trajectory:
    n = x0.size
    states = np.empty((K + 1, n))
    sels = np.empty((K + 1, n))
    states[0] = x0
    const = None
    if isinstance(mode, FixedSelection):
        anchor = x0 if mode.anchor is None else as_point(mode.anchor, n)
        v0 = _default_v0(F, anchor) if mode.v0 is None else as_point(mode.v0, n)
        try:
            sel = lipschitz_selection(F, anchor, v0)
        except NotInValueError as exc:
            raise IntegrationError(str(exc), 0, None) from exc
        const = sel.constant
        pick = lambda x: (sel.fn(x), None)  # noqa: E731
    else:
        obj = mode.objective
        pick = lambda x: _steer(A, F, obj, x, h)  # noqa: E731

    x = x0
    for k in range(K):
        try:
            v, xn = pick(x)
            if xn is None:
                xn = step(A, v, x, h)
        except Exception as exc:  # any oracle failure aborts with what we have
            raise IntegrationError(str(exc), k, _partial(states, sels, k, h, const)) from exc
        sels[k] = v
        states[k + 1] = xn
        x = xn
    v_last, _ = pick(x)
    sels[K] = v_last
    vel = np.empty_like(states)
    vel[:K] = np.diff(states, axis=0) / h
    try:
        vel[K] = v_last - project_onto_value(A, x, v_last)
    except OperatorError:
        vel[K] = vel[K - 1]
    times = h * np.arange(K + 1)
    return Trajectory(h, times, states, vel, sels, const)


def _partial(states, sels, k, h, const) -> Trajectory:
    st = states[: k + 1].copy()
    se = sels[: k + 1].copy()
    se[k] = np.nan
    vel = np.full_like(st, np.nan)
    if k > 0:
        vel[:k] = np.diff(st, axis=0) / h
    return Trajectory(h, h * np.arange(k + 1), st, vel, se, const)


def _richardson(A, F, cfg, x0) -> Trajectory:
    coarse = _integrate(A, F, cfg.h, cfg.steps, cfg.mode, x0)
    fine = _integrate(A, F, cfg.h / 2, 2 * cfg.steps, cfg.mode, x0)
    states = 2.0 * fine.states[::2] - coarse.states
    # extrapolation may leave dom A; snap back
    states = np.array([A.project_to_domain(s) for s in states])
    vel = coarse.velocities.copy()
    vel[:-1] = np.diff(states, axis=0) / cfg.h
    return Trajectory(cfg.h, coarse.times, states, vel, coarse.selections,
                      coarse.selection_constant)


def right_derivative(A: MonotoneOperator, F: CuscoMap, x, v) -> np.ndarray:
    """v - Π_{A(x)}(v), the right derivative of the solution leaving x with velocity v."""
    x = as_point(x, A.dim)
    v = as_point(v, A.dim)
    if not A.in_domain(x):
        raise OperatorError("x not in dom A")
    gap = F.value(x).distance(v)
    if gap > 10 * TAU_GEO * max(1.0, float(np.linalg.norm(v))):
        raise NotInValueError(gap)
    return v - project_onto_value(A, x, v)


def growth_bound(F: CuscoMap, A: MonotoneOperator, x0, c: float, t: float,
                 factor: float = 3.0) -> float:
    """factor·(‖F(x0)‖ + ‖A°(x0)‖)·t·e^{ct}; bounds ‖x(t) - x0‖ for factor 3."""
    if t < 0:
        raise ValueError("t must be ≥ 0")
    if t == 0:
        return 0.0
    m = F.norm_bound(x0) + float(np.linalg.norm(min_section(A, x0)))
    return factor * m * t * math.exp(c * t)


def divergence_bound(F: CuscoMap, A: MonotoneOperator, x0, c: float, t: float) -> float:
    """Bound on ‖x(t) - y(t)‖ for two solutions from the same x0 (factor 4)."""
    return growth_bound(F, A, x0, c, t, factor=4.0)


def _on_grid(fn, grid: np.ndarray) -> np.ndarray:
    if callable(fn):
        try:
            vals = np.asarray(fn(grid), dtype=float)
            if vals.shape == grid.shape:
                return vals
        except Exception:
            pass
        return np.array([float(fn(s)) for s in grid])
    return np.full_like(grid, float(fn))


def gronwall_bound(a_fn: Callable | float, b_fn: Callable | float, alpha: float, w0: float,
                   t0: float, t: float, panels: int = GRONWALL_PANELS) -> float:
    """Bound on w(t) when w' ≤ a w + b w^α, α ∈ [0, 1).

    Parameters
    ----------
    a_fn, b_fn : callable or float
        Coefficients on [t0, t]; callables are tried vectorized first.
        ``b`` must be nonnegative.
    alpha : float
    w0 : float
        w(t0) ≥ 0.
    t0, t : float
    panels : int
        Composite Simpson panels for both integrals.

    Returns
    -------
    float
        (w0^{1-α} e^{∫a} + ∫ e^{∫_s^t a} b(s) ds)^{1/(1-α)}.
    """
    if not (0.0 <= alpha < 1.0):
        raise ValueError("alpha must be in [0, 1)")
    if w0 < 0:
        raise ValueError("w0 must be ≥ 0")
    if t < t0:
        raise ValueError("t must be ≥ t0")
    if t == t0:
        return float(w0)
    grid = np.linspace(t0, t, panels + 1)
    a = _on_grid(a_fn, grid)
    b = _on_grid(b_fn, grid)
    if np.any(b < 0):
        raise ValueError("b must be nonnegative")
    Ia = cumulative_simpson(a, x=grid, initial=0.0)
    total = Ia[-1]
    integral = simpson(np.exp(total - Ia) * b, x=grid)
    beta = 1.0 - alpha
    inner = w0**beta * math.exp(total) + float(integral)
    return max(inner, 0.0) ** (1.0 / beta)
