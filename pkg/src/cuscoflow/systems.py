"""Small library of closed-form systems used by tests, examples and the CLI."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cusco import AffineMap, CuscoMap, Singleton, constant_ball, constant_singleton
from .geometry import Ball, ClosedSet, box
from .operators import LinearMonotone, MonotoneOperator, NormalConeOf, QuadraticGradient


@dataclass(frozen=True)
class System:
    name: str
    S: ClosedSet
    A: MonotoneOperator
    F: CuscoMap
    invariant: bool


def sweeping_ball() -> System:
    """Sweeping process on the unit disk with a constant ball-valued drift."""
    disk = Ball([0.0, 0.0], 1.0)
    return System("sweeping-ball", ClosedSet(disk), NormalConeOf(disk),
                  constant_ball([0.5, 0.0], 0.5), True)


def damped_box() -> System:
    """x' ∈ B(0, 0.5) - x keeps the box [-1, 1]²."""
    return System("damped-box", ClosedSet(box([-1, -1], [1, 1])), QuadraticGradient(np.eye(2)),
                  constant_ball([0.0, 0.0], 0.5), True)


def rotation_disk() -> System:
    """Pure rotation x' = -Mx with M skew; the unit disk is invariant with zero margin."""
    return System("rotation-disk", ClosedSet(Ball([0.0, 0.0], 1.0)),
                  LinearMonotone([[0.0, 1.0], [-1.0, 0.0]]), constant_singleton([0.0, 0.0]), True)


def constant_drift() -> System:
    """x' = (1, 0) leaves the disk of radius 0.5."""
    return System("constant-drift", ClosedSet(Ball([0.0, 0.0], 0.5)),
                  QuadraticGradient(np.zeros((2, 2))), constant_singleton([1.0, 0.0]), False)


def overdriven_box() -> System:
    """x' ∈ B(0, 1.5) - x escapes the box [-1, 1]²."""
    return System("overdriven-box", ClosedSet(box([-1, -1], [1, 1])), QuadraticGradient(np.eye(2)),
                  constant_ball([0.0, 0.0], 1.5), False)


def spiral_in_box() -> System:
    """Expanding spiral x' = Cx - N_box(x); the inscribed disk is not invariant."""
    C = np.array([[0.2, -1.0], [1.0, 0.2]])
    return System("spiral-in-box", ClosedSet(Ball([0.0, 0.0], 1.0)),
                  NormalConeOf(box([-1, -1], [1, 1])), Singleton(AffineMap(C, [0.0, 0.0])), False)


def canned_systems() -> list[System]:
    return [sweeping_ball(), damped_box(), rotation_disk(),
            constant_drift(), overdriven_box(), spiral_in_box()]


def point_set_ball_drift() -> System:
    """S = {θ}, A ≡ {θ}, F ≡ unit ball: weakly but not strongly invariant."""
    origin = Ball([0.0, 0.0], 0.0)
    return System("point-ball", ClosedSet(origin), QuadraticGradient(np.zeros((2, 2))),
                  constant_ball([0.0, 0.0], 1.0), False)
