"""Archive data model shared by the QD loop, persistence, and analysis."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class BehaviorDescriptor:
    contact_angle: float  # rad, [-pi, pi], bearing of contact centroid (object frame)
    approach_angle: float  # rad, [-pi, pi], gripper orientation relative to object

    def __post_init__(self):
        if not (math.isfinite(self.contact_angle) and math.isfinite(self.approach_angle)):
            raise ValueError("descriptor components must be finite")

    def as_tuple(self) -> tuple[float, float]:
        return (self.contact_angle, self.approach_angle)


@dataclass(frozen=True)
class Elite:
    genome: np.ndarray
    descriptor: BehaviorDescriptor
    fitness: float
    success: bool
    epsilon: float
    energy: float
    elite_id: int

    def __post_init__(self):
        g = np.array(self.genome, dtype=float)
        object.__setattr__(self, "genome", g)
        g.setflags(write=False)


def cell_index(desc: BehaviorDescriptor, grid_shape: tuple[int, int]) -> int:
    """Row-major cell for a descriptor; out-of-range values clamp to the
    boundary cells."""
    rows, cols = grid_shape
    span = 2.0 * math.pi

    def axis(v: float, n: int) -> int:
        i = int((v + math.pi) / span * n)
        return min(max(i, 0), n - 1)

    return axis(desc.contact_angle, rows) * cols + axis(desc.approach_angle, cols)


@dataclass
class Repertoire:
    """Grid archive: at most one elite per cell, plus run metadata."""

    grid_shape: tuple[int, int] = (25, 25)
    cells: dict[int, Elite] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.cells)

    def elites(self) -> list[Elite]:
        """Elites in deterministic (cell index) order."""
        return [self.cells[k] for k in sorted(self.cells)]

    def successful(self) -> list[Elite]:
        return [e for e in self.elites() if e.success]
