"""Quasi-static grasp stability kernel.

Contacts between finger segments and a convex polygon, planar friction cones,
the wrench-space force-closure margin (largest origin-centred ball inside the
primitive-wrench hull), and wrench-resistance feasibility under a total force
budget. The feasibility LP is a small dense phase-1 simplex; the hull is built
by direct facet enumeration over wrench triples (at most 8 wrenches for two
contacts, so cubic enumeration is exact and cheap).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .scene import PolygonObject

LEFT = 0
RIGHT = 1

CONTACT_TOL = 1e-4


class PhysicsError(ValueError):
    pass


@dataclass(frozen=True)
class Contact:
    point: np.ndarray  # world frame, meters
    normal: np.ndarray  # unit, pointing into the object
    finger_id: int  # LEFT or RIGHT
    penetration: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if abs(math.hypot(n[0], n[1]) - 1.0) > 1e-9:
            raise PhysicsError("contact normal must be unit length")
        if self.penetration < 0.0:
            raise PhysicsError("penetration must be nonnegative")
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        object.__setattr__(self, "normal", n)


@dataclass(frozen=True)
class WrenchSet:
    """Unit-force primitive wrenches (fx, fy, torque/rho) about the COM."""

    wrenches: np.ndarray  # (n, 3)

    def __post_init__(self):
        w = np.asarray(self.wrenches, dtype=float)
        if w.ndim != 2 or w.shape[1] != 3:
            raise PhysicsError("wrench set must be (n, 3)")
        object.__setattr__(self, "wrenches", w)

    def __len__(self) -> int:
        return len(self.wrenches)


def _poly_frames(obj: PolygonObject, pose=None):
    verts = obj.world_vertices(pose)
    n = len(verts)
    normals = np.empty((n, 2))
    offsets = np.empty(n)
    _kernels._edge_frames(verts, normals, offsets)
    return verts, normals, offsets


def detect_contacts(finger_segments, obj: PolygonObject, pose=None,
                    tol: float = CONTACT_TOL) -> list[Contact]:
    """At most one contact per finger segment within `tol` of the polygon.

    The contact point is the closest (deepest, when penetrating) point on the
    polygon boundary; the normal is the supporting edge's outward normal
    negated to point into the object. Corner witnesses take the incident edge
    with the smallest penetration, ties to the lower edge index.
    """
    verts, normals, offsets = _poly_frames(obj, pose)
    out = []
    for fid, seg in enumerate(finger_segments):
        s = np.asarray(seg, dtype=float).reshape(2, 2)
        hit, cx, cy, nx, ny, pen, _, _ = _kernels.segment_poly_contact(
            s[0, 0], s[0, 1], s[1, 0], s[1, 1], verts, normals, offsets, tol
        )
        if hit:
            out.append(
                Contact(
                    point=np.array([cx, cy]),
                    normal=np.array([nx, ny]),
                    finger_id=fid,
                    penetration=max(pen, 0.0),
                )
            )
    return out


def build_wrench_set(contacts, mu: float, torsional: float, rho: float,
                     com=(0.0, 0.0)) -> WrenchSet:
    """Friction-cone edge wrenches, unit-force normalised, torques about `com`.

    Each contact contributes its two cone edges n +/- mu*t; with a torsional
    coefficient each edge splits into +/- torsional torque variants (4 per
    contact), without one it stays a single wrench per edge (2 per contact).
    """
    if not contacts:
        raise PhysicsError("wrench set requires at least one contact")
    if mu < 0.0 or torsional < 0.0 or rho <= 0.0:
        raise PhysicsError("mu, torsional must be >= 0 and rho > 0")
    k = len(contacts)
    cpx = np.array([c.point[0] for c in contacts])
    cpy = np.array([c.point[1] for c in contacts])
    cnx = np.array([c.normal[0] for c in contacts])
    cny = np.array([c.normal[1] for c in contacts])
    out = np.empty((4 * k, 3))
    n = _kernels.build_wrenches(
        cpx, cpy, cnx, cny, k, float(com[0]), float(com[1]), mu, torsional, rho, out
    )
    return WrenchSet(out[:n].copy())


def force_closure_margin(ws: WrenchSet) -> float:
    """Ferrari-Canny style margin: radius of the largest origin-centred ball
    inside the convex hull of the primitive wrenches; 0 when the origin is not
    strictly interior (fewer than 4 affinely independent wrenches included)."""
    w = ws.wrenches
    return float(_kernels.hull_margin(w, len(w)))


def can_resist_wrench(ws: WrenchSet, external, f_max: float = 20.0) -> bool:
    """True iff -external is a nonnegative combination of the primitive
    wrenches with total coefficient (force budget) at most f_max.

    The external wrench must be expressed in the same rho-normalised
    coordinates as the wrench set.
    """
    e = np.asarray(external, dtype=float)
    w = ws.wrenches
    eps = float(_kernels.hull_margin(w, len(w))) if len(w) >= 4 else 0.0
    return bool(
        _kernels.can_resist(w, len(w), e[0], e[1], e[2], float(f_max), eps)
    )
