"""Shared test utilities: analytic IK and hand-constructed grasp trajectories."""

import math

import numpy as np

from qdgrasp.scene import PlanarArm, SceneConfig, Trajectory


def wrap(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def ik3(arm: PlanarArm, px: float, py: float, phi: float, elbow: float = 1.0) -> np.ndarray:
    """Closed-form 3-link planar IK for palm pose (px, py, phi)."""
    bx, by, bth = arm.base_pose
    l1, l2, l3 = arm.link_lengths
    wx = px - bx - l3 * math.cos(phi)
    wy = py - by - l3 * math.sin(phi)
    c2 = (wx * wx + wy * wy - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    if not -1.0 <= c2 <= 1.0:
        raise ValueError("target out of reach")
    q2 = elbow * math.acos(c2)
    q1 = math.atan2(wy, wx) - math.atan2(l2 * math.sin(q2), l1 + l2 * math.cos(q2)) - bth
    q3 = phi - bth - q1 - q2
    q = np.array([wrap(q1), wrap(q2), wrap(q3)])
    for j, (lo, hi) in enumerate(arm.joint_limits):
        if not lo <= q[j] <= hi:
            raise ValueError(f"IK joint {j} out of limits")
    return q


def stationary_pinch(scene: SceneConfig, standoff: float = 0.04,
                     approach: float = math.pi / 2, close_frac: float = 0.6) -> Trajectory:
    """Trajectory that sits still straddling the object and closes.

    The palm is placed `standoff` behind the object centre along the approach
    direction so the fingers flank the object from step 0.
    """
    ox, oy, _ = scene.object.pose
    px = ox - standoff * math.cos(approach)
    py = oy - standoff * math.sin(approach)
    q = ik3(scene.arm, px, py, approach)
    T = scene.episode_steps
    w = np.tile(q, (T, 1))
    return Trajectory(waypoints=w, close_step=int(close_frac * T))
