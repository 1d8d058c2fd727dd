"""Episode execution: run a trajectory in a scene under an injectable noise
model and evaluate the binary grasp success criterion.

The stepping rule is quasi-static: joints follow the commanded displacements
(plus optional per-step Gaussian noise), finger-object penetration is resolved
by a minimum-norm object push with rolling-friction-damped rotation, fingers
close symmetrically at the close step, and the final contact set must give
force closure and resist the gravity wrench plus eight shake wrenches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .physics import Contact
from .scene import SceneConfig, Trajectory

FAILURE_NAMES = {
    _kernels.NO_CONTACT: "no_contact",
    _kernels.NO_CLOSURE: "no_closure",
    _kernels.LIFT_FAIL: "lift_fail",
    _kernels.SHAKE_FAIL: "shake_fail",
    _kernels.OBJECT_LOST: "object_lost",
}


@dataclass(frozen=True)
class NoiseModel:
    """Per-rollout perturbation channels. Channels draw from independent
    seeded streams so enabling one never shifts another."""

    object_pose_sigma: float = 0.0  # m, applied once to the initial position
    object_theta_sigma: float = 0.0  # rad, applied once (default off)
    joint_sigma: float = 0.0  # rad, per step per joint
    zeta_s_range: tuple[float, float] = (0.1, 0.4)
    zeta_r_range: tuple[float, float] = (0.01, 0.04)
    enable_pose: bool = False
    enable_joint: bool = False
    enable_friction: bool = False
    seed: int = 0

    def __post_init__(self):
        if min(self.object_pose_sigma, self.object_theta_sigma, self.joint_sigma) < 0:
            raise ValueError("noise sigmas must be nonnegative")
        for lo, hi in (self.zeta_s_range, self.zeta_r_range):
            if not (0.0 <= lo <= hi <= 1.0):
                raise ValueError("friction ranges must satisfy 0 <= min <= max <= 1")


NOISE_OFF = NoiseModel()


@dataclass(frozen=True)
class NoiseDraw:
    """Realised perturbations for one rollout (recorded for tracing)."""

    pose_offset: tuple[float, float, float]
    zeta_s: float
    zeta_r: float
    joint_noise: np.ndarray  # (T-1, J)


@dataclass(frozen=True)
class GraspOutcome:
    success: bool
    failure_reason: str | None
    contacts: tuple[Contact, ...]
    epsilon: float
    energy: float
    object_final_pose: tuple[float, float, float]
    gripper_pose: tuple[float, float, float]  # at evaluation (or failure) time
    closest_bearing: float  # bearing of the palm around the COM, object frame
    aperture: float
    draw: NoiseDraw = field(repr=False, compare=False, default=None)


def draw_noise(noise: NoiseModel, scene: SceneConfig, traj: Trajectory) -> NoiseDraw:
    T, J = traj.waypoints.shape
    ss = np.random.SeedSequence(noise.seed & ((1 << 64) - 1))
    pose_ss, joint_ss, fric_ss = ss.spawn(3)
    if noise.enable_pose:
        rng = np.random.Generator(np.random.PCG64(pose_ss))
        dx, dy = rng.normal(0.0, noise.object_pose_sigma, size=2)
        dth = (
            rng.normal(0.0, noise.object_theta_sigma)
            if noise.object_theta_sigma > 0.0
            else 0.0
        )
        pose_offset = (float(dx), float(dy), float(dth))
    else:
        pose_offset = (0.0, 0.0, 0.0)
    if noise.enable_joint and noise.joint_sigma > 0.0:
        rng = np.random.Generator(np.random.PCG64(joint_ss))
        joint_noise = rng.normal(0.0, noise.joint_sigma, size=(T - 1, J))
    else:
        joint_noise = np.zeros((T - 1, J))
    if noise.enable_friction:
        rng = np.random.Generator(np.random.PCG64(fric_ss))
        zs = float(rng.uniform(*noise.zeta_s_range))
        zr = float(rng.uniform(*noise.zeta_r_range))
    else:
        zs = scene.object.zeta_s
        zr = scene.object.zeta_r
    return NoiseDraw(pose_offset=pose_offset, zeta_s=zs, zeta_r=zr, joint_noise=joint_noise)


def run_episode(
    traj: Trajectory,
    scene: SceneConfig,
    noise: NoiseModel = NOISE_OFF,
    record_trace: bool = False,
):
    """Execute one episode; returns a GraspOutcome (plus a trace when asked).

    Deterministic given (traj, scene, noise.seed): all randomness is drawn
    up-front from seeded streams.
    """
    arm = scene.arm
    T, J = traj.waypoints.shape
    if J != arm.n_joints:
        raise ValueError(f"trajectory has {J} joints, arm has {arm.n_joints}")
    if T != scene.episode_steps:
        raise ValueError(
            f"trajectory length {T} does not match scene episode_steps {scene.episode_steps}"
        )
    draw = draw_noise(noise, scene, traj)
    obj = scene.object
    sim = scene.sim
    ox0, oy0, oth0 = obj.pose
    ox0 += draw.pose_offset[0]
    oy0 += draw.pose_offset[1]
    oth0 += draw.pose_offset[2]
    lo, hi = arm.limits_arrays()
    links = np.asarray(arm.link_lengths, dtype=float)
    comx_l, comy_l = obj.com_local
    rho = obj.char_length
    contacts_out = np.zeros((2, 6))
    if record_trace:
        max_rows = T + 8192 + 4
        trace_arr = np.zeros((max_rows, 12 + J))
    else:
        trace_arr = np.zeros((0, 12 + J))
    (
        status,
        epsilon,
        aperture,
        ox,
        oy,
        oth,
        gx,
        gy,
        gth,
        bearing,
        ncont,
        trows,
    ) = _kernels.run_episode_kernel(
        traj.waypoints,
        lo,
        hi,
        arm.base_pose[0],
        arm.base_pose[1],
        arm.base_pose[2],
        links,
        arm.finger_length,
        arm.max_aperture,
        obj.vertices,
        comx_l,
        comy_l,
        ox0,
        oy0,
        oth0,
        obj.mass,
        scene.gravity,
        obj.mu,
        draw.zeta_s,
        draw.zeta_r,
        rho,
        sim.contact_tol,
        sim.touch_tol,
        sim.pen_stop,
        sim.eps_min,
        sim.f_max,
        sim.knock_dist,
        sim.kappa_scale,
        sim.close_quantum,
        -1.0 if sim.shake_force is None else sim.shake_force,
        -1.0 if sim.shake_torque is None else sim.shake_torque,
        traj.close_step,
        draw.joint_noise,
        contacts_out,
        trace_arr,
    )
    contacts = tuple(
        Contact(
            point=contacts_out[i, 0:2].copy(),
            normal=contacts_out[i, 2:4].copy(),
            finger_id=int(contacts_out[i, 5]),
            penetration=float(contacts_out[i, 4]),
        )
        for i in range(ncont)
    )
    outcome = GraspOutcome(
        success=status == _kernels.OK,
        failure_reason=FAILURE_NAMES.get(status),
        contacts=contacts,
        epsilon=float(epsilon),
        energy=traj.energy,
        object_final_pose=(float(ox), float(oy), float(oth)),
        gripper_pose=(float(gx), float(gy), float(gth)),
        closest_bearing=float(bearing),
        aperture=float(aperture),
        draw=draw,
    )
    if record_trace:
        return outcome, _format_trace(trace_arr[:trows], J, draw)
    return outcome


def _format_trace(rows: np.ndarray, n_joints: int, draw: NoiseDraw) -> list[dict]:
    phase_names = {0: "approach", 1: "close", 2: "eval"}
    out = [
        {
            "event": "draw",
            "pose_offset": list(draw.pose_offset),
            "zeta_s": draw.zeta_s,
            "zeta_r": draw.zeta_r,
            "joint_noise_rms": float(math.sqrt(np.mean(draw.joint_noise**2)))
            if draw.joint_noise.size
            else 0.0,
        }
    ]
    for r in rows:
        out.append(
            {
                "event": phase_names.get(int(r[0]), "other"),
                "step": int(r[1]),
                "gripper": [r[2], r[3], r[4]],
                "aperture": r[5],
                "object": [r[6], r[7], r[8]],
                "contacts": int(r[9]),
                "max_penetration": r[10],
                "push_dist": r[11],
                "joints": [r[12 + j] for j in range(n_joints)],
            }
        )
    return out


def grasp_success(traj: Trajectory, scene: SceneConfig, noise: NoiseModel = NOISE_OFF) -> int:
    """Binary success criterion: 1 iff the episode ends in a stable grasp."""
    return 1 if run_episode(traj, scene, noise).success else 0
