"""Domain-randomization fitness criteria.

Each variant scores a trajectory as the Monte-Carlo success ratio over N
perturbed rollouts: object-state DR perturbs the initial object pose, joint
-state DR perturbs each joint transition, frictions DR redraws the torsional
and rolling coefficients per rollout, and mixture DR enables all three.
Per-sample seeds are a stable hash of (master_seed, trajectory id, sample
index) so parallel evaluation reproduces serial results exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .rollout import NoiseModel, grasp_success
from .scene import SceneConfig, Trajectory
from .seeds import stable_hash64

VARIANTS = ("OSDR", "JSDR", "FDR", "MDR")

_CHANNELS = {
    "OSDR": (True, False, False),
    "JSDR": (False, True, False),
    "FDR": (False, False, True),
    "MDR": (True, True, True),
}


@dataclass(frozen=True)
class DRConfig:
    variant: str = "MDR"
    n: int = 100
    sigma0: float = 0.005  # m, object position noise
    joint_sigma: float = 0.002  # rad per joint transition
    object_theta_sigma: float = 0.0
    zeta_s_nominal: float = 0.1
    zeta_r_nominal: float = 0.01
    zeta_s_range: tuple[float, float] = (0.1, 0.4)
    zeta_r_range: tuple[float, float] = (0.01, 0.04)
    master_seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.n < 1:
            raise ValueError("sample count must be >= 1")
        if self.sigma0 < 0 or self.joint_sigma < 0 or self.object_theta_sigma < 0:
            raise ValueError("sigmas must be nonnegative")


def noise_for_sample(cfg: DRConfig, traj_id: int, i: int) -> NoiseModel:
    """The noise model for sample i, with exactly the variant's channels on."""
    pose, joint, fric = _CHANNELS[cfg.variant]
    return NoiseModel(
        object_pose_sigma=cfg.sigma0,
        object_theta_sigma=cfg.object_theta_sigma,
        joint_sigma=cfg.joint_sigma,
        zeta_s_range=cfg.zeta_s_range,
        zeta_r_range=cfg.zeta_r_range,
        enable_pose=pose,
        enable_joint=joint,
        enable_friction=fric,
        seed=stable_hash64(cfg.master_seed, traj_id, i),
    )


def nominal_scene(scene: SceneConfig, cfg: DRConfig) -> SceneConfig:
    """Scene with the configured nominal frictions (used by all variants)."""
    obj = scene.object
    if obj.zeta_s == cfg.zeta_s_nominal and obj.zeta_r == cfg.zeta_r_nominal:
        return scene
    return replace(
        scene,
        object=replace(obj, zeta_s=cfg.zeta_s_nominal, zeta_r=cfg.zeta_r_nominal),
    )


def eval_dr_fitness(
    traj: Trajectory, scene: SceneConfig, cfg: DRConfig, traj_id: int | None = None
) -> float:
    """Success ratio over cfg.n seeded perturbed rollouts, in [0, 1].

    The returned value is exactly (number of successes) / n; evaluation order
    cannot change it since the reduction is an integer count.
    """
    tid = traj.digest() if traj_id is None else int(traj_id)
    sc = nominal_scene(scene, cfg)
    count = 0
    for i in range(cfg.n):
        count += grasp_success(traj, sc, noise_for_sample(cfg, tid, i))
    return count / cfg.n
