"""Planar world model: object, arm, genome encoding and trajectory decoding.

All types are frozen; operations are pure functions. A scene can come from one
of the built-in names ("square", "hexagon", "bar") or a JSON document, see
``load_scene``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels


class SceneError(ValueError):
    """Invalid scene, genome, or joint configuration."""


def _as_float_array(x, shape=None):
    a = np.array(x, dtype=float)  # copy: instances freeze their arrays
    if shape is not None and a.shape != shape:
        raise SceneError(f"expected shape {shape}, got {a.shape}")
    return a


def polygon_area(vertices: np.ndarray) -> float:
    x = vertices[:, 0]
    y = vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_centroid(vertices: np.ndarray) -> np.ndarray:
    x = vertices[:, 0]
    y = vertices[:, 1]
    xn = np.roll(x, -1)
    yn = np.roll(y, -1)
    cr = x * yn - xn * y
    a = 0.5 * np.sum(cr)
    cx = np.sum((x + xn) * cr) / (6.0 * a)
    cy = np.sum((y + yn) * cr) / (6.0 * a)
    return np.array([cx, cy])


def point_in_polygon(p, vertices: np.ndarray, margin: float = 0.0) -> bool:
    """Strict interior test for a convex CCW polygon (margin > 0 shrinks it)."""
    n = len(vertices)
    for i in range(n):
        v0 = vertices[i]
        v1 = vertices[(i + 1) % n]
        e = v1 - v0
        # left-of-edge for CCW; cross <= margin*|e| fails
        cr = e[0] * (p[1] - v0[1]) - e[1] * (p[0] - v0[0])
        if cr <= margin * math.hypot(e[0], e[1]):
            return False
    return True


@dataclass(frozen=True)
class PolygonObject:
    """Convex CCW polygon with mass, COM offset and friction coefficients."""

    vertices: np.ndarray
    com_offset: np.ndarray
    mass: float
    pose: tuple[float, float, float]
    mu: float
    zeta_s: float
    zeta_r: float

    def __post_init__(self):
        v = _as_float_array(self.vertices)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise SceneError("polygon needs >= 3 two-dimensional vertices")
        n = v.shape[0]
        for i in range(n):
            a = v[i]
            b = v[(i + 1) % n]
            c = v[(i + 2) % n]
            cr = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
            if cr <= 0.0:
                raise SceneError("vertices must form a strictly convex CCW polygon")
        if self.mass <= 0.0:
            raise SceneError("mass must be positive")
        for name in ("mu", "zeta_s", "zeta_r"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise SceneError(f"{name} must lie in [0, 1]")
        com = polygon_centroid(v) + _as_float_array(self.com_offset, (2,))
        if not point_in_polygon(com, v):
            raise SceneError("center of mass must lie strictly inside the polygon")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "com_offset", _as_float_array(self.com_offset, (2,)))
        object.__setattr__(self, "pose", tuple(float(x) for x in self.pose))
        self.vertices.setflags(write=False)
        self.com_offset.setflags(write=False)

    @property
    def com_local(self) -> np.ndarray:
        """COM in the object frame."""
        return polygon_centroid(self.vertices) + self.com_offset

    @property
    def char_length(self) -> float:
        """Characteristic length rho: max vertex distance from the COM."""
        d = self.vertices - self.com_local
        return float(np.max(np.hypot(d[:, 0], d[:, 1])))

    def world_vertices(self, pose=None) -> np.ndarray:
        x, y, th = self.pose if pose is None else pose
        c, s = math.cos(th), math.sin(th)
        r = np.array([[c, -s], [s, c]])
        return self.vertices @ r.T + np.array([x, y])

    def world_com(self, pose=None) -> np.ndarray:
        x, y, th = self.pose if pose is None else pose
        c, s = math.cos(th), math.sin(th)
        lx, ly = self.com_local
        return np.array([x + c * lx - s * ly, y + s * lx + c * ly])


@dataclass(frozen=True)
class PlanarArm:
    base_pose: tuple[float, float, float] = (0.0, 0.0, 0.0)
    link_lengths: tuple[float, ...] = (0.26, 0.20, 0.14)
    joint_limits: tuple[tuple[float, float], ...] = ((-2.9, 2.9),) * 3
    finger_length: float = 0.08
    max_aperture: float = 0.14

    def __post_init__(self):
        if len(self.link_lengths) != len(self.joint_limits):
            raise SceneError("one joint limit pair per link required")
        if any(l <= 0 for l in self.link_lengths):
            raise SceneError("link lengths must be positive")
        if any(lo >= hi for lo, hi in self.joint_limits):
            raise SceneError("joint limits must satisfy min < max")
        if self.finger_length <= 0 or self.max_aperture <= 0:
            raise SceneError("finger_length and max_aperture must be positive")
        object.__setattr__(self, "base_pose", tuple(float(x) for x in self.base_pose))
        object.__setattr__(self, "link_lengths", tuple(float(x) for x in self.link_lengths))
        object.__setattr__(
            self, "joint_limits", tuple((float(a), float(b)) for a, b in self.joint_limits)
        )

    @property
    def n_joints(self) -> int:
        return len(self.link_lengths)

    def limits_arrays(self):
        lim = np.asarray(self.joint_limits, dtype=float)
        return lim[:, 0].copy(), lim[:, 1].copy()


@dataclass(frozen=True)
class SimParams:
    """Quasi-static engine knobs (documented defaults, all overridable)."""

    contact_tol: float = 1e-4
    touch_tol: float = 1e-6
    pen_stop: float = 1e-7
    eps_min: float = 1e-3
    f_max: float = 20.0
    knock_dist: float = 0.02
    kappa_scale: float = 25.0
    close_quantum: float = 5e-4
    shake_force: float | None = None  # defaults to 0.5*m*g
    shake_torque: float | None = None  # defaults to 0.25*m*g*rho


@dataclass(frozen=True)
class SceneConfig:
    object: PolygonObject
    arm: PlanarArm = field(default_factory=PlanarArm)
    table_height: float = 0.0
    gravity: float = 9.81
    episode_steps: int = 40
    lift_height: float = 0.10
    sim: SimParams = field(default_factory=SimParams)
    name: str = "custom"

    def __post_init__(self):
        if self.episode_steps < 2:
            raise SceneError("episode_steps must be >= 2")
        if self.lift_height <= 0:
            raise SceneError("lift_height must be positive")


@dataclass(frozen=True)
class GripperFrame:
    position: np.ndarray
    orientation: float
    left_finger: np.ndarray  # (2, 2): palm-side point, tip
    right_finger: np.ndarray


def forward_kinematics(arm: PlanarArm, joints, aperture: float | None = None) -> GripperFrame:
    """Gripper frame and finger segments for a joint configuration.

    Fingers are parallel segments of length ``finger_length`` along the gripper
    axis, offset +/- aperture/2 laterally.
    """
    q = _as_float_array(joints)
    if q.shape != (arm.n_joints,):
        raise SceneError(f"expected {arm.n_joints} joint values, got {q.shape}")
    for j, (lo, hi) in enumerate(arm.joint_limits):
        if not lo <= q[j] <= hi:
            raise SceneError(f"joint {j} value {q[j]} outside limits [{lo}, {hi}]")
    a = arm.max_aperture if aperture is None else float(aperture)
    bx, by, bth = arm.base_pose
    links = np.asarray(arm.link_lengths, dtype=float)
    gx, gy, gth = _kernels.fk_chain(bx, by, bth, links, q)
    l0x, l0y, l1x, l1y, r0x, r0y, r1x, r1y = _kernels.finger_segments(
        gx, gy, gth, a, arm.finger_length
    )
    return GripperFrame(
        position=np.array([gx, gy]),
        orientation=gth,
        left_finger=np.array([[l0x, l0y], [l1x, l1y]]),
        right_finger=np.array([[r0x, r0y], [r1x, r1y]]),
    )


N_WAYPOINTS = 3
CLOSE_LO = 0.3
CLOSE_HI = 0.9


@dataclass(frozen=True)
class Genome:
    """Flat parameter vector in [0,1]^(3J+1): 3 joint waypoints + close fraction."""

    params: np.ndarray

    def __post_init__(self):
        p = _as_float_array(self.params)
        if p.ndim != 1:
            raise SceneError("genome must be a flat vector")
        if (len(p) - 1) % N_WAYPOINTS != 0 or len(p) < N_WAYPOINTS + 1:
            raise SceneError("genome length must be 3*J + 1")
        if np.any(p < 0.0) or np.any(p > 1.0) or not np.all(np.isfinite(p)):
            raise SceneError("genome components must lie in [0, 1]")
        object.__setattr__(self, "params", p)
        self.params.setflags(write=False)

    @property
    def n_joints(self) -> int:
        return (len(self.params) - 1) // N_WAYPOINTS


def genome_length(n_joints: int) -> int:
    return N_WAYPOINTS * n_joints + 1


def random_genome(rng: np.random.Generator, n_joints: int) -> Genome:
    return Genome(rng.random(genome_length(n_joints)))


@dataclass(frozen=True)
class Trajectory:
    """Open-loop joint trajectory: T waypoints, T-1 commands, one close step."""

    waypoints: np.ndarray  # (T, J)
    close_step: int

    def __post_init__(self):
        w = _as_float_array(self.waypoints)
        if w.ndim != 2 or w.shape[0] < 2:
            raise SceneError("trajectory needs at least 2 waypoints")
        if not 0 <= self.close_step < w.shape[0]:
            raise SceneError("close_step must lie in [0, T)")
        object.__setattr__(self, "waypoints", w)
        self.waypoints.setflags(write=False)

    @property
    def commands(self) -> np.ndarray:
        return np.diff(self.waypoints, axis=0)

    @property
    def energy(self) -> float:
        """Sum of squared commanded joint displacements (rad^2)."""
        return float(np.sum(self.commands**2))

    def digest(self) -> int:
        import hashlib

        h = hashlib.blake2b(digest_size=8)
        h.update(np.ascontiguousarray(self.waypoints).tobytes())
        h.update(int(self.close_step).to_bytes(4, "little"))
        return int.from_bytes(h.digest(), "little")


def decode_genome(genome: Genome, scene: SceneConfig) -> Trajectory:
    """Affine waypoint decode plus piecewise-linear interpolation over T steps.

    Anchors: step 0 -> waypoint 1, floor(T/2) -> waypoint 2, T-1 -> waypoint 3.
    The close fraction maps to floor((0.3 + 0.6c) * T).
    """
    arm = scene.arm
    J = arm.n_joints
    if len(genome.params) != genome_length(J):
        raise SceneError(
            f"genome length {len(genome.params)} does not match arm with {J} joints"
        )
    lo, hi = arm.limits_arrays()
    anchors = genome.params[: 3 * J].reshape(3, J) * (hi - lo) + lo
    T = scene.episode_steps
    mid = T // 2
    w = np.empty((T, J))
    for k in range(T):
        if k == T - 1:
            w[k] = anchors[2]
        elif k <= mid:
            alpha = k / mid if mid > 0 else 0.0
            w[k] = (1.0 - alpha) * anchors[0] + alpha * anchors[1]
        else:
            alpha = (k - mid) / (T - 1 - mid)
            w[k] = (1.0 - alpha) * anchors[1] + alpha * anchors[2]
    c = float(genome.params[3 * J])
    # epsilon guards float rounding right at bin edges (e.g. 0.6*T)
    close_step = int((CLOSE_LO + (CLOSE_HI - CLOSE_LO) * c) * T + 1e-9)
    return Trajectory(waypoints=w, close_step=close_step)


def _regular_polygon(n: int, circumradius: float) -> np.ndarray:
    ang = 2.0 * math.pi * np.arange(n) / n
    return np.stack([circumradius * np.cos(ang), circumradius * np.sin(ang)], axis=1)


def _box(w: float, h: float) -> np.ndarray:
    return np.array(
        [[-w / 2, -h / 2], [w / 2, -h / 2], [w / 2, h / 2], [-w / 2, h / 2]]
    )


def builtin_scene(name: str) -> SceneConfig:
    """Named desk-scale scenes: "square", "hexagon", "bar"."""
    common = dict(mu=0.5, zeta_s=0.1, zeta_r=0.01)
    if name == "square":
        obj = PolygonObject(
            vertices=_box(0.06, 0.06), com_offset=np.array([0.015, 0.010]),
            mass=0.10, pose=(0.30, 0.0, 0.0), **common,
        )
    elif name == "hexagon":
        obj = PolygonObject(
            vertices=_regular_polygon(6, 0.05), com_offset=np.array([0.014, 0.010]),
            mass=0.12, pose=(0.30, -0.02, 0.0), **common,
        )
    elif name == "bar":
        obj = PolygonObject(
            vertices=_box(0.10, 0.02), com_offset=np.array([0.020, 0.004]),
            mass=0.06, pose=(0.31, 0.03, 0.5), **common,
        )
    else:
        raise SceneError(f"unknown scene name: {name!r}")
    return SceneConfig(object=obj, name=name)


BUILTIN_SCENES = ("square", "hexagon", "bar")


def scene_from_dict(doc: dict, name: str = "custom") -> SceneConfig:
    try:
        o = doc["object"]
        obj = PolygonObject(
            vertices=np.asarray(o["vertices"], dtype=float),
            com_offset=np.asarray(o.get("com_offset", [0.0, 0.0]), dtype=float),
            mass=float(o["mass"]),
            pose=tuple(o.get("pose", (0.0, 0.0, 0.0))),
            mu=float(o.get("mu", 0.5)),
            zeta_s=float(o.get("zeta_s", 0.1)),
            zeta_r=float(o.get("zeta_r", 0.01)),
        )
        a = doc.get("arm", {})
        arm = PlanarArm(
            base_pose=tuple(a.get("base_pose", (0.0, 0.0, 0.0))),
            link_lengths=tuple(a.get("link_lengths", (0.22, 0.18, 0.12))),
            joint_limits=tuple(tuple(p) for p in a.get("joint_limits", ((-2.9, 2.9),) * 3)),
            finger_length=float(a.get("finger_length", 0.08)),
            max_aperture=float(a.get("max_aperture", 0.12)),
        )
        sim = SimParams(**doc.get("sim", {}))
        return SceneConfig(
            object=obj,
            arm=arm,
            table_height=float(doc.get("table_height", 0.0)),
            gravity=float(doc.get("gravity", 9.81)),
            episode_steps=int(doc.get("episode_steps", 40)),
            lift_height=float(doc.get("lift_height", 0.10)),
            sim=sim,
            name=name,
        )
    except (KeyError, TypeError) as exc:
        raise SceneError(f"malformed scene document: {exc}") from exc


def load_scene(name_or_path: str) -> SceneConfig:
    """Resolve a built-in scene name or read a scene JSON file."""
    if name_or_path in BUILTIN_SCENES:
        return builtin_scene(name_or_path)
    with open(name_or_path) as fh:
        doc = json.load(fh)
    return scene_from_dict(doc, name=name_or_path)


def with_object(scene: SceneConfig, obj: PolygonObject) -> SceneConfig:
    return replace(scene, object=obj)
