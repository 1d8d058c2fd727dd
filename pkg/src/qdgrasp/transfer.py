"""Pseudo-reality domains and the transferability-correlation protocol.

A pseudo-real domain is a perturbed copy of a scene with fixed hidden biases
(friction pair, object pose bias, per-joint calibration bias, polygon
erosion/dilation, COM shift) plus per-rollout noise at half the DR sigmas.
Deploying a repertoire measures each elite's success ratio eta over domains
and repetitions; the analysis reproduces the binning, regression and Pearson
correlation protocol used for the transferability study.
"""

from __future__ import annotations

import math
import multiprocessing
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import betainc

from .qd_types import Repertoire
from .rollout import NoiseModel, grasp_success
from .scene import Genome, PolygonObject, SceneConfig, Trajectory, decode_genome, point_in_polygon
from .seeds import stable_hash64

DEFAULT_N_DOMAINS = 10
DEFAULT_SEVERITY = 0.7
DEFAULT_REPS = 3

SHAPE_DELTA_MAX = 0.002  # m, uniform edge offset bound
COM_SHIFT_FRAC = 0.15  # of the characteristic length
JOINT_BIAS_SCALE = 5.0  # times the DR joint sigma
ROLLOUT_NOISE_FRAC = 0.5  # per-rollout noise at half the DR sigmas


class TransferError(ValueError):
    pass


class ZeroVarianceError(TransferError):
    """Pearson correlation is undefined for constant inputs."""


def offset_polygon(vertices: np.ndarray, delta: float) -> np.ndarray:
    """Offset every edge along its outward normal by delta (negative erodes).

    New vertices are intersections of adjacent shifted edge lines; edge
    directions are preserved so convexity only fails when the polygon
    collapses, which ``erode_polygon`` guards against.
    """
    n = len(vertices)
    normals = np.empty((n, 2))
    offs = np.empty(n)
    for i in range(n):
        e = vertices[(i + 1) % n] - vertices[i]
        ln = math.hypot(e[0], e[1])
        normals[i] = (e[1] / ln, -e[0] / ln)
        offs[i] = normals[i] @ vertices[i] + delta
    out = np.empty_like(vertices)
    for i in range(n):
        j = (i - 1) % n
        a = np.array([normals[j], normals[i]])
        b = np.array([offs[j], offs[i]])
        out[i] = np.linalg.solve(a, b)
    return out


def _valid_polygon(v: np.ndarray) -> bool:
    n = len(v)
    if n < 3:
        return False
    for i in range(n):
        a, b, c = v[i], v[(i + 1) % n], v[(i + 2) % n]
        cr = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
        if cr <= 0.0 or not np.all(np.isfinite(v[i])):
            return False
    return True


def erode_polygon(vertices: np.ndarray, delta: float) -> np.ndarray:
    """Offset with a validity clamp: erosions that would collapse the polygon
    re-clamp to the largest valid erosion (bisection on the offset)."""
    if delta == 0.0:
        return vertices
    cand = offset_polygon(vertices, delta)
    if _valid_polygon(cand):
        return cand
    lo, hi = 0.0, delta  # hi invalid, lo valid
    for _ in range(48):
        mid = 0.5 * (lo + hi)
        if _valid_polygon(offset_polygon(vertices, mid)):
            lo = mid
        else:
            hi = mid
    return offset_polygon(vertices, lo)


@dataclass(frozen=True)
class PseudoRealDomain:
    """A perturbed simulator instance: transformed scene, fixed joint bias,
    and the per-rollout noise model template (seeded per rollout at deploy)."""

    scene: SceneConfig
    joint_bias: np.ndarray
    noise_template: NoiseModel
    severity: float
    seed: int
    zeta_s: float
    zeta_r: float
    shape_delta: float
    com_shift: tuple[float, float]
    pose_bias: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "joint_bias", np.asarray(self.joint_bias, dtype=float))


def make_pseudo_real(
    scene: SceneConfig,
    seed: int,
    severity: float = DEFAULT_SEVERITY,
    sigma0: float = 0.005,
    joint_sigma: float = 0.002,
    zeta_s_range: tuple[float, float] = (0.1, 0.4),
    zeta_r_range: tuple[float, float] = (0.01, 0.04),
) -> PseudoRealDomain:
    """Deterministically draw one pseudo-reality domain at the given severity.

    Severity scales every fixed offset and the per-rollout noise, so severity
    zero is the identity domain.
    """
    if not 0.0 <= severity <= 1.0:
        raise TransferError("severity must lie in [0, 1]")
    obj = scene.object
    ss = np.random.SeedSequence(seed & ((1 << 64) - 1))
    fric_ss, pose_ss, joint_ss, shape_ss, com_ss = ss.spawn(5)

    rng = np.random.Generator(np.random.PCG64(fric_ss))
    zs_draw = float(rng.uniform(*zeta_s_range))
    zr_draw = float(rng.uniform(*zeta_r_range))
    zs = obj.zeta_s + severity * (zs_draw - obj.zeta_s)
    zr = obj.zeta_r + severity * (zr_draw - obj.zeta_r)

    rng = np.random.Generator(np.random.PCG64(pose_ss))
    pb = severity * rng.normal(0.0, sigma0, size=2)

    rng = np.random.Generator(np.random.PCG64(joint_ss))
    jb = severity * rng.normal(0.0, JOINT_BIAS_SCALE * joint_sigma, size=scene.arm.n_joints)

    rng = np.random.Generator(np.random.PCG64(shape_ss))
    sd = severity * float(rng.uniform(-SHAPE_DELTA_MAX, SHAPE_DELTA_MAX))

    rng = np.random.Generator(np.random.PCG64(com_ss))
    ang = float(rng.uniform(0.0, 2.0 * math.pi))
    rad = COM_SHIFT_FRAC * obj.char_length * math.sqrt(float(rng.random()))
    cs = severity * rad * np.array([math.cos(ang), math.sin(ang)])

    verts = erode_polygon(obj.vertices, sd) if sd != 0.0 else obj.vertices
    com_offset = obj.com_offset + cs
    # keep the COM strictly inside the (possibly eroded) polygon
    from .scene import polygon_centroid

    cen = polygon_centroid(verts)
    if not point_in_polygon(cen + com_offset, verts, margin=1e-6):
        lo, hi = 0.0, 1.0
        for _ in range(48):
            mid = 0.5 * (lo + hi)
            if point_in_polygon(cen + obj.com_offset + mid * cs, verts, margin=1e-6):
                lo = mid
            else:
                hi = mid
        com_offset = obj.com_offset + lo * cs
    pose = (obj.pose[0] + pb[0], obj.pose[1] + pb[1], obj.pose[2])
    new_obj = PolygonObject(
        vertices=verts,
        com_offset=com_offset,
        mass=obj.mass,
        pose=pose,
        mu=obj.mu,
        zeta_s=zs,
        zeta_r=zr,
    )
    s0 = ROLLOUT_NOISE_FRAC * severity * sigma0
    sj = ROLLOUT_NOISE_FRAC * severity * joint_sigma
    noise = NoiseModel(
        object_pose_sigma=s0,
        joint_sigma=sj,
        enable_pose=s0 > 0.0,
        enable_joint=sj > 0.0,
        enable_friction=False,
    )
    return PseudoRealDomain(
        scene=replace(scene, object=new_obj),
        joint_bias=jb,
        noise_template=noise,
        severity=severity,
        seed=int(seed),
        zeta_s=zs,
        zeta_r=zr,
        shape_delta=sd,
        com_shift=(float(cs[0]), float(cs[1])),
        pose_bias=(float(pb[0]), float(pb[1])),
    )


def make_domains(scene: SceneConfig, n: int, severity: float, seed: int, **kw) -> list[PseudoRealDomain]:
    return [
        make_pseudo_real(scene, stable_hash64(seed, "domain", i), severity, **kw)
        for i in range(n)
    ]


def biased_trajectory(traj: Trajectory, domain: PseudoRealDomain, scene: SceneConfig) -> Trajectory:
    """Apply the domain's fixed per-joint calibration bias, clipped to limits."""
    if not np.any(domain.joint_bias):
        return traj
    lo, hi = scene.arm.limits_arrays()
    w = np.clip(traj.waypoints + domain.joint_bias, lo, hi)
    return Trajectory(waypoints=w, close_step=traj.close_step)


@dataclass(frozen=True)
class EtaRow:
    elite_id: int
    eta: float
    per_domain: tuple[int, ...]  # successes per domain, input order
    reps_per_domain: int


def _deploy_one(genome: np.ndarray, elite_id: int, domains, reps: int, seed: int) -> EtaRow:
    per_domain = []
    total = 0
    for dom in domains:
        traj = decode_genome(Genome(genome), dom.scene)
        traj = biased_trajectory(traj, dom, dom.scene)
        succ = 0
        for r in range(reps):
            noise = replace(
                dom.noise_template,
                seed=stable_hash64(seed, "deploy", elite_id, dom.seed, r),
            )
            succ += grasp_success(traj, dom.scene, noise)
        per_domain.append(succ)
        total += succ
    eta = total / (len(domains) * reps)
    return EtaRow(elite_id=elite_id, eta=eta, per_domain=tuple(per_domain), reps_per_domain=reps)


_DEPLOY_CTX: dict = {}


def _init_deploy(domains, reps, seed):
    _DEPLOY_CTX.update(domains=domains, reps=reps, seed=seed)


def _deploy_task(args):
    genome, elite_id = args
    return _deploy_one(
        genome, elite_id, _DEPLOY_CTX["domains"], _DEPLOY_CTX["reps"], _DEPLOY_CTX["seed"]
    )


def deploy_repertoire(
    rep: Repertoire,
    domains: list[PseudoRealDomain],
    reps_per_domain: int = DEFAULT_REPS,
    seed: int = 0,
    workers: int = 1,
    successful_only: bool = True,
) -> list[EtaRow]:
    """Per-elite transfer ratio over all (domain, repetition) rollouts.

    Rollout seeds derive from (seed, elite_id, domain seed, repetition), so
    results do not depend on the order domains are evaluated in.
    """
    if reps_per_domain < 1:
        raise TransferError("reps_per_domain must be >= 1")
    elites = rep.successful() if successful_only else rep.elites()
    tasks = [(e.genome, e.elite_id) for e in elites]
    if workers > 1 and len(tasks) > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(workers, initializer=_init_deploy,
                      initargs=(domains, reps_per_domain, seed)) as pool:
            return pool.map(_deploy_task, tasks)
    return [_deploy_one(g, i, domains, reps_per_domain, seed) for g, i in tasks]


def pearson_r(x, y) -> tuple[float, float]:
    """Pearson correlation with a two-tailed Student-t p-value.

    p comes from the regularized incomplete beta form of the t CDF with
    df = n - 2.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise TransferError("inputs must be equal-length vectors")
    n = len(x)
    if n < 3:
        raise TransferError("need at least 3 points")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = math.sqrt(float(xc @ xc))
    sy = math.sqrt(float(yc @ yc))
    if sx == 0.0 or sy == 0.0:
        raise ZeroVarianceError("correlation undefined: an input has zero variance")
    r = float(xc @ yc) / (sx * sy)
    r = max(-1.0, min(1.0, r))
    df = n - 2
    if 1.0 - r * r <= 0.0:
        return r, 0.0
    t2 = r * r * df / (1.0 - r * r)
    p = float(betainc(df / 2.0, 0.5, df / (df + t2)))
    return r, p


@dataclass(frozen=True)
class BinStat:
    index: int
    lo: float
    hi: float
    count: int
    mean_fitness: float
    mean_eta: float


@dataclass(frozen=True)
class TransferReport:
    n: int
    pearson: float
    p_value: float
    slope: float
    intercept: float
    bins: tuple[BinStat, ...]  # retained bins only (count >= min_bin_count)
    n_bins: int
    min_bin_count: int
    variant: str = ""
    rows: tuple = ()  # optional (elite_id, fitness, eta) triples
    per_domain_eta: tuple = ()  # optional per-domain mean eta

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "pearson": self.pearson,
            "p_value": self.p_value,
            "slope": self.slope,
            "intercept": self.intercept,
            "n_bins": self.n_bins,
            "min_bin_count": self.min_bin_count,
            "variant": self.variant,
            "bins": [
                {
                    "index": b.index,
                    "lo": b.lo,
                    "hi": b.hi,
                    "count": b.count,
                    "mean_fitness": b.mean_fitness,
                    "mean_eta": b.mean_eta,
                }
                for b in self.bins
            ],
            "rows": [list(r) for r in self.rows],
            "per_domain_eta": list(self.per_domain_eta),
        }

    @staticmethod
    def from_dict(d: dict) -> "TransferReport":
        return TransferReport(
            n=d["n"],
            pearson=d["pearson"],
            p_value=d["p_value"],
            slope=d["slope"],
            intercept=d["intercept"],
            bins=tuple(
                BinStat(
                    index=b["index"],
                    lo=b["lo"],
                    hi=b["hi"],
                    count=b["count"],
                    mean_fitness=b["mean_fitness"],
                    mean_eta=b["mean_eta"],
                )
                for b in d["bins"]
            ),
            n_bins=d["n_bins"],
            min_bin_count=d["min_bin_count"],
            variant=d.get("variant", ""),
            rows=tuple(tuple(r) for r in d.get("rows", ())),
            per_domain_eta=tuple(d.get("per_domain_eta", ())),
        )


def analyze_transfer(
    fitnesses,
    etas,
    n_bins: int = 30,
    min_bin_count: int = 30,
    elite_ids=None,
    variant: str = "",
    per_domain_eta=(),
) -> TransferReport:
    """Raw-point regression and correlation plus the binned view.

    Fitness values are aggregated into equal-width bins over [0, 1]; bins with
    fewer than ``min_bin_count`` members are discarded from the binned series.
    The raw statistics are computed on all points regardless of binning.
    """
    f = np.asarray(fitnesses, dtype=float)
    e = np.asarray(etas, dtype=float)
    if f.shape != e.shape or f.ndim != 1:
        raise TransferError("fitness and eta vectors must have equal length")
    if len(f) < 3:
        raise TransferError("need at least 3 points")
    r, p = pearson_r(f, e)
    fc = f - f.mean()
    slope = float(fc @ (e - e.mean())) / float(fc @ fc)
    intercept = float(e.mean() - slope * f.mean())
    width = 1.0 / n_bins
    idx = np.clip((f / width).astype(int), 0, n_bins - 1)
    bins = []
    for b in range(n_bins):
        mask = idx == b
        cnt = int(mask.sum())
        if cnt < min_bin_count:
            continue
        bins.append(
            BinStat(
                index=b,
                lo=b * width,
                hi=(b + 1) * width,
                count=cnt,
                mean_fitness=float(f[mask].mean()),
                mean_eta=float(e[mask].mean()),
            )
        )
    rows = ()
    if elite_ids is not None:
        rows = tuple((int(i), float(fv), float(ev)) for i, fv, ev in zip(elite_ids, f, e))
    return TransferReport(
        n=len(f),
        pearson=r,
        p_value=p,
        slope=slope,
        intercept=intercept,
        bins=tuple(bins),
        n_bins=n_bins,
        min_bin_count=min_bin_count,
        variant=variant,
        rows=rows,
        per_domain_eta=tuple(float(v) for v in per_domain_eta),
    )
