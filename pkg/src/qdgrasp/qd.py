"""MAP-Elites over grasp trajectories.

A 25x25 archive indexed by a two-angle behavior descriptor (bearing of the
contact centroid around the object COM, and gripper orientation relative to
the object at close time). Two parent-selection strategies: success-greedy
(uniform over successful elites) and fitness-greedy (tournament over occupied
cells). ``run_tr_me`` chains a success-greedy stability run into a
fitness-greedy run on the mixture-DR fitness, carrying over the successful
elites in between.
"""

from __future__ import annotations

import math
import multiprocessing
from dataclasses import dataclass, field, replace

import numpy as np

from .drfitness import DRConfig, eval_dr_fitness
from .qd_types import BehaviorDescriptor, Elite, Repertoire, cell_index
from .rollout import NOISE_OFF, GraspOutcome, run_episode
from .scene import Genome, SceneConfig, Trajectory, decode_genome, genome_length
from .seeds import stable_hash64

ENERGY_PENALTY = 0.01
TOURNAMENT_SIZE = 8
BATCH_SIZE = 32

FITNESS_KINDS = ("stability_energy", "mdr")
STRATEGIES = ("success_greedy", "fitness_greedy")

INSERTED = "inserted"
REPLACED = "replaced"
REJECTED = "rejected"


def wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def compute_descriptor(outcome: GraspOutcome, scene: SceneConfig) -> BehaviorDescriptor:
    """Contact-centroid bearing (object frame) and relative approach angle.

    Rollouts that never made contact fall back to the palm's closest-approach
    bearing recorded during the episode.
    """
    ox, oy, oth = outcome.object_final_pose
    if outcome.contacts:
        pts = np.array([c.point for c in outcome.contacts])
        cen = pts.mean(axis=0)
        com = scene.object.world_com(pose=outcome.object_final_pose)
        vx, vy = cen[0] - com[0], cen[1] - com[1]
        c, s = math.cos(oth), math.sin(oth)
        contact_angle = math.atan2(-s * vx + c * vy, c * vx + s * vy)
    else:
        contact_angle = outcome.closest_bearing
    approach_angle = wrap_angle(outcome.gripper_pose[2] - oth)
    return BehaviorDescriptor(wrap_angle(contact_angle), approach_angle)


def archive_insert(rep: Repertoire, cand: Elite, on_insert=None) -> str:
    """Cell-wise elitism: strict improvement replaces, ties keep the incumbent."""
    idx = cell_index(cand.descriptor, rep.grid_shape)
    incumbent = rep.cells.get(idx)
    if incumbent is None:
        rep.cells[idx] = cand
        result = INSERTED
    elif cand.fitness > incumbent.fitness:
        rep.cells[idx] = cand
        result = REPLACED
    else:
        result = REJECTED
    if on_insert is not None:
        on_insert(idx, incumbent.fitness if incumbent else None, cand.fitness, result)
    return result


def select_parent(rep: Repertoire, strategy: str, rng: np.random.Generator,
                  n_genes: int) -> np.ndarray:
    """Parent genome parameters per the configured strategy.

    success_greedy: uniform over successful elites, fresh random genome when
    none exist. fitness_greedy: size-8 tournament without replacement over
    occupied cells, best fitness wins (ties to the lower elite_id).
    """
    if strategy == "success_greedy":
        keys = [k for k in sorted(rep.cells) if rep.cells[k].success]
        if not keys:
            return rng.random(n_genes)
        k = keys[int(rng.integers(len(keys)))]
        return rep.cells[k].genome
    if strategy == "fitness_greedy":
        keys = sorted(rep.cells)
        if not keys:
            return rng.random(n_genes)
        m = min(TOURNAMENT_SIZE, len(keys))
        picks = rng.choice(len(keys), size=m, replace=False)
        best = None
        for p in picks:
            e = rep.cells[keys[int(p)]]
            if (
                best is None
                or e.fitness > best.fitness
                or (e.fitness == best.fitness and e.elite_id < best.elite_id)
            ):
                best = e
        return best.genome
    raise ValueError(f"unknown strategy {strategy!r}")


def mutate(genome: np.ndarray, rng: np.random.Generator, eta: float = 15.0,
           p_mut: float = 0.2) -> np.ndarray:
    """Polynomial mutation (distribution index eta), clipped to [0, 1].

    Every gene mutates independently with probability p_mut; when the mask
    comes up empty one uniformly chosen gene is forced so offspring always
    differ from their parent.
    """
    x = np.asarray(genome, dtype=float)
    sel = rng.random(x.shape[0]) < p_mut
    if not sel.any():
        sel[int(rng.integers(x.shape[0]))] = True
    out = x.copy()
    xi = x[sel]
    r = rng.random(xi.shape[0])
    mpow = 1.0 / (eta + 1.0)
    low_mask = r < 0.5
    xy = np.where(low_mask, 1.0 - xi, xi)  # 1-delta1 / 1-delta2 on [0,1] bounds
    val = np.where(
        low_mask,
        2.0 * r + (1.0 - 2.0 * r) * xy ** (eta + 1.0),
        2.0 * (1.0 - r) + (2.0 * r - 1.0) * xy ** (eta + 1.0),
    )
    dq = np.where(low_mask, val**mpow - 1.0, 1.0 - val**mpow)
    out[sel] = np.clip(xi + dq, 0.0, 1.0)
    return out


# worker-process state for parallel candidate evaluation
_CTX: dict = {}


def _init_worker(scene, fitness_kind, drcfg):
    _CTX["scene"] = scene
    _CTX["fitness_kind"] = fitness_kind
    _CTX["drcfg"] = drcfg


def evaluate_candidate(scene: SceneConfig, fitness_kind: str, drcfg: DRConfig,
                       params: np.ndarray, cand_id: int) -> Elite:
    """Decode, roll out unperturbed (descriptor + success), then score.

    stability_energy: epsilon - 0.01 * energy from the unperturbed rollout.
    mdr: mixture-DR success ratio, one budget unit regardless of its N.
    """
    genome = Genome(params)
    traj = decode_genome(genome, scene)
    outcome = run_episode(traj, scene, NOISE_OFF)
    desc = compute_descriptor(outcome, scene)
    if fitness_kind == "stability_energy":
        fitness = outcome.epsilon - ENERGY_PENALTY * outcome.energy
    elif fitness_kind == "mdr":
        fitness = eval_dr_fitness(traj, scene, drcfg, traj_id=cand_id)
    else:
        raise ValueError(f"unknown fitness kind {fitness_kind!r}")
    return Elite(
        genome=params.copy(),
        descriptor=desc,
        fitness=float(fitness),
        success=outcome.success,
        epsilon=outcome.epsilon,
        energy=outcome.energy,
        elite_id=cand_id,
    )


def _eval_task(args):
    params, cand_id = args
    return evaluate_candidate(
        _CTX["scene"], _CTX["fitness_kind"], _CTX["drcfg"], params, cand_id
    )


def _rescore_mdr(rep: Repertoire, scene: SceneConfig, drcfg: DRConfig, workers: int,
                 pool=None) -> None:
    """Replace every elite's fitness with its mixture-DR score (id-seeded)."""
    keys = sorted(rep.cells)
    tasks = [(rep.cells[k].genome, rep.cells[k].elite_id) for k in keys]
    if pool is not None:
        scored = pool.map(_eval_mdr_task, tasks)
    else:
        scored = [_score_mdr(scene, drcfg, g, i) for g, i in tasks]
    for k, fit in zip(keys, scored):
        rep.cells[k] = replace(rep.cells[k], fitness=fit)


def _score_mdr(scene, drcfg, params, elite_id):
    traj = decode_genome(Genome(params), scene)
    return float(eval_dr_fitness(traj, scene, drcfg, traj_id=elite_id))


def _eval_mdr_task(args):
    params, elite_id = args
    return _score_mdr(_CTX["scene"], _CTX["drcfg"], params, elite_id)


def _archive_stats(rep: Repertoire) -> dict:
    fits = sorted((e.fitness for e in rep.cells.values()), reverse=True)
    top5 = fits[:5]
    return {
        "archive_size": len(rep.cells),
        "n_success": sum(1 for e in rep.cells.values() if e.success),
        "best_fitness": fits[0] if fits else None,
        "top5_mean_fitness": sum(top5) / len(top5) if top5 else None,
    }


def run_map_elites(
    scene: SceneConfig,
    strategy: str,
    fitness_kind: str,
    budget: int,
    seed: int,
    init_rep: Repertoire | None = None,
    workers: int = 1,
    grid_shape: tuple[int, int] = (25, 25),
    dr_template: DRConfig | None = None,
    batch_size: int = BATCH_SIZE,
    on_generation=None,
    on_insert=None,
    stage: str = "me",
) -> Repertoire:
    """Batched generate-evaluate-insert loop consuming exactly `budget`
    evaluations (one per candidate, whatever the fitness kind's internal
    sample count). Deterministic for a fixed seed and any worker count:
    parents and mutations come from one sequential stream, candidate scores
    are seeded by candidate id, and insertion follows batch order.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if fitness_kind not in FITNESS_KINDS:
        raise ValueError(f"unknown fitness kind {fitness_kind!r}")
    if budget < 0:
        raise ValueError("budget must be >= 0")
    drcfg = dr_template if dr_template is not None else DRConfig()
    drcfg = replace(drcfg, variant="MDR", master_seed=stable_hash64(seed, "mdr"))
    if init_rep is not None:
        rep = Repertoire(
            grid_shape=init_rep.grid_shape,
            cells=dict(init_rep.cells),
            metadata=dict(init_rep.metadata),
        )
        rescore = fitness_kind == "mdr" and init_rep.metadata.get("fitness_kind") != "mdr"
    else:
        rep = Repertoire(grid_shape=grid_shape, cells={}, metadata={})
        rescore = False
    rep.metadata.update(
        {
            "scene": scene.name,
            "seed": int(seed),
            "budget": int(budget),
            "strategy": strategy,
            "fitness_kind": fitness_kind,
            "stage": stage,
        }
    )
    n_genes = genome_length(scene.arm.n_joints)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(stable_hash64(seed, "loop"))))
    pool = None
    try:
        if workers > 1:
            ctx = multiprocessing.get_context("fork")
            pool = ctx.Pool(workers, initializer=_init_worker,
                            initargs=(scene, fitness_kind, drcfg))
        if rescore:
            _rescore_mdr(rep, scene, drcfg, workers, pool)
        next_id = 1 + max((e.elite_id for e in rep.cells.values()), default=-1)
        evals = 0
        generation = 0
        while evals < budget:
            nb = min(batch_size, budget - evals)
            parents = [select_parent(rep, strategy, rng, n_genes) for _ in range(nb)]
            cands = [(mutate(p, rng), next_id + i) for i, p in enumerate(parents)]
            if pool is not None:
                elites = pool.map(_eval_task, cands)
            else:
                elites = [
                    evaluate_candidate(scene, fitness_kind, drcfg, p, cid)
                    for p, cid in cands
                ]
            for e in elites:
                archive_insert(rep, e, on_insert=on_insert)
            next_id += nb
            evals += nb
            generation += 1
            if on_generation is not None:
                stats = {"generation": generation, "evaluations": evals}
                stats.update(_archive_stats(rep))
                on_generation(stats)
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    rep.metadata["evaluations"] = evals if budget > 0 else 0
    return rep


def successful_subset(rep: Repertoire) -> Repertoire:
    cells = {k: e for k, e in rep.cells.items() if e.success}
    return Repertoire(grid_shape=rep.grid_shape, cells=cells, metadata=dict(rep.metadata))


def run_tr_me(
    scene: SceneConfig,
    budget_stage1: int,
    budget_stage2: int,
    seed: int,
    workers: int = 1,
    grid_shape: tuple[int, int] = (25, 25),
    dr_template: DRConfig | None = None,
    on_generation=None,
    stage1_rep: Repertoire | None = None,
) -> Repertoire:
    """Two-stage robustification: success-greedy stability archive, then a
    fitness-greedy pass optimizing the mixture-DR success ratio over the
    carried successful elites. Pass ``stage1_rep`` to skip stage 1.
    """
    if stage1_rep is None:
        stage1_rep = run_map_elites(
            scene,
            "success_greedy",
            "stability_energy",
            budget_stage1,
            seed=stable_hash64(seed, "stage1"),
            workers=workers,
            grid_shape=grid_shape,
            stage="me-scs",
        )
    seeded = successful_subset(stage1_rep)
    if not seeded.cells:
        out = Repertoire(grid_shape=grid_shape, cells={}, metadata=dict(stage1_rep.metadata))
        out.metadata.update(
            {
                "stage": "tr-me",
                "budget_stage1": int(budget_stage1),
                "budget_stage2": int(budget_stage2),
                "empty_reason": "stage1_produced_no_successful_elites",
            }
        )
        return out
    out = run_map_elites(
        scene,
        "fitness_greedy",
        "mdr",
        budget_stage2,
        seed=stable_hash64(seed, "stage2"),
        init_rep=seeded,
        workers=workers,
        grid_shape=grid_shape,
        dr_template=dr_template,
        on_generation=on_generation,
        stage="tr-me",
    )
    out.metadata.update(
        {"budget_stage1": int(budget_stage1), "budget_stage2": int(budget_stage2)}
    )
    return out


def top_elites(rep: Repertoire, k: int) -> list[Elite]:
    return sorted(rep.cells.values(), key=lambda e: (-e.fitness, e.elite_id))[:k]
