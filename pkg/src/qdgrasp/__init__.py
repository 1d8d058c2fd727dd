"""Quality-Diversity grasp synthesis in a planar quasi-static simulator."""

from .drfitness import DRConfig, eval_dr_fitness
from .physics import (
    Contact,
    WrenchSet,
    build_wrench_set,
    can_resist_wrench,
    detect_contacts,
    force_closure_margin,
)
from .qd import (
    archive_insert,
    compute_descriptor,
    mutate,
    run_map_elites,
    run_tr_me,
    select_parent,
)
from .qd_types import BehaviorDescriptor, Elite, Repertoire
from .rollout import GraspOutcome, NoiseModel, grasp_success, run_episode
from .scene import (
    Genome,
    PlanarArm,
    PolygonObject,
    SceneConfig,
    SimParams,
    Trajectory,
    builtin_scene,
    decode_genome,
    forward_kinematics,
    load_scene,
    random_genome,
)
from .store import load_repertoire, save_repertoire
from .transfer import (
    PseudoRealDomain,
    TransferReport,
    analyze_transfer,
    deploy_repertoire,
    make_domains,
    make_pseudo_real,
    pearson_r,
)

__version__ = "0.1.0"
