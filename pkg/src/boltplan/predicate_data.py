"""Labelled predicate samples from simulated random walks, and classifier training on them."""

from __future__ import annotations

import logging
from dataclasses import replace

import numpy as np

from .estimation import BoltLostError, EstimationError, mate_loop
from .fixtures import problem_from_world
from .geometry import Pose6, exp_so3
from .pddl import Goal, applicable, ground, load_shipped_domain
from .perception import REGISTRY, ClassifierParams, PredicateTrainConfig, featurize, train_predicate
from .scene import (
    RACK_INVENTORY,
    EffectorMode,
    FailureConfig,
    NoiseConfig,
    ObstacleSpec,
    SceneConfig,
    SceneRunner,
    generate_scene,
    snapshot_truth,
    tool_pose_for,
)

log = logging.getLogger(__name__)

_WALK_WEIGHTS = {"move_base": 0.5, "retract": 0.3, "magnet_off": 0.5}


def _training_world(rng: np.random.Generator, seed: int):
    heads = [f"{s.kind.value}:{s.size:g}" for s in RACK_INVENTORY]
    picks = tuple(heads[i] for i in rng.choice(len(heads), size=int(rng.integers(1, 4)), replace=False))
    n = int(rng.integers(1, 5))
    cfg = SceneConfig(
        layout=str(rng.choice(["row", "grid", "scatter"])),
        bolt_count=n,
        spacing_mm=float(rng.uniform(35.0, 90.0)),
        row_heading_deg=float(rng.uniform(-30.0, 30.0)),
        heads=picks,
        p_corroded=0.4,
        p_magnetic=0.4,
        obstructed=tuple(i for i in range(n) if rng.random() < 0.25),
        mounted=str(rng.choice(["first", "mismatch_first", "none"], p=[0.45, 0.45, 0.1])),
        scatter_extent_mm=300.0,
    )
    world = generate_scene(cfg, seed)
    if world.bolts and rng.random() < 0.6:
        # An obstacle at a random gap puts samples on both sides of the clearance threshold.
        b = world.bolts[int(rng.integers(len(world.bolts)))]
        az = rng.uniform(-np.pi, np.pi)
        gap = rng.uniform(0.0, 50.0)
        h = 20.0
        c = b.pose.p + np.array([np.cos(az), np.sin(az), 0.0]) * (gap + h) + np.array([0.0, 0.0, 25.0])
        ob = ObstacleSpec(f"t{len(world.obstacles)}", tuple(float(v) for v in c), (h, h, 25.0))
        world = replace(world, obstacles=world.obstacles + (ob,))
    return world


def _perturbed_tip(rng: np.random.Generator, bolt: Pose6) -> Pose6:
    tip = tool_pose_for(bolt, float(rng.uniform(-1.0, 35.0)))
    lat = rng.uniform(0.0, 2.5)
    phi = rng.uniform(-np.pi, np.pi)
    tilt = np.deg2rad(rng.uniform(0.0, 4.0))
    axis = np.array([np.cos(phi + 1.0), np.sin(phi + 1.0), 0.0])
    R = bolt.R
    offset = R @ np.array([lat * np.cos(phi), lat * np.sin(phi), 0.0])
    return Pose6.from_rt(tip.R @ exp_so3(axis * tilt), tip.p + offset)


def _record(obs, truth: frozenset, out: dict) -> None:
    for bid in obs.visible_ids:
        for name in REGISTRY:
            out[name].append((featurize(obs, name, (bid,)), (name, bid) in truth))


def simulated_samples(n_scenes: int, seed: int, walk_length: int = 20, p_zero_noise: float = 0.3,
                      failure_rate: float = 0.1) -> dict[str, list[tuple[np.ndarray, bool]]]:
    """Random primitive walks through random scenes, observed after every step.

    Every visible bolt contributes one sample per predicate, labelled from ground truth.
    """
    rng = np.random.default_rng(seed)
    domain = load_shipped_domain()
    out: dict[str, list] = {name: [] for name in REGISTRY}
    for k in range(n_scenes):
        world = _training_world(rng, int(rng.integers(2**31)))
        noise = NoiseConfig.zero() if rng.random() < p_zero_noise else NoiseConfig()
        runner = SceneRunner(world, noise, rng, FailureConfig(failure_rate))
        ids = [b.id for b in world.bolts]
        problem = problem_from_world(world, snapshot_truth(world), ids, Goal(),
                                     extra_sleeves=[RACK_INVENTORY[int(rng.integers(len(RACK_INVENTORY)))].id])
        actions = ground(domain, problem)
        for _ in range(walk_length):
            obs = runner.observe()
            truth = snapshot_truth(runner.world)
            _record(obs, truth, out)
            if runner.world.effector.mode == EffectorMode.HOME and ids and rng.random() < 0.2:
                runner.look_at_bolt(ids[int(rng.integers(len(ids)))])
                continue
            state = frozenset(a for a in truth if all(x in problem.objects for x in a[1:]))
            options = [a for a in actions if applicable(state, a)]
            if not options:
                break
            w = np.array([_WALK_WEIGHTS.get(a.name, 1.0) for a in options])
            a = options[int(rng.choice(len(options), p=w / w.sum()))]
            if a.name == "mate":
                bolt = runner.world.bolt(a.args[0])
                if rng.random() < 0.5 and noise.sigma_pos > 0:
                    try:
                        runner.step(a, command=mate_loop(runner, bolt.id).tip)
                    except (BoltLostError, EstimationError):
                        pass
                    continue
                tip = _perturbed_tip(rng, bolt.pose)
                runner.command_effector(tip)
                runner.step(a, command=tip)
            else:
                runner.step(a)
        log.debug("scene %d: %d aligned samples so far", k, len(out["aligned"]))
    return out


def train_all(samples: dict[str, list], config: PredicateTrainConfig = PredicateTrainConfig()) -> dict[str, ClassifierParams]:
    return {name: train_predicate(s, config) for name, s in samples.items() if s}
