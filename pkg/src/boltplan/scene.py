"""Seedable battery-pack disassembly simulator.

Primitives succeed or fail by ground-truth precondition logic plus Bernoulli failure
injection; there is no contact dynamics. A failed primitive leaves the world unchanged.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Sequence

import numpy as np

from .geometry import Pose6, exp_so3, rot_z
from .kinematics import (
    TOOL_LENGTH_MM,
    ChassisPose,
    arm_base_matrix,
    solve_multi,
    verify_chassis,
)
from .pddl import GroundedAction

log = logging.getLogger(__name__)


class HeadKind(str, Enum):
    HEX_EXTERNAL = "hex_external"
    HEX_INTERNAL = "hex_internal"
    CROSS = "cross"
    TORX = "torx"


class Fastening(str, Enum):
    FASTENED = "fastened"
    LOOSENED = "loosened"
    REMOVED = "removed"


_KIND_PREFIX = {HeadKind.HEX_EXTERNAL: "hx", HeadKind.HEX_INTERNAL: "hi", HeadKind.CROSS: "cr", HeadKind.TORX: "tx"}


@dataclass(frozen=True)
class Sleeve:
    kind: HeadKind
    size: float

    @property
    def id(self) -> str:
        return f"{_KIND_PREFIX[self.kind]}{self.size:g}"

    def fits(self, kind: HeadKind, size: float) -> bool:
        return self.kind == kind and abs(self.size - size) < 1e-9


RACK_INVENTORY: tuple[Sleeve, ...] = tuple(
    [Sleeve(HeadKind.HEX_EXTERNAL, s) for s in (7, 8, 10, 11, 12, 13, 14, 16, 17, 19)]
    + [Sleeve(HeadKind.HEX_INTERNAL, s) for s in (4, 5, 6, 8)]
    + [Sleeve(HeadKind.CROSS, s) for s in (2, 3)]
    + [Sleeve(HeadKind.TORX, s) for s in (20, 25, 30, 40)]
)

# Simulated sensor and geometry constants.
CAMERA_OFFSET_MM = 60.0  # camera sits this far behind the sleeve tip, on the tool axis
FOV_HALF_ANGLE = np.deg2rad(30.0)
FOV_RANGE_MM = 600.0
HOME_HOVER_MM = 450.0
APPROACH_STANDOFF_MM = 150.0
REQUIRED_CLEARANCE_MM = 25.0
CLEARANCE_CAP_MM = 100.0
ALIGN_TOL_MM = 1.0
ALIGN_TOL_RAD = np.deg2rad(2.0)
MATED_MAX_STANDOFF_MM = 20.0
LOOSENED_PROTRUSION_MM = 8.0
INSERT_DEPTH_MM = 8.0
ENGAGE_DEPTH_MM = 10.0
ENGAGE_FORCE_N = 15.0
INSERT_FORCE_N = 3.0
PUSH_DISTANCE_MM = 150.0
FOCAL_PX = 600.0
IMAGE_CENTER = (320.0, 240.0)
START_REGION = "r_start"

PRIMITIVES = {
    "move_base": 2, "approach": 2, "mate": 1, "insert": 1, "engage": 1, "rotate_loose": 1,
    "extract": 1, "retract": 1, "push_obstacle": 2, "change_sleeve": 3, "magnet_on": 1, "magnet_off": 0,
}


class ConfigError(ValueError):
    pass


class FailureCause(str, Enum):
    PRECONDITION = "precondition violated"
    NOT_ENGAGED = "not engaged"
    INJECTED = "injected failure"
    UNREACHABLE = "unreachable"
    MISALIGNED = "misaligned"
    SLEEVE_MISMATCH = "sleeve mismatch"
    NOT_RETAINED = "not retained"
    NO_SLEEVE = "sleeve not in rack"


@dataclass(frozen=True)
class BoltSpec:
    id: str
    pose: Pose6
    head_kind: HeadKind
    size_mm: float
    corroded: bool = False
    magnetic: bool = False
    fastening: Fastening = Fastening.FASTENED
    region: str = ""

    @property
    def head_across_flats(self) -> float:
        return max(float(self.size_mm), 8.0)


@dataclass(frozen=True)
class ObstacleSpec:
    id: str
    center: tuple[float, float, float]
    half_extent: tuple[float, float, float]

    def contains_segment(self, a: np.ndarray, b: np.ndarray) -> bool:
        """Slab test: does the open segment a->b pass through the box?"""
        c = np.asarray(self.center)
        h = np.asarray(self.half_extent)
        lo, hi = c - h, c + h
        d = b - a
        t0, t1 = 0.0, 1.0
        for k in range(3):
            if abs(d[k]) < 1e-12:
                if a[k] < lo[k] or a[k] > hi[k]:
                    return False
                continue
            u0 = (lo[k] - a[k]) / d[k]
            u1 = (hi[k] - a[k]) / d[k]
            if u0 > u1:
                u0, u1 = u1, u0
            t0, t1 = max(t0, u0), min(t1, u1)
            if t0 > t1:
                return False
        # Touching only at the far endpoint (the bolt itself) is not occlusion.
        return t1 > 1e-9 and t0 < 1.0 - 1e-6


@dataclass(frozen=True)
class SleeveRack:
    slots: tuple[Sleeve, ...] = RACK_INVENTORY
    mounted: int | None = None

    @property
    def mounted_sleeve(self) -> Sleeve | None:
        return None if self.mounted is None else self.slots[self.mounted]

    def index_of(self, sleeve_id: str) -> int | None:
        for i, s in enumerate(self.slots):
            if s.id == sleeve_id:
                return i
        return None

    def matching(self, kind: HeadKind, size: float) -> Sleeve | None:
        for s in self.slots:
            if s.fits(kind, size):
                return s
        return None


class EffectorMode(str, Enum):
    HOME = "home"
    AIMED = "aimed"


@dataclass(frozen=True)
class EffectorState:
    pose: Pose6  # sleeve-tip frame; +z points out of the sleeve toward the work
    mode: EffectorMode = EffectorMode.HOME
    target: str | None = None
    mated: bool = False
    inserted: str | None = None
    engaged: str | None = None
    magnet_on: bool = False
    retained: str | None = None


@dataclass(frozen=True)
class WorldState:
    bolts: tuple[BoltSpec, ...]
    obstacles: tuple[ObstacleSpec, ...]
    rack: SleeveRack
    chassis: ChassisPose
    arm: tuple[float, ...]
    effector: EffectorState
    base_region: str = START_REGION
    regions: tuple[str, ...] = (START_REGION,)

    def bolt(self, bolt_id: str) -> BoltSpec:
        for b in self.bolts:
            if b.id == bolt_id:
                return b
        raise KeyError(bolt_id)

    def has_bolt(self, bolt_id: str) -> bool:
        return any(b.id == bolt_id for b in self.bolts)

    def with_bolt(self, bolt: BoltSpec) -> WorldState:
        return replace(self, bolts=tuple(bolt if b.id == bolt.id else b for b in self.bolts))


@dataclass(frozen=True)
class NoiseConfig:
    sigma_pos: float = 2.0
    sigma_rot_deg: float = 1.0
    confidence: tuple[float, float] = (0.8, 1.0)
    reference_standoff: float = APPROACH_STANDOFF_MM
    floor: float = 0.1
    point_scale: float = 0.2
    outlier_fraction: float = 0.1
    sigma_size: float = 0.2
    sigma_corrosion: float = 0.15
    sigma_clearance: float = 1.0
    sigma_head: float = 0.08
    sigma_protrusion: float = 0.3
    sigma_force: float = 0.5

    @classmethod
    def zero(cls) -> NoiseConfig:
        return cls(0.0, 0.0, (1.0, 1.0), APPROACH_STANDOFF_MM, 0.1, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_dict(cls, d: dict | None) -> NoiseConfig:
        if not d:
            return cls()
        d = dict(d)
        if d.pop("zero", False):
            return cls.zero()
        if "confidence" in d:
            d["confidence"] = tuple(d["confidence"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown noise keys: {sorted(unknown)}")
        return cls(**d)

    def scale(self, standoff: float) -> float:
        return min(1.0, max(standoff, 0.0) / self.reference_standoff)

    def pos_sigma(self, standoff: float) -> float:
        """Position noise at a given tip-to-bolt distance; a zero base sigma stays zero."""
        if self.sigma_pos <= 0.0:
            return 0.0
        return max(self.floor, self.sigma_pos * self.scale(standoff))

    def rot_sigma(self, standoff: float) -> float:
        return np.deg2rad(self.sigma_rot_deg) * self.scale(standoff) if self.sigma_rot_deg > 0 else 0.0


@dataclass(frozen=True)
class FailureConfig:
    default_rate: float = 0.0
    rates: dict = field(default_factory=dict)

    def rate(self, name: str) -> float:
        return float(self.rates.get(name, self.default_rate))

    @classmethod
    def from_dict(cls, d: dict | None) -> FailureConfig:
        if not d:
            return cls()
        rates = dict(d.get("rates", {}))
        for k, v in rates.items():
            if k not in PRIMITIVES:
                raise ConfigError(f"failure rate for unknown primitive {k!r}")
            if not 0.0 <= float(v) <= 1.0:
                raise ConfigError(f"failure rate for {k} outside [0, 1]")
        rate = float(d.get("default_rate", 0.0))
        if not 0.0 <= rate <= 1.0:
            raise ConfigError("default_rate outside [0, 1]")
        return cls(rate, rates)


@dataclass(frozen=True)
class PrimitiveOutcome:
    action: str
    success: bool
    cause: FailureCause | None = None
    detail: str = ""


@dataclass(frozen=True)
class Detection:
    bolt_id: str
    bbox: tuple[float, float, float, float]
    confidence: float
    head_kind: HeadKind
    size_mm: float
    corrosion: float
    clearance_mm: float
    head_present: float
    protrusion_mm: float


@dataclass(frozen=True)
class RobotStatus:
    base_region: str
    arm_home: bool
    inserted: str | None
    magnet_on: bool
    mounted: str | None
    retained: str | None


@dataclass(frozen=True)
class Observation:
    detections: tuple[Detection, ...]
    depth_patches: dict  # bolt id -> (top points, side points), camera frame, mm
    pose_measurements: dict  # bolt id -> Pose6, world frame
    force_torque: np.ndarray
    rack_view: Sleeve | None
    camera_pose: Pose6
    robot: RobotStatus
    known_facts: frozenset = frozenset()

    def detection(self, bolt_id: str) -> Detection | None:
        for d in self.detections:
            if d.bolt_id == bolt_id:
                return d
        return None

    @property
    def visible_ids(self) -> list[str]:
        return [d.bolt_id for d in self.detections]


# ---------------------------------------------------------------- geometry helpers

def tool_pose_for(bolt: Pose6, standoff: float) -> Pose6:
    """Sleeve-tip pose on the bolt axis, facing the bolt, ``standoff`` mm above its head."""
    R = bolt.R @ np.diag([1.0, -1.0, -1.0])
    return Pose6.from_rt(R, bolt.p + standoff * bolt.R[:, 2])


def home_pose_above(point) -> Pose6:
    p = np.asarray(point, dtype=float) + np.array([0.0, 0.0, HOME_HOVER_MM])
    return Pose6.from_rt(np.diag([1.0, -1.0, -1.0]), p)


def camera_pose(tip: Pose6) -> Pose6:
    R = tip.R
    return Pose6.from_rt(R, tip.p - CAMERA_OFFSET_MM * R[:, 2])


def flange_matrix(tip: Pose6) -> np.ndarray:
    T = tip.matrix()
    T[:3, 3] = tip.p - TOOL_LENGTH_MM * tip.R[:, 2]
    return T


def clearance(world: WorldState, bolt: BoltSpec) -> float:
    """Horizontal distance from the bolt axis to the nearest obstacle standing over its surface."""
    p = bolt.pose.p
    best = CLEARANCE_CAP_MM
    for ob in world.obstacles:
        c = np.asarray(ob.center)
        h = np.asarray(ob.half_extent)
        if c[2] + h[2] < p[2] - 10.0 or c[2] - h[2] > p[2] + 80.0:
            continue
        dx = max(abs(p[0] - c[0]) - h[0], 0.0)
        dy = max(abs(p[1] - c[1]) - h[1], 0.0)
        best = min(best, float(np.hypot(dx, dy)))
    return best


def visible(world: WorldState, bolt: BoltSpec, cam: Pose6 | None = None) -> bool:
    cam = cam or camera_pose(world.effector.pose)
    v = bolt.pose.p - cam.p
    dist = float(np.linalg.norm(v))
    if dist < 1e-9 or dist > FOV_RANGE_MM:
        return False
    if np.dot(v, cam.R[:, 2]) / dist < np.cos(FOV_HALF_ANGLE):
        return False
    return not any(ob.contains_segment(cam.p, bolt.pose.p) for ob in world.obstacles)


def sleeve_matches(world: WorldState, bolt: BoltSpec) -> bool:
    s = world.rack.mounted_sleeve
    return s is not None and s.fits(bolt.head_kind, bolt.size_mm)


def alignment_error(tip: Pose6, bolt: Pose6) -> tuple[float, float, float]:
    """(lateral mm, axial standoff mm, axis angle rad) of a tip pose relative to a bolt."""
    v = bolt.R.T @ (tip.p - bolt.p)
    cosang = float(np.clip(np.dot(tip.R[:, 2], -bolt.R[:, 2]), -1.0, 1.0))
    return float(np.hypot(v[0], v[1])), float(v[2]), float(np.arccos(cosang))


def is_aligned(tip: Pose6, bolt: Pose6) -> bool:
    lat, axial, ang = alignment_error(tip, bolt)
    return lat <= ALIGN_TOL_MM and ang <= ALIGN_TOL_RAD and -ALIGN_TOL_MM <= axial <= MATED_MAX_STANDOFF_MM


# ---------------------------------------------------------------- scene generation

def _parse_kind(spec: str) -> tuple[HeadKind, float]:
    try:
        kind, size = str(spec).split(":")
        return HeadKind(kind), float(size)
    except ValueError as e:
        raise ConfigError(f"bad head spec {spec!r}; expected kind:size") from e


@dataclass(frozen=True)
class SceneConfig:
    layout: str = "row"  # row | grid | scatter
    bolt_count: int = 3
    origin: tuple[float, float, float] = (900.0, 900.0, 250.0)
    spacing_mm: float = 60.0
    row_heading_deg: float = 0.0
    tilt_max_deg: float = 10.0
    heads: tuple[str, ...] = ("hex_external:10",)
    head_sequence: bool = False  # cycle through ``heads`` instead of sampling
    p_corroded: float = 0.0
    p_magnetic: float = 0.0
    obstructed: tuple[int, ...] = ()
    occluders: tuple[tuple[float, ...], ...] = ()  # (cx, cy, cz, hx, hy, hz)
    mounted: str = "first"  # first | mismatch_first | none | kind:size
    scatter_extent_mm: float = 500.0
    start_chassis: tuple[float, float, float] = (900.0, 200.0, 0.0)

    @classmethod
    def from_dict(cls, d: dict | None) -> SceneConfig:
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown scene keys: {sorted(unknown)}")
        for k in ("origin", "heads", "obstructed", "start_chassis"):
            if k in d:
                d[k] = tuple(d[k])
        if "occluders" in d:
            d["occluders"] = tuple(tuple(float(x) for x in o) for o in d["occluders"])
        return cls(**d)

    def validate(self) -> None:
        if self.bolt_count < 0:
            raise ConfigError("bolt_count must be >= 0")
        if self.layout not in ("row", "grid", "scatter"):
            raise ConfigError(f"unknown layout {self.layout!r}")
        if not self.heads:
            raise ConfigError("heads must not be empty")
        rack = SleeveRack()
        for h in self.heads:
            kind, size = _parse_kind(h)
            if rack.matching(kind, size) is None:
                raise ConfigError(f"no sleeve in the rack fits {h}")
        for i in self.obstructed:
            if not 0 <= i < self.bolt_count:
                raise ConfigError(f"obstructed index {i} out of range")
        for o in self.occluders:
            if len(o) != 6:
                raise ConfigError("occluder needs cx cy cz hx hy hz")
        if self.mounted not in ("first", "mismatch_first", "none"):
            kind, size = _parse_kind(self.mounted)
            if rack.matching(kind, size) is None:
                raise ConfigError(f"mounted sleeve {self.mounted} not in the rack")
        for p in (self.p_corroded, self.p_magnetic):
            if not 0.0 <= p <= 1.0:
                raise ConfigError("probabilities must lie in [0, 1]")


def _random_tilt(rng: np.random.Generator, tilt_max: float) -> np.ndarray:
    tilt = rng.uniform(0.0, np.deg2rad(tilt_max))
    az = rng.uniform(-np.pi, np.pi)
    spin = rng.uniform(-np.pi, np.pi)
    axis = np.array([np.cos(az), np.sin(az), 0.0])
    return exp_so3(axis * tilt) @ rot_z(spin)


def _layout_positions(cfg: SceneConfig, rng: np.random.Generator) -> np.ndarray:
    n = cfg.bolt_count
    o = np.asarray(cfg.origin, dtype=float)
    if n == 0:
        return np.zeros((0, 3))
    if cfg.layout == "row":
        h = np.deg2rad(cfg.row_heading_deg)
        u = np.array([np.cos(h), np.sin(h), 0.0])
        return o + np.arange(n)[:, None] * cfg.spacing_mm * u
    if cfg.layout == "grid":
        cols = int(np.ceil(np.sqrt(n)))
        idx = np.arange(n)
        return o + np.column_stack([(idx % cols) * cfg.spacing_mm, (idx // cols) * cfg.spacing_mm, np.zeros(n)])
    pts: list[np.ndarray] = []
    while len(pts) < n:
        cand = o + np.array([*rng.uniform(0, cfg.scatter_extent_mm, 2), 0.0])
        if all(np.linalg.norm(cand - p) >= cfg.spacing_mm for p in pts):
            pts.append(cand)
    return np.array(pts)


def _obstacle_for(bolt: Pose6, row_heading: float, k: int) -> ObstacleSpec:
    # A 60 mm cube beside the bolt, 10 mm from its axis, perpendicular to the row.
    side = np.array([-np.sin(row_heading), np.cos(row_heading), 0.0])
    h = 30.0
    c = bolt.p + side * (10.0 + h) + np.array([0.0, 0.0, 25.0])
    return ObstacleSpec(f"o{k}", tuple(float(v) for v in c), (h, h, 25.0))


def generate_scene(config: SceneConfig, seed: int) -> WorldState:
    config.validate()
    rng = np.random.default_rng(seed)
    pos = _layout_positions(config, rng)
    heads = [_parse_kind(h) for h in config.heads]
    bolts = []
    for i, p in enumerate(pos):
        R = _random_tilt(rng, config.tilt_max_deg)
        kind, size = heads[i % len(heads)] if config.head_sequence else heads[int(rng.integers(len(heads)))]
        corroded = bool(rng.random() < config.p_corroded)
        magnetic = bool(rng.random() < config.p_magnetic)
        bolts.append(BoltSpec(f"b{i}", Pose6.from_rt(R, p), kind, size, corroded, magnetic,
                              Fastening.FASTENED, f"r_b{i}"))
    heading = np.deg2rad(config.row_heading_deg)
    obstacles = [_obstacle_for(bolts[i].pose, heading, k) for k, i in enumerate(config.obstructed)]
    obstacles += [ObstacleSpec(f"occ{k}", o[:3], o[3:]) for k, o in enumerate(config.occluders)]
    rack = SleeveRack()
    if config.mounted == "none" or (config.mounted in ("first", "mismatch_first") and not bolts):
        mounted = None
    elif config.mounted == "first":
        mounted = rack.index_of(rack.matching(bolts[0].head_kind, bolts[0].size_mm).id)
    elif config.mounted == "mismatch_first":
        first = rack.matching(bolts[0].head_kind, bolts[0].size_mm)
        same_kind = [i for i, s in enumerate(rack.slots) if s.kind == first.kind and s != first]
        pool = same_kind or [i for i, s in enumerate(rack.slots) if s != first]
        mounted = int(pool[int(rng.integers(len(pool)))])
    else:
        kind, size = _parse_kind(config.mounted)
        mounted = rack.index_of(rack.matching(kind, size).id)
    rack = replace(rack, mounted=mounted)
    anchor = bolts[0].pose.p if bolts else np.asarray(config.origin, dtype=float)
    sx, sy, sh = config.start_chassis
    return WorldState(
        bolts=tuple(bolts),
        obstacles=tuple(obstacles),
        rack=rack,
        chassis=ChassisPose(sx, sy, sh),
        arm=(0.0, -np.pi / 2, np.pi / 2, -np.pi / 2, -np.pi / 2, 0.0),
        effector=EffectorState(home_pose_above(anchor)),
        base_region=START_REGION,
        regions=(START_REGION,) + tuple(b.region for b in bolts),
    )


# ---------------------------------------------------------------- observation

def _bbox(cam: Pose6, p: np.ndarray, radius: float) -> tuple[float, float, float, float]:
    pc = cam.R.T @ (p - cam.p)
    z = max(pc[2], 1e-6)
    u = IMAGE_CENTER[0] + FOCAL_PX * pc[0] / z
    v = IMAGE_CENTER[1] + FOCAL_PX * pc[1] / z
    r = FOCAL_PX * radius / z
    return (float(u - r), float(v - r), float(u + r), float(v + r))


_HEX_NORMALS = np.array([[np.cos(k * np.pi / 3), np.sin(k * np.pi / 3)] for k in range(3)])


def _hex_points(rng: np.random.Generator, n: int, across_flats: float) -> np.ndarray:
    """Uniform points on a regular hexagon (flat faces normal to +-x) in the z = 0 plane."""
    a = across_flats / 2.0
    out = np.empty((0, 2))
    while len(out) < n:
        c = rng.uniform(-a * 2 / np.sqrt(3), a * 2 / np.sqrt(3), size=(2 * n, 2))
        out = np.vstack([out, c[np.all(np.abs(c @ _HEX_NORMALS.T) <= a, axis=1)]])
    return np.column_stack([out[:n], np.zeros(n)])


def head_patches(bolt: BoltSpec, rng: np.random.Generator, n_top: int = 60, n_side: int = 40) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free top-face and +x side-face points in the bolt frame."""
    A = bolt.head_across_flats
    height = 0.6 * A
    top = _hex_points(rng, n_top, A)
    half_edge = A / (2 * np.sqrt(3))
    side = np.column_stack([np.full(n_side, A / 2), rng.uniform(-half_edge, half_edge, n_side),
                            rng.uniform(-height, 0.0, n_side)])
    return top, side


def observe(world: WorldState, noise: NoiseConfig, rng: np.random.Generator) -> Observation:
    tip = world.effector.pose
    cam = camera_pose(tip)
    eff = world.effector
    detections, patches, poses = [], {}, {}
    for b in world.bolts:
        if not visible(world, b, cam):
            continue
        standoff = float(np.linalg.norm(tip.p - b.pose.p))
        sp, sr = noise.pos_sigma(standoff), noise.rot_sigma(standoff)
        dp = rng.normal(0.0, 1.0, 3) * sp
        dr = rng.normal(0.0, 1.0, 3) * sr
        conf = float(rng.uniform(*noise.confidence))
        meas = Pose6.from_rt(b.pose.R @ exp_so3(dr), b.pose.p + dp)
        present = b.fastening != Fastening.REMOVED
        protrusion = LOOSENED_PROTRUSION_MM if b.fastening == Fastening.LOOSENED else 0.0
        aux = rng.normal(0.0, 1.0, 5)
        det = Detection(
            bolt_id=b.id,
            bbox=_bbox(cam, b.pose.p, b.head_across_flats / 2),
            confidence=conf,
            head_kind=b.head_kind,
            size_mm=float(b.size_mm + noise.sigma_size * aux[0]),
            corrosion=float((1.0 if b.corroded else 0.0) + noise.sigma_corrosion * aux[1]),
            clearance_mm=float(clearance(world, b) + noise.sigma_clearance * aux[2]),
            head_present=float((1.0 if present else 0.0) + noise.sigma_head * aux[3]),
            protrusion_mm=float((protrusion if present else 0.0) + noise.sigma_protrusion * aux[4]),
        )
        top, side = head_patches(b, rng)
        if b.fastening == Fastening.LOOSENED:
            top = top + np.array([0.0, 0.0, protrusion])
            side = side + np.array([0.0, 0.0, protrusion])
        pts = []
        for P in (top, side):
            w = b.pose.p + P @ b.pose.R.T
            w = w + rng.normal(0.0, 1.0, w.shape) * (sp * noise.point_scale)
            n_out = int(round(noise.outlier_fraction * len(w)))
            if n_out:
                span = b.head_across_flats
                idx = rng.choice(len(w), size=n_out, replace=False)
                w[idx] = b.pose.p + rng.uniform(-span, span, size=(n_out, 3))
            pts.append((w - cam.p) @ cam.R)
        detections.append(det)
        patches[b.id] = (pts[0], pts[1])
        poses[b.id] = meas
    fz = ENGAGE_FORCE_N if eff.engaged else (INSERT_FORCE_N if eff.inserted else 0.0)
    ft = np.array([0.0, 0.0, fz, 0.0, 0.0, 0.0]) + rng.normal(0.0, 1.0, 6) * noise.sigma_force
    mounted = world.rack.mounted_sleeve
    robot = RobotStatus(world.base_region, eff.mode == EffectorMode.HOME, eff.inserted, eff.magnet_on,
                        mounted.id if mounted else None, eff.retained)
    return Observation(tuple(detections), patches, poses, ft, mounted, cam, robot, known_facts(world))


def known_facts(world: WorldState) -> frozenset:
    """Facts the robot knows without sensing: layout, rack contents, bolt materials, own state."""
    facts = {("base_at", world.base_region)}
    eff = world.effector
    if eff.mode == EffectorMode.HOME:
        facts.add(("arm_home",))
    if eff.inserted is None:
        facts.add(("effector_free",))
    else:
        facts.add(("inserted", eff.inserted))
    if world.rack.mounted_sleeve is not None:
        facts.add(("mounted", world.rack.mounted_sleeve.id))
    if eff.magnet_on:
        facts.add(("magnet_active",))
    for b in world.bolts:
        facts.add(("bolt_in", b.id, b.region))
        s = world.rack.matching(b.head_kind, b.size_mm)
        if s is not None:
            facts.add(("fits", s.id, b.id))
        if b.magnetic:
            facts.add(("magnetic", b.id))
        if not b.magnetic or eff.retained == b.id:
            facts.add(("retained", b.id))
    return frozenset(facts)


def snapshot_truth(world: WorldState) -> frozenset:
    """Exact symbolic state from ground truth."""
    facts = set(known_facts(world))
    eff = world.effector
    for b in world.bolts:
        if eff.mode == EffectorMode.AIMED and eff.target == b.id:
            facts.add(("target_aim", b.id))
            if eff.mated:
                facts.add(("aligned", b.id))
        if sleeve_matches(world, b):
            facts.add(("sleeve_matched", b.id))
        if clearance(world, b) < REQUIRED_CLEARANCE_MM:
            facts.add(("obstructed", b.id))
        if b.corroded:
            facts.add(("corroded", b.id))
        if eff.engaged == b.id:
            facts.add(("engaged", b.id))
        facts.add((b.fastening.value, b.id))
    return frozenset(facts)


# ---------------------------------------------------------------- transitions

def default_station(bolt: Pose6, distance: float = 550.0) -> ChassisPose:
    """Chassis straight south of the bolt, facing it."""
    return ChassisPose(float(bolt.p[0]), float(bolt.p[1] - distance), np.pi / 2)


def _fail(name: str, cause: FailureCause, detail: str = "") -> PrimitiveOutcome:
    return PrimitiveOutcome(name, False, cause, detail)


def _args_of(action: GroundedAction | tuple) -> tuple[str, tuple[str, ...]]:
    if isinstance(action, GroundedAction):
        return action.name, tuple(action.args)
    name, *args = action
    return str(name), tuple(args)


def _region_anchor(world: WorldState, region: str) -> BoltSpec | None:
    live = [b for b in world.bolts if b.region == region and b.fastening != Fastening.REMOVED]
    if live:
        return live[0]
    members = [b for b in world.bolts if b.region == region]
    return members[0] if members else None


def step(world: WorldState, action: GroundedAction | tuple, rng: np.random.Generator,
         failures: FailureConfig = FailureConfig(), *, command: Pose6 | None = None,
         chassis: ChassisPose | None = None, force_failure: bool = False) -> tuple[WorldState, PrimitiveOutcome]:
    """Execute one primitive against ground truth. Never mutates ``world``.

    ``command`` overrides the effector pose used by approach/mate; ``chassis`` is the
    target pose for move_base.
    """
    name, args = _args_of(action)
    if name not in PRIMITIVES:
        raise ValueError(f"unknown primitive {name!r}")
    if len(args) != PRIMITIVES[name] or any(not a or a.startswith("?") for a in args):
        raise ValueError(f"{name} needs {PRIMITIVES[name]} bound arguments, got {args}")
    draw = rng.random()  # always consumed so the random stream does not depend on outcomes
    eff = world.effector

    def injected() -> bool:
        return force_failure or draw < failures.rate(name)

    def bolt(i: int) -> BoltSpec:
        if not world.has_bolt(args[i]):
            raise ValueError(f"unknown bolt {args[i]!r}")
        return world.bolt(args[i])

    if name == "move_base":
        src, dst = args
        if world.base_region != src or dst == src or dst not in world.regions:
            return world, _fail(name, FailureCause.PRECONDITION, "base not at source or bad target")
        if eff.mode != EffectorMode.HOME or eff.magnet_on:
            return world, _fail(name, FailureCause.PRECONDITION, "arm not home or magnet active")
        anchor = _region_anchor(world, dst)
        target = chassis
        if target is None:
            target = default_station(anchor.pose) if anchor else world.chassis
        if anchor is not None and not verify_chassis(target, anchor.pose).converged:
            return world, _fail(name, FailureCause.UNREACHABLE, f"station cannot reach {anchor.id}")
        if injected():
            return world, _fail(name, FailureCause.INJECTED)
        home = home_pose_above(anchor.pose.p) if anchor else eff.pose
        return replace(world, chassis=target, base_region=dst,
                       effector=replace(eff, pose=home)), PrimitiveOutcome(name, True)

    if name == "approach":
        b = bolt(0)
        if world.base_region != args[1] or b.region != args[1]:
            return world, _fail(name, FailureCause.PRECONDITION, "base not at the bolt's region")
        if eff.mode != EffectorMode.HOME or eff.magnet_on or b.fastening == Fastening.REMOVED:
            return world, _fail(name, FailureCause.PRECONDITION, "arm busy, magnet on or bolt gone")
        if clearance(world, b) < REQUIRED_CLEARANCE_MM:
            return world, _fail(name, FailureCause.PRECONDITION, "bolt obstructed")
        tip = command if command is not None else tool_pose_for(b.pose, APPROACH_STANDOFF_MM)
        T = np.linalg.inv(arm_base_matrix(world.chassis)) @ flange_matrix(tip)
        ik = solve_multi(T)
        if not ik.converged:
            return world, _fail(name, FailureCause.UNREACHABLE, f"no IK for approach to {b.id}")
        if injected():
            return world, _fail(name, FailureCause.INJECTED)
        new_eff = replace(eff, pose=tip, mode=EffectorMode.AIMED, target=b.id, mated=False)
        return replace(world, effector=new_eff, arm=tuple(float(v) for v in ik.joints)), PrimitiveOutcome(name, True)

    if name == "mate":
        b = bolt(0)
        if eff.mode != EffectorMode.AIMED or eff.target != b.id or eff.mated or b.fastening == Fastening.REMOVED:
            return world, _fail(name, FailureCause.PRECONDITION, "not aimed at a present bolt or already mated")
        tip = command if command is not None else eff.pose
        if not is_aligned(tip, b.pose):
            moved = replace(world, effector=replace(eff, pose=tip))
            return moved, _fail(name, FailureCause.MISALIGNED, "tip pose outside alignment tolerance")
        if injected():
            # A slipped mate leaves the tip backed off to the approach standoff.
            _, axial, _ = alignment_error(tip, b.pose)
            back = Pose6.from_rt(tip.R, tip.p - (APPROACH_STANDOFF_MM - axial) * tip.R[:, 2])
            return replace(world, effector=replace(eff, pose=back)), _fail(name, FailureCause.INJECTED)
        return replace(world, effector=replace(eff, pose=tip, mated=True)), PrimitiveOutcome(name, True)

    if name == "insert":
        b = bolt(0)
        if eff.target != b.id or not eff.mated or eff.inserted is not None:
            return world, _fail(name, FailureCause.PRECONDITION, "not mated with bolt or sleeve busy")
        if not sleeve_matches(world, b):
            return world, _fail(name, FailureCause.SLEEVE_MISMATCH)
        if injected():
            return world, _fail(name, FailureCause.INJECTED)
        return replace(world, effector=replace(eff, inserted=b.id)), PrimitiveOutcome(name, True)

    if name == "engage":
        b = bolt(0)
        if eff.inserted != b.id or eff.engaged is not None:
            return world, _fail(name, FailureCause.PRECONDITION, "sleeve not inserted on bolt")
        if injected():
            return world, _fail(name, FailureCause.INJECTED)
        return replace(world, effector=replace(eff, engaged=b.id)), PrimitiveOutcome(name, True)

    if name == "rotate_loose":
        b = bolt(0)
        if eff.engaged != b.id:
            return world, _fail(name, FailureCause.NOT_ENGAGED)
        if b.fastening != Fastening.FASTENED:
            return world, _fail(name, FailureCause.PRECONDITION, "bolt not fastened")
        if injected():
            return world, _fail(name, FailureCause.INJECTED)
        return world.with_bolt(replace(b, fastening=Fastening.LOOSENED)), PrimitiveOutcome(name, True)

    if name == "extract":
        b = bolt(0)
        if eff.engaged != b.id:
            return world, _fail(name, FailureCause.NOT_ENGAGED)
        if b.fastening != Fastening.LOOSENED:
            return world, _fail(name, FailureCause.PRECONDITION, "bolt not loosened")
        if b.magnetic and not (eff.magnet_on and eff.retained == b.id):
            return world, _fail(name, FailureCause.NOT_RETAINED)
        if injected():
            return world, _fail(name, FailureCause.INJECTED)
        w = world.with_bolt(replace(b, fastening=Fastening.REMOVED))
        return replace(w, effector=replace(eff, engaged=None, inserted=None, mated=False)), PrimitiveOutcome(name, True)

    if name == "retract":
        b = bolt(0)
        if eff.mode != EffectorMode.AIMED or eff.target != b.id or eff.engaged is not None:
            return world, _fail(name, FailureCause.PRECONDITION, "not aimed at bolt or still engaged")
        if injected():
            return world, _fail(name, FailureCause.INJECTED)
        anchor = _region_anchor(world, world.base_region)
        home = home_pose_above(anchor.pose.p if anchor else b.pose.p)
        new_eff = replace(eff, pose=home, mode=EffectorMode.HOME, target=None, mated=False, inserted=None)
        return replace(world, effector=new_eff), PrimitiveOutcome(name, True)

    if name == "push_obstacle":
        b = bolt(0)
        if world.base_region != args[1] or b.region != args[1]:
            return world, _fail(name, FailureCause.PRECONDITION, "base not at the bolt's region")
        if eff.mode != EffectorMode.HOME or eff.magnet_on:
            return world, _fail(name, FailureCause.PRECONDITION, "arm busy or magnet on")
        if clearance(world, b) >= REQUIRED_CLEARANCE_MM:
            return world, _fail(name, FailureCause.PRECONDITION, "nothing to push")
        if injected():
            return world, _fail(name, FailureCause.INJECTED)
        p = b.pose.p
        moved = []
        for ob in world.obstacles:
            c = np.asarray(ob.center, dtype=float)
            h = np.asarray(ob.half_extent)
            gap = np.hypot(max(abs(p[0] - c[0]) - h[0], 0.0), max(abs(p[1] - c[1]) - h[1], 0.0))
            if gap < REQUIRED_CLEARANCE_MM:
                d = c[:2] - p[:2]
                n = np.linalg.norm(d)
                d = d / n if n > 1e-9 else np.array([0.0, 1.0])
                c = c + np.array([*(d * PUSH_DISTANCE_MM), 0.0])
                ob = replace(ob, center=tuple(float(v) for v in c))
            moved.append(ob)
        return replace(world, obstacles=tuple(moved)), PrimitiveOutcome(name, True)

    if name == "change_sleeve":
        bolt(0)
        old, new = args[1], args[2]
        if eff.mode != EffectorMode.HOME or eff.inserted is not None or eff.magnet_on:
            return world, _fail(name, FailureCause.PRECONDITION, "arm busy or magnet on")
        mounted = world.rack.mounted_sleeve
        if mounted is None or mounted.id != old:
            return world, _fail(name, FailureCause.PRECONDITION, f"sleeve {old} is not mounted")
        idx = world.rack.index_of(new)
        if idx is None:
            return world, _fail(name, FailureCause.NO_SLEEVE, new)
        if injected():
            return world, _fail(name, FailureCause.INJECTED)
        return replace(world, rack=replace(world.rack, mounted=idx)), PrimitiveOutcome(name, True)

    if name == "magnet_on":
        b = bolt(0)
        if eff.engaged != b.id:
            return world, _fail(name, FailureCause.NOT_ENGAGED)
        if eff.magnet_on:
            return world, _fail(name, FailureCause.PRECONDITION, "magnet already on")
        if injected():
            return world, _fail(name, FailureCause.INJECTED)
        return replace(world, effector=replace(eff, magnet_on=True, retained=b.id)), PrimitiveOutcome(name, True)

    # magnet_off
    if not eff.magnet_on or eff.mode != EffectorMode.HOME:
        return world, _fail(name, FailureCause.PRECONDITION, "magnet off or arm not home")
    if injected():
        return world, _fail(name, FailureCause.INJECTED)
    return replace(world, effector=replace(eff, magnet_on=False, retained=None)), PrimitiveOutcome(name, True)


def look_at(world: WorldState, point) -> WorldState:
    """Move the parked arm's viewpoint over ``point``; only allowed while home."""
    if world.effector.mode != EffectorMode.HOME:
        raise ValueError("viewpoint can only change while the arm is home")
    return replace(world, effector=replace(world.effector, pose=home_pose_above(point)))


# ---------------------------------------------------------------- world handle

class SceneRunner:
    """Mutable handle around an immutable world: the robot-side controller.

    Keeps the latest pose belief for every bolt seen, picks chassis stations with a
    supplied speculation function, and commands approach poses from beliefs.
    """

    def __init__(self, world: WorldState, noise: NoiseConfig, rng: np.random.Generator,
                 failures: FailureConfig = FailureConfig(), station_fn=None,
                 known_poses: dict | None = None):
        self.world = world
        self.noise = noise
        self.rng = rng
        self.failures = failures
        self.station_fn = station_fn
        self.belief: dict[str, Pose6] = dict(known_poses or {})
        self.forced: dict[str, int] = {}
        self.speculation_attempts: list[int] = []
        self.hooks: list[Any] = []
        self.log: list[PrimitiveOutcome] = []

    def observe(self) -> Observation:
        for hook in self.hooks:
            hook(self)
        obs = observe(self.world, self.noise, self.rng)
        for bid, pose in obs.pose_measurements.items():
            self.belief[bid] = pose
        return obs

    def command_effector(self, tip: Pose6) -> None:
        self.world = replace(self.world, effector=replace(self.world.effector, pose=tip))

    def force_failure(self, primitive: str, times: int = 1) -> None:
        self.forced[primitive] = self.forced.get(primitive, 0) + times

    def look_at_bolt(self, bolt_id: str) -> bool:
        pose = self.belief.get(bolt_id)
        if pose is None or self.world.effector.mode != EffectorMode.HOME:
            return False
        self.world = look_at(self.world, pose.p)
        return True

    def step(self, action: GroundedAction | tuple, command: Pose6 | None = None) -> PrimitiveOutcome:
        name, args = _args_of(action)
        forced = self.forced.get(name, 0) > 0
        if forced:
            self.forced[name] -= 1
        chassis = None
        if name == "move_base" and self.station_fn is not None:
            anchor = _region_anchor(self.world, args[1]) if len(args) == 2 else None
            pose = self.belief.get(anchor.id) if anchor is not None else None
            if pose is not None:
                res = self.station_fn(pose, self.rng)
                self.speculation_attempts.append(res.attempts)
                if not res.verified:
                    out = _fail(name, FailureCause.UNREACHABLE, "speculation found no station")
                    self.log.append(out)
                    return out
                chassis = res.chassis
        if name == "approach" and command is None and len(args) == 2 and args[0] in self.belief:
            command = tool_pose_for(self.belief[args[0]], APPROACH_STANDOFF_MM)
        self.world, out = step(self.world, action, self.rng, self.failures, command=command,
                               chassis=chassis, force_failure=forced)
        if name == "move_base" and out.success:
            anchor = _region_anchor(self.world, args[1])
            if anchor is not None and anchor.id in self.belief:
                self.world = look_at(self.world, self.belief[anchor.id].p)
        self.log.append(out)
        return out


def bolt_ids(world: WorldState) -> list[str]:
    return [b.id for b in world.bolts]


def sleeves_for(world: WorldState, bolt_ids_: Sequence[str]) -> list[str]:
    out = []
    m = world.rack.mounted_sleeve
    if m is not None:
        out.append(m.id)
    for bid in bolt_ids_:
        b = world.bolt(bid)
        s = world.rack.matching(b.head_kind, b.size_mm)
        if s is not None and s.id not in out:
            out.append(s.id)
    return out
