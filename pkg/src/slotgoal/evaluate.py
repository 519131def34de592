"""Scoring (SR / IA / CA), a kinematic placement executor, and batch evaluation."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .geometry import RigidTransform, WorldPoint
from .instruct import Instruction, generate_instruction
from .marker import HsvThresholds, NoMarker
from .pipeline import (
    DEFAULT_RADIUS,
    DepthHole,
    Observation,
    OracleBackend,
    PerturbedBackend,
    VisualGoal,
    construct_goal,
)
from .constraints import resolve
from .remote import BackendError, RemoteBackend
from .render import render, render_goal_overlays, save_rgb
from .scene import CATEGORIES, Scene, Slot, generate_scene, slot_region_contains
from .seeding import derive_seed
from .geometry import GeometryError

log = logging.getLogger(__name__)

IA_TOLERANCE = 0.02
DEFAULT_EXEC_SIGMA = 0.002
INSTRUCTIONS_PER_SCENE = 5
_FIT_EPS = 1e-12


def instruction_accuracy(anchor: WorldPoint, gt_center: WorldPoint, tol: float = IA_TOLERANCE) -> bool:
    """Closed ball: a distance of exactly ``tol`` counts as correct."""
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    return anchor.distance(gt_center) <= tol


def coarse_accuracy(anchor: WorldPoint, scene: Scene, gt_slot: Slot) -> bool:
    return slot_region_contains(scene, gt_slot, anchor, tol=0.0)


@dataclass(frozen=True)
class ExecutorModel:
    lateral_sigma: float = DEFAULT_EXEC_SIGMA
    seed: int = 0

    def __post_init__(self):
        if self.lateral_sigma < 0:
            raise ValueError("lateral_sigma must be nonnegative")


@dataclass(frozen=True)
class Placement:
    pose: RigidTransform
    slot: Slot | None
    success: bool
    offset: tuple[float, float]


def _best_fit(rel, footprint, extent):
    """Clearance-maximizing yaw (0 or 90 degrees); returns (fits, yaw)."""
    best = (False, 0.0, -np.inf)
    for yaw, (lx, ly) in ((0.0, footprint), (np.pi / 2, footprint[::-1])):
        cx = extent[0] / 2 - (abs(rel[0]) + lx / 2)
        cy = extent[1] / 2 - (abs(rel[1]) + ly / 2)
        margin = min(cx, cy)
        if margin > best[2]:
            best = (margin >= -_FIT_EPS, yaw, margin)
    return best[0], best[1]


def execute_placement(
    goal: VisualGoal,
    scene: Scene,
    executor: ExecutorModel,
    targets: Iterable[Slot],
) -> Placement:
    """Drop the pick object at the goal anchor plus Gaussian lateral noise (tray frame).

    Succeeds iff the object's cross-section ends up wholly inside some slot and
    that slot is one of ``targets``.
    """
    obj = scene.pick_object
    tray = scene.tray
    rng = np.random.default_rng(executor.seed)
    offset = rng.normal(0.0, executor.lateral_sigma, size=2) if executor.lateral_sigma > 0 else np.zeros(2)
    local = tray.to_local(goal.anchor.as_array())
    placed = local[:2] + offset
    landed, yaw = None, 0.0
    for s in tray.slots:
        c = tray.to_local(s.center.as_array())
        ok, y = _best_fit(placed - c[:2], obj.footprint, s.inner_extent)
        if ok:
            landed, yaw = s, y
            break
    z = (landed.rim_height - landed.depth) if landed else local[2]
    pose = tray.base_pose @ RigidTransform.from_yaw(yaw, (placed[0], placed[1], z))
    target_set = set(targets)
    return Placement(pose, landed, landed is not None and landed in target_set, (float(offset[0]), float(offset[1])))


# ---------------------------------------------------------------------------
# trials


@dataclass(frozen=True)
class BackendSpec:
    kind: str = "oracle"  # oracle | perturbed | remote
    sigma_px: float = 0.0
    endpoint: str = ""
    timeout: float = 60.0

    def __post_init__(self):
        if self.kind not in ("oracle", "perturbed", "remote"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "remote" and not self.endpoint:
            raise ValueError("remote backend needs an endpoint")
        if self.sigma_px < 0:
            raise ValueError("sigma_px must be nonnegative")

    @property
    def label(self) -> str:
        if self.kind == "perturbed":
            return f"perturbed(sigma={self.sigma_px:g}px)"
        if self.kind == "remote":
            return f"remote({self.endpoint})"
        return "oracle"


@dataclass
class TrialSpec:
    trial_id: str
    category: str
    scene: Scene
    instruction: Instruction
    head_rgb: np.ndarray
    head_depth: np.ndarray
    seed: int
    images: dict = field(default_factory=dict)  # camera id -> clean rgb, for artifacts


@dataclass
class TrialRecord:
    trial_id: str
    category: str
    scene_id: str
    instruction: str
    constraint: str
    target_mode: str
    gt_slots: list
    gt_center: list
    anchor: list | None
    placed: list | None
    placed_slot: list | None
    sr: bool
    ia: bool
    ca: bool
    latency_s: float
    error: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def key(self) -> dict:
        """Everything except wall-clock latency; equal keys mean reproduced trials."""
        d = self.to_dict()
        d.pop("latency_s")
        return d


def targets_for(scene: Scene, instruction: Instruction) -> list[Slot]:
    return sorted(resolve(scene, instruction.constraint), key=lambda s: s.index)


def render_observation(scene: Scene) -> tuple[np.ndarray, np.ndarray, dict]:
    head_rgb, head_depth = render(scene, scene.head)
    images = {"head": head_rgb}
    for cid, cam in scene.cameras.items():
        if cid != "head":
            images[cid] = render(scene, cam)[0]
    return head_rgb, head_depth, images


def suite_trials(
    categories: Sequence[str],
    variants: int,
    trials: int,
    seed: int,
    resolution=(640, 480),
) -> Iterator[TrialSpec]:
    """Trial t of a category uses scene variant t mod V and instruction variant (t div V) mod 5."""
    for cat in categories:
        if cat not in CATEGORIES:
            raise ValueError(f"unknown category {cat!r}")
        cache = {}
        for t in range(trials):
            v = t % variants + 1
            k = (t // variants) % INSTRUCTIONS_PER_SCENE + 1
            if v not in cache:
                scene = generate_scene(cat, v, seed, resolution)
                cache[v] = (scene, *render_observation(scene))
            scene, rgb, depth, images = cache[v]
            instr = generate_instruction(scene, cat, k, seed)
            yield TrialSpec(f"{cat}-{t:04d}", cat, scene, instr, rgb, depth, derive_seed(seed, "trial", cat, t), images)


def make_backend(spec: BackendSpec, scene: Scene, gt_slot: Slot, seed: int, radius: float, remote=None):
    if spec.kind == "oracle":
        return OracleBackend(scene, gt_slot, radius)
    if spec.kind == "perturbed":
        return PerturbedBackend(OracleBackend(scene, gt_slot, radius), spec.sigma_px, derive_seed(seed, "backend"))
    return remote if remote is not None else RemoteBackend(spec.endpoint, timeout=spec.timeout)


def evaluate_trial(
    spec: TrialSpec,
    backend_spec: BackendSpec,
    exec_sigma: float = DEFAULT_EXEC_SIGMA,
    radius: float = DEFAULT_RADIUS,
    thresholds: HsvThresholds = HsvThresholds(),
    remote=None,
) -> tuple[TrialRecord, VisualGoal | None]:
    scene, instr = spec.scene, spec.instruction
    targets = targets_for(scene, instr)
    gt = targets[0]
    backend = make_backend(backend_spec, scene, gt, spec.seed, radius, remote)
    obs = Observation(spec.head_rgb, spec.head_depth, scene.cameras)
    base = dict(
        trial_id=spec.trial_id, category=spec.category, scene_id=scene.id,
        instruction=instr.text, constraint=instr.constraint_text, target_mode=instr.target_mode,
        gt_slots=[list(s.index) for s in targets], gt_center=[gt.center.x, gt.center.y, gt.center.z],
    )
    t0 = time.perf_counter()
    try:
        goal = construct_goal(obs, instr, backend, radius, thresholds)
    except (BackendError, NoMarker, DepthHole, GeometryError) as e:
        latency = time.perf_counter() - t0
        log.warning("trial %s failed: %s: %s", spec.trial_id, type(e).__name__, e)
        rec = TrialRecord(**base, anchor=None, placed=None, placed_slot=None, sr=False, ia=False, ca=False,
                          latency_s=latency, error=type(e).__name__)
        return rec, None
    latency = time.perf_counter() - t0

    a = goal.anchor
    ia = any(instruction_accuracy(a, s.center) for s in targets)
    ca = any(coarse_accuracy(a, scene, s) for s in targets)
    placement = execute_placement(goal, scene, ExecutorModel(exec_sigma, derive_seed(spec.seed, "exec")), targets)
    rec = TrialRecord(
        **base,
        anchor=[a.x, a.y, a.z],
        placed=[float(x) for x in placement.pose.translation],
        placed_slot=list(placement.slot.index) if placement.slot else None,
        sr=placement.success, ia=ia, ca=ca, latency_s=latency,
    )
    return rec, goal


def _write_artifacts(out_dir: Path, spec: TrialSpec, goal: VisualGoal | None, radius: float) -> None:
    d = out_dir / "artifacts"
    d.mkdir(parents=True, exist_ok=True)
    if goal is None:
        save_rgb(d / f"{spec.trial_id}_head.png", spec.head_rgb)
        return
    overlays = render_goal_overlays(spec.scene, goal.anchor, radius, spec.images or None)
    for cid, img in overlays.items():
        save_rgb(d / f"{spec.trial_id}_{cid}.png", img)


def evaluate_trials(
    specs: Iterable[TrialSpec],
    backend_spec: BackendSpec,
    exec_sigma: float = DEFAULT_EXEC_SIGMA,
    radius: float = DEFAULT_RADIUS,
    thresholds: HsvThresholds = HsvThresholds(),
    out_dir: Path | None = None,
    verbose_artifacts: bool = False,
    progress: Callable[[TrialRecord], None] | None = None,
) -> list[TrialRecord]:
    remote = RemoteBackend(backend_spec.endpoint, timeout=backend_spec.timeout) if backend_spec.kind == "remote" else None
    records = []
    for spec in specs:
        rec, goal = evaluate_trial(spec, backend_spec, exec_sigma, radius, thresholds, remote)
        records.append(rec)
        if out_dir is not None and (verbose_artifacts or not (rec.sr and rec.ia and rec.ca)):
            _write_artifacts(Path(out_dir), spec, goal, radius)
        if progress:
            progress(rec)
    return sorted(records, key=lambda r: r.trial_id)


# ---------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class CategoryStats:
    n: int
    sr: float
    ia: float
    ca: float

    @classmethod
    def of(cls, records: Sequence[TrialRecord]) -> "CategoryStats":
        n = len(records)
        if n == 0:
            return cls(0, 0.0, 0.0, 0.0)
        pct = lambda k: 100.0 * sum(bool(getattr(r, k)) for r in records) / n  # noqa: E731
        return cls(n, pct("sr"), pct("ia"), pct("ca"))


@dataclass(frozen=True)
class SuiteReport:
    method: str
    fingerprint: str
    categories: dict  # category -> CategoryStats, in suite order
    overall: CategoryStats
    n_trials: int
    mean_latency_s: float
    errors: dict

    @classmethod
    def from_records(cls, records: Sequence[TrialRecord], method: str = "", fingerprint: str = "") -> "SuiteReport":
        order = [c for c in CATEGORIES if any(r.category == c for r in records)]
        order += sorted({r.category for r in records} - set(order))
        cats = {c: CategoryStats.of([r for r in records if r.category == c]) for c in order}
        lat = [r.latency_s for r in records]
        errors: dict = {}
        for r in records:
            if r.error:
                errors[r.error] = errors.get(r.error, 0) + 1
        return cls(method, fingerprint, cats, CategoryStats.of(records), len(records),
                   float(np.mean(lat)) if lat else 0.0, errors)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "fingerprint": self.fingerprint,
            "n_trials": self.n_trials,
            "mean_latency_s": self.mean_latency_s,
            "errors": dict(self.errors),
            "overall": asdict(self.overall),
            "categories": {c: asdict(s) for c, s in self.categories.items()},
        }


def run_suite(
    categories: Sequence[str],
    variants: int,
    trials: int,
    seed: int,
    backend: BackendSpec = BackendSpec(),
    exec_sigma: float = DEFAULT_EXEC_SIGMA,
    radius: float = DEFAULT_RADIUS,
    thresholds: HsvThresholds = HsvThresholds(),
    resolution=(640, 480),
    out_dir: Path | None = None,
    verbose_artifacts: bool = False,
    fingerprint: str = "",
) -> tuple[SuiteReport, list[TrialRecord]]:
    """Generate, ground, execute and score ``trials`` trials per category."""
    specs = suite_trials(categories, variants, trials, seed, resolution)
    records = evaluate_trials(specs, backend, exec_sigma, radius, thresholds, out_dir, verbose_artifacts)
    return SuiteReport.from_records(records, backend.label, fingerprint), records
