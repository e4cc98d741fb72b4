"""Run configuration, stage orchestration, and artifact writing.

Every stage reads and writes plain JSON/CSV files so the stages can be run
separately (`retrieve` -> `refine` -> `plan`) or chained (`run`). Per-stage
RNG seeds derive deterministically from the master seed and the stage name,
so adding a stage never perturbs the draws of an existing one.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .embed import (
    FrameRecord,
    SyntheticScene,
    ingest_frames,
    load_scene,
    synthetic_view_embedding,
    write_frames,
)
from .errors import InvalidArgumentError, ParseError
from .geom import Pose4
from .gp_pref import KernelParams
from .mapplan import (
    DistanceField,
    VoxelGrid,
    distance_transform,
    extract_path,
    grow_corridor,
    load_grid,
)
from .oracles import SyntheticOracle, SyntheticUtility
from .refine import RefineConfig, TrustRegion, refine_all, refine_pose
from .retrieve import (
    DeterministicChooser,
    OrderedWaypoints,
    ScriptedChooser,
    WaypointDescription,
    load_descriptions,
    retrieve_candidates,
    score_frames,
    select_and_sort,
    write_heatmap_csv,
)
from .traj import (
    DynLimits,
    allocate_times,
    fit_position_traj,
    fit_yaw_spline,
    sample_controls,
    unwrap_yaw,
)


def stage_seed(master_seed: int, stage: str) -> int:
    """Deterministic per-stage seed split from the master seed."""
    digest = hashlib.sha256(f"{master_seed}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class PipelineConfig:
    scene_path: str
    map_path: str | None
    frames_path: str | None
    synthetic_scan: dict | None
    descriptions_path: str
    refine: RefineConfig
    trust_region: TrustRegion
    limits: DynLimits
    dt: float = 0.05
    delta_safe: float = 0.2
    clearance: float = 0.4
    max_halfwidth: float = 1.5
    oracle: str = "synthetic"
    remote_endpoint: str | None = None
    out_dir: str = "out"
    seed: int = 0
    chooser: dict | None = None
    robustness: dict | None = None
    serve: dict | None = None
    raw: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str, overrides: dict | None = None) -> "PipelineConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: invalid JSON: {exc}") from exc
        data.update(overrides or {})
        base = os.path.dirname(os.path.abspath(path))

        def resolve(p):
            if p is None:
                return None
            return p if os.path.isabs(p) else os.path.join(base, p)

        refine_d = data.get("refine", {})
        kernel_d = data.get("kernel", {})
        tr_d = data.get("trust_region", {})
        lim_d = data.get("limits", {"v_max": 2.0, "a_max": 2.0})
        cfg = cls(
            scene_path=resolve(data["scene"]),
            map_path=resolve(data.get("map")),
            frames_path=resolve(data.get("frames")),
            synthetic_scan=data.get("synthetic_scan"),
            descriptions_path=resolve(data["descriptions"]),
            refine=RefineConfig(
                B=int(refine_d.get("B", 100)),
                M=int(refine_d.get("M", 64)),
                seed=int(data.get("seed", 0)),
                share_gp=bool(refine_d.get("share_gp", False)),
                kernel=KernelParams(**kernel_d),
            ),
            trust_region=TrustRegion(
                rho_rot=float(tr_d.get("rho_rot", math.pi / 6.0)),
                rho_trans=float(tr_d.get("rho_trans", 1.0)),
                z_min=float(tr_d.get("z_min", 0.2)),
                z_max=float(tr_d.get("z_max", 2.5)),
            ),
            limits=DynLimits(v_max=float(lim_d["v_max"]), a_max=float(lim_d["a_max"])),
            dt=float(data.get("dt", 0.05)),
            delta_safe=float(data.get("delta_safe", 0.2)),
            clearance=float(data.get("clearance", 0.4)),
            max_halfwidth=float(data.get("max_halfwidth", 1.5)),
            oracle=str(data.get("oracle", "synthetic")),
            remote_endpoint=data.get("remote_endpoint"),
            out_dir=resolve(data.get("out", "out")),
            seed=int(data.get("seed", 0)),
            chooser=data.get("chooser"),
            robustness=data.get("robustness"),
            serve=data.get("serve"),
            raw=data,
        )
        for p in (cfg.scene_path, cfg.descriptions_path):
            if not os.path.exists(p):
                raise InvalidArgumentError(f"configured file does not exist: {p}")
        for p in (cfg.map_path, cfg.frames_path):
            if p is not None and not os.path.exists(p):
                raise InvalidArgumentError(f"configured file does not exist: {p}")
        if cfg.frames_path is None and cfg.synthetic_scan is None:
            raise InvalidArgumentError("config needs either a frames file or synthetic_scan")
        return cfg

    def config_hash(self) -> str:
        # the output directory does not affect what the run computes
        hashed = {k: v for k, v in self.raw.items() if k != "out"}
        return hashlib.sha256(
            json.dumps(hashed, sort_keys=True).encode("utf-8")
        ).hexdigest()[:16]


@dataclass
class LoadedInputs:
    scene: SyntheticScene
    grid: VoxelGrid | None
    field: DistanceField | None
    frames: list[FrameRecord]
    descriptions: list[WaypointDescription]


def generate_scan(
    scene: SyntheticScene,
    grid: VoxelGrid | None,
    stride: float,
    yaw_count: int,
    z: float,
) -> list[FrameRecord]:
    """Pose lattice with yaw sweeps standing in for an exploration video."""
    lo, hi = scene.bounds.lo, scene.bounds.hi
    xs = np.arange(lo[0] + stride / 2.0, hi[0], stride)
    ys = np.arange(lo[1] + stride / 2.0, hi[1], stride)
    yaws = [(-math.pi + (i + 1) * 2.0 * math.pi / yaw_count) for i in range(yaw_count)]
    frames = []
    fid = 0
    for x in xs:
        for y in ys:
            p = np.array([x, y, z])
            if grid is not None and not grid.is_free(p):
                continue
            for th in yaws:
                pose = Pose4(p=p, theta=th)
                emb = synthetic_view_embedding(scene, pose)
                frames.append(FrameRecord(id=fid, pose=pose, embedding=emb, time_index=fid))
                fid += 1
    return frames


def load_inputs(cfg: PipelineConfig) -> LoadedInputs:
    scene = load_scene(cfg.scene_path)
    grid = load_grid(cfg.map_path) if cfg.map_path else None
    fld = distance_transform(grid) if grid is not None else None
    if cfg.frames_path:
        frames = ingest_frames(cfg.frames_path)
    else:
        scan = cfg.synthetic_scan
        frames = generate_scan(
            scene,
            grid,
            stride=float(scan.get("stride", 1.0)),
            yaw_count=int(scan.get("yaws", 8)),
            z=float(scan.get("z", 1.2)),
        )
    descriptions = load_descriptions(cfg.descriptions_path, scene=scene)
    return LoadedInputs(scene=scene, grid=grid, field=fld, frames=frames, descriptions=descriptions)


def _ensure_out(cfg: PipelineConfig) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg.out_dir


def make_chooser(cfg: PipelineConfig):
    if cfg.chooser and cfg.chooser.get("type") == "scripted":
        return ScriptedChooser(picks=cfg.chooser["picks"], order=cfg.chooser["order"])
    return DeterministicChooser()


def cmd_retrieve(cfg: PipelineConfig, inputs: LoadedInputs | None = None) -> OrderedWaypoints:
    """Retrieval stage: candidates, select-and-sort, heatmap CSVs."""
    inputs = inputs or load_inputs(cfg)
    out = _ensure_out(cfg)
    if not inputs.descriptions:
        path = os.path.join(out, "waypoints.json")
        with open(path, "w") as fh:
            json.dump([], fh)
        return OrderedWaypoints(picks=())
    candidates = retrieve_candidates(inputs.descriptions, inputs.frames, top_k=3)
    waypoints = select_and_sort(candidates, make_chooser(cfg), inputs.descriptions)
    with open(os.path.join(out, "waypoints.json"), "w") as fh:
        json.dump(waypoints.to_json(), fh, indent=2)
    for desc in inputs.descriptions:
        scores = score_frames(desc, inputs.frames)
        write_heatmap_csv(os.path.join(out, f"heatmap_{desc.k}.csv"), inputs.frames, scores)
    return waypoints


def make_oracle(cfg: PipelineConfig, inputs: LoadedInputs, description: WaypointDescription):
    if cfg.oracle == "synthetic":
        util = SyntheticUtility(target=description.d, noise_beta=0.0)
        return SyntheticOracle(util)
    if cfg.oracle == "remote":
        from .oracles import RemoteOracle

        if not cfg.remote_endpoint:
            raise InvalidArgumentError("remote oracle requires remote_endpoint in config")
        return RemoteOracle(cfg.remote_endpoint, inputs.scene)
    raise InvalidArgumentError(f"unknown oracle {cfg.oracle!r} for batch refinement")


def cmd_refine(
    cfg: PipelineConfig,
    waypoints: OrderedWaypoints | None = None,
    inputs: LoadedInputs | None = None,
) -> list[Pose4]:
    """Refinement stage over the ordered waypoints; writes poses + traces."""
    inputs = inputs or load_inputs(cfg)
    out = _ensure_out(cfg)
    if waypoints is None:
        with open(os.path.join(out, "waypoints.json")) as fh:
            waypoints = OrderedWaypoints.from_json(json.load(fh))
    desc_by_k = {d.k: d for d in inputs.descriptions}
    refined: list[Pose4] = []
    for idx, pick in enumerate(waypoints.picks):
        desc = desc_by_k[pick.k]
        oracle = make_oracle(cfg, inputs, desc)
        wp_cfg = RefineConfig(
            B=cfg.refine.B,
            M=cfg.refine.M,
            seed=stage_seed(cfg.seed, f"refine:{idx}"),
            share_gp=cfg.refine.share_gp,
            kernel=cfg.refine.kernel,
        )
        pose, trace, _ = refine_pose(
            pick.pose, desc, inputs.scene, inputs.grid, oracle, wp_cfg, cfg.trust_region,
            target_embedding=desc.d,
        )
        refined.append(pose)
        trace.write_csv(os.path.join(out, f"trace_{idx}.csv"))
    with open(os.path.join(out, "refined.json"), "w") as fh:
        json.dump(
            [
                {"k": pick.k, "frame_id": pick.frame_id, "pose": pose.to_dict()}
                for pick, pose in zip(waypoints.picks, refined)
            ],
            fh,
            indent=2,
        )
    return refined


def cmd_plan(
    cfg: PipelineConfig,
    refined: list[Pose4] | None = None,
    inputs: LoadedInputs | None = None,
):
    """Planning stage: path, corridor, min-snap trajectory, yaw spline, controls."""
    inputs = inputs or load_inputs(cfg)
    if inputs.grid is None:
        raise InvalidArgumentError("planning requires a voxel map in the config")
    out = _ensure_out(cfg)
    if refined is None:
        with open(os.path.join(out, "refined.json")) as fh:
            data = json.load(fh)
        refined_poses = [Pose4.from_dict(d["pose"]) for d in data]
    else:
        refined_poses = refined
    polyline = extract_path(inputs.grid, refined_poses, clearance=cfg.clearance, field=inputs.field)
    corridor = grow_corridor(polyline, inputs.field, cfg.delta_safe, cfg.max_halfwidth)
    taus = allocate_times(polyline, cfg.limits)
    traj = fit_position_traj(
        polyline, taus, corridor, cfg.limits, inputs.grid.resolution, dt=cfg.dt
    )
    yaws = unwrap_yaw([pose.theta for pose in refined_poses])
    yaw_spline = fit_yaw_spline(traj.waypoint_times, yaws)
    controls = sample_controls(traj, yaw_spline, cfg.dt)
    with open(os.path.join(out, "polyline.json"), "w") as fh:
        json.dump(polyline.to_json(), fh, indent=2)
    with open(os.path.join(out, "corridor.json"), "w") as fh:
        json.dump([b.to_json() for b in corridor], fh, indent=2)
    with open(os.path.join(out, "trajectory.json"), "w") as fh:
        json.dump({"dt": cfg.dt, "samples": [s.to_json() for s in controls]}, fh, indent=2)
    with open(os.path.join(out, "trajectory.csv"), "w") as fh:
        fh.write("t,px,py,pz,vx,vy,vz,ax,ay,az,theta,theta_dot\n")
        for s in controls:
            fh.write(
                f"{s.t:.6f},{s.p[0]:.9f},{s.p[1]:.9f},{s.p[2]:.9f},"
                f"{s.v[0]:.9f},{s.v[1]:.9f},{s.v[2]:.9f},"
                f"{s.a[0]:.9f},{s.a[1]:.9f},{s.a[2]:.9f},"
                f"{s.theta:.9f},{s.theta_dot:.9f}\n"
            )
    return polyline, corridor, traj, yaw_spline, controls


def cmd_robustness(cfg: PipelineConfig, inputs: LoadedInputs | None = None) -> str:
    """Seven seeded refinements from random poses near a target; writes
    per-iteration similarity-to-target-view as run,iter,sim CSV."""
    inputs = inputs or load_inputs(cfg)
    out = _ensure_out(cfg)
    rob = cfg.robustness or {}
    if "target_pose" not in rob:
        raise InvalidArgumentError("robustness requires a target_pose in the config")
    target = Pose4.from_dict(rob["target_pose"])
    runs = int(rob.get("runs", 7))
    desc_k = rob.get("description_k")
    desc_by_k = {d.k: d for d in inputs.descriptions}
    description = desc_by_k[int(desc_k)] if desc_k is not None else inputs.descriptions[0]
    target_view = synthetic_view_embedding(inputs.scene, target)
    utility = SyntheticUtility(target=target_view, noise_beta=float(rob.get("noise_beta", 0.0)))
    rng = np.random.default_rng(stage_seed(cfg.seed, "robustness:init"))
    path = os.path.join(out, "robustness.csv")
    with open(path, "w") as fh:
        fh.write("run,iter,sim\n")
        for run in range(runs):
            seed_pose = _random_pose_near(target, rng, inputs.grid, cfg.trust_region)
            wp_cfg = RefineConfig(
                B=cfg.refine.B,
                M=cfg.refine.M,
                seed=stage_seed(cfg.seed, f"robustness:{run}"),
                kernel=cfg.refine.kernel,
            )
            oracle = SyntheticOracle(utility)
            _, trace, _ = refine_pose(
                seed_pose, description, inputs.scene, inputs.grid, oracle, wp_cfg,
                cfg.trust_region, target_embedding=target_view,
            )
            for step in trace.steps:
                fh.write(f"{run},{step.iteration},{step.similarity:.9f}\n")
    return path


def _random_pose_near(
    target: Pose4, rng: np.random.Generator, grid: VoxelGrid | None, tr: TrustRegion,
    radius: float = 1.0,
) -> Pose4:
    """Uniform position within the radius ball of the target (z clamped,
    free-space rejected) with arbitrary yaw."""
    for _ in range(10_000):
        u = rng.standard_normal(3)
        n = np.linalg.norm(u)
        if n == 0:
            continue
        p = target.p + rng.uniform(0.0, radius) * u / n
        p[2] = min(max(p[2], tr.z_min), tr.z_max)
        if grid is not None and not grid.is_free(p):
            continue
        theta = rng.uniform(-math.pi, math.pi)
        return Pose4(p=p, theta=theta)
    raise InvalidArgumentError("could not sample a feasible pose near the target")


def write_manifest(cfg: PipelineConfig, stages: list[str]) -> str:
    out = _ensure_out(cfg)
    manifest = {
        "version": __version__,
        "config_hash": cfg.config_hash(),
        "master_seed": cfg.seed,
        "stage_seeds": {s: stage_seed(cfg.seed, s) for s in stages},
        "timestamp": time.time(),
    }
    path = os.path.join(out, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)
    return path


def cmd_run(cfg: PipelineConfig):
    """Full chain: retrieve -> refine -> plan, plus manifest."""
    inputs = load_inputs(cfg)
    waypoints = cmd_retrieve(cfg, inputs)
    refined = cmd_refine(cfg, waypoints, inputs)
    result = cmd_plan(cfg, refined, inputs) if inputs.grid is not None else None
    write_manifest(cfg, ["retrieve", "refine", "plan"])
    return waypoints, refined, result
