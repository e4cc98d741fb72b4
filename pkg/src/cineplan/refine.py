"""Preference-driven pose refinement.

Each iteration samples trust-region candidates around the incumbent, picks a
challenger via dueling Thompson sampling on the preference GP, asks the
oracle to compare rendered views, records the comparison, refits the
posterior, and promotes the challenger only when the oracle preferred it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .embed import SyntheticScene, cosine, synthetic_view_embedding
from .errors import InfeasibleRegionError, InvalidArgumentError, OracleError
from .geom import Pose4, wrap_angle
from .gp_pref import (
    GPState,
    KernelParams,
    PreferenceObservation,
    laplace_fit,
    posterior_sample,
)
from .mapplan import VoxelGrid
from .retrieve import OrderedWaypoints, WaypointDescription


@dataclass(frozen=True)
class TrustRegion:
    rho_rot: float = math.pi / 6.0
    rho_trans: float = 1.0
    z_min: float = 0.2
    z_max: float = 2.5

    def __post_init__(self):
        if not (0.0 <= self.rho_rot <= math.pi):
            raise InvalidArgumentError(f"rho_rot must lie in [0, pi], got {self.rho_rot}")
        if self.rho_trans < 0.0:
            raise InvalidArgumentError(f"rho_trans must be >= 0, got {self.rho_trans}")
        if self.z_min >= self.z_max:
            raise InvalidArgumentError("z_min must be below z_max")


@dataclass(frozen=True)
class RefineConfig:
    B: int = 100
    M: int = 64
    seed: int = 0
    share_gp: bool = False
    kernel: KernelParams = field(default_factory=KernelParams)

    def __post_init__(self):
        if self.B < 1 or self.M < 1:
            raise InvalidArgumentError("B and M must both be >= 1")


@dataclass(frozen=True)
class View:
    """A rendered viewpoint: the pose plus its view embedding."""

    pose: Pose4
    embedding: np.ndarray


class PreferenceOracle:
    """Compares two rendered views; +1 means the challenger wins."""

    def compare(self, incumbent_view: View, challenger_view: View,
                description: WaypointDescription) -> int:
        raise NotImplementedError


@dataclass(frozen=True)
class TraceStep:
    iteration: int
    incumbent: Pose4
    challenger: Pose4
    advantage: float
    outcome: int
    similarity: float | None  # to the configured target view, when present


@dataclass(frozen=True)
class RefineTrace:
    steps: tuple

    def promotions(self) -> int:
        return sum(1 for s in self.steps if s.outcome == +1)

    def write_csv(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write("iter,px,py,pz,theta,adv,outcome,sim\n")
            for s in self.steps:
                p = s.incumbent.p
                sim = "" if s.similarity is None else f"{s.similarity:.9f}"
                fh.write(
                    f"{s.iteration},{p[0]:.9f},{p[1]:.9f},{p[2]:.9f},"
                    f"{s.incumbent.theta:.9f},{s.advantage:.9f},{s.outcome},{sim}\n"
                )


def sample_candidates(
    incumbent: Pose4,
    M: int,
    tr: TrustRegion,
    grid: VoxelGrid | None,
    rng: np.random.Generator,
) -> list[Pose4]:
    """Trust-region candidates: uniform yaw offset, uniform direction with
    uniform radius for translation, altitude clamped, occupied voxels
    rejected and resampled."""
    if grid is not None and not grid.is_free(incumbent.p):
        raise InfeasibleRegionError("incumbent is not in free space")
    out: list[Pose4] = []
    attempts = 0
    budget = 100 * M
    while len(out) < M:
        if attempts >= budget:
            raise InfeasibleRegionError(
                f"only {len(out)}/{M} feasible candidates after {budget} attempts"
            )
        attempts += 1
        dtheta = rng.uniform(-tr.rho_rot, tr.rho_rot)
        theta = wrap_angle(incumbent.theta + dtheta)
        u = rng.standard_normal(3)
        norm = np.linalg.norm(u)
        if norm == 0.0:
            continue
        u /= norm
        r = rng.uniform(0.0, tr.rho_trans)
        p = incumbent.p + r * u
        p[2] = min(max(p[2], tr.z_min), tr.z_max)
        if grid is not None and not grid.is_free(p):
            continue
        out.append(Pose4(p=p, theta=theta))
    return out


def dueling_ts_select(
    gp: GPState,
    incumbent: Pose4,
    candidates: list[Pose4],
    rng: np.random.Generator,
) -> tuple[int, float]:
    """One joint posterior draw over incumbent + candidates; returns the
    candidate index with the largest sampled advantage, ties to lowest index."""
    if not candidates:
        raise InvalidArgumentError("candidate list is empty")
    sample = posterior_sample(gp, [incumbent] + list(candidates), rng)
    advantages = sample[1:] - sample[0]
    m_star = int(np.argmax(advantages))
    return m_star, float(advantages[m_star])


def refine_pose(
    seed_pose: Pose4,
    description: WaypointDescription,
    scene: SyntheticScene,
    grid: VoxelGrid | None,
    oracle: PreferenceOracle,
    cfg: RefineConfig,
    tr: TrustRegion,
    target_embedding: np.ndarray | None = None,
    renderer=None,
    gp: GPState | None = None,
) -> tuple[Pose4, RefineTrace, GPState]:
    """Run the full dueling-preference loop from one seed pose.

    Returns the final incumbent, the per-iteration trace, and the fitted GP
    state (reusable across seeds when preference sharing is on). On oracle
    failure the partial trace is attached to the raised error.
    """
    embed_view = renderer or (lambda pose: synthetic_view_embedding(scene, pose))

    def render(pose: Pose4) -> View:
        return View(pose=pose, embedding=embed_view(pose))
    rng = np.random.default_rng(cfg.seed)
    poses: list[Pose4] = list(gp.X) if gp is not None else []
    obs: list[PreferenceObservation] = list(gp.obs) if gp is not None else []
    incumbent = seed_pose
    if not poses:
        poses.append(seed_pose)
        inc_idx = 0
    else:
        poses.append(seed_pose)
        inc_idx = len(poses) - 1
    state = laplace_fit(poses, obs, cfg.kernel)
    steps: list[TraceStep] = []
    for it in range(cfg.B):
        candidates = sample_candidates(incumbent, cfg.M, tr, grid, rng)
        m_star, adv = dueling_ts_select(state, incumbent, candidates, rng)
        challenger = candidates[m_star]
        try:
            outcome = oracle.compare(render(incumbent), render(challenger), description)
        except OracleError:
            partial = RefineTrace(steps=tuple(steps))
            err = OracleError(f"oracle failed at iteration {it}")
            err.partial_trace = partial
            raise err
        if outcome not in (+1, -1):
            raise OracleError(f"oracle returned {outcome!r}, expected +1 or -1")
        poses.append(challenger)
        ch_idx = len(poses) - 1
        obs.append(PreferenceObservation(i=ch_idx, j=inc_idx, s=outcome))
        state = laplace_fit(poses, obs, cfg.kernel)
        if outcome == +1:
            incumbent = challenger
            inc_idx = ch_idx
        sim = None
        if target_embedding is not None:
            sim = cosine(embed_view(incumbent), target_embedding)
        steps.append(
            TraceStep(
                iteration=it,
                incumbent=incumbent,
                challenger=challenger,
                advantage=adv,
                outcome=outcome,
                similarity=sim,
            )
        )
    return incumbent, RefineTrace(steps=tuple(steps)), state


def refine_all(
    waypoints: OrderedWaypoints,
    descriptions: dict[int, WaypointDescription],
    scene: SyntheticScene,
    grid: VoxelGrid | None,
    oracle: PreferenceOracle,
    cfg: RefineConfig,
    tr: TrustRegion,
    seed_for=None,
) -> tuple[list[Pose4], list[RefineTrace], list[tuple[int, Exception]]]:
    """Refine every ordered waypoint independently, preserving order.

    Per-waypoint failures are collected and reported with their index;
    remaining waypoints still run. A fresh GP is used per waypoint unless
    preference sharing is configured.
    """
    refined: list[Pose4] = []
    traces: list[RefineTrace] = []
    failures: list[tuple[int, Exception]] = []
    shared: GPState | None = None
    for idx, pick in enumerate(waypoints.picks):
        desc = descriptions.get(pick.k)
        if desc is None:
            failures.append((idx, InvalidArgumentError(f"no description for k={pick.k}")))
            refined.append(pick.pose)
            traces.append(RefineTrace(steps=()))
            continue
        wp_cfg = RefineConfig(
            B=cfg.B,
            M=cfg.M,
            seed=(seed_for(idx) if seed_for else cfg.seed + idx),
            share_gp=cfg.share_gp,
            kernel=cfg.kernel,
        )
        try:
            pose, trace, state = refine_pose(
                pick.pose, desc, scene, grid, oracle, wp_cfg, tr,
                gp=shared if cfg.share_gp else None,
            )
            if cfg.share_gp:
                shared = state
            refined.append(pose)
            traces.append(trace)
        except Exception as exc:  # noqa: BLE001 - per-waypoint isolation
            failures.append((idx, exc))
            refined.append(pick.pose)
            traces.append(getattr(exc, "partial_trace", RefineTrace(steps=())))
    return refined, traces, failures
