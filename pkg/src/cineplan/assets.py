"""Builders for the shipped demo scenes, maps, and configs.

Two scene families: a ring scene whose landmark semantics overlap smoothly
(bearing-bump features), giving the preference optimizer gradient everywhere,
and a small orthogonal-semantics scene for retrieval localization tests.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from .embed import Bounds, Landmark, SyntheticScene
from .geom import Pose4, wrap_angle
from .mapplan import VoxelGrid, save_grid

DIM = 64


def bearing_bump(phi: float, sigma: float = 0.9, dim: int = DIM) -> np.ndarray:
    """Unit vector of Gaussian bump features over evenly spaced bearings.

    Nearby bearings get correlated semantics, so view similarity varies
    smoothly with yaw instead of jumping between orthogonal axes.
    """
    feats = np.linspace(-math.pi, math.pi, dim, endpoint=False)
    d = np.arctan2(np.sin(feats - phi), np.cos(feats - phi))
    v = np.exp(-(d**2) / (2.0 * sigma**2))
    return v / np.linalg.norm(v)


def ring_scene(n_landmarks: int = 8, radius: float = 3.0, z: float = 1.2,
               fov: float = 2.2) -> SyntheticScene:
    """Landmarks on a circle with smoothly overlapping semantics."""
    bearings = np.linspace(0.0, 2.0 * math.pi, n_landmarks, endpoint=False)
    landmarks = [
        Landmark(
            center=np.array([radius * math.cos(a), radius * math.sin(a), z]),
            semantic=bearing_bump(wrap_angle(a)),
            radius=0.8,
            label=f"ring{i}",
        )
        for i, a in enumerate(bearings)
    ]
    bounds = Bounds(lo=np.array([-5.0, -5.0, 0.0]), hi=np.array([5.0, 5.0, 3.0]))
    return SyntheticScene(landmarks=tuple(landmarks), bounds=bounds, fov=fov)


def orthogonal_scene() -> SyntheticScene:
    """Three landmarks with orthogonal semantics in a 10 x 10 m room."""
    def basis(i):
        v = np.zeros(DIM)
        v[i] = 1.0
        return v

    # clustered triangle: most viewpoints catch a secondary landmark, so view
    # embeddings are distance-discriminative mixtures rather than pure axes
    landmarks = (
        Landmark(center=np.array([3.5, 4.0, 1.2]), semantic=basis(0), radius=0.8, label="sofa"),
        Landmark(center=np.array([6.5, 4.0, 1.2]), semantic=basis(1), radius=0.8, label="piano"),
        Landmark(center=np.array([5.0, 6.6, 1.2]), semantic=basis(2), radius=0.8, label="fireplace"),
    )
    bounds = Bounds(lo=np.array([0.0, 0.0, 0.0]), hi=np.array([10.0, 10.0, 3.0]))
    return SyntheticScene(landmarks=landmarks, bounds=bounds, fov=1.5)


def room_grid(nx: int = 40, ny: int = 40, nz: int = 12, resolution: float = 0.25,
              with_wall: bool = True) -> VoxelGrid:
    """10 x 10 x 3 m room with solid borders and an optional doorway wall."""
    occ = np.zeros((nx, ny, nz), dtype=bool)
    occ[0, :, :] = occ[-1, :, :] = True
    occ[:, 0, :] = occ[:, -1, :] = True
    occ[:, :, 0] = occ[:, :, -1] = True
    if with_wall:
        # wall across the middle with a 2 m doorway
        wall_x = nx // 2
        occ[wall_x, :, :] = True
        door = slice(ny // 2 - 4, ny // 2 + 4)
        occ[wall_x, door, 1:-1] = False
    return VoxelGrid(origin=np.zeros(3), resolution=resolution, occupied=occ)


def open_grid(nx: int = 40, ny: int = 40, nz: int = 12, resolution: float = 0.25) -> VoxelGrid:
    return room_grid(nx, ny, nz, resolution, with_wall=False)


def scene_to_json(scene: SyntheticScene) -> dict:
    return {
        "bounds": {"lo": list(map(float, scene.bounds.lo)), "hi": list(map(float, scene.bounds.hi))},
        "fov": scene.fov,
        "landmarks": [
            {
                "center": list(map(float, lm.center)),
                "radius": lm.radius,
                "label": lm.label,
                "semantic": list(map(float, lm.semantic)),
            }
            for lm in scene.landmarks
        ],
    }


def write_demo_assets(out_dir: str) -> dict:
    """Materialize the demo scene/map/description/config files; returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    ring = ring_scene()
    paths["ring_scene"] = os.path.join(out_dir, "ring_scene.json")
    with open(paths["ring_scene"], "w") as fh:
        json.dump(scene_to_json(ring), fh)

    ortho = orthogonal_scene()
    paths["ortho_scene"] = os.path.join(out_dir, "ortho_scene.json")
    with open(paths["ortho_scene"], "w") as fh:
        json.dump(scene_to_json(ortho), fh)

    paths["room_map"] = os.path.join(out_dir, "room_map.json")
    # ring scene bounds are centered on the origin
    grid = VoxelGrid(origin=np.array([-5.0, -5.0, 0.0]), resolution=0.25,
                     occupied=room_grid(with_wall=False).occupied)
    save_grid(paths["room_map"], grid)

    paths["ortho_map"] = os.path.join(out_dir, "ortho_map.json")
    save_grid(paths["ortho_map"], room_grid(with_wall=True))

    paths["ring_descriptions"] = os.path.join(out_dir, "ring_descriptions.json")
    with open(paths["ring_descriptions"], "w") as fh:
        json.dump(
            [
                {"k": 0, "text": "facing the first ring landmark", "landmark_label": "ring0"},
                {"k": 1, "text": "facing the far ring landmark", "landmark_label": "ring4"},
            ],
            fh,
        )

    paths["ortho_descriptions"] = os.path.join(out_dir, "ortho_descriptions.json")
    with open(paths["ortho_descriptions"], "w") as fh:
        json.dump(
            [
                {"k": 0, "text": "a shot of the sofa", "landmark_label": "sofa"},
                {"k": 1, "text": "a shot of the piano", "landmark_label": "piano"},
                {"k": 2, "text": "a shot of the fireplace", "landmark_label": "fireplace"},
            ],
            fh,
        )

    target_pose = Pose4(p=np.array([0.0, 0.0, 1.2]), theta=0.0)
    config = {
        "scene": "ring_scene.json",
        "map": "room_map.json",
        "synthetic_scan": {"stride": 1.0, "yaws": 8, "z": 1.2},
        "descriptions": "ring_descriptions.json",
        "refine": {"B": 100, "M": 64},
        "trust_region": {"rho_rot": math.pi / 6.0, "rho_trans": 1.0, "z_min": 0.4, "z_max": 2.4},
        "limits": {"v_max": 2.0, "a_max": 2.0},
        "dt": 0.05,
        "delta_safe": 0.3,
        "clearance": 0.6,
        "max_halfwidth": 1.5,
        "oracle": "synthetic",
        "seed": 42,
        "out": "out",
        "robustness": {
            "target_pose": target_pose.to_dict(),
            "description_k": 0,
            "runs": 7,
        },
        "serve": {"seed_pose": Pose4(p=np.array([0.5, 0.3, 1.2]), theta=2.0).to_dict(),
                  "description_k": 0},
    }
    paths["config"] = os.path.join(out_dir, "demo_config.json")
    with open(paths["config"], "w") as fh:
        json.dump(config, fh, indent=2)
    return paths
