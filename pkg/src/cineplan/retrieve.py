"""Initial waypoint selection: similarity retrieval, scoring, select-and-sort.

Each shot description is matched against every scan frame by cosine
similarity; the top trio per description goes to a pluggable chooser that
picks one frame per description and orders the waypoints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .embed import FrameRecord, cosine, normalize, text_to_embedding
from .errors import ChooserError, InvalidArgumentError, ParseError
from .geom import Pose4


@dataclass(frozen=True)
class WaypointDescription:
    k: int
    text: str
    d: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "d", normalize(np.asarray(self.d, dtype=float)))


@dataclass(frozen=True)
class CandidateSet:
    k: int
    frames: tuple
    scores: tuple


@dataclass(frozen=True)
class WaypointPick:
    """One chosen waypoint: pose plus the frame it came from."""

    k: int
    frame_id: int
    pose: Pose4


@dataclass(frozen=True)
class OrderedWaypoints:
    picks: tuple

    @property
    def poses(self) -> list[Pose4]:
        return [p.pose for p in self.picks]

    def to_json(self) -> list[dict]:
        return [
            {"k": p.k, "frame_id": p.frame_id, "pose": p.pose.to_dict()} for p in self.picks
        ]

    @classmethod
    def from_json(cls, data: list[dict]) -> "OrderedWaypoints":
        return cls(
            picks=tuple(
                WaypointPick(k=int(d["k"]), frame_id=int(d["frame_id"]), pose=Pose4.from_dict(d["pose"]))
                for d in data
            )
        )


def score_frames(description: WaypointDescription, frames: list[FrameRecord]) -> list[tuple[int, float]]:
    """Cosine similarity of one description against every frame, order preserved."""
    if not frames:
        return []
    embs = np.stack([f.embedding for f in frames])
    if embs.shape[1] != len(description.d):
        raise InvalidArgumentError(
            f"embedding dim mismatch: frames {embs.shape[1]} vs description {len(description.d)}"
        )
    scores = embs @ description.d
    return [(f.id, float(s)) for f, s in zip(frames, scores)]


def retrieve_candidates(
    descriptions: list[WaypointDescription],
    frames: list[FrameRecord],
    top_k: int = 3,
) -> list[CandidateSet]:
    """Top-k frames per description by descending cosine, ties to lower id."""
    if not frames:
        raise InvalidArgumentError("frame list is empty")
    if top_k > len(frames):
        raise InvalidArgumentError(f"top_k={top_k} exceeds frame count {len(frames)}")
    out = []
    by_id = {f.id: f for f in frames}
    for desc in descriptions:
        scored = score_frames(desc, frames)
        scored.sort(key=lambda pair: (-pair[1], pair[0]))
        chosen = scored[:top_k]
        out.append(
            CandidateSet(
                k=desc.k,
                frames=tuple(by_id[fid] for fid, _ in chosen),
                scores=tuple(s for _, s in chosen),
            )
        )
    return out


class Chooser:
    """Selects one frame per candidate set and orders the waypoints."""

    def choose(
        self, descriptions: list[WaypointDescription], candidates: list[CandidateSet]
    ) -> tuple[list[int], list[int]]:
        """Return (per-set chosen frame index 0..top_k-1, ordering of set positions)."""
        raise NotImplementedError


class DeterministicChooser(Chooser):
    """Fallback policy: argmax score per trio, waypoints in ascending k."""

    def choose(self, descriptions, candidates):
        picks = [0 for _ in candidates]  # candidate frames already sorted by score
        order = sorted(range(len(candidates)), key=lambda i: candidates[i].k)
        return picks, order


class ScriptedChooser(Chooser):
    """Replays choices from a config: {"picks": {k: frame_index}, "order": [k,...]}."""

    def __init__(self, picks: dict[int, int], order: list[int]):
        self.picks = {int(k): int(v) for k, v in picks.items()}
        self.order = [int(k) for k in order]

    def choose(self, descriptions, candidates):
        pos_by_k = {c.k: i for i, c in enumerate(candidates)}
        try:
            picks = [self.picks[c.k] for c in candidates]
        except KeyError as exc:
            raise ChooserError(f"scripted chooser has no pick for description {exc}", None)
        try:
            order = [pos_by_k[k] for k in self.order]
        except KeyError as exc:
            raise ChooserError(f"scripted order names unknown description {exc}", None)
        if sorted(order) != list(range(len(candidates))):
            raise ChooserError("scripted order is not a permutation of the description set", None)
        return picks, order


def select_and_sort(candidates: list[CandidateSet], chooser: Chooser, descriptions=None) -> OrderedWaypoints:
    """Pick one frame per trio and order the waypoints via the chooser."""
    if not candidates:
        raise InvalidArgumentError("candidate list is empty")
    picks, order = chooser.choose(descriptions or [], candidates)
    if len(picks) != len(candidates):
        raise ChooserError("chooser returned wrong number of picks", None)
    chosen = []
    for cand, idx in zip(candidates, picks):
        if not (0 <= idx < len(cand.frames)):
            raise ChooserError(f"pick index {idx} out of range", cand.k)
        frame = cand.frames[idx]
        chosen.append(WaypointPick(k=cand.k, frame_id=frame.id, pose=frame.pose))
    return OrderedWaypoints(picks=tuple(chosen[i] for i in order))


def load_descriptions(path: str, scene=None, dim: int = 64) -> list[WaypointDescription]:
    """Load waypoint descriptions from JSON.

    Each entry carries "k" and "text", plus either an explicit "emb", a
    "landmark_label" resolved against the scene, or neither — in which case a
    deterministic hash-to-unit-vector embedding of the text is used.
    """
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    descs = []
    seen = set()
    for idx, item in enumerate(data):
        try:
            k = int(item["k"])
            text = str(item["text"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: entry {idx}: schema violation: {exc}") from exc
        if k in seen:
            raise ParseError(f"{path}: entry {idx}: duplicate description index {k}")
        seen.add(k)
        if "emb" in item:
            emb = np.asarray(item["emb"], dtype=float)
        elif "landmark_label" in item:
            if scene is None:
                raise ParseError(f"{path}: entry {idx}: landmark_label requires a scene")
            matches = [lm for lm in scene.landmarks if lm.label == item["landmark_label"]]
            if not matches:
                raise ParseError(f"{path}: entry {idx}: unknown landmark {item['landmark_label']!r}")
            emb = matches[0].semantic
        else:
            emb = text_to_embedding(text, dim=scene.dim if scene is not None else dim)
        descs.append(WaypointDescription(k=k, text=text, d=emb))
    return descs


def write_heatmap_csv(path: str, frames: list[FrameRecord], scores: list[tuple[int, float]]) -> None:
    """Floor-plan similarity heatmap: one row per frame, x,y,score."""
    by_id = {f.id: f for f in frames}
    with open(path, "w") as fh:
        fh.write("x,y,score\n")
        for fid, s in scores:
            p = by_id[fid].pose.p
            fh.write(f"{p[0]:.6f},{p[1]:.6f},{s:.9f}\n")
