"""Semantic embeddings, the synthetic landmark scene, and scan-frame ingestion.

The synthetic scene stands in for a photorealistic reconstruction: a view
embedding is a visibility-weighted blend of landmark semantic vectors, which
gives retrieval and the preference optimizer a smooth, spatially-varying
similarity landscape without any neural rendering.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, InvalidDataError, OutOfBoundsError, ParseError
from .geom import Pose4

DEFAULT_DIM = 64


def normalize(v: np.ndarray) -> np.ndarray:
    """Return v / ||v||; raises on the zero vector."""
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n == 0.0 or not np.isfinite(n):
        raise InvalidArgumentError("cannot normalize a zero or non-finite vector")
    return v / n


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity between two nonzero vectors of equal dimension."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise InvalidArgumentError("cosine undefined for the zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def background_vector(dim: int) -> np.ndarray:
    """The reserved unit vector returned when nothing is visible."""
    return np.ones(dim) / math.sqrt(dim)


def text_to_embedding(text: str, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Deterministic hash-to-unit-vector surrogate for a text encoder."""
    seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")
    rng = np.random.default_rng(seed)
    return normalize(rng.standard_normal(dim))


@dataclass(frozen=True)
class Landmark:
    center: np.ndarray
    semantic: np.ndarray
    radius: float
    label: str

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        semantic = np.asarray(self.semantic, dtype=float)
        if self.radius <= 0:
            raise InvalidArgumentError(f"landmark radius must be > 0, got {self.radius}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "semantic", normalize(semantic))


@dataclass(frozen=True)
class Bounds:
    """Axis-aligned box [lo, hi] in meters."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != (3,) or hi.shape != (3,) or np.any(lo >= hi):
            raise InvalidArgumentError("bounds must satisfy lo < hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, point: np.ndarray) -> bool:
        return bool(np.all(point >= self.lo) and np.all(point <= self.hi))


@dataclass(frozen=True)
class SyntheticScene:
    landmarks: tuple
    bounds: Bounds
    fov: float = 1.5
    grid_ref: str | None = None

    def __post_init__(self):
        if not (0.0 < self.fov < math.pi):
            raise InvalidArgumentError(f"fov must lie in (0, pi), got {self.fov}")
        object.__setattr__(self, "landmarks", tuple(self.landmarks))
        for lm in self.landmarks:
            if not self.bounds.contains(lm.center):
                raise InvalidArgumentError(f"landmark {lm.label!r} lies outside the scene bounds")

    @property
    def dim(self) -> int:
        return len(self.landmarks[0].semantic) if self.landmarks else DEFAULT_DIM


@dataclass(frozen=True)
class FrameRecord:
    """One scan frame: id, camera pose, and its precomputed embedding."""

    id: int
    pose: Pose4
    embedding: np.ndarray
    time_index: int


def synthetic_view_embedding(scene: SyntheticScene, pose: Pose4) -> np.ndarray:
    """Deterministic surrogate for an image encoder applied to a rendered view.

    Each landmark contributes its semantic vector weighted by a cosine
    visibility cone and a distance falloff; the weighted sum is normalized.
    A view with no visible landmark maps to the reserved background vector.
    """
    if not scene.bounds.contains(pose.p):
        raise OutOfBoundsError(f"pose position {pose.p.tolist()} outside scene bounds")
    fwd = pose.forward()
    cos_half_fov = math.cos(scene.fov / 2.0)
    dim = scene.dim
    acc = np.zeros(dim)
    total = 0.0
    for lm in scene.landmarks:
        ray = lm.center - pose.p
        dist = float(np.linalg.norm(ray))
        if dist == 0.0:
            continue
        cos_alpha = float(np.dot(ray / dist, fwd))
        vis = max(0.0, cos_alpha - cos_half_fov) / (1.0 - cos_half_fov)
        if vis == 0.0:
            continue
        fall = lm.radius / max(lm.radius, dist)
        w = vis * fall
        acc += w * lm.semantic
        total += w
    if total == 0.0 or np.linalg.norm(acc) == 0.0:
        return background_vector(dim)
    return normalize(acc)


def load_scene(path: str) -> SyntheticScene:
    """Load a scene JSON file (bounds, fov, landmarks)."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    try:
        bounds = Bounds(lo=np.asarray(data["bounds"]["lo"]), hi=np.asarray(data["bounds"]["hi"]))
        landmarks = [
            Landmark(
                center=np.asarray(lm["center"]),
                semantic=np.asarray(lm["semantic"]),
                radius=float(lm["radius"]),
                label=str(lm["label"]),
            )
            for lm in data["landmarks"]
        ]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{path}: scene schema violation: {exc}") from exc
    dims = {len(lm.semantic) for lm in landmarks}
    if len(dims) > 1:
        raise InvalidDataError(f"{path}: mixed landmark semantic dimensions {sorted(dims)}")
    return SyntheticScene(
        landmarks=tuple(landmarks),
        bounds=bounds,
        fov=float(data.get("fov", 1.5)),
        grid_ref=data.get("grid_ref"),
    )


def ingest_frames(path: str, stride: int = 1) -> list[FrameRecord]:
    """Load scan frames from a JSON file, sorted by time index.

    Embeddings are re-normalized on load. Duplicate ids, non-increasing time
    indices, and mixed embedding dimensions are rejected.
    """
    if stride < 1:
        raise InvalidArgumentError(f"stride must be >= 1, got {stride}")
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise ParseError(f"{path}: expected a top-level array of frame records")
    records: list[FrameRecord] = []
    seen_ids: set[int] = set()
    for idx, item in enumerate(data):
        try:
            fid = int(item["id"])
            t = int(item["t"])
            pose = Pose4.from_dict(item["pose"])
            emb = np.asarray(item["emb"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: record {idx}: schema violation: {exc}") from exc
        if fid in seen_ids:
            raise ParseError(f"{path}: record {idx}: duplicate frame id {fid}")
        seen_ids.add(fid)
        records.append(FrameRecord(id=fid, pose=pose, embedding=normalize(emb), time_index=t))
    records.sort(key=lambda r: r.time_index)
    for a, b in zip(records, records[1:]):
        if b.time_index <= a.time_index:
            raise InvalidDataError(f"{path}: time indices not strictly increasing at id {b.id}")
    dims = {len(r.embedding) for r in records}
    if len(dims) > 1:
        raise InvalidDataError(f"{path}: mixed embedding dimensions {sorted(dims)}")
    return records[::stride]


def write_frames(path: str, records: list[FrameRecord]) -> None:
    """Serialize frame records with the same schema ingest_frames reads."""
    payload = [
        {
            "id": r.id,
            "t": r.time_index,
            "pose": r.pose.to_dict(),
            "emb": [float(x) for x in r.embedding],
        }
        for r in records
    ]
    with open(path, "w") as fh:
        json.dump(payload, fh)
