"""Voxel traversability map, clearance field, A* path extraction, and
rectangular-tunnel safety corridors."""

from __future__ import annotations

import base64
import heapq
import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import (
    CorridorInfeasibleError,
    InvalidArgumentError,
    InvalidEndpointError,
    ParseError,
    UnreachableError,
)
from .geom import Pose4


@dataclass(frozen=True)
class VoxelGrid:
    origin: np.ndarray
    resolution: float
    occupied: np.ndarray  # bool array of shape (nx, ny, nz)

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=float)
        occ = np.asarray(self.occupied, dtype=bool)
        if self.resolution <= 0:
            raise InvalidArgumentError(f"resolution must be > 0, got {self.resolution}")
        if occ.ndim != 3 or min(occ.shape) < 1:
            raise InvalidArgumentError("occupancy must be a nonempty 3D array")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "occupied", occ)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.occupied.shape

    def to_index(self, point: np.ndarray) -> tuple[int, int, int] | None:
        """Voxel containing a world point, or None when out of bounds."""
        idx = np.floor((np.asarray(point, dtype=float) - self.origin) / self.resolution).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.array(self.dims)):
            return None
        return tuple(int(i) for i in idx)

    def center(self, idx: tuple[int, int, int]) -> np.ndarray:
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.resolution

    def is_free(self, point: np.ndarray) -> bool:
        """True iff the point lies inside the grid in a free voxel."""
        idx = self.to_index(point)
        return idx is not None and not self.occupied[idx]


@dataclass(frozen=True)
class DistanceField:
    grid: VoxelGrid
    dist: np.ndarray  # meters, per voxel

    def value_at(self, point: np.ndarray) -> float:
        """Field value of the containing voxel; out of bounds reads as 0."""
        idx = self.grid.to_index(point)
        if idx is None:
            return 0.0
        return float(self.dist[idx])

    def values_at(self, points: np.ndarray) -> np.ndarray:
        """Vectorized value_at over an (n, 3) array of world points."""
        pts = np.asarray(points, dtype=float)
        idx = np.floor((pts - self.grid.origin) / self.grid.resolution).astype(int)
        dims = np.array(self.grid.dims)
        inside = np.all((idx >= 0) & (idx < dims), axis=1)
        out = np.zeros(len(pts))
        ii = idx[inside]
        out[inside] = self.dist[ii[:, 0], ii[:, 1], ii[:, 2]]
        return out


def distance_transform(grid: VoxelGrid) -> DistanceField:
    """Exact Euclidean distance to the nearest occupied voxel center.

    Space beyond the grid counts as occupied, implemented by padding a
    one-voxel occupied shell before the transform.
    """
    padded = np.pad(grid.occupied, 1, constant_values=True)
    dist = ndimage.distance_transform_edt(~padded, sampling=grid.resolution)
    return DistanceField(grid=grid, dist=dist[1:-1, 1:-1, 1:-1])


_NEIGHBORS = [
    (d, math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]))
    for d in itertools.product((-1, 0, 1), repeat=3)
    if d != (0, 0, 0)
]


def astar(
    grid: VoxelGrid,
    start: np.ndarray,
    goal: np.ndarray,
    clearance: float = 0.0,
    field: DistanceField | None = None,
) -> list[np.ndarray]:
    """26-connected A* over free voxels with at least the given clearance.

    Returns voxel-center vertices; edge costs and the heuristic are Euclidean,
    so the path cost is optimal.
    """
    if field is None:
        field = distance_transform(grid)
    passable = (~grid.occupied) & (field.dist >= clearance)
    s_idx = grid.to_index(start)
    g_idx = grid.to_index(goal)
    for name, idx in (("start", s_idx), ("goal", g_idx)):
        if idx is None or not passable[idx]:
            raise InvalidEndpointError(f"{name} voxel is occupied, out of bounds, or under clearance")
    if s_idx == g_idx:
        return [grid.center(s_idx)]

    res = grid.resolution
    gx, gy, gz = g_idx

    def h(idx):
        return res * math.sqrt(
            (idx[0] - gx) ** 2 + (idx[1] - gy) ** 2 + (idx[2] - gz) ** 2
        )

    g_cost = {s_idx: 0.0}
    came: dict = {}
    open_heap = [(h(s_idx), s_idx)]
    closed: set = set()
    nx, ny, nz = grid.dims
    while open_heap:
        _, cur = heapq.heappop(open_heap)
        if cur in closed:
            continue
        if cur == g_idx:
            path = [cur]
            while path[-1] in came:
                path.append(came[path[-1]])
            return [grid.center(i) for i in reversed(path)]
        closed.add(cur)
        cx, cy, cz = cur
        for d, step in _NEIGHBORS:
            x, y, z = cx + d[0], cy + d[1], cz + d[2]
            if not (0 <= x < nx and 0 <= y < ny and 0 <= z < nz):
                continue
            nxt = (x, y, z)
            if not passable[nxt] or nxt in closed:
                continue
            cand = g_cost[cur] + res * step
            if cand < g_cost.get(nxt, math.inf):
                g_cost[nxt] = cand
                came[nxt] = cur
                heapq.heappush(open_heap, (cand + h(nxt), nxt))
    raise UnreachableError("no path between start and goal at the requested clearance")


def dijkstra_cost(grid: VoxelGrid, start: np.ndarray, goal: np.ndarray, clearance: float = 0.0) -> float:
    """Independent optimal path cost, used as the A* oracle."""
    field = distance_transform(grid)
    passable = (~grid.occupied) & (field.dist >= clearance)
    s_idx = grid.to_index(start)
    g_idx = grid.to_index(goal)
    for name, idx in (("start", s_idx), ("goal", g_idx)):
        if idx is None or not passable[idx]:
            raise InvalidEndpointError(f"{name} voxel infeasible")
    res = grid.resolution
    dist = {s_idx: 0.0}
    heap = [(0.0, s_idx)]
    done: set = set()
    nx, ny, nz = grid.dims
    while heap:
        d_cur, cur = heapq.heappop(heap)
        if cur in done:
            continue
        if cur == g_idx:
            return d_cur
        done.add(cur)
        cx, cy, cz = cur
        for d, step in _NEIGHBORS:
            x, y, z = cx + d[0], cy + d[1], cz + d[2]
            if not (0 <= x < nx and 0 <= y < ny and 0 <= z < nz):
                continue
            nxt = (x, y, z)
            if not passable[nxt] or nxt in done:
                continue
            cand = d_cur + res * step
            if cand < dist.get(nxt, math.inf):
                dist[nxt] = cand
                heapq.heappush(heap, (cand, nxt))
    raise UnreachableError("no path between start and goal")


@dataclass(frozen=True)
class Polyline:
    vertices: tuple  # of 3-vectors
    waypoint_marks: tuple  # indices into vertices

    def __post_init__(self):
        verts = tuple(np.asarray(v, dtype=float) for v in self.vertices)
        for a, b in zip(verts, verts[1:]):
            if np.allclose(a, b):
                raise InvalidArgumentError("consecutive polyline vertices must be distinct")
        object.__setattr__(self, "vertices", verts)

    def segment_lengths(self) -> np.ndarray:
        return np.array(
            [float(np.linalg.norm(b - a)) for a, b in zip(self.vertices, self.vertices[1:])]
        )

    def to_json(self) -> dict:
        return {
            "vertices": [[float(x) for x in v] for v in self.vertices],
            "waypoint_marks": list(self.waypoint_marks),
        }


def extract_path(
    grid: VoxelGrid,
    waypoints: list[Pose4],
    clearance: float = 0.0,
    field: DistanceField | None = None,
) -> Polyline:
    """Chain per-leg A* paths through the ordered waypoints.

    The first and last vertex of each leg are replaced by the exact waypoint
    positions (the planner interpolates those downstream); interior vertices
    are voxel centers. Junction duplicates are removed.
    """
    if len(waypoints) < 2:
        raise InvalidArgumentError("need at least two waypoints")
    if field is None:
        field = distance_transform(grid)
    vertices: list[np.ndarray] = []
    marks: list[int] = []
    for leg, (a, b) in enumerate(zip(waypoints, waypoints[1:])):
        try:
            centers = astar(grid, a.p, b.p, clearance=clearance, field=field)
        except UnreachableError as exc:
            raise UnreachableError(f"leg {leg} (waypoint {leg} -> {leg + 1}): {exc}") from exc
        # exact endpoints in place of their voxel centers
        pts = [a.p] + centers[1:-1] + [b.p]
        deduped = [pts[0]]
        for p in pts[1:]:
            if not np.allclose(p, deduped[-1]):
                deduped.append(p)
        if len(deduped) < 2:
            deduped = [a.p, b.p] if not np.allclose(a.p, b.p) else deduped
        if leg == 0:
            vertices.extend(deduped)
            marks.append(0)
        else:
            vertices.extend(deduped[1:])
        marks.append(len(vertices) - 1)
    if len(vertices) < 2:
        raise InvalidArgumentError("degenerate path: all waypoints coincide")
    return Polyline(vertices=tuple(vertices), waypoint_marks=tuple(marks))


@dataclass(frozen=True)
class CorridorBox:
    center: np.ndarray
    axes: np.ndarray  # rows n, b, t
    half_extents: np.ndarray  # (w/2, h/2, len/2)

    def __post_init__(self):
        axes = np.asarray(self.axes, dtype=float)
        if not np.allclose(axes @ axes.T, np.eye(3), atol=1e-9):
            raise InvalidArgumentError("corridor box axes must be orthonormal")
        he = np.asarray(self.half_extents, dtype=float)
        if np.any(he <= 0):
            raise InvalidArgumentError("half extents must be positive")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "half_extents", he)

    def contains(self, point: np.ndarray, tol: float = 1e-9) -> bool:
        local = self.axes @ (np.asarray(point, dtype=float) - self.center)
        return bool(np.all(np.abs(local) <= self.half_extents + tol))

    def to_json(self) -> dict:
        return {
            "center": [float(x) for x in self.center],
            "axes": [[float(x) for x in row] for row in self.axes],
            "half_extents": [float(x) for x in self.half_extents],
        }


def corridor_contains(boxes: list[CorridorBox], point: np.ndarray, tol: float = 1e-9) -> bool:
    return any(b.contains(point, tol=tol) for b in boxes)


def _segment_axes(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    z = np.array([0.0, 0.0, 1.0])
    n = np.cross(t, z)
    if np.linalg.norm(n) < 1e-9:
        n = np.cross(t, np.array([1.0, 0.0, 0.0]))
    n = n / np.linalg.norm(n)
    b = np.cross(t, n)
    return n, b


def _box_samples(center, n, b, t, hw, hh, hl, pitch):
    """Dense point lattice over the full box volume at the given pitch."""
    def axis_pts(h):
        m = max(2, int(math.ceil(2 * h / pitch)) + 1)
        return np.linspace(-h, h, m)
    un, ub, ut = axis_pts(hw), axis_pts(hh), axis_pts(hl)
    grid = np.stack(np.meshgrid(un, ub, ut, indexing="ij"), axis=-1).reshape(-1, 3)
    return center + grid[:, 0, None] * n + grid[:, 1, None] * b + grid[:, 2, None] * t


def grow_corridor(
    polyline: Polyline,
    field: DistanceField,
    delta_safe: float,
    max_halfwidth: float,
) -> list[CorridorBox]:
    """One safety box per polyline segment, grown until the margin binds.

    Cross-section half-extents start at half a voxel and grow in whole-voxel
    increments while every sampled point of the box (pitch = resolution / 2)
    keeps a clearance-field value of at least delta_safe, capped at
    max_halfwidth.
    """
    res = field.grid.resolution
    pitch = res / 2.0
    boxes = []
    verts = polyline.vertices
    for seg, (a, b_v) in enumerate(zip(verts, verts[1:])):
        seg_vec = b_v - a
        length = float(np.linalg.norm(seg_vec))
        t = seg_vec / length
        n, b = _segment_axes(t)
        center = 0.5 * (a + b_v)
        hl = length / 2.0

        def ok(hw, hh):
            pts = _box_samples(center, n, b, t, hw, hh, hl, pitch)
            return bool(np.min(field.values_at(pts)) >= delta_safe)

        hw = hh = res / 2.0
        if not ok(hw, hh):
            raise CorridorInfeasibleError(
                f"segment {seg}: even the one-voxel box violates the safety margin"
            )
        grow_w = grow_h = True
        while grow_w or grow_h:
            if grow_w:
                cand = min(hw + res, max_halfwidth)
                if cand > hw and ok(cand, hh):
                    hw = cand
                    if hw >= max_halfwidth:
                        grow_w = False
                else:
                    grow_w = False
            if grow_h:
                cand = min(hh + res, max_halfwidth)
                if cand > hh and ok(hw, cand):
                    hh = cand
                    if hh >= max_halfwidth:
                        grow_h = False
                else:
                    grow_h = False
        boxes.append(
            CorridorBox(center=center, axes=np.stack([n, b, t]), half_extents=np.array([hw, hh, hl]))
        )
    return boxes


# ---------------------------------------------------------------------------
# Map file I/O


def load_grid(path: str) -> VoxelGrid:
    """Load a voxel map: JSON+base64 occupancy, or ASCII art for test maps."""
    with open(path) as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return _grid_from_json(text, path)
    return grid_from_ascii(text)


def _grid_from_json(text: str, path: str) -> VoxelGrid:
    try:
        data = json.loads(text)
        origin = np.asarray(data["origin"], dtype=float)
        resolution = float(data["resolution"])
        dims = tuple(int(d) for d in data["dims"])
        raw = base64.b64decode(data["occupancy"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: voxel map schema violation: {exc}") from exc
    n = dims[0] * dims[1] * dims[2]
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), count=n)
    occ = bits.astype(bool).reshape(dims)
    return VoxelGrid(origin=origin, resolution=resolution, occupied=occ)


def save_grid(path: str, grid: VoxelGrid) -> None:
    packed = np.packbits(grid.occupied.astype(np.uint8).reshape(-1))
    data = {
        "origin": [float(x) for x in grid.origin],
        "resolution": grid.resolution,
        "dims": list(grid.dims),
        "occupancy": base64.b64encode(packed.tobytes()).decode("ascii"),
    }
    with open(path, "w") as fh:
        json.dump(data, fh)


def grid_from_ascii(text: str, origin=(0.0, 0.0, 0.0), resolution: float = 1.0) -> VoxelGrid:
    """Parse hand-written maps: z-slices separated by blank lines.

    Within a slice, rows are y (first row = highest y), columns are x;
    '#' marks occupied, '.' free. An optional leading "meta" line of the form
    ``!origin x y z res`` overrides geometry.
    """
    lines = [ln.rstrip() for ln in text.splitlines()]
    if lines and lines[0].startswith("!origin"):
        parts = lines[0].split()
        origin = tuple(float(v) for v in parts[1:4])
        resolution = float(parts[4])
        lines = lines[1:]
    slices: list[list[str]] = [[]]
    for ln in lines:
        if not ln.strip():
            if slices[-1]:
                slices.append([])
            continue
        slices[-1].append(ln)
    slices = [s for s in slices if s]
    if not slices:
        raise ParseError("ASCII map contains no voxels")
    ny = len(slices[0])
    nx = len(slices[0][0])
    nz = len(slices)
    occ = np.zeros((nx, ny, nz), dtype=bool)
    for z, rows in enumerate(slices):
        if len(rows) != ny or any(len(r) != nx for r in rows):
            raise ParseError(f"ASCII map slice {z} has inconsistent shape")
        for row_i, row in enumerate(rows):
            y = ny - 1 - row_i
            for x, ch in enumerate(row):
                if ch == "#":
                    occ[x, y, z] = True
                elif ch != ".":
                    raise ParseError(f"ASCII map: unexpected character {ch!r}")
    return VoxelGrid(origin=np.asarray(origin, dtype=float), resolution=resolution, occupied=occ)
