import math

import numpy as np
import pytest

from cineplan.errors import (
    CorridorInfeasibleError,
    InvalidArgumentError,
    InvalidEndpointError,
    UnreachableError,
)
from cineplan.geom import Pose4
from cineplan.mapplan import (
    CorridorBox,
    Polyline,
    VoxelGrid,
    astar,
    corridor_contains,
    dijkstra_cost,
    distance_transform,
    extract_path,
    grid_from_ascii,
    grow_corridor,
    load_grid,
    save_grid,
)


def make_grid(occ, res=1.0, origin=(0.0, 0.0, 0.0)):
    return VoxelGrid(origin=np.array(origin, dtype=float), resolution=res,
                     occupied=np.asarray(occ, dtype=bool))


def pose(x, y, z):
    return Pose4(p=np.array([x, y, z], dtype=float), theta=0.0)


def brute_force_distance(grid):
    """Distance to the nearest occupied voxel center, boundary counted as
    occupied, computed by direct enumeration."""
    nx, ny, nz = grid.occupied.shape
    occ = []
    for i in range(-1, nx + 1):
        for j in range(-1, ny + 1):
            for k in range(-1, nz + 1):
                inside = 0 <= i < nx and 0 <= j < ny and 0 <= k < nz
                if not inside or grid.occupied[i, j, k]:
                    occ.append((i, j, k))
    occ = np.array(occ, dtype=float)
    out = np.zeros((nx, ny, nz))
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if grid.occupied[i, j, k]:
                    continue
                d = np.linalg.norm(occ - np.array([i, j, k]), axis=1)
                out[i, j, k] = grid.resolution * d.min()
    return out


class TestVoxelGrid:
    def test_index_round_trip(self):
        g = make_grid(np.zeros((4, 4, 4)), res=0.5)
        idx = g.to_index(np.array([1.24, 0.01, 1.99]))
        assert idx == (2, 0, 3)
        assert np.allclose(g.center(idx), [1.25, 0.25, 1.75])

    def test_out_of_bounds(self):
        g = make_grid(np.zeros((4, 4, 4)), res=0.5)
        assert g.to_index(np.array([-0.1, 0.0, 0.0])) is None
        assert not g.is_free(np.array([5.0, 0.0, 0.0]))

    def test_is_free(self):
        occ = np.zeros((2, 2, 2))
        occ[1, 1, 1] = 1
        g = make_grid(occ)
        assert g.is_free(np.array([0.5, 0.5, 0.5]))
        assert not g.is_free(np.array([1.5, 1.5, 1.5]))


class TestDistanceTransform:
    def test_matches_brute_force_random_grids(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            occ = rng.random((8, 8, 8)) < 0.15
            g = make_grid(occ, res=0.5)
            field = distance_transform(g)
            expected = brute_force_distance(g)
            free = ~occ
            assert np.allclose(field.dist[free], expected[free], atol=1e-9)

    def test_single_center_voxel(self):
        occ = np.zeros((5, 5, 5))
        occ[2, 2, 2] = 1
        g = make_grid(occ)
        field = distance_transform(g)
        # the corner is one voxel from the boundary shell, not sqrt(12) from
        # the center, because out-of-bounds counts as occupied
        assert field.dist[0, 0, 0] == pytest.approx(1.0)
        assert field.dist[2, 2, 3] == pytest.approx(1.0)

    def test_interior_of_open_box(self):
        g = make_grid(np.zeros((7, 7, 7)))
        field = distance_transform(g)
        assert field.dist[3, 3, 3] == pytest.approx(4.0)

    def test_fully_occupied(self):
        g = make_grid(np.ones((3, 3, 3)))
        field = distance_transform(g)
        assert np.all(field.dist == 0.0)

    def test_value_at_out_of_bounds_is_zero(self):
        g = make_grid(np.zeros((3, 3, 3)))
        field = distance_transform(g)
        assert field.value_at(np.array([-1.0, 0.0, 0.0])) == 0.0

    def test_values_at_vectorized(self):
        g = make_grid(np.zeros((5, 5, 5)), res=0.5)
        field = distance_transform(g)
        pts = np.array([[1.25, 1.25, 1.25], [0.25, 0.25, 0.25], [9.0, 0.0, 0.0]])
        vals = field.values_at(pts)
        assert vals[0] == pytest.approx(field.value_at(pts[0]))
        assert vals[2] == 0.0


class TestAstar:
    def test_same_voxel(self):
        g = make_grid(np.zeros((4, 4, 4)))
        path = astar(g, np.array([0.5, 0.5, 0.5]), np.array([0.6, 0.7, 0.8]))
        assert len(path) == 1

    def test_straight_line_cost(self):
        g = make_grid(np.zeros((6, 1, 1)))
        path = astar(g, np.array([0.5, 0.5, 0.5]), np.array([5.5, 0.5, 0.5]))
        assert len(path) == 6
        cost = sum(np.linalg.norm(b - a) for a, b in zip(path, path[1:]))
        assert cost == pytest.approx(5.0)

    def test_diagonal_shortcut(self):
        g = make_grid(np.zeros((5, 5, 1)))
        path = astar(g, np.array([0.5, 0.5, 0.5]), np.array([4.5, 4.5, 0.5]))
        cost = sum(np.linalg.norm(b - a) for a, b in zip(path, path[1:]))
        assert cost == pytest.approx(4 * math.sqrt(2))

    def test_wall_with_door(self):
        occ = np.zeros((7, 7, 1))
        occ[3, :, 0] = 1
        occ[3, 3, 0] = 0  # doorway
        g = make_grid(occ)
        path = astar(g, np.array([0.5, 0.5, 0.5]), np.array([6.5, 0.5, 0.5]))
        # every path vertex is free and the path threads the doorway column
        cols = {tuple(g.to_index(p)[:2]) for p in path}
        assert (3, 3) in cols
        for p in path:
            assert g.is_free(p)

    def test_blocked_raises(self):
        occ = np.zeros((5, 5, 1))
        occ[2, :, 0] = 1
        g = make_grid(occ)
        with pytest.raises(UnreachableError):
            astar(g, np.array([0.5, 0.5, 0.5]), np.array([4.5, 4.5, 0.5]))

    def test_occupied_endpoint_raises(self):
        occ = np.zeros((3, 3, 3))
        occ[0, 0, 0] = 1
        g = make_grid(occ)
        with pytest.raises(InvalidEndpointError):
            astar(g, np.array([0.5, 0.5, 0.5]), np.array([2.5, 2.5, 2.5]))

    def test_clearance_forces_detour(self):
        occ = np.zeros((11, 11, 11))
        occ[5, 5, 5] = 1
        g = make_grid(occ)
        start, goal = np.array([1.5, 5.5, 5.5]), np.array([9.5, 5.5, 5.5])
        hugging = astar(g, start, goal)
        careful = astar(g, start, goal, clearance=1.5)
        def cost(p):
            return sum(np.linalg.norm(b - a) for a, b in zip(p, p[1:]))
        assert cost(careful) > cost(hugging)

    def test_matches_dijkstra_on_random_grids(self):
        rng = np.random.default_rng(99)
        checked = 0
        while checked < 100:
            occ = rng.random((16, 16, 16)) < 0.2
            occ[0, 0, 0] = occ[15, 15, 15] = False
            g = make_grid(occ, res=0.5)
            start = g.center((0, 0, 0))
            goal = g.center((15, 15, 15))
            try:
                oracle = dijkstra_cost(g, start, goal)
            except UnreachableError:
                continue
            path = astar(g, start, goal)
            cost = sum(np.linalg.norm(b - a) for a, b in zip(path, path[1:]))
            assert cost == pytest.approx(oracle, abs=1e-9)
            checked += 1


class TestExtractPath:
    def test_exact_endpoints(self):
        g = make_grid(np.zeros((6, 6, 3)), res=0.5)
        a, b = pose(0.31, 0.42, 0.7), pose(2.63, 2.11, 0.7)
        poly = extract_path(g, [a, b])
        assert np.allclose(poly.vertices[0], a.p)
        assert np.allclose(poly.vertices[-1], b.p)
        assert poly.waypoint_marks[0] == 0
        assert poly.waypoint_marks[-1] == len(poly.vertices) - 1

    def test_multi_leg_marks(self):
        g = make_grid(np.zeros((8, 8, 3)), res=0.5)
        wps = [pose(0.3, 0.3, 0.7), pose(3.2, 0.3, 0.7), pose(3.2, 3.2, 0.7)]
        poly = extract_path(g, wps)
        assert len(poly.waypoint_marks) == 3
        for mark, wp in zip(poly.waypoint_marks, wps):
            assert np.allclose(poly.vertices[mark], wp.p)

    def test_single_waypoint_rejected(self):
        g = make_grid(np.zeros((4, 4, 4)))
        with pytest.raises(InvalidArgumentError):
            extract_path(g, [pose(0.5, 0.5, 0.5)])

    def test_no_consecutive_duplicates(self):
        g = make_grid(np.zeros((8, 8, 3)), res=0.5)
        # waypoint sits exactly on a voxel center so the leg endpoints collide
        # with their voxel centers
        wps = [pose(0.25, 0.25, 0.75), pose(2.75, 0.25, 0.75), pose(2.75, 2.75, 0.75)]
        poly = extract_path(g, wps)
        for u, v in zip(poly.vertices, poly.vertices[1:]):
            assert not np.allclose(u, v)

    def test_unreachable_leg_reports_index(self):
        occ = np.zeros((7, 7, 1))
        occ[:, 3, 0] = 1
        g = make_grid(occ)
        with pytest.raises(UnreachableError, match="leg 1"):
            extract_path(g, [pose(0.5, 0.5, 0.5), pose(6.5, 0.5, 0.5),
                             pose(6.5, 6.5, 0.5)])


class TestCorridorBox:
    def box(self):
        return CorridorBox(
            center=np.array([1.0, 2.0, 3.0]),
            axes=np.eye(3),
            half_extents=np.array([0.5, 0.4, 1.0]),
        )

    def test_center_inside(self):
        assert self.box().contains(np.array([1.0, 2.0, 3.0]))

    def test_face_boundary(self):
        b = self.box()
        assert b.contains(np.array([1.5, 2.0, 3.0]))
        assert not b.contains(np.array([1.5 + 1e-6, 2.0, 3.0]))

    def test_random_points_vs_local_coords(self):
        rng = np.random.default_rng(17)
        # random oriented box via QR orthonormalization
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        center = rng.standard_normal(3)
        he = np.array([0.7, 0.3, 1.2])
        box = CorridorBox(center=center, axes=q, half_extents=he)
        pts = center + rng.uniform(-2, 2, size=(10_000, 3))
        for p in pts:
            local = q @ (p - center)
            expected = bool(np.all(np.abs(local) <= he + 1e-9))
            assert box.contains(p) == expected

    def test_nonorthonormal_axes_rejected(self):
        with pytest.raises(InvalidArgumentError):
            CorridorBox(center=np.zeros(3), axes=np.ones((3, 3)),
                        half_extents=np.ones(3))

    def test_corridor_contains_any_box(self):
        boxes = [
            CorridorBox(center=np.array([0.0, 0, 0]), axes=np.eye(3),
                        half_extents=np.array([0.5, 0.5, 0.5])),
            CorridorBox(center=np.array([2.0, 0, 0]), axes=np.eye(3),
                        half_extents=np.array([0.5, 0.5, 0.5])),
        ]
        assert corridor_contains(boxes, np.array([2.2, 0.1, 0.0]))
        assert not corridor_contains(boxes, np.array([1.0, 0.0, 0.0]))


class TestGrowCorridor:
    def open_room(self, n=24, res=0.25):
        occ = np.zeros((n, n, 12), dtype=bool)
        occ[0, :, :] = occ[-1, :, :] = True
        occ[:, 0, :] = occ[:, -1, :] = True
        occ[:, :, 0] = occ[:, :, -1] = True
        return make_grid(occ, res=res)

    def test_growth_caps_at_max_halfwidth(self):
        g = self.open_room()
        field = distance_transform(g)
        poly = Polyline(
            vertices=(np.array([2.0, 3.0, 1.5]), np.array([4.0, 3.0, 1.5])),
            waypoint_marks=(0, 1),
        )
        boxes = grow_corridor(poly, field, delta_safe=0.2, max_halfwidth=0.6)
        assert len(boxes) == 1
        hw, hh, hl = boxes[0].half_extents
        assert hw <= 0.6 + 1e-12 and hh <= 0.6 + 1e-12
        assert hl == pytest.approx(1.0)

    def test_box_respects_safety_margin(self):
        occ = np.zeros((24, 24, 12), dtype=bool)
        occ[:, 12:, :] = True  # solid wall along +y
        g = make_grid(occ, res=0.25)
        field = distance_transform(g)
        poly = Polyline(
            vertices=(np.array([1.0, 1.5, 1.5]), np.array([5.0, 1.5, 1.5])),
            waypoint_marks=(0, 1),
        )
        delta = 0.3
        boxes = grow_corridor(poly, field, delta_safe=delta, max_halfwidth=5.0)
        box = boxes[0]
        # every dense sample of the box keeps the margin
        rng = np.random.default_rng(5)
        local = rng.uniform(-1, 1, size=(5000, 3)) * box.half_extents
        pts = box.center + local @ box.axes
        assert np.min(field.values_at(pts)) >= delta - 1e-9

    def test_infeasible_tight_gap(self):
        occ = np.zeros((12, 12, 12), dtype=bool)
        occ[:, :5, :] = True
        occ[:, 7:, :] = True  # a 2-voxel slot
        g = make_grid(occ, res=0.25)
        field = distance_transform(g)
        poly = Polyline(
            vertices=(np.array([0.5, 1.5, 1.5]), np.array([2.5, 1.5, 1.5])),
            waypoint_marks=(0, 1),
        )
        with pytest.raises(CorridorInfeasibleError):
            grow_corridor(poly, field, delta_safe=0.5, max_halfwidth=2.0)

    def test_vertical_segment_axis_fallback(self):
        g = self.open_room()
        field = distance_transform(g)
        poly = Polyline(
            vertices=(np.array([3.0, 3.0, 0.8]), np.array([3.0, 3.0, 2.2])),
            waypoint_marks=(0, 1),
        )
        boxes = grow_corridor(poly, field, delta_safe=0.2, max_halfwidth=0.5)
        t = boxes[0].axes[2]
        assert np.allclose(np.abs(t), [0.0, 0.0, 1.0])

    def test_boxes_cover_polyline(self):
        g = self.open_room()
        field = distance_transform(g)
        poly = Polyline(
            vertices=(np.array([1.5, 1.5, 1.5]), np.array([3.0, 2.0, 1.5]),
                      np.array([4.5, 4.5, 1.8])),
            waypoint_marks=(0, 2),
        )
        boxes = grow_corridor(poly, field, delta_safe=0.2, max_halfwidth=1.0)
        assert len(boxes) == 2
        for a, b in zip(poly.vertices, poly.vertices[1:]):
            for s in np.linspace(0, 1, 50):
                assert corridor_contains(boxes, a + s * (b - a), tol=1e-9)


class TestGridIO:
    def test_json_round_trip(self, tmp_path):
        rng = np.random.default_rng(8)
        occ = rng.random((6, 5, 4)) < 0.3
        g = make_grid(occ, res=0.25, origin=(-1.0, 2.0, 0.0))
        path = str(tmp_path / "grid.json")
        save_grid(path, g)
        g2 = load_grid(path)
        assert np.array_equal(g.occupied, g2.occupied)
        assert np.allclose(g.origin, g2.origin)
        assert g.resolution == g2.resolution

    def test_ascii_parse(self):
        text = "!origin 1 2 0 0.5\n###\n#.#\n###\n\n...\n...\n...\n"
        g = grid_from_ascii(text)
        assert g.dims == (3, 3, 2)
        assert g.resolution == 0.5
        assert np.allclose(g.origin, [1.0, 2.0, 0.0])
        assert g.occupied[0, 0, 0]
        assert not g.occupied[1, 1, 0]
        assert not g.occupied[:, :, 1].any()
