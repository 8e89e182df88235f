import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from activeloc import oracles
from activeloc.worldmap import (
    CellCode,
    MapError,
    MapFormatError,
    OccupancyGrid,
    Pose,
    disc_collides,
    distance_transform,
    format_map,
    load_map,
    parse_map,
    raycast,
    sample_traversable_pose,
    sample_traversable_poses,
    save_map,
    wrap_angle,
)


def empty_grid(h=100, w=100, res=0.1):
    return OccupancyGrid(np.zeros((h, w), dtype=int), res)


class TestWrapAndPose:
    def test_range(self):
        a = np.linspace(-20, 20, 10001)
        w = wrap_angle(a)
        assert np.all(w >= -math.pi) and np.all(w < math.pi)
        np.testing.assert_allclose(np.sin(w), np.sin(a), atol=1e-12)
        np.testing.assert_allclose(np.cos(w), np.cos(a), atol=1e-12)

    def test_pi_maps_to_minus_pi(self):
        assert wrap_angle(math.pi) == -math.pi
        assert wrap_angle(-math.pi) == -math.pi

    def test_tiny_negative(self):
        assert wrap_angle(-1e-18) < math.pi

    def test_pose_normalizes(self):
        p = Pose(1, 2, 3 * math.pi / 2)
        assert p.phi == pytest.approx(-math.pi / 2)
        assert isinstance(p.x, float)


class TestMapIO:
    def test_two_by_two(self):
        g = parse_map("OGMAP 1\n2 2 0.1 0 0 0\n0 0\n0 2\n")
        assert g.cells[1, 1] == CellCode.OCCUPIED
        assert g.occupied.sum() == 1

    def test_bad_code_names_position(self):
        with pytest.raises(MapFormatError) as e:
            parse_map("OGMAP 1\n2 2 0.1 0 0 0\n0 0\n0 3\n")
        assert e.value.row == 1 and e.value.col == 1
        assert "row 1" in str(e.value) and "col 1" in str(e.value)

    @pytest.mark.parametrize(
        "text",
        [
            "",
            "OGMAP 2\n1 1 0.1 0 0 0\n0\n",
            "OGMAP 1\n1 1 0.1 0 0\n0\n",
            "OGMAP 1\n2 1 0.1 0 0 0\n0\n",
            "OGMAP 1\n1 2 0.1 0 0 0\n0\n",
            "OGMAP 1\n1 1 0.1 0 0 0\n0\n0\n",
            "OGMAP 1\n1 1 -0.1 0 0 0\n0\n",
            "OGMAP 1\n1 1 abc 0 0 0\n0\n",
        ],
    )
    def test_malformed(self, text):
        with pytest.raises(MapFormatError):
            parse_map(text)

    def test_comments_and_whitespace(self):
        g = parse_map("# a map\nOGMAP 1\n  2   1 0.5 1 2 0  # dims\n\n0\t2\n")
        assert g.cells.tolist() == [[0, 2]]
        assert g.resolution == 0.5
        assert (g.origin.x, g.origin.y) == (1.0, 2.0)

    def test_row_zero_is_first_body_line(self):
        g = parse_map("OGMAP 1\n1 2 0.1 0 0 0\n2\n0\n")
        assert g.cells[0, 0] == 2
        assert g.world_to_cell(0.05, 0.05) == (0, 0)

    def test_file_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        for i in range(50):
            h, w = rng.integers(1, 25, size=2)
            g = OccupancyGrid(rng.integers(0, 3, size=(h, w)), float(rng.choice([0.05, 0.1, 0.2])))
            p = tmp_path / f"m{i}.ogmap"
            save_map(g, p)
            first = p.read_bytes()
            save_map(load_map(p), p)
            assert p.read_bytes() == first
            assert load_map(p) == g

    def test_invalid_grid(self):
        with pytest.raises(MapError):
            OccupancyGrid([[0, 5]])
        with pytest.raises(MapError):
            OccupancyGrid([[0]], resolution=0)

    def test_cells_read_only(self):
        g = empty_grid(3, 3)
        with pytest.raises(ValueError):
            g.cells[0, 0] = 2


class TestRaycast:
    def test_wall_ahead(self):
        cells = np.zeros((100, 100), dtype=int)
        cells[:, 55] = 2
        g = OccupancyGrid(cells, 0.1)
        # origin at the center of column 50; wall face 5 cells ahead of the cell edge
        assert raycast(g, Pose(5.0, 5.05), 0.0, 10.0) == pytest.approx(0.5, abs=1e-12)

    def test_no_obstacle(self):
        g = empty_grid()
        assert raycast(g, Pose(5.0, 5.0), 0.3, 2.0) == 2.0

    def test_leaves_map(self):
        g = empty_grid(10, 10)
        assert raycast(g, Pose(0.5, 0.5), 0.0, 3.0) == 3.0

    def test_origin_outside(self):
        with pytest.raises(MapError):
            raycast(empty_grid(10, 10), Pose(-0.5, 0.5), 0.0, 3.0)

    def test_against_fine_step_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            h, w = rng.integers(10, 40, size=2)
            g = oracles.random_grid(rng, (h, w), p_occ=rng.uniform(0.02, 0.2))
            wm, hm = g.extent
            pose = Pose(rng.uniform(0, wm), rng.uniform(0, hm))
            angle = rng.uniform(-math.pi, math.pi)
            r = rng.uniform(0.5, 5.0)
            fast = raycast(g, pose, angle, r)
            slow = oracles.raycast_fine_step(g, pose, angle, r)
            assert abs(fast - slow) <= g.resolution

    def test_coarse_oracle_misses_corner_clip(self):
        # the voxel walk catches a ~8 mm corner clip that a res/10 stepper jumps over
        cells = np.zeros((20, 20), dtype=int)
        cells[13, 16] = 2
        g = OccupancyGrid(cells, 0.1)
        pose = Pose(1.7266, 1.2268)
        fast = raycast(g, pose, 2.5926, 4.0)
        assert fast < 0.15
        assert oracles.raycast_fine_step(g, pose, 2.5926, 4.0, step=0.01) > 0.15
        assert oracles.raycast_fine_step(g, pose, 2.5926, 4.0) == pytest.approx(fast, abs=g.resolution)

    def test_monotone_in_max_range(self):
        rng = np.random.default_rng(2)
        g = oracles.random_grid(rng, (30, 30), p_occ=0.05)
        for _ in range(100):
            pose = Pose(*rng.uniform(0, 3, 2))
            a = rng.uniform(-math.pi, math.pi)
            full = raycast(g, pose, a, 10.0)
            m = rng.uniform(0.1, 4.0)
            assert raycast(g, pose, a, m) == pytest.approx(min(full, m), abs=1e-12)

    def test_two_pi_invariance(self):
        rng = np.random.default_rng(3)
        g = oracles.random_grid(rng, (30, 30), p_occ=0.05)
        for _ in range(100):
            pose = Pose(*rng.uniform(0, 3, 2))
            a = rng.uniform(-math.pi, math.pi)
            assert raycast(g, pose, a + 2 * math.pi, 10.0) == pytest.approx(raycast(g, pose, a, 10.0), abs=1e-9)

    def test_rotated_origin(self):
        cells = np.zeros((10, 10), dtype=int)
        cells[:, 9] = 2
        g = OccupancyGrid(cells, 0.1, Pose(0.0, 0.0, math.pi / 2))
        # grid +x is world +y
        assert raycast(g, Pose(-0.55, 0.55), math.pi / 2, 5.0) == pytest.approx(0.35, abs=1e-9)


class TestDistanceTransform:
    def test_single_cell(self):
        cells = np.zeros((7, 7), dtype=int)
        cells[3, 3] = 2
        d = distance_transform(OccupancyGrid(cells, 0.1)).values
        assert d[3, 3] == 0
        for r, c in [(2, 3), (4, 3), (3, 2), (3, 4)]:
            assert d[r, c] == pytest.approx(0.1)
        assert d[0, 0] == pytest.approx(math.sqrt(18) * 0.1)

    def test_no_occupied(self):
        with pytest.raises(MapError):
            distance_transform(empty_grid(3, 3))

    def test_all_pairs_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            g = oracles.random_grid(rng, (30, 30), p_occ=rng.uniform(0.01, 0.3))
            if g.occupied.any():
                np.testing.assert_array_equal(distance_transform(g).values, oracles.distance_all_pairs(g))

    def test_zero_exactly_on_occupied(self):
        g = oracles.random_grid(np.random.default_rng(5), (30, 30))
        d = distance_transform(g).values
        assert np.all((d == 0) == g.occupied)

    def test_lipschitz(self):
        g = oracles.random_grid(np.random.default_rng(6), (40, 40), p_occ=0.03)
        d = distance_transform(g).values
        bound = g.resolution * math.sqrt(2) + 1e-12
        assert np.abs(np.diff(d, axis=0)).max() <= bound
        assert np.abs(np.diff(d, axis=1)).max() <= bound
        assert np.abs(d[1:, 1:] - d[:-1, :-1]).max() <= bound
        assert np.abs(d[1:, :-1] - d[:-1, 1:]).max() <= bound


class TestTraversability:
    def test_single_free_cell(self):
        cells = np.full((5, 5), 2)
        cells[2, 3] = 0
        g = OccupancyGrid(cells, 0.1)
        rng = np.random.default_rng(0)
        for _ in range(20):
            p = sample_traversable_pose(g, rng, robot_radius=0.0)
            assert g.world_to_cell(p.x, p.y) == (2, 3)

    def test_no_traversable(self):
        cells = np.full((5, 5), 2)
        cells[2, 2] = 0
        with pytest.raises(MapError):
            sample_traversable_pose(OccupancyGrid(cells, 0.1), np.random.default_rng(0))

    def test_uniform_over_cells(self):
        cells = np.zeros((10, 10), dtype=int)
        cells[:, 5:] = 2
        g = OccupancyGrid(cells, 0.1)
        mask = g.traversable(0.0)
        assert mask.sum() == 50
        p = sample_traversable_poses(g, np.random.default_rng(1), 10_000, robot_radius=0.0)
        r, c = g.world_to_cell(p[:, 0], p[:, 1])
        counts = np.bincount(r * 10 + c, minlength=100)[mask.ravel()]
        e = 10_000 / 50
        sd = math.sqrt(10_000 * (1 / 50) * (1 - 1 / 50))
        assert np.all(np.abs(counts - e) < 4 * sd)
        assert np.all((p[:, 2] >= -math.pi) & (p[:, 2] < math.pi))

    def test_seed_determinism(self):
        g = empty_grid(20, 20)
        a = sample_traversable_poses(g, np.random.default_rng(7), 50)
        b = sample_traversable_poses(g, np.random.default_rng(7), 50)
        np.testing.assert_array_equal(a, b)

    def test_traversable_discs_never_collide(self):
        rng = np.random.default_rng(8)
        g = oracles.random_grid(rng, (40, 40), p_occ=0.03)
        p = sample_traversable_poses(g, rng, 500)
        for x, y, _ in p:
            assert not disc_collides(g, x, y, 0.18)

    def test_border_blocks(self):
        g = empty_grid(20, 20)
        m = g.traversable(0.18)
        assert not m[0].any() and not m[:, -1].any()
        assert m[10, 10]


@settings(max_examples=40, deadline=None)
@given(
    h=st.integers(1, 12),
    w=st.integers(1, 12),
    seed=st.integers(0, 2**32 - 1),
    res=st.sampled_from([0.05, 0.1, 0.25, 1.0]),
)
def test_format_parse_identity(h, w, seed, res):
    rng = np.random.default_rng(seed)
    g = OccupancyGrid(rng.integers(0, 3, size=(h, w)), res, Pose(*rng.normal(size=3)))
    text = format_map(g)
    assert format_map(parse_map(text)) == text
