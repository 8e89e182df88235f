import math

import numpy as np
import pytest

from activeloc import oracles
from activeloc.belief import (
    ModeBinning,
    dump_belief,
    extract_local_belief,
    extract_modes,
    project_particles,
    write_pgm,
)
from activeloc.pfilter import ParticleSet, estimate_pose, normalize
from activeloc.worldmap import OccupancyGrid, Pose


def grid(n=30, seed=0):
    return oracles.random_grid(np.random.default_rng(seed), (n, n))


def random_set(rng, k, extent=3.0):
    poses = np.column_stack([rng.uniform(0, extent, k), rng.uniform(0, extent, k), rng.uniform(-math.pi, math.pi, k)])
    return normalize(ParticleSet(poses, rng.normal(size=k)))


class TestProjection:
    def test_single_particle(self):
        g = grid()
        bm = project_particles(ParticleSet.uniform([[1.05, 2.05, math.pi / 2]]), g)
        r, c = g.world_to_cell(1.05, 2.05)
        assert bm[r, c, 1] == 1.0
        assert bm[r, c, 2] == pytest.approx(1.0)
        assert bm[r, c, 3] == pytest.approx(0.0, abs=1e-15)
        assert bm[..., 1].sum() == 1.0

    def test_antipodal_cancel(self):
        g = grid()
        bm = project_particles(ParticleSet.uniform([[1.05, 1.05, 0.0], [1.06, 1.04, math.pi]]), g)
        r, c = g.world_to_cell(1.05, 1.05)
        assert bm[r, c, 1] == pytest.approx(1.0)
        assert bm[r, c, 2] == pytest.approx(0.0, abs=1e-15)
        assert bm[r, c, 3] == pytest.approx(0.0, abs=1e-15)

    def test_occupancy_channel(self):
        g = grid()
        bm = project_particles(ParticleSet.uniform([[1.0, 1.0, 0.0]]), g)
        np.testing.assert_array_equal(bm[..., 0], g.cells / 2.0)
        assert set(np.unique(bm[..., 0])) <= {0.0, 0.5, 1.0}

    def test_brute_force(self):
        rng = np.random.default_rng(1)
        g = grid()
        for _ in range(10):
            ps = random_set(rng, 200, extent=4.0)
            ps.poses[:5, :2] = [[-1, -1], [10, 10], [1, -3], [-2, 1], [2.95, 2.95]]
            bm = project_particles(ps, g)
            want = np.zeros((g.height, g.width, 3))
            for (x, y, phi), w in zip(ps.poses, ps.weights):
                r, c = g.world_to_cell(x, y)
                r = min(max(int(r), 0), g.height - 1)
                c = min(max(int(c), 0), g.width - 1)
                want[r, c] += (w, w * math.sin(phi), w * math.cos(phi))
            np.testing.assert_allclose(bm[..., 1:], want, atol=1e-15)

    def test_mass_and_cauchy_schwarz(self):
        rng = np.random.default_rng(2)
        g = grid()
        for _ in range(20):
            ps = random_set(rng, int(rng.integers(1, 500)), extent=rng.uniform(1, 6))
            bm = project_particles(ps, g)
            assert bm[..., 1].sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(bm[..., 2] ** 2 + bm[..., 3] ** 2 <= bm[..., 1] ** 2 + 1e-15)

    def test_requires_normalized(self):
        with pytest.raises(ValueError):
            project_particles(ParticleSet(np.zeros((2, 3)), np.zeros(2)), grid())


class TestModes:
    def test_k1_is_estimate(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            ps = random_set(rng, 100)
            assert extract_modes(ps, 1)[0] == estimate_pose(ps)

    def test_two_clusters(self):
        rng = np.random.default_rng(4)
        a = np.column_stack([rng.normal(1.5, 0.05, 100), rng.normal(1.5, 0.05, 100), rng.normal(math.pi / 6, 0.05, 100)])
        b = np.column_stack([rng.normal(6.5, 0.05, 100), rng.normal(1.5, 0.05, 100), rng.normal(-math.pi / 2, 0.05, 100)])
        ps = ParticleSet.uniform(np.vstack([a, b]))
        modes = extract_modes(ps, 2)
        assert len(modes) == 2
        centers = sorted((m.x, m.y, m.phi) for m in modes)
        for got, cl in zip(centers, (a, b)):
            circ = math.atan2(np.sin(cl[:, 2]).sum(), np.cos(cl[:, 2]).sum())
            np.testing.assert_allclose(got, [cl[:, 0].mean(), cl[:, 1].mean(), circ], atol=1e-9)

    def test_heaviest_first_and_tie_break(self):
        poses = [[0.5, 0.5, 0.1], [2.5, 0.5, 0.1], [0.5, 2.5, 0.1]]
        ps = normalize(ParticleSet(poses, np.log([0.25, 0.25, 0.5])))
        modes = extract_modes(ps, 3)
        assert (modes[0].x, modes[0].y) == (0.5, 2.5)
        # equal weights: bin (0, 0) precedes bin (2, 0)
        assert (modes[1].x, modes[2].x) == (0.5, 2.5)

    def test_fewer_bins_than_k(self):
        ps = ParticleSet.uniform([[0.2, 0.2, 0.0], [0.3, 0.3, 0.1], [5.0, 5.0, 0.0]])
        assert len(extract_modes(ps, 10, ModeBinning())) == 2

    def test_permutation_invariant(self):
        rng = np.random.default_rng(5)
        ps = random_set(rng, 300, extent=5.0)
        perm = rng.permutation(300)
        for k in (1, 3, 6):
            assert extract_modes(ps, k) == extract_modes(ps.permuted(perm), k)

    def test_bad_k(self):
        with pytest.raises(ValueError):
            extract_modes(ParticleSet.uniform([[0, 0, 0]]), 0)


class TestLocalBelief:
    def test_identity_crop(self):
        g = grid(41)
        bm = project_particles(random_set(np.random.default_rng(6), 300, 4.1), g)
        center = Pose(*g.cell_center(20, 20), 0.0)
        lb = extract_local_belief(bm, g, center, 21)
        np.testing.assert_array_equal(lb, bm[10:31, 10:31])
        # re-embedding the crop recovers the central region
        back = np.zeros_like(bm)
        back[10:31, 10:31] = lb
        np.testing.assert_array_equal(back[10:31, 10:31], bm[10:31, 10:31])

    def test_frame_change(self):
        g = OccupancyGrid(np.zeros((41, 41), dtype=int), 0.1)
        ps = ParticleSet.uniform([[2.55, 2.05, math.pi / 2]])
        bm = project_particles(ps, g)
        lb = extract_local_belief(bm, g, Pose(2.05, 2.05, math.pi / 2), 21)
        # particle 0.5 m along world +x is 0.5 m to the right (-y) of the attention frame
        i, j = np.argwhere(lb[..., 1] > 0)[0]
        assert (i, j) == (10 - 5, 10)
        assert lb[i, j, 1] == pytest.approx(1.0)
        assert lb[i, j, 2] == pytest.approx(0.0, abs=1e-12)
        assert lb[i, j, 3] == pytest.approx(1.0)

    def test_out_of_bounds_zero(self):
        g = grid(10)
        bm = project_particles(ParticleSet.uniform([[0.5, 0.5, 0.0]]), g)
        lb = extract_local_belief(bm, g, Pose(0.05, 0.05, 0.0), 11)
        assert np.all(lb[:5, :5] == 0)

    def test_inverse_map_oracle(self):
        rng = np.random.default_rng(7)
        g = grid(40)
        for _ in range(10):
            bm = project_particles(random_set(rng, 400, 4.0), g)
            att = Pose(rng.uniform(0, 4), rng.uniform(0, 4), rng.uniform(-math.pi, math.pi))
            raw = oracles.crop_inverse_map(bm, g, att, 21, 0.0)
            want = raw.copy()
            c, s = math.cos(att.phi), math.sin(att.phi)
            want[..., 2] = raw[..., 2] * c - raw[..., 3] * s
            want[..., 3] = raw[..., 3] * c + raw[..., 2] * s
            np.testing.assert_array_equal(extract_local_belief(bm, g, att, 21), want)


class TestDump:
    def test_pgm(self, tmp_path):
        img = np.array([[0.0, 1.0], [0.5, 0.25]])
        p = tmp_path / "a.pgm"
        write_pgm(p, img, 0.0, 1.0)
        data = p.read_bytes()
        assert data.startswith(b"P5\n2 2\n255\n")
        # row 0 is written last (bottom of the image)
        assert list(data[-4:]) == [128, 64, 0, 255]

    def test_dump_names(self, tmp_path):
        bm = project_particles(ParticleSet.uniform([[0.5, 0.5, 0.0]]), grid(10))
        paths = dump_belief(tmp_path, 3, bm)
        assert [p.name for p in paths] == [f"step_0003_ch{i}.pgm" for i in range(4)]
        assert all(p.exists() for p in paths)
