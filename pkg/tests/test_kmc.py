import itertools

import numpy as np
import pytest

from grainforge.errors import InvalidConfig
from grainforge.gvox import read_gvox
from grainforge.kmc import (
    EllipsoidPool,
    PottsConfig,
    accept_probability,
    boundary_energy,
    generate_dataset,
    init_random_spins,
    metropolis_sweep,
    neighborhood_offsets,
    raster_meltpool_distance,
    run_growth,
    site_energy,
)


def brute_site_energy(labels, site, neighborhood, boundary):
    """Independent oracle: enumerate neighbors directly from offset defs."""
    dims = labels.shape
    x, y, z = site
    energy = 0
    for dx, dy, dz in neighborhood_offsets(neighborhood):
        xx, yy, zz = x + dx, y + dy, z + dz
        if boundary == "periodic":
            xx, yy, zz = xx % dims[0], yy % dims[1], zz % dims[2]
        elif not (0 <= xx < dims[0] and 0 <= yy < dims[1] and 0 <= zz < dims[2]):
            continue
        energy += labels[xx, yy, zz] != labels[x, y, z]
    return int(energy)


class TestInit:
    def test_uniform_law(self):
        state = init_random_spins((32, 32, 32), 2, seed=5)
        frac = (state.labels.data == 0).mean()
        sigma = 0.5 / np.sqrt(32**3)
        assert abs(frac - 0.5) < 3 * sigma

    def test_determinism(self):
        a = init_random_spins((8, 8, 8), 16, seed=77)
        b = init_random_spins((8, 8, 8), 16, seed=77)
        assert np.array_equal(a.labels.data, b.labels.data)

    def test_q1_rejected(self):
        with pytest.raises(InvalidConfig):
            init_random_spins((4, 4, 4), 1, seed=0)


class TestSiteEnergy:
    def test_uniform_volume_zero(self):
        state = init_random_spins((4, 4, 4), 2, seed=0)
        state.labels.data[:] = 1
        cfg = PottsConfig(q=2)
        for site in [(0, 0, 0), (2, 3, 1), (3, 3, 3)]:
            assert site_energy(state, site, cfg) == 0

    @pytest.mark.parametrize("neighborhood", ["moore26", "vonneumann6"])
    @pytest.mark.parametrize("boundary", ["periodic", "fixed"])
    def test_checkerboard_matches_brute_force(self, neighborhood, boundary):
        state = init_random_spins((2, 2, 2), 2, seed=0)
        x, y, z = np.indices((2, 2, 2))
        state.labels.data[:] = ((x + y + z) % 2).astype(np.uint32)
        cfg = PottsConfig(q=2, neighborhood=neighborhood, boundary=boundary)
        for site in itertools.product(range(2), repeat=3):
            assert site_energy(state, site, cfg) == brute_site_energy(
                state.labels.data, site, neighborhood, boundary
            )

    def test_random_volume_matches_brute_force(self, rng):
        state = init_random_spins((5, 4, 3), 6, seed=3)
        for neighborhood in ("moore26", "vonneumann6"):
            for boundary in ("periodic", "fixed"):
                cfg = PottsConfig(q=6, neighborhood=neighborhood, boundary=boundary)
                for _ in range(20):
                    site = tuple(int(rng.integers(0, d)) for d in (5, 4, 3))
                    assert site_energy(state, site, cfg) == brute_site_energy(
                        state.labels.data, site, neighborhood, boundary
                    )

    def test_isolated_voxel_vonneumann(self):
        state = init_random_spins((5, 5, 5), 2, seed=0)
        state.labels.data[:] = 0
        state.labels.data[2, 2, 2] = 1
        cfg = PottsConfig(q=2, neighborhood="vonneumann6")
        assert site_energy(state, (2, 2, 2), cfg) == 6

    def test_out_of_bounds_site(self):
        state = init_random_spins((4, 4, 4), 2, seed=0)
        with pytest.raises(IndexError):
            site_energy(state, (4, 0, 0), PottsConfig(q=2))

    def test_half_sum_identity(self):
        # 2 * pairs-once energy == full Eq.-1 style summation over sites
        state = init_random_spins((6, 6, 6), 4, seed=9)
        for boundary in ("periodic", "fixed"):
            cfg = PottsConfig(q=4, boundary=boundary)
            full = sum(
                site_energy(state, site, cfg)
                for site in itertools.product(range(6), repeat=3)
            )
            assert 2 * boundary_energy(state, cfg) == full


class TestAcceptProbability:
    def test_metropolis_cases(self):
        # dE <= 0 accepts with probability 1 (times mobility)
        assert accept_probability(0, 0.0) == 1.0
        assert accept_probability(-3, 0.0) == 1.0
        # dE > 0 at zero temperature never accepts
        assert accept_probability(2, 0.0) == 0.0
        # dE > 0 at finite temperature: exp(-dE/T)
        assert accept_probability(2, 1.0) == pytest.approx(np.exp(-2.0))

    def test_mobility_gate(self):
        assert accept_probability(-1, 0.5, mobility=0.25) == 0.25
        assert accept_probability(1, 1.0, mobility=0.0) == 0.0
        assert accept_probability(3, 2.0, mobility=0.5) == pytest.approx(
            0.5 * np.exp(-1.5)
        )


class TestSweep:
    def test_energy_decreases_at_zero_temperature(self):
        cfg = PottsConfig(q=8, temperature=0.0, seed=11)
        state = init_random_spins((8, 8, 8), cfg.q, cfg.seed)
        prev = boundary_energy(state, cfg)
        state.energy = prev
        for _ in range(100):
            metropolis_sweep(state, cfg)
            assert state.energy <= prev
            prev = state.energy
        assert state.energy == boundary_energy(state, cfg)

    def test_incremental_energy_matches_resummation(self):
        cfg = PottsConfig(q=6, temperature=0.8, seed=4)
        state = init_random_spins((8, 8, 8), cfg.q, cfg.seed)
        for _ in range(20):
            metropolis_sweep(state, cfg)
            assert state.energy == boundary_energy(state, cfg)

    def test_two_grain_energy_non_increasing(self):
        # 8^3 two-grain volume at T=0: boundary can only shrink
        cfg = PottsConfig(q=2, temperature=0.0, seed=12)
        state = init_random_spins((8, 8, 8), 2, cfg.seed)
        state.labels.data[:] = 0
        state.labels.data[4:] = 1
        state.energy = None
        energies = [boundary_energy(state, cfg)]
        for _ in range(100):
            metropolis_sweep(state, cfg)
            energies.append(state.energy)
        assert all(b <= a for a, b in zip(energies, energies[1:]))

    def test_zero_mobility_freezes_everything(self):
        cfg = PottsConfig(q=8, temperature=1.0, seed=2)
        state = init_random_spins((6, 6, 6), cfg.q, cfg.seed)
        before = state.labels.data.copy()
        mob = np.zeros((6, 6, 6), dtype=np.float32)
        for _ in range(10):
            flips = metropolis_sweep(state, cfg, mob)
            assert flips == 0
        assert np.array_equal(state.labels.data, before)

    def test_partial_mobility_freezes_only_zero_region(self):
        cfg = PottsConfig(q=8, temperature=0.5, seed=2)
        state = init_random_spins((8, 8, 8), cfg.q, cfg.seed)
        mob = np.ones((8, 8, 8), dtype=np.float32)
        mob[:4] = 0.0
        frozen_before = state.labels.data[:4].copy()
        for _ in range(5):
            metropolis_sweep(state, cfg, mob)
        assert np.array_equal(state.labels.data[:4], frozen_before)
        assert not np.array_equal(state.labels.data[4:], init_random_spins((8, 8, 8), cfg.q, cfg.seed).labels.data[4:])

    def test_periodic_energy_shift_invariant(self):
        # cyclic shifts leave the periodic boundary energy unchanged
        cfg = PottsConfig(q=5, temperature=0.5, seed=6, boundary="periodic")
        state = init_random_spins((8, 8, 8), cfg.q, cfg.seed)
        e0 = boundary_energy(state, cfg)
        for axis in range(3):
            shifted = init_random_spins((8, 8, 8), cfg.q, cfg.seed)
            shifted.labels.data = np.asfortranarray(np.roll(state.labels.data, 3, axis=axis))
            assert boundary_energy(shifted, cfg) == e0


class TestRunGrowth:
    def test_zero_sweeps_identity(self):
        cfg = PottsConfig(q=16, seed=8)
        state, traj = run_growth((8, 8, 8), cfg, 0)
        assert np.array_equal(
            state.labels.data, init_random_spins((8, 8, 8), 16, 8).labels.data
        )
        assert len(traj.sweep) == 1

    def test_trajectory_shape_and_determinism(self):
        cfg = PottsConfig(q=16, temperature=0.5, seed=13)
        _, t1 = run_growth((8, 8, 8), cfg, 12)
        _, t2 = run_growth((8, 8, 8), cfg, 12)
        assert len(t1.sweep) == 13
        assert np.array_equal(t1.energy, t2.energy)
        assert np.array_equal(t1.grain_count, t2.grain_count)

    def test_coarsening(self):
        cfg = PottsConfig(q=64, temperature=0.5, seed=3)
        _, traj = run_growth((24, 24, 24), cfg, 60)
        assert traj.grain_count[60] < traj.grain_count[5]


class TestDataset:
    def test_three_distinct_runs(self, tmp_path):
        cfg = PottsConfig(q=8, temperature=0.5)
        paths = generate_dataset(3, (8, 8, 8), cfg, 5, base_seed=100, out_dir=tmp_path)
        assert len(paths) == 3
        vols = [read_gvox(p) for p in paths]
        assert vols[0].meta.seed == 100 and vols[2].meta.seed == 102
        for a, b in itertools.combinations(vols, 2):
            assert not np.array_equal(a.data, b.data)

    def test_rerun_bit_identical(self, tmp_path):
        cfg = PottsConfig(q=8, temperature=0.5)
        p1 = generate_dataset(2, (6, 6, 6), cfg, 4, 7, tmp_path / "a")
        p2 = generate_dataset(2, (6, 6, 6), cfg, 4, 7, tmp_path / "b")
        for a, b in zip(p1, p2):
            assert a.read_bytes() == b.read_bytes()

    def test_zero_runs(self, tmp_path):
        assert generate_dataset(0, (6, 6, 6), PottsConfig(q=4), 2, 0, tmp_path) == []


class TestMeltPool:
    def test_inside_pool_full_mobility(self):
        field = raster_meltpool_distance(
            (16, 16, 16), [EllipsoidPool((8, 8, 8), (4, 2, 2))], mz=5.0
        )
        assert field.mobility_at(np.array([[8.0, 8.0, 8.0]]))[0] == 1.0
        assert field.distance(np.array([[8.0, 8.0, 8.0]]))[0] == 0.0

    def test_mobility_cutoff(self):
        field = raster_meltpool_distance(
            (32, 16, 16), [EllipsoidPool((8, 8, 8), (3, 3, 3))], mz=4.0
        )
        # sphere of radius 3: point at distance d from surface along +x
        assert field.mobility_at(np.array([[8 + 3 + 4.0, 8, 8]]))[0] == 0.0
        assert field.mobility_at(np.array([[8 + 3 + 8.0, 8, 8]]))[0] == 0.0
        assert field.mobility_at(np.array([[8 + 3 + 2.0, 8, 8]]))[0] == pytest.approx(0.5)

    def test_sphere_distance_exact(self):
        field = raster_meltpool_distance(
            (32, 32, 32), [EllipsoidPool((10, 10, 10), (3, 3, 3))], mz=4.0
        )
        p = np.array([[10 + 4.0, 10 + 3.0, 10.0]])
        expected = np.linalg.norm(p[0] - 10.0) - 3.0
        assert field.distance(p)[0] == pytest.approx(expected, abs=1e-9)

    def test_ellipsoid_distance_vs_surface_sampling(self, rng):
        # brute-force oracle: sample the parametric surface densely
        pool = EllipsoidPool((0, 0, 0), (4, 2, 2))
        field = raster_meltpool_distance((16, 16, 16), [pool], mz=3.0)
        theta = np.linspace(0, np.pi, 400)
        phi = np.linspace(0, 2 * np.pi, 800)
        tt, pp = np.meshgrid(theta, phi)
        surface = np.column_stack(
            [
                4 * np.sin(tt.ravel()) * np.cos(pp.ravel()),
                2 * np.sin(tt.ravel()) * np.sin(pp.ravel()),
                2 * np.cos(tt.ravel()),
            ]
        )
        for _ in range(10):
            p = rng.uniform(-8, 8, 3)
            d = field.distance(p[None, :])[0]
            brute = np.linalg.norm(surface - p, axis=1).min()
            inside = (p[0] / 4) ** 2 + (p[1] / 2) ** 2 + (p[2] / 2) ** 2 <= 1
            if inside:
                assert d == 0.0
            else:
                assert d == pytest.approx(brute, abs=2e-4)

    def test_multiple_pools_take_nearest(self):
        field = raster_meltpool_distance(
            (64, 16, 16),
            [EllipsoidPool((8, 8, 8), (2, 2, 2)), EllipsoidPool((40, 8, 8), (2, 2, 2))],
            mz=6.0,
        )
        d = field.distance(np.array([[36.0, 8.0, 8.0]]))[0]
        assert d == pytest.approx(2.0)

    def test_empty_path_rejected(self):
        with pytest.raises(InvalidConfig):
            raster_meltpool_distance((8, 8, 8), [], mz=2.0)

    def test_growth_with_mobility_freezes_far_zone(self):
        dims = (16, 8, 8)
        field = raster_meltpool_distance(dims, [EllipsoidPool((2, 4, 4), (2, 2, 2))], mz=3.0)
        cfg = PottsConfig(q=8, temperature=0.5, seed=21)
        state, _ = run_growth(dims, cfg, 10, mobility=field)
        fresh = init_random_spins(dims, cfg.q, cfg.seed)
        grid = field.mobility_grid(dims)
        frozen = grid == 0.0
        assert frozen.any()
        assert np.array_equal(state.labels.data[frozen], fresh.labels.data[frozen])
