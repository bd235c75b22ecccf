import numpy as np
import pytest

from grainforge.errors import InvalidConfig, NoClusters
from grainforge.segment import (
    DbscanParams,
    SegmentationResult,
    assign_noise,
    dbscan4d,
    hierarchical_segment,
)
from grainforge.volume import NOISE_LABEL, LabelVolume, ScalarVolume


def dbscan_oracle(volume: np.ndarray, params: DbscanParams) -> np.ndarray:
    """Textbook O(n^2) DBSCAN over 4-D points, same expansion discipline as
    the production code: scan-order seeds, BFS, neighbors claimed in
    ascending index order. Returns canonical uint32 labels (NOISE for noise).
    """
    dims = volume.shape
    n = volume.size
    idx = np.arange(n)
    x, y, z = idx % dims[0], (idx // dims[0]) % dims[1], idx // (dims[0] * dims[1])
    pts = np.column_stack(
        [x, y, z, params.value_gain * volume.ravel(order="F").astype(np.float64)]
    ).astype(np.float64)
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    within = d2 <= params.eps**2
    core = within.sum(1) >= params.min_samples

    labels = np.full(n, -1, dtype=np.int64)
    cid = 0
    for p in range(n):
        if labels[p] != -1 or not core[p]:
            continue
        labels[p] = cid
        queue = [p]
        while queue:
            q = queue.pop(0)
            for r in np.nonzero(within[q])[0]:
                if labels[r] == -1:
                    labels[r] = cid
                    if core[r]:
                        queue.append(r)
        cid += 1

    # canonicalize by first-voxel scan order (same rule as production)
    out = np.full(n, NOISE_LABEL, dtype=np.uint32)
    remap = {}
    for i in range(n):
        if labels[i] >= 0:
            if labels[i] not in remap:
                remap[labels[i]] = len(remap)
            out[i] = remap[labels[i]]
    return out.reshape(dims, order="F")


def lattice_grain_volume(dims, pitch, rng, value_scale=10.0) -> ScalarVolume:
    """Voronoi of a jittered seed lattice; grain values far apart so eps
    never bridges grains. Grain diameter stays below ~2*pitch."""
    from scipy.spatial import cKDTree

    seeds = []
    for cx in range(pitch // 2, dims[0], pitch):
        for cy in range(pitch // 2, dims[1], pitch):
            for cz in range(pitch // 2, dims[2], pitch):
                jitter = rng.integers(-pitch // 4, pitch // 4 + 1, 3)
                seeds.append(np.clip((cx, cy, cz) + jitter, 0, np.array(dims) - 1))
    seeds = np.array(seeds)
    values = rng.permutation(len(seeds)).astype(np.float64) * value_scale
    xx, yy, zz = np.meshgrid(*[np.arange(d) for d in dims], indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])
    _, nearest = cKDTree(seeds).query(pts, k=1)
    return ScalarVolume(values[nearest].reshape(dims).astype(np.float32))


class TestFlatDbscan:
    def test_constant_volume_single_cluster(self):
        vol = ScalarVolume(np.zeros((8, 8, 8), dtype=np.float32))
        res = dbscan4d(vol, DbscanParams(eps=1.9, min_samples=15))
        assert res.cluster_count == 1
        assert res.noise_count == 0
        assert (res.labels.data == 0).all()

    def test_two_value_halves_two_clusters(self):
        data = np.zeros((8, 8, 8), dtype=np.float32)
        data[4:] = 190.0  # 100 * eps after unit gain
        res = dbscan4d(ScalarVolume(data), DbscanParams())
        assert res.cluster_count == 2
        assert res.noise_count == 0
        expected = dbscan_oracle(data, DbscanParams())
        assert np.array_equal(res.labels.data, expected)

    def test_lone_outlier_voxel_is_noise(self):
        data = np.zeros((6, 6, 6), dtype=np.float32)
        data[3, 3, 3] = 1000.0
        res = dbscan4d(ScalarVolume(data), DbscanParams(value_gain=10.0))
        assert res.labels.data[3, 3, 3] == NOISE_LABEL
        assert res.noise_count == 1
        assert np.array_equal(res.labels.data, dbscan_oracle(data, DbscanParams(value_gain=10.0)))

    @pytest.mark.parametrize("dims", [(1, 1, 1), (2, 3, 4), (6, 6, 6), (8, 8, 8)])
    @pytest.mark.parametrize("levels", [3, 8])
    def test_random_volumes_match_oracle(self, dims, levels, rng):
        params = DbscanParams(eps=1.9, min_samples=9, value_gain=1.0)
        for _ in range(3):
            data = (rng.integers(0, levels, dims) * 1.3).astype(np.float32)
            res = dbscan4d(ScalarVolume(data), params)
            assert np.array_equal(res.labels.data, dbscan_oracle(data, params))

    def test_larger_eps_matches_oracle(self, rng):
        # eps > 2 exercises the wider spatial shell
        params = DbscanParams(eps=2.3, min_samples=12, value_gain=2.0)
        data = (rng.integers(0, 4, (6, 6, 6)) * 1.1).astype(np.float32)
        res = dbscan4d(ScalarVolume(data), params)
        assert np.array_equal(res.labels.data, dbscan_oracle(data, params))

    def test_counts_consistent(self, rng):
        data = (rng.integers(0, 5, (10, 10, 10)) * 2.0).astype(np.float32)
        res = dbscan4d(ScalarVolume(data), DbscanParams(min_samples=10))
        labels = res.labels.data
        assert res.noise_count == int((labels == NOISE_LABEL).sum())
        uniq = np.unique(labels[labels != NOISE_LABEL])
        assert res.cluster_count == uniq.size
        assert sorted(uniq.tolist()) == list(range(uniq.size))


class TestHierarchical:
    def test_single_tile_equals_flat_exactly(self, rng):
        data = (rng.integers(0, 4, (12, 12, 12)) * 3.0).astype(np.float32)
        params = DbscanParams(min_samples=10)
        flat = dbscan4d(ScalarVolume(data), params)
        hier = hierarchical_segment(ScalarVolume(data), 32, 8, params)
        assert np.array_equal(flat.labels.data, hier.labels.data)
        assert flat.cluster_count == hier.cluster_count

    def test_matches_flat_on_small_grains(self, rng):
        for seed in range(3):
            local = np.random.default_rng(seed)
            vol = lattice_grain_volume((48, 48, 48), 8, local)
            params = DbscanParams(eps=1.9, min_samples=15)
            flat = dbscan4d(vol, params)
            hier = hierarchical_segment(vol, 32, 8, params)
            assert np.array_equal(flat.labels.data, hier.labels.data)
            assert flat.cluster_count == hier.cluster_count

    def test_grain_spanning_tiles_single_label(self):
        # one elongated grain crossing 3 tiles along x
        data = np.full((80, 16, 16), 50.0, dtype=np.float32)
        data[10:70, 4:12, 4:12] = 0.0
        vol = ScalarVolume(data)
        res = hierarchical_segment(vol, 32, 8, DbscanParams())
        grain_labels = np.unique(res.labels.data[20:60, 6:10, 6:10])
        assert grain_labels.size == 1
        assert grain_labels[0] != NOISE_LABEL

    def test_degenerate_tiling_rejected(self):
        vol = ScalarVolume(np.zeros((48, 48, 48), dtype=np.float32))
        with pytest.raises(InvalidConfig):
            hierarchical_segment(vol, 16, 8, DbscanParams())

    def test_overlap_too_small_for_eps_rejected(self):
        vol = ScalarVolume(np.zeros((48, 48, 48), dtype=np.float32))
        with pytest.raises(InvalidConfig):
            hierarchical_segment(vol, 32, 1, DbscanParams(eps=1.9))

    def test_all_noise_volume(self, rng):
        # no clusters anywhere: must return an all-NOISE labeling, not crash
        vol = ScalarVolume((rng.standard_normal((48, 48, 48)) * 100).astype(np.float32))
        res = hierarchical_segment(vol, 32, 8, DbscanParams(value_gain=50.0))
        assert res.cluster_count == 0
        assert res.noise_count == 48**3
        assert (res.labels.data == NOISE_LABEL).all()

    def test_memory_per_voxel_bounded(self):
        # the flat algorithm's failure mode is superlinear working memory;
        # the tiled variant must keep peak allocations proportional to the
        # volume (constant bytes per voxel) as volumes grow
        import tracemalloc

        def peak_per_voxel(dim):
            vol = lattice_grain_volume(
                (dim, dim, dim), 8, np.random.default_rng(0)
            )
            tracemalloc.start()
            hierarchical_segment(vol, 32, 8, DbscanParams())
            _, peak = tracemalloc.get_traced_memory()
            tracemalloc.stop()
            return peak / dim**3

        small, large = peak_per_voxel(48), peak_per_voxel(80)
        assert large <= small * 1.5, (small, large)


class TestCanonicalization:
    def test_labels_ordered_by_first_voxel(self, rng):
        data = (rng.integers(0, 5, (10, 10, 10)) * 3.0).astype(np.float32)
        res = dbscan4d(ScalarVolume(data), DbscanParams(min_samples=8))
        flat = res.labels.data.ravel(order="F")
        firsts = []
        for k in range(res.cluster_count):
            firsts.append(int(np.nonzero(flat == k)[0][0]))
        assert firsts == sorted(firsts)

    def test_deterministic_across_runs(self, rng):
        data = (rng.integers(0, 4, (12, 12, 12)) * 2.0).astype(np.float32)
        a = dbscan4d(ScalarVolume(data), DbscanParams(min_samples=10))
        b = dbscan4d(ScalarVolume(data.copy()), DbscanParams(min_samples=10))
        assert np.array_equal(a.labels.data, b.labels.data)


class TestAssignNoise:
    def _result(self, labels):
        arr = np.asarray(labels, dtype=np.uint32)
        lv = LabelVolume(arr)
        noise = int((arr == NOISE_LABEL).sum())
        k = np.unique(arr[arr != NOISE_LABEL]).size
        return SegmentationResult(lv, noise, k)

    def test_identity_without_noise(self):
        labels = np.zeros((4, 4, 4), dtype=np.uint32)
        res = self._result(labels)
        for policy in ("keep_noise", "nearest_cluster"):
            out = assign_noise(res, policy)
            assert np.array_equal(out.data, labels)

    def test_adjacent_cluster_wins(self):
        labels = np.full((5, 1, 1), 3, dtype=np.uint32)
        labels[0] = NOISE_LABEL
        out = assign_noise(self._result(labels), "nearest_cluster")
        assert out.data[0, 0, 0] == 3

    def test_tie_goes_to_smallest_label(self):
        labels = np.zeros((5, 1, 1), dtype=np.uint32)
        labels[0:2] = 2
        labels[2] = NOISE_LABEL
        labels[3:] = 1
        out = assign_noise(self._result(labels), "nearest_cluster")
        assert out.data[2, 0, 0] == 1  # equidistant from clusters 1 and 2

    def test_all_noise_rejected(self):
        labels = np.full((3, 3, 3), NOISE_LABEL, dtype=np.uint32)
        with pytest.raises(NoClusters):
            assign_noise(self._result(labels), "nearest_cluster")

    def test_keep_noise_is_identity(self):
        labels = np.zeros((3, 3, 3), dtype=np.uint32)
        labels[1, 1, 1] = NOISE_LABEL
        out = assign_noise(self._result(labels), "keep_noise")
        assert out.data[1, 1, 1] == NOISE_LABEL
