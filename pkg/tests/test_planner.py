import numpy as np
import pytest

from grainforge.errors import DomainTooSmall, InvalidConfig, PlanError
from grainforge.planner import (
    GenerationPlan,
    PlannerConfig,
    PlanPoint,
    block_mask,
    build_centerout_plan,
    build_isotropic_plan,
    generate_points,
    schedule_batches,
    verify_plan,
)
from grainforge.volume import VoxelMask


class TestGeneratePoints:
    def test_inclusive_grid(self):
        pts = generate_points((1, 1, 1), 1.5, (0, 0, 0), [])
        coords = {p.coords for p in pts}
        assert coords == {(a, b, c) for a in (0, 1.5) for b in (0, 1.5) for c in (0, 1.5)}
        assert len(pts) == 8

    def test_chebyshev_dep_included(self):
        prev = [PlanPoint((0.0, 0.0, 0.0), 1)]
        pts = generate_points((0, 0, 0), 1.0, (0.75, 0.75, 0.0), prev)
        assert pts[0].deps == [0]  # distance 0.75 <= 1

    def test_chebyshev_dep_excluded(self):
        prev = [PlanPoint((0.0, 0.0, 0.0), 1)]
        pts = generate_points((0, 0, 0), 1.0, (1.5, 0.0, 0.0), prev)
        assert pts[0].deps == []  # distance 1.5 > 1


class TestIsotropic:
    def test_stage1_disjoint_on_80(self):
        plan = build_isotropic_plan((80, 80, 80))
        stage1 = [i for i, p in enumerate(plan.points) if p.stage == 1]
        assert len(stage1) == 8
        for a in range(len(stage1)):
            for b in range(a + 1, len(stage1)):
                assert plan.window(stage1[a]).intersection_voxels(plan.window(stage1[b])) == 0

    def test_stage1_gap_is_16_voxels(self):
        # consecutive stage-1 grid points sit 48 voxels apart: 16-voxel gap
        plan = build_isotropic_plan((80, 80, 80))
        xs = sorted(
            {plan.points[i].origin_voxels(32)[0] for i, p in enumerate(plan.points) if p.stage == 1}
        )
        assert xs == [0, 48]
        assert xs[1] - (xs[0] + 32) == 16

    def test_offsets_used_exactly_once(self):
        plan = build_isotropic_plan((128, 128, 128))
        stages = {p.stage for p in plan.points}
        assert stages == set(range(1, 9))
        from grainforge.planner import STAGE_TABLE

        offsets = [off for off, _ in STAGE_TABLE]
        assert offsets[0] == (0, 0, 0)
        assert sorted(set(offsets[1:])) == sorted(
            {(a, b, c) for a in (0, 0.75) for b in (0, 0.75) for c in (0, 0.75)}
            - {(0.0, 0.0, 0.0)}
        )

    def test_domain_too_small(self):
        with pytest.raises(DomainTooSmall):
            build_isotropic_plan((16, 16, 16))

    @pytest.mark.parametrize("dims", [(32, 32, 32), (64, 96, 80), (100, 100, 100), (70, 84, 66)])
    def test_verify_clean(self, dims):
        report = verify_plan(build_isotropic_plan(dims))
        assert report.ok, report.violations

    def test_plan_deterministic(self):
        a = build_isotropic_plan((96, 96, 96)).to_json()
        b = build_isotropic_plan((96, 96, 96)).to_json()
        assert a == b

    def test_json_round_trip(self, tmp_path):
        plan = build_isotropic_plan((80, 96, 64))
        path = tmp_path / "plan.json"
        plan.save(path)
        loaded = GenerationPlan.load(path)
        assert loaded.to_json() == plan.to_json()
        assert verify_plan(loaded).ok


class TestCenterOut:
    def test_seed_block_centered_96(self):
        plan = build_centerout_plan((96, 96, 96))
        assert plan.points[0].origin_voxels(32) == (32, 32, 32)

    def test_arm_overlap_exactly_16(self):
        plan = build_centerout_plan((96, 96, 96))
        # consecutive +x arm blocks: origins 32 -> 48 -> 64
        origins = [p.origin_voxels(32) for p in plan.points]
        assert (48, 32, 32) in origins and (64, 32, 32) in origins
        from grainforge.volume import BlockWindow

        w1 = BlockWindow((48, 32, 32), (32, 32, 32))
        w2 = BlockWindow((64, 32, 32), (32, 32, 32))
        assert w1.intersection_voxels(w2) == 16 * 32 * 32
        w0 = BlockWindow((32, 32, 32), (32, 32, 32))
        assert w0.intersection_voxels(w1) == 16 * 32 * 32

    def test_every_later_block_overlaps_earlier(self):
        plan = build_centerout_plan((96, 96, 96))
        for i in range(1, len(plan.points)):
            wi = plan.window(i)
            assert any(
                wi.intersection_voxels(plan.window(j)) > 0 for j in range(i)
            ), f"block {i} floats free"

    def test_fill_blocks_overlap_at_least_8(self):
        # some predecessor must overlap by >= 8 voxels along *every* axis
        # (corner-adjacent predecessors give an 8^3 box, face-adjacent 8*32*32)
        plan = build_centerout_plan((96, 96, 96))
        for i in range(1, len(plan.points)):
            oi = plan.points[i].origin_voxels(32)
            best = 0
            for j in range(i):
                oj = plan.points[j].origin_voxels(32)
                extents = [32 - abs(oi[a] - oj[a]) for a in range(3)]
                if min(extents) > 0:
                    best = max(best, min(extents))
            assert best >= 8, f"block {i} lacks an 8-voxel-deep predecessor overlap"

    @pytest.mark.parametrize("dims", [(96, 96, 96), (64, 128, 96), (100, 70, 80)])
    def test_verify_clean(self, dims):
        report = verify_plan(build_centerout_plan(dims))
        assert report.ok, report.violations


class TestBatches:
    def test_chain_forces_three_batches(self):
        pts = [
            PlanPoint((0, 0, 0), 1, []),
            PlanPoint((0.5, 0, 0), 1, [0]),
            PlanPoint((1.0, 0, 0), 1, [1]),
        ]
        assert schedule_batches(pts, 10) == [[0], [1], [2]]

    def test_greedy_fill(self):
        pts = [PlanPoint((float(i * 2), 0, 0), 1, []) for i in range(8)]
        assert [len(b) for b in schedule_batches(pts, 3)] == [3, 3, 2]

    def test_cycle_detected(self):
        pts = [PlanPoint((0, 0, 0), 1, [0])]  # self-dependency
        with pytest.raises(PlanError):
            schedule_batches(pts, 4)

    def test_no_batch_has_overlapping_blocks(self):
        plan = build_isotropic_plan((80, 80, 80))
        for batch in plan.batches:
            for a in range(len(batch)):
                for b in range(a + 1, len(batch)):
                    assert (
                        plan.window(batch[a]).intersection_voxels(plan.window(batch[b]))
                        == 0
                    )

    def test_max_batch_respected(self):
        cfg = PlannerConfig(max_batch=3)
        plan = build_isotropic_plan((96, 96, 96), cfg)
        assert all(len(b) <= 3 for b in plan.batches)


class TestBlockMask:
    def test_stage1_mask_is_empty(self):
        plan = build_isotropic_plan((80, 80, 80))
        bitmap = VoxelMask(np.zeros((80, 80, 80), dtype=np.uint8))
        first = plan.batches[0][0]
        assert block_mask(plan, first, bitmap).count() == 0

    def test_mask_counts_overlap(self):
        plan = build_centerout_plan((96, 96, 96))
        bitmap = np.zeros((96, 96, 96), dtype=np.uint8)
        # mark the seed block generated; the first +x arm block overlaps 16 deep
        bitmap[32:64, 32:64, 32:64] = 1
        arm_index = [p.origin_voxels(32) for p in plan.points].index((48, 32, 32))
        mask = block_mask(plan, arm_index, VoxelMask(bitmap))
        assert mask.count() == 16 * 32 * 32

    def test_surrounded_block_mask_matches_bitmap(self, rng):
        plan = build_isotropic_plan((80, 80, 80))
        bitmap = (rng.random((80, 80, 80)) < 0.5).astype(np.uint8)
        idx = len(plan.points) - 1
        mask = block_mask(plan, idx, VoxelMask(bitmap))
        w = plan.window(idx)
        assert mask.count() == int(bitmap[w.slices()].sum())

    def test_dim_mismatch(self):
        plan = build_isotropic_plan((80, 80, 80))
        from grainforge.errors import ShapeMismatch

        with pytest.raises(ShapeMismatch):
            block_mask(plan, 0, VoxelMask(np.zeros((64, 64, 64), dtype=np.uint8)))


class TestVerifyFaults:
    def test_injected_dep_violation_reported(self):
        plan = build_isotropic_plan((80, 80, 80))
        # move a dependent point's dep into the same batch artificially
        bad = GenerationPlan(
            points=plan.points,
            batches=[plan.batches[0] + plan.batches[1]] + plan.batches[2:],
            domain_dims=plan.domain_dims,
            config=plan.config,
        )
        report = verify_plan(bad)
        assert not report.ok

    def test_missing_point_reports_coverage_gap(self):
        plan = build_isotropic_plan((80, 80, 80))
        pts = plan.points[:-1]
        batches = [[i for i in b if i < len(pts)] for b in plan.batches]
        batches = [b for b in batches if b]
        bad = GenerationPlan(
            points=pts, batches=batches, domain_dims=plan.domain_dims, config=plan.config
        )
        report = verify_plan(bad)
        assert any("uncovered" in v for v in report.violations)


class TestConfig:
    def test_delta_must_exceed_one(self):
        with pytest.raises(InvalidConfig):
            PlannerConfig(delta=1.0)

    def test_delta_times_block_integral(self):
        with pytest.raises(InvalidConfig):
            PlannerConfig(delta=1.26)

    def test_strategy_names(self):
        with pytest.raises(InvalidConfig):
            PlannerConfig(strategy="spiral")
