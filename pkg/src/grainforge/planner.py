"""Block-placement planning for arbitrarily sized generation domains.

Coordinates are in block units (1 block unit = ``block_size`` voxels, so all
values are exact multiples of 1/block_size and round-trip through JSON).
The isotropic strategy runs eight stages with fixed offsets drawn from
{0, 0.75} per axis; stage spacing is 1.5 block units, which leaves 0.5-block
(16-voxel) gaps between stage-1 blocks. The center-out strategy grows a
cross from the domain center with 16-voxel overlaps, then fills ring by ring
with 8-voxel overlaps.

Any block is a dependency of a later block whose grid point lies within
Chebyshev distance 1 in block units; that relation is a superset of voxel
overlap, so scheduling dependencies into strictly earlier batches makes
every batch voxel-disjoint.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainTooSmall, InvalidConfig, IoError, PlanError, ShapeMismatch
from .volume import BlockWindow, Dims, VoxelMask

STAGE_TABLE = (
    ((0.00, 0.00, 0.00), (0, 0, 0)),
    ((0.00, 0.00, 0.75), (0, 0, 1)),
    ((0.75, 0.75, 0.75), (1, 1, 1)),
    ((0.75, 0.75, 0.00), (1, 1, 0)),
    ((0.75, 0.00, 0.75), (1, 0, 1)),
    ((0.00, 0.75, 0.75), (0, 1, 1)),
    ((0.75, 0.00, 0.00), (1, 0, 0)),
    ((0.00, 0.75, 0.00), (0, 1, 0)),
)

STRATEGIES = ("isotropic8", "center_out")


@dataclass
class PlannerConfig:
    """Defaults follow the 32-voxel window: cross arms overlap 16 voxels,
    ring fill 8; both scale with block_size when left unset."""

    block_size: int = 32
    delta: float = 1.5
    strategy: str = "isotropic8"
    cross_overlap: int | None = None
    fill_overlap: int | None = None
    max_batch: int = 8

    def __post_init__(self):
        if self.block_size < 4:
            raise InvalidConfig(f"block_size must be >= 4, got {self.block_size}")
        if self.cross_overlap is None:
            self.cross_overlap = self.block_size // 2
        if self.fill_overlap is None:
            self.fill_overlap = self.block_size // 4
        if self.delta <= 1:
            raise InvalidConfig(f"delta must be > 1 so stage blocks stay disjoint, got {self.delta}")
        if abs(self.delta * self.block_size - round(self.delta * self.block_size)) > 1e-9:
            raise InvalidConfig("delta * block_size must be an integer number of voxels")
        if self.strategy not in STRATEGIES:
            raise InvalidConfig(f"unknown strategy {self.strategy!r}")
        for name in ("cross_overlap", "fill_overlap"):
            val = getattr(self, name)
            if not 1 <= val < self.block_size:
                raise InvalidConfig(f"{name} must be in [1, block_size), got {val}")
        if self.max_batch < 1:
            raise InvalidConfig(f"max_batch must be >= 1, got {self.max_batch}")

    def to_dict(self) -> dict:
        return {
            "block_size": self.block_size,
            "delta": self.delta,
            "strategy": self.strategy,
            "cross_overlap": self.cross_overlap,
            "fill_overlap": self.fill_overlap,
            "max_batch": self.max_batch,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PlannerConfig":
        return cls(**doc)


@dataclass
class PlanPoint:
    """Low corner of one generation block, in block units."""

    coords: tuple[float, float, float]
    stage: int
    deps: list[int] = field(default_factory=list)

    def origin_voxels(self, block_size: int) -> tuple[int, int, int]:
        return tuple(int(round(c * block_size)) for c in self.coords)


@dataclass
class GenerationPlan:
    points: list[PlanPoint]
    batches: list[list[int]]
    domain_dims: Dims
    config: PlannerConfig

    def window(self, index: int) -> BlockWindow:
        bs = self.config.block_size
        return BlockWindow(self.points[index].origin_voxels(bs), (bs, bs, bs))

    def to_json(self) -> str:
        doc = {
            "domain_dims": list(self.domain_dims),
            "config": self.config.to_dict(),
            "points": [
                {"coords": list(p.coords), "stage": p.stage, "deps": p.deps}
                for p in self.points
            ],
            "batches": [list(b) for b in self.batches],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "GenerationPlan":
        doc = json.loads(text)
        points = [
            PlanPoint(tuple(p["coords"]), int(p["stage"]), [int(d) for d in p["deps"]])
            for p in doc["points"]
        ]
        return cls(
            points=points,
            batches=[[int(i) for i in b] for b in doc["batches"]],
            domain_dims=tuple(int(d) for d in doc["domain_dims"]),
            config=PlannerConfig.from_dict(doc["config"]),
        )

    def save(self, path) -> None:
        try:
            Path(path).write_text(self.to_json())
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc

    @classmethod
    def load(cls, path) -> "GenerationPlan":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from exc
        return cls.from_json(text)


def generate_points(limit, delta: float, offset, prev_points) -> list[PlanPoint]:
    """Inclusive grid {(i*delta + off) : 0 <= i <= limit} per axis, with
    dependencies on all previous points within Chebyshev distance 1."""
    if delta <= 0:
        raise InvalidConfig(f"delta must be positive, got {delta}")
    limit = tuple(int(l) for l in limit)
    if any(l < 0 for l in limit):
        return []
    prev = [tuple(p.coords) if isinstance(p, PlanPoint) else tuple(p) for p in prev_points]
    points = []
    for i in range(limit[0] + 1):
        for j in range(limit[1] + 1):
            for k in range(limit[2] + 1):
                c = (i * delta + offset[0], j * delta + offset[1], k * delta + offset[2])
                deps = [
                    n
                    for n, q in enumerate(prev)
                    if max(abs(q[0] - c[0]), abs(q[1] - c[1]), abs(q[2] - c[2])) <= 1.0
                ]
                points.append(PlanPoint(coords=c, stage=0, deps=deps))
    return points


def _chebyshev_deps(coords: list[tuple[float, float, float]]) -> list[list[int]]:
    """For each point, all earlier points within Chebyshev distance 1."""
    if not coords:
        return []
    arr = np.asarray(coords, dtype=np.float64)
    deps: list[list[int]] = []
    for i in range(len(arr)):
        if i == 0:
            deps.append([])
            continue
        d = np.abs(arr[:i] - arr[i]).max(axis=1)
        deps.append([int(j) for j in np.nonzero(d <= 1.0)[0]])
    return deps


def _finalize_plan(
    raw: list[tuple[tuple[float, float, float], int]],
    domain_dims: Dims,
    config: PlannerConfig,
) -> GenerationPlan:
    """Dedupe clamped points, compute dependencies, schedule batches."""
    seen: dict[tuple[int, int, int], int] = {}
    coords: list[tuple[float, float, float]] = []
    stages: list[int] = []
    bs = config.block_size
    for c, stage in raw:
        key = tuple(int(round(v * bs)) for v in c)
        if key in seen:
            continue
        seen[key] = len(coords)
        coords.append(c)
        stages.append(stage)
    deps = _chebyshev_deps(coords)
    points = [
        PlanPoint(coords=c, stage=s, deps=d) for c, s, d in zip(coords, stages, deps)
    ]
    batches = schedule_batches(points, config.max_batch)
    return GenerationPlan(
        points=points, batches=batches, domain_dims=tuple(domain_dims), config=config
    )


def _stage_axis_coords(dim: int, bs: int, delta: float, off: float, limit: int) -> list[float]:
    """Grid coordinates along one axis, clamped flush to the domain end."""
    top = (dim - bs) / bs
    out = []
    for i in range(limit + 1):
        out.append(min(i * delta + off, top))
    return out


def build_isotropic_plan(domain_dims, config: PlannerConfig | None = None) -> GenerationPlan:
    """Eight-stage plan from the fixed offset/limit-reduction table.

    The inclusive per-axis limit is ceil((dim/bs - 1) / delta) so the last
    grid point reaches or passes the far boundary; passing points are
    clamped flush, which keeps every block exactly block_size wide and
    guarantees coverage for any domain size.
    """
    config = config or PlannerConfig(strategy="isotropic8")
    bs = config.block_size
    dims = tuple(int(d) for d in domain_dims)
    if any(d < bs for d in dims):
        raise DomainTooSmall(f"domain {dims} cannot fit a {bs}^3 block")

    initial_limit = [math.ceil(((d / bs) - 1) / config.delta) for d in dims]
    raw: list[tuple[tuple[float, float, float], int]] = []
    for stage_index, (offset, reduction) in enumerate(STAGE_TABLE, start=1):
        limit = [initial_limit[a] - reduction[a] for a in range(3)]
        if any(l < 0 for l in limit):
            continue
        axes = [
            _stage_axis_coords(dims[a], bs, config.delta, offset[a], limit[a])
            for a in range(3)
        ]
        for cx in axes[0]:
            for cy in axes[1]:
                for cz in axes[2]:
                    raw.append(((cx, cy, cz), stage_index))
    return _finalize_plan(raw, dims, config)


def _fill_axis_positions(dim: int, bs: int, seed: int, stride: int) -> list[int]:
    """Voxel origins covering one axis, stepping ``stride`` from the seed."""
    top = dim - bs
    pos = {seed}
    p = seed
    while p > 0:
        p = max(0, p - stride)
        pos.add(p)
    p = seed
    while p < top:
        p = min(top, p + stride)
        pos.add(p)
    return sorted(pos)


def build_centerout_plan(domain_dims, config: PlannerConfig | None = None) -> GenerationPlan:
    """Seed block at the domain center, cross arms to the edges, ring fill."""
    config = config or PlannerConfig(strategy="center_out")
    bs = config.block_size
    dims = tuple(int(d) for d in domain_dims)
    if any(d < bs for d in dims):
        raise DomainTooSmall(f"domain {dims} cannot fit a {bs}^3 block")

    seed = tuple((d - bs) // 2 for d in dims)
    raw: list[tuple[tuple[float, float, float], int]] = []

    def bu(origin) -> tuple[float, float, float]:
        return tuple(o / bs for o in origin)

    raw.append((bu(seed), 0))

    # Cross arms: walk each axis outward in both directions.
    arm_stride = bs - config.cross_overlap
    for axis in range(3):
        for direction in (1, -1):
            step = 0
            origin = list(seed)
            while True:
                step += 1
                nxt = origin[axis] + direction * arm_stride
                nxt = min(max(nxt, 0), dims[axis] - bs)
                if nxt == origin[axis]:
                    break
                origin[axis] = nxt
                raw.append((bu(tuple(origin)), step))
                if nxt in (0, dims[axis] - bs):
                    break

    # Ring fill over the coarser fill grid.
    fill_stride = bs - config.fill_overlap
    positions = [_fill_axis_positions(dims[a], bs, seed[a], fill_stride) for a in range(3)]
    seed_idx = [positions[a].index(seed[a]) for a in range(3)]
    max_ring = max(
        max(seed_idx[a], len(positions[a]) - 1 - seed_idx[a]) for a in range(3)
    )
    for ring in range(1, max_ring + 1):
        ring_origins = []
        for ix, px in enumerate(positions[0]):
            for iy, py in enumerate(positions[1]):
                for iz, pz in enumerate(positions[2]):
                    r = max(
                        abs(ix - seed_idx[0]), abs(iy - seed_idx[1]), abs(iz - seed_idx[2])
                    )
                    if r == ring:
                        ring_origins.append((px, py, pz))
        for origin in sorted(ring_origins):
            raw.append((bu(origin), ring))
    return _finalize_plan(raw, dims, config)


def build_plan(domain_dims, config: PlannerConfig) -> GenerationPlan:
    if config.strategy == "isotropic8":
        return build_isotropic_plan(domain_dims, config)
    return build_centerout_plan(domain_dims, config)


def schedule_batches(points: list[PlanPoint], max_batch: int) -> list[list[int]]:
    """Greedy level batching: repeatedly take up to ``max_batch`` points, in
    point order, whose dependencies all sit in strictly earlier batches."""
    if max_batch < 1:
        raise InvalidConfig(f"max_batch must be >= 1, got {max_batch}")
    n = len(points)
    batch_of = [-1] * n
    batches: list[list[int]] = []
    scheduled = 0
    while scheduled < n:
        current = len(batches)
        ready = [
            i
            for i in range(n)
            if batch_of[i] < 0
            and all(0 <= batch_of[d] < current for d in points[i].deps)
        ]
        if not ready:
            raise PlanError("dependency cycle or forward reference in plan")
        take = ready[:max_batch]
        for i in take:
            batch_of[i] = current
        batches.append(take)
        scheduled += len(take)
    return batches


def block_mask(plan: GenerationPlan, point_index: int, generated_bitmap) -> VoxelMask:
    """Known-voxel mask for one block: 1 where the window overlaps voxels
    already produced by completed batches."""
    bitmap = generated_bitmap.data if isinstance(generated_bitmap, VoxelMask) else np.asarray(generated_bitmap)
    if bitmap.shape != tuple(plan.domain_dims):
        raise ShapeMismatch(
            f"bitmap shape {bitmap.shape} does not match domain {plan.domain_dims}"
        )
    window = plan.window(point_index)
    return VoxelMask(bitmap[window.slices()].astype(np.uint8))


@dataclass
class PlanReport:
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_plan(plan: GenerationPlan) -> PlanReport:
    """Check every structural invariant of a plan; empty report = valid."""
    violations: list[str] = []
    n = len(plan.points)
    bs = plan.config.block_size
    dims = plan.domain_dims
    windows = [plan.window(i) for i in range(n)]

    for i, w in enumerate(windows):
        if not w.fits_within(dims):
            violations.append(f"block {i} at {w.origin} leaves the domain {dims}")

    for i, p in enumerate(plan.points):
        for d in p.deps:
            if not 0 <= d < i:
                violations.append(f"point {i} depends on non-earlier point {d}")

    covered = np.zeros(dims, dtype=bool)
    for w in windows:
        if w.fits_within(dims):
            covered[w.slices()] = True
    if not covered.all():
        missing = np.argwhere(~covered)
        violations.append(
            f"{len(missing)} voxels uncovered, first at {tuple(missing[0])}"
        )

    batch_of = [-1] * n
    for b, batch in enumerate(plan.batches):
        if len(batch) > plan.config.max_batch:
            violations.append(f"batch {b} has {len(batch)} > max_batch blocks")
        for i in batch:
            if batch_of[i] != -1:
                violations.append(f"point {i} scheduled twice")
            batch_of[i] = b
    for i, b in enumerate(batch_of):
        if b < 0:
            violations.append(f"point {i} never scheduled")

    for i, p in enumerate(plan.points):
        for d in p.deps:
            if batch_of[d] >= batch_of[i]:
                violations.append(
                    f"dep {d} of point {i} is not in a strictly earlier batch"
                )

    for b, batch in enumerate(plan.batches):
        for ai in range(len(batch)):
            for bi in range(ai + 1, len(batch)):
                shared = windows[batch[ai]].intersection_voxels(windows[batch[bi]])
                if shared:
                    violations.append(
                        f"batch {b}: blocks {batch[ai]} and {batch[bi]} share {shared} voxels"
                    )

    for i in range(n):
        for j in range(i):
            if windows[i].intersection_voxels(windows[j]) and j not in plan.points[i].deps:
                violations.append(f"point {i} overlaps {j} without depending on it")

    return PlanReport(violations)
