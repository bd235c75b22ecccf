"""Checkpointed, resumable batch generation over a plan.

Every block draws from its own RNG stream seeded by (run seed, block index),
so results do not depend on how blocks are grouped for the backend and a
resumed run is bit-identical to an uninterrupted one.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .denoisers import Denoiser
from .errors import InvalidConfig, IoError
from .gvox import read_gvox, write_gvox
from .planner import GenerationPlan, block_mask
from .sampler import InpaintProblem, RepaintConfig, repaint_batch
from .schedule import NoiseSchedule
from .volume import ScalarVolume, VolumeMeta, VoxelMask, extract_window, insert_window


@dataclass
class RunManifest:
    domain_dims: tuple
    seed: int
    backend: str
    schedule: dict
    repaint: dict
    plan_sha: str
    out_path: str
    completed_batches: list[int] = field(default_factory=list)

    def fingerprint(self) -> str:
        doc = {
            "domain_dims": list(self.domain_dims),
            "seed": self.seed,
            "schedule": self.schedule,
            "repaint": self.repaint,
            "plan_sha": self.plan_sha,
        }
        blob = json.dumps(doc, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def to_json(self) -> str:
        return json.dumps(
            {
                "domain_dims": list(self.domain_dims),
                "seed": self.seed,
                "backend": self.backend,
                "schedule": self.schedule,
                "repaint": self.repaint,
                "plan_sha": self.plan_sha,
                "out_path": self.out_path,
                "completed_batches": self.completed_batches,
                "fingerprint": self.fingerprint(),
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        doc = json.loads(text)
        manifest = cls(
            domain_dims=tuple(doc["domain_dims"]),
            seed=int(doc["seed"]),
            backend=doc["backend"],
            schedule=doc["schedule"],
            repaint=doc["repaint"],
            plan_sha=doc["plan_sha"],
            out_path=doc["out_path"],
            completed_batches=[int(b) for b in doc["completed_batches"]],
        )
        if doc.get("fingerprint") != manifest.fingerprint():
            raise InvalidConfig("manifest fingerprint mismatch; file was edited?")
        return manifest


def plan_sha(plan: GenerationPlan) -> str:
    return hashlib.sha256(plan.to_json().encode()).hexdigest()


def block_rng(seed: int, block_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(block_index)]))


def run_generation(
    plan: GenerationPlan,
    denoiser: Denoiser,
    schedule: NoiseSchedule,
    repaint_cfg: RepaintConfig,
    seed: int,
    out_path,
    backend_label: str = "in-process",
    jobs: int = 8,
    manifest_path=None,
    resume: bool = True,
    progress=None,
) -> ScalarVolume:
    """Generate the full domain batch by batch, checkpointing after each.

    Returns the completed volume and writes it (plus the manifest and
    checkpoint files) under ``out_path``.
    """
    if jobs < 1:
        raise InvalidConfig(f"jobs must be >= 1, got {jobs}")
    out_path = Path(out_path)
    manifest_path = Path(manifest_path) if manifest_path else out_path.with_suffix(".manifest.json")
    vol_ckpt = out_path.with_suffix(".ckpt.gvox")
    bmp_ckpt = out_path.with_suffix(".bitmap.gvox")

    manifest = RunManifest(
        domain_dims=tuple(plan.domain_dims),
        seed=int(seed),
        backend=backend_label,
        schedule=schedule.to_dict(),
        repaint={
            "resamples": repaint_cfg.resamples,
            "jump_size": repaint_cfg.jump_size,
            "no_resample_tail": repaint_cfg.no_resample_tail,
        },
        plan_sha=plan_sha(plan),
        out_path=str(out_path),
    )

    domain = ScalarVolume(
        np.zeros(plan.domain_dims, dtype=np.float32),
        VolumeMeta(provenance="diffusion", seed=int(seed)),
    )
    bitmap = VoxelMask(np.zeros(plan.domain_dims, dtype=np.uint8))

    if resume and manifest_path.exists():
        old = RunManifest.from_json(manifest_path.read_text())
        if old.fingerprint() != manifest.fingerprint():
            raise InvalidConfig(
                "existing manifest belongs to a different configuration; "
                "remove it or change --out"
            )
        manifest.completed_batches = old.completed_batches
        if manifest.completed_batches:
            domain = read_gvox(vol_ckpt)
            bitmap = read_gvox(bmp_ckpt)

    done = set(manifest.completed_batches)
    for batch_index, batch in enumerate(plan.batches):
        if batch_index in done:
            continue
        for chunk_start in range(0, len(batch), jobs):
            chunk = batch[chunk_start : chunk_start + jobs]
            problems = []
            rngs = []
            for point_index in chunk:
                window = plan.window(point_index)
                known = extract_window(domain, window)
                mask = block_mask(plan, point_index, bitmap)
                problems.append(
                    InpaintProblem(known=known, mask=mask, config=repaint_cfg)
                )
                rngs.append(block_rng(seed, point_index))
            results = repaint_batch(denoiser, problems, schedule, rngs)
            for point_index, data in zip(chunk, results):
                window = plan.window(point_index)
                insert_window(domain, window, ScalarVolume(data))
                bitmap.data[window.slices()] = 1
        manifest.completed_batches.append(batch_index)
        write_gvox(domain, vol_ckpt)
        write_gvox(bitmap, bmp_ckpt)
        try:
            manifest_path.write_text(manifest.to_json())
        except OSError as exc:
            raise IoError(f"cannot write {manifest_path}: {exc}") from exc
        if progress is not None:
            progress(batch_index, len(plan.batches))

    domain.assert_finite()
    write_gvox(domain, out_path)
    return domain
