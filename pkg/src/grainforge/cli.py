"""Command-line front end for the generation pipeline.

Exit codes: 0 success, 1 user/config error, 2 runtime error. Failures print
a machine-readable JSON object on stderr.
"""

from __future__ import annotations

import json
import os
import sys
import time
from pathlib import Path

import click

from . import backend as backend_mod
from . import errors as E
from .denoisers import make_denoiser
from .gvox import read_gvox, write_gvox, write_vtk_legacy
from .kmc import EllipsoidPool, PottsConfig, generate_dataset, raster_meltpool_distance
from .meshvox import apply_mask, fit_transform, read_stl, voxelize
from .pipeline import run_generation
from .planner import GenerationPlan, PlannerConfig, build_plan, verify_plan
from .sampler import RepaintConfig
from .schedule import build_linear_schedule
from .segment import DbscanParams, assign_noise, dbscan4d, hierarchical_segment
from .stats import CompareConfig, compare_sets, relabel_components, write_report
from .volume import NOISE_LABEL, LabelVolume, ScalarVolume, VoxelMask

_USER_ERRORS = (
    E.InvalidConfig,
    E.InvalidDims,
    E.InvalidStep,
    E.InvalidMask,
    E.InvalidRequest,
    E.DomainTooSmall,
    E.FormatError,
    E.EmptyInput,
    E.InsufficientGrains,
    E.ShapeMismatch,
    E.WindowOutOfBounds,
    E.NoClusters,
    E.PlanError,
)


def _dims(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise E.InvalidConfig(f"expected X,Y,Z dims, got {text!r}")
    return tuple(int(p) for p in parts)


@click.group()
def cli():
    """Generate, segment, and analyze 3-D grain structures."""


@cli.command()
@click.option("--config", "config_path", default=None, type=click.Path(exists=True),
              help="JSON file with simulation settings (flags override it); "
              "may include a 'mobility' section with mz and ellipsoidal "
              "melt pools: {\"mz\": 4, \"pools\": [{\"center\": [x,y,z], "
              "\"semi_axes\": [a,b,c]}, ...]}.")
@click.option("--dims", default=None, help="Domain size as X,Y,Z voxels.")
@click.option("--q", default=None, type=int, help="Number of spin states.")
@click.option("--temperature", default=None, type=float)
@click.option("--neighborhood", default=None, type=click.Choice(["moore26", "vonneumann6"]))
@click.option("--boundary", default=None, type=click.Choice(["periodic", "fixed"]))
@click.option("--sweeps", default=None, type=int)
@click.option("--runs", default=None, type=int)
@click.option("--base-seed", default=None, type=int)
@click.option("--out", required=True, type=click.Path())
def simulate(config_path, dims, q, temperature, neighborhood, boundary, sweeps, runs, base_seed, out):
    """Run Potts growth simulations and write GVOX label volumes."""
    doc = {}
    if config_path:
        try:
            doc = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise E.InvalidConfig(f"cannot read config {config_path}: {exc}")

    def pick(flag, key, default):
        return flag if flag is not None else doc.get(key, default)

    dims_v = pick(dims, "dims", None)
    if dims_v is None:
        raise E.InvalidConfig("dims required (flag --dims or config key 'dims')")
    dims_v = _dims(dims_v) if isinstance(dims_v, str) else tuple(int(d) for d in dims_v)
    config = PottsConfig(
        q=int(pick(q, "q", 64)),
        temperature=float(pick(temperature, "temperature", 0.5)),
        neighborhood=pick(neighborhood, "neighborhood", "moore26"),
        boundary=pick(boundary, "boundary", "periodic"),
    )
    mobility = None
    if "mobility" in doc:
        mob = doc["mobility"]
        pools = [EllipsoidPool(p["center"], p["semi_axes"]) for p in mob.get("pools", [])]
        mobility = raster_meltpool_distance(dims_v, pools, float(mob["mz"]))
    paths = generate_dataset(
        int(pick(runs, "runs", 1)),
        dims_v,
        config,
        int(pick(sweeps, "sweeps", 100)),
        int(pick(base_seed, "base_seed", 0)),
        out,
        mobility=mobility,
    )
    click.echo(json.dumps({"written": [str(p) for p in paths]}))


@cli.command()
@click.option("--dims", required=True, help="Domain size as X,Y,Z voxels.")
@click.option("--strategy", default="isotropic8", type=click.Choice(["isotropic8", "center-out"]))
@click.option("--block-size", default=32, show_default=True)
@click.option("--delta", default=1.5, show_default=True)
@click.option("--max-batch", default=8, show_default=True)
@click.option("--out", required=True, type=click.Path())
def plan(dims, strategy, block_size, delta, max_batch, out):
    """Build a staged generation plan and save it as JSON."""
    config = PlannerConfig(
        block_size=block_size,
        delta=delta,
        strategy=strategy.replace("-", "_"),
        max_batch=max_batch,
    )
    built = build_plan(_dims(dims), config)
    built.save(out)
    click.echo(
        json.dumps(
            {"points": len(built.points), "batches": len(built.batches), "path": str(out)}
        )
    )


@cli.command()
@click.option("--plan", "plan_path", required=True, type=click.Path(exists=True))
def verify(plan_path):
    """Check all plan invariants; exits 1 when violations are found."""
    report = verify_plan(GenerationPlan.load(plan_path))
    click.echo(json.dumps({"violations": report.violations}))
    if not report.ok:
        raise E.PlanError(f"{len(report.violations)} plan violations")


def _resolve_backend(spec: str, schedule):
    if spec.startswith(("tcp:", "stdio:")):
        client = backend_mod.connect(backend_mod.BackendEndpoint.parse(spec))
        return client, spec
    return make_denoiser(spec, schedule), spec


@cli.command()
@click.option("--plan", "plan_path", required=True, type=click.Path(exists=True))
@click.option("--backend", default=None, help="tcp:host:port, stdio:cmd, zero, random:seed, or analytic:...")
@click.option("--resamples", default=10, show_default=True)
@click.option("--tail", default=25, show_default=True, help="Final steps without resampling.")
@click.option("--steps", default=250, show_default=True, help="Schedule length T.")
@click.option("--beta-start", default=1e-4, show_default=True)
@click.option("--beta-end", default=0.02, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--jobs", default=8, show_default=True, help="Blocks per backend request.")
@click.option("--out", required=True, type=click.Path())
@click.option("--manifest", default=None, type=click.Path())
@click.option("--fresh", is_flag=True, help="Ignore any existing checkpoint.")
def generate(plan_path, backend, resamples, tail, steps, beta_start, beta_end, seed, jobs, out, manifest, fresh):
    """Batched inpainting over a plan with checkpoint/resume."""
    backend = backend or os.environ.get("GRAINFORGE_BACKEND")
    if not backend:
        raise E.InvalidConfig("no backend given (flag --backend or GRAINFORGE_BACKEND)")
    built = GenerationPlan.load(plan_path)
    schedule = build_linear_schedule(steps, beta_start, beta_end)
    denoiser, label = _resolve_backend(backend, schedule)
    cfg = RepaintConfig(resamples=resamples, no_resample_tail=tail, seed=seed)
    t0 = time.time()
    run_generation(
        built,
        denoiser,
        schedule,
        cfg,
        seed,
        out,
        backend_label=label,
        jobs=jobs,
        manifest_path=manifest,
        resume=not fresh,
        progress=lambda b, n: click.echo(f"batch {b + 1}/{n} done", err=True),
    )
    if hasattr(denoiser, "close"):
        denoiser.close()
    click.echo(json.dumps({"out": str(out), "seconds": round(time.time() - t0, 2)}))


@cli.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--eps", default=1.9, show_default=True)
@click.option("--min-samples", default=15, show_default=True)
@click.option("--value-gain", default=1.0, show_default=True)
@click.option("--tile-size", default=32, show_default=True)
@click.option("--overlap", default=8, show_default=True)
@click.option("--flat", is_flag=True, help="Single-pass DBSCAN instead of tiled.")
@click.option("--noise", default="nearest_cluster", type=click.Choice(["keep_noise", "nearest_cluster"]))
@click.option("--out", required=True, type=click.Path())
def segment(in_path, eps, min_samples, value_gain, tile_size, overlap, flat, noise, out):
    """Cluster a generated scalar volume into labeled grains."""
    volume = read_gvox(in_path)
    if not isinstance(volume, ScalarVolume):
        raise E.InvalidConfig(f"{in_path} is not a scalar volume")
    params = DbscanParams(eps=eps, min_samples=min_samples, value_gain=value_gain)
    if flat:
        result = dbscan4d(volume, params)
    else:
        result = hierarchical_segment(volume, tile_size, overlap, params)
    labels = assign_noise(result, noise)
    write_gvox(labels, out)
    click.echo(
        json.dumps(
            {
                "clusters": result.cluster_count,
                "noise_voxels": result.noise_count,
                "out": str(out),
            }
        )
    )


def _load_label_dir(path) -> list[LabelVolume]:
    vols = []
    for p in sorted(Path(path).glob("*.gvox")):
        vol = read_gvox(p)
        if isinstance(vol, LabelVolume):
            vols.append(vol)
    if not vols:
        raise E.EmptyInput(f"no label volumes in {path}")
    return vols


@cli.command()
@click.option("--set-a", required=True, type=click.Path(exists=True))
@click.option("--set-b", required=True, type=click.Path(exists=True))
@click.option("--bins", default=50, show_default=True)
@click.option("--exclude-boundary", is_flag=True)
@click.option("--components/--no-components", default=True, show_default=True,
              help="Split each label into connected components first (needed "
              "for raw simulator volumes where spin values repeat).")
@click.option("--out", required=True, type=click.Path())
@click.option("--csv", "csv_path", default=None, type=click.Path())
def stats(set_a, set_b, bins, exclude_boundary, components, out, csv_path):
    """Compare grain statistics between two sets of label volumes."""
    a, b = _load_label_dir(set_a), _load_label_dir(set_b)
    if components:
        a = [relabel_components(v) for v in a]
        b = [relabel_components(v) for v in b]
    report = compare_sets(
        a, b, CompareConfig(bins=bins, exclude_boundary=exclude_boundary)
    )
    write_report(report, out, csv_path)
    click.echo(json.dumps({"kld": report["kld"], "out": str(out)}))


@cli.command("voxelize")
@click.option("--stl", required=True, type=click.Path(exists=True))
@click.option("--dims", required=True, help="Mask size as X,Y,Z voxels.")
@click.option("--fill", default=1.0, show_default=True, help="Fraction of the grid the mesh fills.")
@click.option("--out", required=True, type=click.Path())
def voxelize_cmd(stl, dims, fill, out):
    """Voxelize an STL mesh into an inside/outside GVOX mask."""
    mesh = read_stl(stl)
    d = _dims(dims)
    mask = voxelize(mesh, d, fit_transform(mesh, d, fill))
    write_gvox(mask, out)
    click.echo(json.dumps({"inside_voxels": mask.count(), "out": str(out)}))


@cli.command("mask")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--mask", "mask_path", required=True, type=click.Path(exists=True))
@click.option("--outside-label", default=0, show_default=True)
@click.option("--no-reserve-void", is_flag=True,
              help="Keep original grain ids (grain 0 then collides with void).")
@click.option("--out", required=True, type=click.Path())
def mask_cmd(in_path, mask_path, outside_label, no_reserve_void, out):
    """Apply a CAD mask to a label volume.

    By default grain ids shift up by one first, reserving label 0 for the
    void outside the shape.
    """
    labels = read_gvox(in_path)
    mask = read_gvox(mask_path)
    if not isinstance(labels, LabelVolume) or not isinstance(mask, VoxelMask):
        raise E.InvalidConfig("mask expects a label volume and a mask volume")
    if not no_reserve_void:
        data = labels.data.copy()
        keep = data != NOISE_LABEL
        data[keep] += 1
        labels = LabelVolume(data, labels.meta.copy())
    out_vol = apply_mask(labels, mask, outside_label)
    write_gvox(out_vol, out)
    click.echo(json.dumps({"out": str(out)}))


@cli.command("export-vtk")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
def export_vtk(in_path, out):
    """Write a label volume as ASCII VTK STRUCTURED_POINTS."""
    labels = read_gvox(in_path)
    if not isinstance(labels, LabelVolume):
        raise E.InvalidConfig(f"{in_path} is not a label volume")
    write_vtk_legacy(labels, out)
    click.echo(json.dumps({"out": str(out)}))


@cli.command()
@click.option("--denoiser", "spec", default="zero", show_default=True)
@click.option("--transport", default="tcp", type=click.Choice(["tcp", "stdio"]))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=0, show_default=True)
@click.option("--steps", default=250, show_default=True)
@click.option("--beta-start", default=1e-4, show_default=True)
@click.option("--beta-end", default=0.02, show_default=True)
@click.option("--max-dims", default="32,32,32", show_default=True)
def serve(spec, transport, host, port, steps, beta_start, beta_end, max_dims):
    """Serve an in-process denoiser over the wire protocol."""
    schedule = build_linear_schedule(steps, beta_start, beta_end)
    denoiser = make_denoiser(spec, schedule)
    dims = _dims(max_dims)
    if transport == "stdio":
        backend_mod.serve_stdio(denoiser, sys.stdin.buffer, sys.stdout.buffer, dims)
        return
    server = backend_mod.serve_loopback(denoiser, host, port, dims)
    click.echo(json.dumps({"host": server.address[0], "port": server.address[1]}), err=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.close()


@cli.command()
@click.option("--dims", default="32,32,32", show_default=True)
@click.option("--sweeps", default=5, show_default=True)
def bench(dims, sweeps):
    """Compare compiled and pure-Python kernel throughput."""
    from .benchmarks import run_benchmarks

    click.echo(json.dumps(run_benchmarks(_dims(dims), sweeps), indent=1))


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        sys.stderr.write(json.dumps({"error": "UsageError", "message": exc.format_message()}) + "\n")
        return 1
    except click.Abort:
        return 1
    except _USER_ERRORS as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    except E.GrainForgeError as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2
    except Exception as exc:  # anything else is a runtime failure
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
