"""grainforge: tiled diffusion-inpainting generation of 3-D grain structures."""

from ._kernels import KERNEL_BACKEND
from .volume import (
    NOISE_LABEL,
    BlockWindow,
    LabelVolume,
    ScalarVolume,
    VolumeMeta,
    VoxelMask,
    create_label_volume,
    create_volume,
    extract_window,
    insert_window,
)
from .gvox import read_gvox, write_gvox, write_vtk_legacy
from .schedule import NoiseSchedule, build_linear_schedule
from .sampler import (
    InpaintProblem,
    RepaintConfig,
    forward_diffuse,
    repaint,
    repaint_batch,
    reverse_step,
    sample_unconditional,
    single_step_forward,
)
from .denoisers import (
    AnalyticGaussianDenoiser,
    Ar1Covariance,
    Denoiser,
    DiagonalCovariance,
    IsotropicCovariance,
    RandomDenoiser,
    ZeroDenoiser,
    make_denoiser,
)
from .kmc import (
    EllipsoidPool,
    MobilityField,
    PottsConfig,
    SimState,
    accept_probability,
    boundary_energy,
    generate_dataset,
    init_random_spins,
    metropolis_sweep,
    raster_meltpool_distance,
    run_growth,
    site_energy,
)
from .planner import (
    GenerationPlan,
    PlannerConfig,
    PlanPoint,
    block_mask,
    build_centerout_plan,
    build_isotropic_plan,
    build_plan,
    generate_points,
    schedule_batches,
    verify_plan,
)
from .segment import (
    DbscanParams,
    SegmentationResult,
    assign_noise,
    dbscan4d,
    hierarchical_segment,
)
from .stats import (
    GrainRecord,
    Histogram,
    compare_sets,
    grain_records,
    histogram_pdf,
    kl_divergence,
    nn_centroid_distances,
)
from .meshvox import TriangleMesh, apply_mask, read_stl, voxelize
from .backend import BackendClient, BackendEndpoint, connect, serve_loopback
from .pipeline import RunManifest, run_generation

__version__ = "0.1.0"
