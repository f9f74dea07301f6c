"""Channel-knowledge-map aided hybrid beamforming simulation toolkit."""

__version__ = "0.1.0"

from ._kernels import active_backend
from .arrays import AngleGrid, AnglePair, UpaGeometry, steering_vector
from .baselines import (
    location_based_beams,
    ls_full_estimate,
    omp_grid_estimate,
)
from .bim import (
    beamformers_from_sweep,
    rank_beams,
    select_submatrix_greedy,
    sweep,
)
from .cam import (
    CamDesignError,
    CamTrainingPlan,
    design_training_beams,
    estimate_gains,
    mse_lower_bound,
    reconstruct_channel,
    simulate_training,
    training_subset,
)
from .channels import (
    Box,
    PathSet,
    PropagationPath,
    Rectangle,
    Scene,
    generate_scene_paths,
    import_paths_csv,
    export_paths_csv,
    synthesize_channel,
)
from .ckm import (
    BimEntry,
    CamCandidate,
    CamEntry,
    CkmDatabase,
    CkmFormatError,
    build_bim_samples,
    build_cam_samples,
    load,
    query_bim,
    query_cam,
    save,
)
from .codebooks import Codebook, kronecker_dft_codebook
from .experiments import (
    ExperimentConfig,
    TrialRecord,
    demo_scene,
    load_config,
    read_records_csv,
    run_experiment,
    summarize,
    write_records_csv,
    write_summary_csv,
)
from .hybrid import (
    HybridBeamformer,
    SystemDims,
    effective_channel,
    effective_rate,
    exhaustive_hybrid_search,
    optimal_baseband,
    rate,
)
from .linalg import hermitian_inv_sqrt, water_filling

__all__ = [
    "AngleGrid",
    "AnglePair",
    "BimEntry",
    "Box",
    "CamCandidate",
    "CamDesignError",
    "CamEntry",
    "CamTrainingPlan",
    "CkmDatabase",
    "CkmFormatError",
    "Codebook",
    "ExperimentConfig",
    "HybridBeamformer",
    "PathSet",
    "PropagationPath",
    "Rectangle",
    "Scene",
    "SystemDims",
    "TrialRecord",
    "UpaGeometry",
    "active_backend",
    "beamformers_from_sweep",
    "build_bim_samples",
    "build_cam_samples",
    "demo_scene",
    "design_training_beams",
    "effective_channel",
    "effective_rate",
    "estimate_gains",
    "exhaustive_hybrid_search",
    "export_paths_csv",
    "generate_scene_paths",
    "hermitian_inv_sqrt",
    "import_paths_csv",
    "kronecker_dft_codebook",
    "load",
    "load_config",
    "location_based_beams",
    "ls_full_estimate",
    "mse_lower_bound",
    "omp_grid_estimate",
    "optimal_baseband",
    "query_bim",
    "query_cam",
    "rank_beams",
    "rate",
    "read_records_csv",
    "reconstruct_channel",
    "run_experiment",
    "save",
    "select_submatrix_greedy",
    "simulate_training",
    "steering_vector",
    "summarize",
    "sweep",
    "synthesize_channel",
    "training_subset",
    "water_filling",
    "write_records_csv",
    "write_summary_csv",
]
