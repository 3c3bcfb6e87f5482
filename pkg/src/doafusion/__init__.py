"""Passive DOA estimation for a hybrid receiver: one fully digital subarray
plus heterogeneous analog-combined groups, fused by bound-weighted iteration
or a small learned regressor, benchmarked against the closed-form bound.
"""

from .arrays import (
    AnalogCombiner,
    ArrayGeometry,
    SnapshotSet,
    SourceConfig,
    analog_combining_matrix,
    benchmark_geometry,
    fd_steering_vector,
    group_gain_vector,
    group_steering_vector,
    synthesize_snapshots,
)
from .clustering import GMAXCS, GMIND, TrueSolutionSet, cluster_true_set, gmaxcs_select, gmind_select
from .crlb import (
    CrlbContext,
    CrlbReport,
    crlb_part,
    crlb_report,
    fisher_fd,
    fisher_group,
    hybrid_crlb,
    numeric_fim_oracle,
    psi,
    varsigma,
    virtual_gain_r,
)
from .fusion import FusedEstimate, FusionError, FusionWeights, IwfConfig, compute_weights, iwf_fuse
from .fusionnet import (
    LabeledDataset,
    MlpModel,
    ModelFormatError,
    TrainingConfig,
    forward,
    forward_batch,
    generate_training_data,
    gradient_check,
    init_model,
    load_model,
    save_model,
    train,
)
from .harness import (
    ExperimentSpec,
    RmseCurve,
    SourceSpec,
    TrialResult,
    emit_results,
    emit_spec,
    monte_carlo_rmse,
    parse_spec,
    run_trial,
    sweep_iterations,
)
from .pipeline import FrontEndResult, run_front_end
from .rootmusic import (
    CandidateSet,
    EstimationFailure,
    NoiseSubspace,
    RootMusicResult,
    expand_candidates,
    fd_root_music,
    group_root_music,
    noise_subspace,
    sample_covariance,
    solve_polynomial_roots,
    wrapped_group_phase,
)

__version__ = "0.1.0"
