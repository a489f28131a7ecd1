"""Desk-scale toolkit for interactive video world-model plumbing: camera
trajectory quantization, rectified-flow sampling experiments against analytic
mixture oracles, frequency-band operators, context-compression planning, and
block-cache profiling."""

__version__ = "0.1.0"

from .blocks import (
    CachePlan,
    IdentityBlock,
    TokenMask,
    ToyBlockStack,
    block_importance_scores,
    gated_fusion,
    mask_tokens,
    masked_forward,
    round_to_bfloat16,
    run_with_cache,
    select_cacheable_layers,
)
from .errors import (
    InputParseError,
    InternalError,
    ValidationError,
    YumeKitError,
)
from .flow import (
    FlowState,
    GaussianMixture,
    MixtureComponent,
    OracleVelocity,
    adversarial_generator_loss,
    flow_matching_loss,
    hinge_discriminator_loss,
    interpolate,
    load_mixture,
    mixture_from_dict,
    oracle_velocity,
    posterior_data_mean,
    predict_clean,
    responsibilities,
    total_distillation_loss,
)
from .framepack import (
    CompressionPlan,
    CompressionTier,
    RegimeDraw,
    concat_noisy_history,
    draw_history_regime,
    framepack_plan,
    latent_frame_count,
    tile_static_condition,
    token_count,
)
from .freqops import IdentityLowPass, SeparableOperator2D, banded_stencil_matrix, build_operator
from .motion import (
    CanonicalMotion,
    CanonicalMotionSet,
    ConditionText,
    MotionLabel,
    SpeedBuckets,
    SpeedStats,
    TrajectoryAnnotation,
    annotate_trajectory,
    default_motion_set,
    jitter_score,
    keyboard_mapping,
    load_trajectory,
    normalize_trajectory_scale,
    quantize_trajectory,
    render_condition_text,
    segment_consistent_motion,
    speed_stats,
    synthesize_trajectory,
)
from .samplers import (
    CfgVelocity,
    NfeCounter,
    SamplerConfig,
    TimeSchedule,
    aam_sample,
    cfg_velocity,
    euler_ode_sample,
    nfe_report,
    sde_sample,
    sde_step,
    tts_sde_sample,
)
from .se3 import (
    Pose4,
    Se3DistanceWeights,
    compose,
    identity_pose,
    inverse_pose,
    pose_from_parts,
    relative_transform,
    rotation_geodesic_angle,
    rotation_pose,
    se3_distance,
    translation_pose,
    validate_pose,
)

__all__ = [name for name in dir() if not name.startswith("_")]
