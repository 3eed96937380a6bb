"""Temporal consistency for independently generated video frames.

Optical flows are turned into per-pixel trajectory codes pointing into a
global pixel repository; harmonizing per-frame values along those
trajectories (closed-form averaging, or relaxed Gaussian smoothing) yields
temporally consistent videos, and the deterministic denoising loop applies
that harmonization as per-step guidance.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .coding import (
    EncodedFrames,
    FlowField,
    OcclusionMask,
    decode,
    flow_code,
    flow_code_distant,
    round_half_away,
    validate_codes,
)
from .diffusion import (
    AvgPoolAutoencoder,
    ExactNoiseOracle,
    GuidanceConfig,
    IdentityAutoencoder,
    NoiseSchedule,
    NoisyOracle,
    add_noise,
    ddim_step,
    eps_from_x0,
    generate,
    guide_sample_space,
    guide_score_space,
    harmonized_eps_latent,
    predict_x0,
)
from .errors import (
    CodeRangeError,
    ConfigError,
    FlowHarmonyError,
    FormatError,
    ShapeMismatchError,
)
from .evaluation import (
    EpeReport,
    block_matching_flow,
    endpoint_error,
    horizontal_scan,
    warp_error,
)
from .harmonization import (
    InverseRepository,
    PixelRepository,
    SmoothingKernel,
    build_inverse_repository,
    consistency_loss,
    flat_kernel,
    gaussian_kernel,
    harmonize_global,
    harmonize_local,
    sigma_from_seed,
)
