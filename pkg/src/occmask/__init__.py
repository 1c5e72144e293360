"""Depth-based occlusion masks and photometric losses for self-supervised depth.

The package covers the view-synthesis geometry (``geometry``, ``warp``), the
photometric error and smoothness terms (``photometric``), the occlusion mask
and loss compositions (``losses``), depth metrics (``metrics``), a ray-cast
synthetic scene oracle (``synthetic``) and file I/O plus CLI (``fileio``,
``cli``).
"""

from .errors import (
    ContractViolationError,
    FormatError,
    InvalidInputError,
    OccmaskError,
    SceneConfigError,
    SingularityError,
)
from .geometry import (
    Intrinsics,
    RigidTransform,
    SampleGrid,
    backproject,
    project,
    reproject,
    sample_jacobian_wrt_depth,
    transform_points,
)
from .losses import (
    FrameSet,
    LossConfig,
    SourceFrame,
    automask,
    disparity_to_depth,
    min_reprojection,
    nonoccluded_average,
    nonoccluded_min,
    occlusion_mask,
    total_loss,
)
from .metrics import DepthMetrics, depth_metrics, median_scaling
from .photometric import photometric_error, smoothness_loss, ssim_map
from .warp import bilinear_sample, in_bounds_mask, reconstruct

__version__ = "0.1.0"
