"""Linear motion blur synthesis, patch-based parameter regression, and
blur-field analysis.

The heavyweight model module (torch-backed) is imported lazily; import
``blurfield.model`` explicitly when training or loading checkpoints.
"""

from .dataset import (
    Manifest,
    SampleRecord,
    denormalize_labels,
    generate_dataset,
    normalize_labels,
    r_max_for,
)
from .engine import (
    KernelField,
    NoiseConfig,
    PatternKind,
    Region,
    blur_nonuniform,
    blur_uniform,
    make_pattern,
)
from .errors import BlurfieldError, DataError, DivergenceError, SamplerExhausted
from .evaluate import EvalCell, EvalMatrix, eval_matrix, r2
from .fieldmap import (
    OverlapCurve,
    PredictionGrid,
    overlap_sweep,
    perpendicular_profile,
    sliding_predict,
)
from .kernels import (
    BlurParams,
    Kernel,
    canonicalize_angle,
    kernel_to_text,
    make_kernel,
    unique_params,
)
from .sampler import Batch, BatchStream, PatchSchedule, admissible, patch_size_for_epoch

__version__ = "0.1.0"

__all__ = [
    "Batch",
    "BatchStream",
    "BlurParams",
    "BlurfieldError",
    "DataError",
    "DivergenceError",
    "EvalCell",
    "EvalMatrix",
    "Kernel",
    "KernelField",
    "Manifest",
    "NoiseConfig",
    "OverlapCurve",
    "PatchSchedule",
    "PatternKind",
    "PredictionGrid",
    "Region",
    "SampleRecord",
    "SamplerExhausted",
    "admissible",
    "blur_nonuniform",
    "blur_uniform",
    "canonicalize_angle",
    "denormalize_labels",
    "eval_matrix",
    "generate_dataset",
    "kernel_to_text",
    "make_kernel",
    "make_pattern",
    "normalize_labels",
    "overlap_sweep",
    "patch_size_for_epoch",
    "perpendicular_profile",
    "r2",
    "r_max_for",
    "sliding_predict",
    "unique_params",
]
