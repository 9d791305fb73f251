"""Part-level controllable image composition on diffusion backends.

The pipeline runs in two stages: `localize` recovers an object mask and
per-part masks from attention captured while denoising, and `generate`
re-denoises the image with one conditioning branch per part region, fusing
the branch predictions through the masks. Everything runs on pluggable
backends; the built-in synthetic backend is a small deterministic denoiser
used for tests, evaluation, and the job service.
"""

from __future__ import annotations

from .attention import (
    AttentionAccumulator,
    AttentionBundle,
    AttentionCapture,
    AttentionError,
    SOT_TOKEN,
    accumulate,
    merge_bundles,
    normalize_cross_attention,
    normalized_part_maps,
)
from .backends import (
    BACKEND_NAMES,
    BackendError,
    Capabilities,
    CapabilityError,
    DenoiserBackend,
    DeterministicScheduler,
    Hooks,
    LatentImage,
    PlantedScene,
    Rect,
    SceneError,
    SchedulerError,
    SyntheticBackend,
    derive_scene_from_document,
    load_scene,
    make_backend,
    make_scene,
    save_scene,
)
from .backends.inversion import ddim_invert, redenoise
from .colors import NamedColorTable, default_color_table, nearest_named_color
from .config import ConfigError, PipelineConfig, config_from_dict, load_config
from .document import (
    DocumentError,
    PartSpec,
    RichPromptDocument,
    build_part_prompt,
    document_from_dict,
    document_to_dict,
    parse_document,
    serialize_document,
)
from .evaluation import (
    ClusterGrouping,
    EvalSample,
    EvaluationError,
    MetricsReport,
    ari,
    evaluate_dataset,
    fg_restrict,
    group_parts,
    load_dataset,
    load_grouping,
    make_synthetic_dataset,
    nmi,
    synthetic_localizer,
)
from .generation import (
    GenerationError,
    GenerationResult,
    RegionProcess,
    apply_size_weight,
    background_blend,
    build_region_prompt,
    color_guidance_gradient,
    fuse_region_noise,
    generate,
    save_image,
)
from .localization import (
    LocalizationError,
    PartDiffusionResult,
    SegmentAssignment,
    SegmentMap,
    assign_segments,
    blended_noise,
    cluster_attention,
    conditional_normalize,
    empty_mask_set,
    extract_object_mask,
    localization_test,
    localize,
    run_base_diffusion,
    run_part_diffusion,
)
from .masks import Mask2D, MaskError, PartMaskSet, load_mask_set, save_mask_set, upsample_mask

__version__ = "0.1.0"

__all__ = [
    "AttentionAccumulator",
    "AttentionBundle",
    "AttentionCapture",
    "AttentionError",
    "BACKEND_NAMES",
    "BackendError",
    "Capabilities",
    "CapabilityError",
    "ClusterGrouping",
    "ConfigError",
    "DenoiserBackend",
    "DeterministicScheduler",
    "DocumentError",
    "EvalSample",
    "EvaluationError",
    "GenerationError",
    "GenerationResult",
    "Hooks",
    "LatentImage",
    "LocalizationError",
    "Mask2D",
    "MaskError",
    "MetricsReport",
    "NamedColorTable",
    "PartDiffusionResult",
    "PartMaskSet",
    "PartSpec",
    "PipelineConfig",
    "PlantedScene",
    "Rect",
    "RegionProcess",
    "RichPromptDocument",
    "SOT_TOKEN",
    "SceneError",
    "SchedulerError",
    "SegmentAssignment",
    "SegmentMap",
    "SyntheticBackend",
    "accumulate",
    "apply_size_weight",
    "ari",
    "assign_segments",
    "background_blend",
    "blended_noise",
    "build_part_prompt",
    "build_region_prompt",
    "cluster_attention",
    "color_guidance_gradient",
    "conditional_normalize",
    "config_from_dict",
    "ddim_invert",
    "default_color_table",
    "derive_scene_from_document",
    "document_from_dict",
    "document_to_dict",
    "empty_mask_set",
    "evaluate_dataset",
    "extract_object_mask",
    "fg_restrict",
    "fuse_region_noise",
    "generate",
    "group_parts",
    "load_config",
    "load_dataset",
    "load_grouping",
    "load_mask_set",
    "load_scene",
    "localization_test",
    "localize",
    "make_backend",
    "make_scene",
    "make_synthetic_dataset",
    "merge_bundles",
    "nearest_named_color",
    "nmi",
    "normalize_cross_attention",
    "normalized_part_maps",
    "parse_document",
    "redenoise",
    "run_base_diffusion",
    "run_part_diffusion",
    "save_image",
    "save_mask_set",
    "save_scene",
    "serialize_document",
    "synthetic_localizer",
    "upsample_mask",
    "__version__",
]
