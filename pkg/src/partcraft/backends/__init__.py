"""Denoiser backends: the synthetic test backend and the real-model adapter."""

from __future__ import annotations

from ..config import PipelineConfig
from .base import (
    BackendError,
    Capabilities,
    CapabilityError,
    DenoiserBackend,
    Hooks,
    LatentImage,
)
from .scheduler import DeterministicScheduler, SchedulerError
from .synthetic import (
    PlantedScene,
    Rect,
    SceneError,
    SyntheticBackend,
    derive_scene_from_document,
    load_scene,
    make_scene,
    save_scene,
)

BACKEND_NAMES = ("synthetic", "diffusion")


def make_backend(config: PipelineConfig, scene: PlantedScene | None = None, **kwargs):
    """Instantiate the backend named in the config."""
    if config.backend == "synthetic":
        if scene is None:
            raise BackendError("the synthetic backend needs a planted scene")
        return SyntheticBackend(
            scene,
            num_steps=config.num_steps,
            default_guidance=config.guidance_scale,
            **kwargs,
        )
    if config.backend == "diffusion":
        from .diffusion import LatentDiffusionAdapter

        return LatentDiffusionAdapter(**kwargs)
    raise BackendError(
        f"unknown backend {config.backend!r}; choose from {BACKEND_NAMES}"
    )


__all__ = [
    "BackendError",
    "Capabilities",
    "CapabilityError",
    "DenoiserBackend",
    "DeterministicScheduler",
    "Hooks",
    "LatentImage",
    "PlantedScene",
    "Rect",
    "SceneError",
    "SchedulerError",
    "SyntheticBackend",
    "derive_scene_from_document",
    "load_scene",
    "make_backend",
    "make_scene",
    "save_scene",
    "BACKEND_NAMES",
]
