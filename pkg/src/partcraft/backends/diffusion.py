"""Adapter contract for a real pre-trained latent diffusion model.

Running it requires model weights on disk; everything here is the wiring
(profiles, capability flags, load-time validation). The numerical pipeline is
exercised end to end through the synthetic backend instead.
"""

from __future__ import annotations

from dataclasses import dataclass

from .base import BackendError, Capabilities, DenoiserBackend
from .scheduler import DeterministicScheduler


@dataclass(frozen=True)
class DiffusionProfile:
    """Operating points: deterministic 50-step low-guidance inversion for
    localization evaluation, and 41-step guided sampling for generation."""

    num_steps: int
    guidance_scale: float
    inversion_guidance: float


PROFILES = {
    "sd21-eval": DiffusionProfile(num_steps=50, guidance_scale=7.5, inversion_guidance=0.05),
    "sd15-gen": DiffusionProfile(num_steps=41, guidance_scale=8.5, inversion_guidance=0.05),
}


class LatentDiffusionAdapter(DenoiserBackend):
    """Binds the pipeline to an external U-Net + text encoder + VAE."""

    capabilities = Capabilities(decode=True, null_text=True, attention_capture=True)

    def __init__(self, model_path: str | None = None, profile: str = "sd15-gen"):
        if profile not in PROFILES:
            raise BackendError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
        if not model_path:
            raise BackendError(
                "the diffusion backend needs pre-trained weights; "
                "pass model_path pointing at a checkpoint directory"
            )
        self.profile = PROFILES[profile]
        self.model_path = model_path
        self.scheduler = DeterministicScheduler(self.profile.num_steps)
        self.default_guidance = self.profile.guidance_scale
        raise BackendError(
            "model loading is not bundled with this package; install the "
            "model runtime and weights, then wire them through this adapter"
        )
